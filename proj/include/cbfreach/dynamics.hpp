// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "cbfreach/core.hpp"

namespace cbfreach {

using VectorField = std::function<Vec(const Vec&)>;
using MatrixField = std::function<Mat(const Vec&)>;

/// x' = f(x) + g(x) u with nominal controller kappa; f~ = f + g kappa.
struct ControlAffineSystem {
  Eigen::Index n = 0;
  Eigen::Index m = 0;
  VectorField f;
  MatrixField g;
  VectorField kappa;
  MatrixField jac_f_tilde;
  bool g_is_constant = false;
  /// Set when f~(x) = A x + c; enables the exact linear inclusion.
  std::optional<Mat> f_tilde_matrix;
  std::optional<Vec> f_tilde_offset;

  Vec f_tilde(const Vec& x) const { return f(x) + g(x) * kappa(x); }
  /// Vector field under the full input u.
  Vec field(const Vec& x, const Vec& u) const { return f(x) + g(x) * u; }
  bool is_affine() const { return f_tilde_matrix.has_value(); }
};

/// Uniformly sampled state sequence.
struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;

  std::size_t size() const { return states.size(); }
  const Vec& back() const { return states.back(); }
};

/// Number of Euler steps covering [0, T].
inline std::size_t step_count(double dt, double T) {
  if (!(dt > 0.0)) throw InvalidArgument("step size must be positive");
  if (!(T >= 0.0)) throw InvalidArgument("horizon must be non-negative");
  return static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
}

/// Forward Euler x_{k+1} = x_k + dt (f(x_k) + g(x_k) u(x_k)), where `control`
/// returns the full input. Exceptions thrown by `control` propagate.
inline Trajectory integrate(const ControlAffineSystem& sys, const VectorField& control, const Vec& x0,
                            double dt, double T) {
  if (x0.size() != sys.n) throw DimensionError("integrate: x0 has wrong dimension");
  const std::size_t steps = step_count(dt, T);
  Trajectory traj;
  traj.times.reserve(steps + 1);
  traj.states.reserve(steps + 1);
  traj.times.push_back(0.0);
  traj.states.push_back(x0);
  Vec x = x0;
  for (std::size_t k = 0; k < steps; ++k) {
    x = x + dt * sys.field(x, control(x));
    traj.times.push_back(static_cast<double>(k + 1) * dt);
    traj.states.push_back(x);
  }
  return traj;
}

/// CSV: header t,x1,...,xn then one row per stamp.
inline void write_csv(std::ostream& os, const Trajectory& traj) {
  const Eigen::Index n = traj.states.empty() ? 0 : traj.states.front().size();
  os << "t";
  for (Eigen::Index i = 0; i < n; ++i) os << ",x" << (i + 1);
  os << '\n';
  os.precision(17);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    os << traj.times[k];
    for (Eigen::Index i = 0; i < n; ++i) os << ',' << traj.states[k][i];
    os << '\n';
  }
}

/// Centered finite-difference Jacobian.
inline Mat finite_difference_jacobian(const VectorField& F, const Vec& x, double h = 1e-6) {
  const Vec f0 = F(x);
  Mat J(f0.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Vec xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    J.col(j) = (F(xp) - F(xm)) / (2.0 * h);
  }
  return J;
}

}  // namespace cbfreach
