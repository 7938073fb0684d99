// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "cbfreach/embedding.hpp"
#include "cbfreach/fnn.hpp"

namespace cbfreach {

/// Compact set C, approximation bound M_C and the norms of the closeness bound.
struct ClosenessConfig {
  HyperRect compact_set;
  double Mc = 0.0;
  NormTag norm = NormTag::inf();        // state norm
  NormTag input_norm = NormTag::inf();  // norm on R^m used for M_C
  /// Grid used when g depends on the state.
  std::vector<std::size_t> gain_grid = {101, 101};
};

struct ClosenessProfile {
  std::vector<double> times;
  std::vector<double> c_values;
  std::vector<double> r_values;
  double ell = 0.0;
  bool divergent = false;
};

/// l = sup_{x in C} ||g(x)|| induced by (input norm -> state norm).
inline double gain_ell(const ControlAffineSystem& sys, const ClosenessConfig& cfg) {
  if (sys.g_is_constant) return induced_norm(cfg.norm, cfg.input_norm, sys.g(cfg.compact_set.center()));
  if (static_cast<Eigen::Index>(cfg.gain_grid.size()) != sys.n) throw DimensionError("gain_ell: grid shape mismatch");
  double best = 0.0;
  for (const Vec& x : tensor_grid(cfg.compact_set, cfg.gain_grid)) {
    best = std::max(best, induced_norm(cfg.norm, cfg.input_norm, sys.g(x)));
  }
  return 1.25 * best;
}

/// Jacobian bounds of f~ over boxes, for systems where f~ is not affine.
using JacobianInclusion = std::function<std::pair<Mat, Mat>(const HyperRect&)>;

/// c_k >= osLip(f~(x) + g C_k x) over the compact set, with C_k the affine NN
/// bound on tube box k. Exact log-norm for affine f~; for non-affine f~ the
/// l-inf row formula is applied to interval Jacobian bounds over C.
inline std::vector<double> c_profile(const ControlAffineSystem& sys, const ReachTube& tube, const Mlp& net,
                                     BoundAlgo algo, const ClosenessConfig& cfg,
                                     const JacobianInclusion& jac_inc = nullptr, const CrownOptions& crown_opt = {}) {
  if (tube.size() == 0) throw InvalidArgument("c_profile: empty tube");
  if (!sys.g_is_constant) {
    throw InvalidArgument("c_profile: state-dependent g needs a bound on d/dx[g(x)](Cx+d); not supported");
  }
  const Mat G = sys.g(cfg.compact_set.center());
  std::optional<std::pair<Mat, Mat>> jac_bounds;
  if (!sys.is_affine()) {
    if (!jac_inc) throw InvalidArgument("c_profile: non-affine f~ requires a Jacobian inclusion");
    if (cfg.norm.kind != NormKind::inf) throw InvalidArgument("c_profile: interval Jacobians need the l-inf norm");
    jac_bounds = jac_inc(cfg.compact_set);
  }
  std::vector<double> c(tube.size());
  for (std::size_t k = 0; k < tube.size(); ++k) {
    const Mat GC = G * affine_bound(net, tube.boxes[k], algo, crown_opt).C;
    if (!jac_bounds) {
      c[k] = matrix_measure(cfg.norm, *sys.f_tilde_matrix + GC);
      continue;
    }
    const Mat lo = jac_bounds->first + GC;
    const Mat hi = jac_bounds->second + GC;
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < lo.rows(); ++i) {
      double row = hi(i, i);
      for (Eigen::Index j = 0; j < lo.cols(); ++j) {
        if (j != i) row += std::max(std::abs(lo(i, j)), std::abs(hi(i, j)));
      }
      best = std::max(best, row);
    }
    c[k] = best;
  }
  return c;
}

/// r_k = l M_C E_k Q_k with E_k = exp(sum_{i<k} c_i dt) and
/// Q_k = sum_{i<k} dt / E_i (left-endpoint rule), evaluated through the
/// recursion r_{k+1} = exp(c_k dt) (r_k + l M_C dt). The profile is marked
/// divergent once E_k exceeds 1e100.
inline ClosenessProfile r_profile(const std::vector<double>& c, double ell, double Mc, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("r_profile: dt must be positive");
  if (Mc < 0.0 || ell < 0.0) throw InvalidArgument("r_profile: negative gain or error bound");
  static const double log_limit = std::log(1e100);
  ClosenessProfile p;
  p.ell = ell;
  p.c_values = c;
  p.r_values.resize(c.size());
  p.times.resize(c.size());
  double log_E = 0.0;
  double r = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) {
    p.times[k] = static_cast<double>(k) * dt;
    p.r_values[k] = r;
    if (log_E > log_limit) p.divergent = true;
    log_E += c[k] * dt;
    r = std::exp(c[k] * dt) * (r + ell * Mc * dt);
  }
  if (p.divergent) {
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (!std::isfinite(p.r_values[k])) p.r_values[k] = std::numeric_limits<double>::infinity();
    }
  }
  return p;
}

/// Tube inflated by r_k in the profile's norm (box hull for weighted norms).
inline ReachTube overapproximate(const ReachTube& tube, const ClosenessProfile& profile,
                                 const NormTag& norm = NormTag::inf()) {
  if (profile.divergent) throw DivergentProfile("closeness radius diverged; inflated tube is unusable");
  if (profile.r_values.size() != tube.size()) throw DimensionError("overapproximate: time grids differ");
  ReachTube out;
  out.times = tube.times;
  out.radii = profile.r_values;
  out.boxes.reserve(tube.size());
  for (std::size_t k = 0; k < tube.size(); ++k) {
    out.boxes.push_back(minkowski_inflate(tube.boxes[k], profile.r_values[k], norm));
  }
  return out;
}

}  // namespace cbfreach
