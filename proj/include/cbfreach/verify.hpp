// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cbfreach/closeness.hpp"
#include "cbfreach/embedding.hpp"
#include "cbfreach/filter.hpp"
#include "cbfreach/parallel.hpp"

namespace cbfreach {

// ---------------------------------------------------------------------------
// Closed-loop samplers
// ---------------------------------------------------------------------------

/// Maps a batch of states (one per column) to their closed-loop derivatives.
using BatchField = std::function<Mat(const Mat&)>;

/// f~(x) + g(x) N(x), batched through the network.
inline BatchField nn_closed_loop(const ControlAffineSystem& sys, const Mlp& net) {
  return [&sys, &net](const Mat& X) {
    const Mat U = net.eval_batch(X);
    Mat dX(X.rows(), X.cols());
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
      const Vec x = X.col(c);
      dX.col(c) = sys.f_tilde(x) + sys.g(x) * U.col(c);
    }
    return dX;
  };
}

/// f~(x) + g(x) v(x) with the exact QP filter.
inline BatchField filtered_closed_loop(const ControlAffineSystem& sys, const FilterProblem& fp) {
  return [&sys, &fp](const Mat& X) {
    Mat dX(X.rows(), X.cols());
    for (Eigen::Index c = 0; c < X.cols(); ++c) dX.col(c) = filtered_field(fp, sys, X.col(c));
    return dX;
  };
}

/// Same Euler scheme as `integrate`, for many initial states at once. Returns
/// one matrix per stamp (states as columns).
inline std::vector<Mat> integrate_batch(const BatchField& field, const Mat& X0, double dt, double T) {
  const std::size_t steps = step_count(dt, T);
  std::vector<Mat> out;
  out.reserve(steps + 1);
  out.push_back(X0);
  for (std::size_t k = 0; k < steps; ++k) {
    const Mat& X = out.back();
    out.push_back(X + dt * field(X));
  }
  return out;
}

/// Uniform samples in a box (columns), deterministic in `seed`.
inline Mat sample_box(const HyperRect& box, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Mat X(box.dim(), static_cast<Eigen::Index>(count));
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    for (Eigen::Index i = 0; i < X.rows(); ++i) X(i, c) = box.lo()[i] + unit(rng) * (box.hi()[i] - box.lo()[i]);
  }
  return X;
}

// ---------------------------------------------------------------------------
// Monte-Carlo containment
// ---------------------------------------------------------------------------

struct ContainmentReport {
  std::size_t samples = 0;
  std::size_t violating_samples = 0;  // trajectories leaving the tube at least once
  std::size_t violating_stamps = 0;   // (sample, stamp) pairs outside
  std::vector<double> max_excess;     // per stamp, l-inf distance outside the box
  double worst_excess = 0.0;

  bool ok() const { return violating_samples == 0; }
};

inline void to_json(nlohmann::json& j, const ContainmentReport& r) {
  j = {{"samples", r.samples},
       {"violating_samples", r.violating_samples},
       {"violating_stamps", r.violating_stamps},
       {"worst_excess", r.worst_excess}};
}

/// Samples initial states in tube.boxes[0], integrates them with `field` at
/// the tube's step and checks membership at every shared stamp.
inline ContainmentReport mc_containment(const ReachTube& tube, const BatchField& field, std::size_t n_samples,
                                        std::uint64_t seed = 0, double tol = 1e-9,
                                        const HyperRect* initial_set = nullptr) {
  if (tube.size() < 1) throw InvalidArgument("mc_containment: empty tube");
  const double dt = tube.size() > 1 ? tube.times[1] - tube.times[0] : 1.0;
  const double T = tube.times.back();
  const HyperRect& x0 = initial_set ? *initial_set : tube.initial();
  const auto states = integrate_batch(field, sample_box(x0, n_samples, seed), dt, T);
  if (states.size() != tube.size()) throw InvalidArgument("mc_containment: time grids differ");
  ContainmentReport rep;
  rep.samples = n_samples;
  rep.max_excess.assign(tube.size(), 0.0);
  std::vector<char> bad(n_samples, 0);
  for (std::size_t k = 0; k < tube.size(); ++k) {
    for (Eigen::Index c = 0; c < states[k].cols(); ++c) {
      const double excess = tube.boxes[k].distance_inf(states[k].col(c));
      if (excess > tol) {
        ++rep.violating_stamps;
        bad[static_cast<std::size_t>(c)] = 1;
        rep.max_excess[k] = std::max(rep.max_excess[k], excess);
      }
    }
    rep.worst_excess = std::max(rep.worst_excess, rep.max_excess[k]);
  }
  for (char b : bad) rep.violating_samples += static_cast<std::size_t>(b);
  return rep;
}

/// Every box shrunk about its centre to `factor` of its width.
inline ReachTube shrink_tube(const ReachTube& tube, double factor) {
  ReachTube out = tube;
  for (auto& b : out.boxes) {
    const Vec c = b.center();
    const Vec h = 0.5 * factor * b.width();
    b = HyperRect(c - h, c + h);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Equilibria
// ---------------------------------------------------------------------------

enum class Stability { stable, saddle, unstable, marginal };

inline std::string to_string(Stability s) {
  switch (s) {
    case Stability::stable: return "stable";
    case Stability::saddle: return "saddle";
    case Stability::unstable: return "unstable";
    case Stability::marginal: return "marginal";
  }
  return "?";
}

struct EquilibriumReport {
  Vec location;
  double residual = 0.0;
  std::vector<std::complex<double>> jacobian_eigs;
  Stability classification = Stability::marginal;
  bool is_undesirable = false;
  bool nonsmooth = false;
};

inline void to_json(nlohmann::json& j, const EquilibriumReport& e) {
  std::vector<std::array<double, 2>> eigs;
  for (const auto& z : e.jacobian_eigs) eigs.push_back({z.real(), z.imag()});
  j = {{"location", std::vector<double>(e.location.data(), e.location.data() + e.location.size())},
       {"residual", e.residual},
       {"eigenvalues", eigs},
       {"classification", to_string(e.classification)},
       {"undesirable", e.is_undesirable},
       {"nonsmooth", e.nonsmooth}};
}

struct EquilibriumOptions {
  double fd_step = 1e-5;
  double residual_tol = 1e-10;
  double dedup_tol = 1e-4;
  double eig_tol = 1e-6;
  int max_iter = 100;
  /// Seeds (and converged points) with min_i h_i below this are discarded.
  double min_h = -1e-6;
};

namespace detail {

inline std::vector<Eigen::Index> active_set_at(const FilterProblem& fp, const ControlAffineSystem& sys, const Vec& x) {
  return solve_qp_certified(build_constraints(fp, sys, x)).active;
}

}  // namespace detail

/// Damped Newton on F(x) = f~(x) + g(x) v(x) from each seed, with central
/// finite-difference Jacobians; one-sided differences where the active set
/// changes across the stencil.
inline std::vector<EquilibriumReport> find_equilibria(const ControlAffineSystem& sys, const FilterProblem& fp,
                                                      const std::vector<Vec>& seeds,
                                                      const EquilibriumOptions& opt = {},
                                                      std::vector<std::string>* log = nullptr) {
  const VectorField F = [&](const Vec& x) { return filtered_field(fp, sys, x); };
  auto safe_norm = [&](const Vec& x) {
    try {
      return F(x).cwiseAbs().maxCoeff();
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  auto jacobian = [&](const Vec& x, bool& nonsmooth) {
    const auto centre = detail::active_set_at(fp, sys, x);
    const Vec f0 = F(x);
    Mat J(sys.n, sys.n);
    nonsmooth = false;
    for (Eigen::Index j = 0; j < sys.n; ++j) {
      Vec xp = x, xm = x;
      xp[j] += opt.fd_step;
      xm[j] -= opt.fd_step;
      const bool same_p = detail::active_set_at(fp, sys, xp) == centre;
      const bool same_m = detail::active_set_at(fp, sys, xm) == centre;
      if (same_p && same_m) {
        J.col(j) = (F(xp) - F(xm)) / (2.0 * opt.fd_step);
      } else {
        nonsmooth = true;
        J.col(j) = same_p ? Vec((F(xp) - f0) / opt.fd_step) : Vec((f0 - F(xm)) / opt.fd_step);
      }
    }
    return J;
  };

  std::vector<EquilibriumReport> found;
  for (const Vec& seed : seeds) {
    if (fp.min_h(seed) < opt.min_h) continue;
    Vec x = seed;
    double res = safe_norm(x);
    bool converged = false;
    for (int it = 0; it < opt.max_iter && std::isfinite(res); ++it) {
      if (res < opt.residual_tol) {
        converged = true;
        break;
      }
      bool ns = false;
      Mat J;
      try {
        J = jacobian(x, ns);
      } catch (const Error&) {
        break;
      }
      Eigen::FullPivLU<Mat> lu(J);
      if (!lu.isInvertible()) break;
      const Vec step = lu.solve(-F(x));
      double t = 1.0;
      bool moved = false;
      while (t > 1e-6) {
        const Vec trial = x + t * step;
        const double r = safe_norm(trial);
        if (r < res) {
          x = trial;
          res = r;
          moved = true;
          break;
        }
        t *= 0.5;
      }
      if (!moved) break;
    }
    if (!converged || fp.min_h(x) < opt.min_h) {
      if (log) log->push_back("seed did not converge to an admissible equilibrium");
      continue;
    }
    bool duplicate = false;
    for (const auto& e : found) {
      if ((e.location - x).cwiseAbs().maxCoeff() < opt.dedup_tol) duplicate = true;
    }
    if (duplicate) continue;

    EquilibriumReport rep;
    rep.location = x;
    rep.residual = res;
    const Mat J = jacobian(x, rep.nonsmooth);
    if (rep.nonsmooth && log) log->push_back("equilibrium on an active-set switching surface; one-sided Jacobian");
    const Eigen::VectorXcd eig = Eigen::EigenSolver<Mat>(J).eigenvalues();
    int neg = 0, pos = 0;
    for (Eigen::Index i = 0; i < eig.size(); ++i) {
      rep.jacobian_eigs.push_back(eig[i]);
      if (eig[i].real() < -opt.eig_tol) ++neg;
      if (eig[i].real() > opt.eig_tol) ++pos;
    }
    const int total = static_cast<int>(eig.size());
    if (neg == total) {
      rep.classification = Stability::stable;
    } else if (pos == total) {
      rep.classification = Stability::unstable;
    } else if (neg > 0 && pos > 0) {
      rep.classification = Stability::saddle;
    } else {
      rep.classification = Stability::marginal;
    }
    rep.is_undesirable = sys.f_tilde(x).cwiseAbs().maxCoeff() > 1e-8;
    found.push_back(std::move(rep));
  }
  return found;
}

// ---------------------------------------------------------------------------
// Forward invariance
// ---------------------------------------------------------------------------

struct InvarianceReport {
  std::vector<double> min_h;  // per CBF, over samples and time
  std::size_t samples = 0;
  Vec worst_start;
  bool pass = false;
};

inline void to_json(nlohmann::json& j, const InvarianceReport& r) {
  j = {{"min_h", r.min_h}, {"samples", r.samples}, {"pass", r.pass}};
}

/// Integrates `field` from every sample and records min_t h_i(x(t)).
inline InvarianceReport check_invariance(const FilterProblem& fp, const BatchField& field, const Mat& x0_samples,
                                         double dt, double T, double tol) {
  const auto states = integrate_batch(field, x0_samples, dt, T);
  InvarianceReport rep;
  rep.samples = static_cast<std::size_t>(x0_samples.cols());
  rep.min_h.assign(fp.cbfs.size(), std::numeric_limits<double>::infinity());
  double worst = std::numeric_limits<double>::infinity();
  for (const Mat& X : states) {
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
      for (std::size_t i = 0; i < fp.cbfs.size(); ++i) {
        const double h = fp.cbfs[i].h(X.col(c));
        rep.min_h[i] = std::min(rep.min_h[i], h);
        if (h < worst) {
          worst = h;
          rep.worst_start = x0_samples.col(c);
        }
      }
    }
  }
  rep.pass = worst >= -tol;
  return rep;
}

inline InvarianceReport check_invariance(const ControlAffineSystem& sys, const FilterProblem& fp,
                                         const Mat& x0_samples, double dt, double T, double tol) {
  return check_invariance(fp, filtered_closed_loop(sys, fp), x0_samples, dt, T, tol);
}

/// False when the filter QP becomes infeasible or degenerate somewhere along
/// the Euler trajectory from x0; the filtered closed loop is undefined there.
inline bool filter_defined_along(const ControlAffineSystem& sys, const FilterProblem& fp, const Vec& x0, double dt,
                                 double T) {
  Vec x = x0;
  const std::size_t steps = step_count(dt, T);
  try {
    for (std::size_t k = 0; k < steps; ++k) x += dt * filtered_field(fp, sys, x);
    (void)filtered_field(fp, sys, x);
  } catch (const InfeasibleError&) {
    return false;
  } catch (const DegenerateConstraintsError&) {
    return false;
  }
  return true;
}

/// Uniform samples of S intersected with `box` by rejection. Candidates that
/// fail `accept` are skipped and counted in `rejected`.
inline Mat sample_safe_set(const FilterProblem& fp, const HyperRect& box, std::size_t count, std::uint64_t seed,
                           const std::function<bool(const Vec&)>& accept = nullptr, std::size_t* rejected = nullptr) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Mat X(box.dim(), static_cast<Eigen::Index>(count));
  Eigen::Index filled = 0;
  if (rejected) *rejected = 0;
  for (std::size_t tries = 0; filled < X.cols(); ++tries) {
    if (tries > 1000 * count + 1000) throw InvalidArgument("sample_safe_set: safe set too small in box");
    Vec x(box.dim());
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = box.lo()[i] + unit(rng) * (box.hi()[i] - box.lo()[i]);
    if (fp.min_h(x) < 0.0) continue;
    if (accept && !accept(x)) {
      if (rejected) ++*rejected;
      continue;
    }
    X.col(filled++) = x;
  }
  return X;
}

// ---------------------------------------------------------------------------
// Verdicts
// ---------------------------------------------------------------------------

enum class Outcome { converges_to_origin, enters_basin_of_undesirable, inconclusive };

inline std::string to_string(Outcome o) {
  switch (o) {
    case Outcome::converges_to_origin: return "converges-to-origin";
    case Outcome::enters_basin_of_undesirable: return "enters-basin-of-undesirable";
    case Outcome::inconclusive: return "inconclusive";
  }
  return "?";
}

struct VerdictConfig {
  double radius = 0.3;
};

struct Verdict {
  HyperRect initial_box;
  Outcome outcome = Outcome::inconclusive;
  HyperRect final_box;
  double distance_to_origin = 0.0;  // max l-inf distance of the final box from the origin
  std::optional<Vec> attractor;     // undesirable equilibrium reached, if any
  double distance_to_attractor = std::numeric_limits<double>::infinity();
};

inline void to_json(nlohmann::json& j, const Verdict& v) {
  j = {{"initial_box", v.initial_box},
       {"outcome", to_string(v.outcome)},
       {"final_box", v.final_box},
       {"distance_to_origin", v.distance_to_origin}};
  if (v.attractor) {
    j["attractor"] = std::vector<double>(v.attractor->data(), v.attractor->data() + v.attractor->size());
    j["distance_to_attractor"] = v.distance_to_attractor;
  }
}

/// Largest l-inf distance from `z` to a point of the box.
inline double farthest_inf(const HyperRect& box, const Vec& z) {
  return std::max((box.hi() - z).cwiseAbs().maxCoeff(), (box.lo() - z).cwiseAbs().maxCoeff());
}

inline Verdict classify_reach(const ReachTube& inflated, const std::vector<EquilibriumReport>& equilibria,
                              const VerdictConfig& cfg = {}) {
  Verdict v;
  v.initial_box = inflated.initial();
  v.final_box = inflated.final();
  v.distance_to_origin = farthest_inf(v.final_box, Vec::Zero(v.final_box.dim()));
  for (const auto& e : equilibria) {
    if (!e.is_undesirable || e.classification != Stability::stable) continue;
    const double d = farthest_inf(v.final_box, e.location);
    if (d < v.distance_to_attractor) {
      v.distance_to_attractor = d;
      v.attractor = e.location;
    }
  }
  if (v.distance_to_origin <= cfg.radius) {
    v.outcome = Outcome::converges_to_origin;
  } else if (v.attractor && v.distance_to_attractor <= cfg.radius) {
    v.outcome = Outcome::enters_basin_of_undesirable;
  }
  return v;
}

}  // namespace cbfreach
