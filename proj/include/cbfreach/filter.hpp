// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cbfreach/dynamics.hpp"

namespace cbfreach {

using ScalarField = std::function<double(const Vec&)>;

/// Barrier function h with linear class-K gain alpha(s) = alpha_slope * s.
struct CbfSpec {
  std::string name;
  ScalarField h;
  VectorField grad_h;
  double alpha_slope = 1.0;
};

/// Extra constraints l(theta, x) = A_ext theta - b_ext <= 0.
struct ExtraConstraints {
  Mat A_ext;
  Vec b_ext;
};

/// min 1/2 ||theta||^2 subject to the CBF rows and optional linear rows.
struct FilterProblem {
  std::vector<CbfSpec> cbfs;
  std::function<ExtraConstraints(const Vec&)> extra_constraints;

  /// min_i h_i(x); non-negative exactly on the safe set.
  double min_h(const Vec& x) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : cbfs) best = std::min(best, c.h(x));
    return best;
  }
};

/// Rows A theta >= b: CBF rows first, then -A_ext theta >= -b_ext.
struct LinearConstraintSet {
  Mat A;
  Vec b;
  Eigen::Index num_cbf = 0;
};

inline LinearConstraintSet build_constraints(const FilterProblem& fp, const ControlAffineSystem& sys,
                                             const Vec& x) {
  if (fp.cbfs.empty()) throw InvalidArgument("FilterProblem needs at least one CBF");
  const Mat G = sys.g(x);
  const Vec ft = sys.f_tilde(x);
  ExtraConstraints extra;
  if (fp.extra_constraints) {
    extra = fp.extra_constraints(x);
    if (extra.A_ext.rows() > 0 && extra.A_ext.cols() != sys.m) {
      throw DimensionError("extra constraint matrix must have m columns");
    }
  }
  const Eigen::Index N = static_cast<Eigen::Index>(fp.cbfs.size());
  const Eigen::Index L = extra.A_ext.rows();
  LinearConstraintSet cs;
  cs.A.resize(N + L, sys.m);
  cs.b.resize(N + L);
  cs.num_cbf = N;
  for (Eigen::Index i = 0; i < N; ++i) {
    const CbfSpec& c = fp.cbfs[static_cast<std::size_t>(i)];
    const Vec grad = c.grad_h(x);
    cs.A.row(i) = (G.transpose() * grad).transpose();
    cs.b[i] = -grad.dot(ft) - c.alpha_slope * c.h(x);
  }
  if (L > 0) {
    cs.A.bottomRows(L) = -extra.A_ext;
    cs.b.tail(L) = -extra.b_ext;
  }
  return cs;
}

struct QpOptions {
  double tol = 1e-9;
  Eigen::Index max_rows = 12;
};

/// Active set certifying a QP solution.
struct QpSolution {
  Vec theta;
  std::vector<Eigen::Index> active;
  Vec multipliers;
};

namespace detail {

inline bool next_combination(std::vector<Eigen::Index>& idx, Eigen::Index p) {
  const auto k = static_cast<Eigen::Index>(idx.size());
  for (Eigen::Index i = k - 1; i >= 0; --i) {
    if (idx[static_cast<std::size_t>(i)] < p - k + i) {
      ++idx[static_cast<std::size_t>(i)];
      for (Eigen::Index j = i + 1; j < k; ++j) {
        idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
      }
      return true;
    }
  }
  return false;
}

}  // namespace detail

/// Exact minimiser of 1/2 ||theta||^2 s.t. A theta >= b by active-set
/// enumeration in increasing cardinality. For each subset S with linearly
/// independent rows, theta = A_S^T lambda with A_S A_S^T lambda = b_S; the
/// first candidate with lambda >= 0 and A theta >= b is the KKT point.
inline QpSolution solve_qp_certified(const LinearConstraintSet& cs, const QpOptions& opt = {}) {
  const Eigen::Index m = cs.A.cols();
  if (cs.A.rows() != cs.b.size()) throw DimensionError("solve_qp: A and b row counts differ");
  if (cs.A.rows() > opt.max_rows) throw InvalidArgument("solve_qp: too many constraints for enumeration");

  // Rows with a vanishing normal are either vacuous or unsatisfiable.
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < cs.A.rows(); ++i) {
    if (cs.A.row(i).norm() < 1e-12) {
      if (cs.b[i] > 0.0) throw DegenerateConstraintsError("constraint row " + std::to_string(i) + " has zero normal and b > 0");
      continue;
    }
    rows.push_back(i);
  }
  const auto p = static_cast<Eigen::Index>(rows.size());
  Mat A(p, m);
  Vec b(p);
  for (Eigen::Index r = 0; r < p; ++r) {
    A.row(r) = cs.A.row(rows[static_cast<std::size_t>(r)]);
    b[r] = cs.b[rows[static_cast<std::size_t>(r)]];
  }

  auto primal_ok = [&](const Vec& theta) {
    const Vec slack = A * theta - b;
    for (Eigen::Index r = 0; r < p; ++r) {
      if (slack[r] < -opt.tol * std::max(1.0, std::abs(b[r]))) return false;
    }
    return true;
  };

  if (primal_ok(Vec::Zero(m))) return {Vec::Zero(m), {}, Vec()};

  bool any_full_rank = false;
  for (Eigen::Index k = 1; k <= std::min(p, m); ++k) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(k));
    for (Eigen::Index j = 0; j < k; ++j) idx[static_cast<std::size_t>(j)] = j;
    do {
      Mat AS(k, m);
      Vec bS(k);
      for (Eigen::Index j = 0; j < k; ++j) {
        AS.row(j) = A.row(idx[static_cast<std::size_t>(j)]);
        bS[j] = b[idx[static_cast<std::size_t>(j)]];
      }
      Eigen::FullPivLU<Mat> lu(AS * AS.transpose());
      lu.setThreshold(1e-12);
      if (lu.rank() < k) continue;
      any_full_rank = true;
      const Vec lambda = lu.solve(bS);
      if (lambda.minCoeff() < -opt.tol) continue;
      const Vec theta = AS.transpose() * lambda;
      if (!primal_ok(theta)) continue;
      std::vector<Eigen::Index> active;
      for (auto j : idx) active.push_back(rows[static_cast<std::size_t>(j)]);
      return {theta, std::move(active), lambda};
    } while (detail::next_combination(idx, p));
  }
  if (!any_full_rank) throw DegenerateConstraintsError("all candidate active sets are rank deficient");
  throw InfeasibleError("safety-filter QP is infeasible");
}

inline Vec solve_qp(const LinearConstraintSet& cs, const QpOptions& opt = {}) {
  return solve_qp_certified(cs, opt).theta;
}

/// Safety-filter correction v(x); the filtered input is kappa(x) + v(x).
inline Vec filter_correction(const FilterProblem& fp, const ControlAffineSystem& sys, const Vec& x,
                             const QpOptions& opt = {}) {
  return solve_qp(build_constraints(fp, sys, x), opt);
}

/// Full input of the filtered system.
inline Vec filtered_input(const FilterProblem& fp, const ControlAffineSystem& sys, const Vec& x) {
  return sys.kappa(x) + filter_correction(fp, sys, x);
}

/// f~(x) + g(x) v(x).
inline Vec filtered_field(const FilterProblem& fp, const ControlAffineSystem& sys, const Vec& x) {
  return sys.f_tilde(x) + sys.g(x) * filter_correction(fp, sys, x);
}

}  // namespace cbfreach
