// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "cbfreach/errors.hpp"

namespace cbfreach {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Scalar intervals
// ---------------------------------------------------------------------------

/// Closed interval [lo, hi] with plain (non-outward-rounded) double arithmetic.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  constexpr Interval() = default;
  constexpr Interval(double point) : lo(point), hi(point) {}  // NOLINT
  Interval(double lo_, double hi_) : lo(lo_), hi(hi_) {
    if (!(lo <= hi)) throw InvalidArgument("Interval: lo > hi");
  }

  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  bool contains(double x) const { return lo <= x && x <= hi; }
  bool contains(const Interval& o) const { return lo <= o.lo && o.hi <= hi; }
};

inline Interval operator+(const Interval& a, const Interval& b) {
  return {a.lo + b.lo, a.hi + b.hi};
}
inline Interval operator-(const Interval& a, const Interval& b) {
  return {a.lo - b.hi, a.hi - b.lo};
}
inline Interval operator-(const Interval& a) { return {-a.hi, -a.lo}; }
inline Interval operator*(const Interval& a, const Interval& b) {
  const double p[4] = {a.lo * b.lo, a.lo * b.hi, a.hi * b.lo, a.hi * b.hi};
  return {*std::min_element(p, p + 4), *std::max_element(p, p + 4)};
}
inline Interval square(const Interval& a) {
  if (a.lo >= 0.0) return {a.lo * a.lo, a.hi * a.hi};
  if (a.hi <= 0.0) return {a.hi * a.hi, a.lo * a.lo};
  return {0.0, std::max(a.lo * a.lo, a.hi * a.hi)};
}

// ---------------------------------------------------------------------------
// Hyper-rectangles
// ---------------------------------------------------------------------------

/// Axis-aligned box [lo, hi] in R^n.
class HyperRect {
 public:
  HyperRect() = default;
  HyperRect(Vec lo, Vec hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
    if (lo_.size() != hi_.size()) throw DimensionError("HyperRect: lo/hi dimension mismatch");
    for (Eigen::Index i = 0; i < lo_.size(); ++i) {
      if (!(lo_[i] <= hi_[i])) throw InvalidArgument("HyperRect: lo > hi in coordinate " + std::to_string(i));
    }
  }
  static HyperRect point(const Vec& x) { return {x, x}; }

  Eigen::Index dim() const { return lo_.size(); }
  const Vec& lo() const { return lo_; }
  const Vec& hi() const { return hi_; }
  Vec center() const { return 0.5 * (lo_ + hi_); }
  Vec width() const { return hi_ - lo_; }
  Interval operator[](Eigen::Index i) const { return {lo_[i], hi_[i]}; }

  bool contains(const Vec& x, double tol = 0.0) const {
    if (x.size() != dim()) throw DimensionError("HyperRect::contains: dimension mismatch");
    return ((x.array() >= lo_.array() - tol) && (x.array() <= hi_.array() + tol)).all();
  }
  bool contains(const HyperRect& o, double tol = 0.0) const {
    return contains(o.lo_, tol) && contains(o.hi_, tol);
  }
  /// l-inf distance from x to the box (0 inside).
  double distance_inf(const Vec& x) const {
    const Vec below = (lo_ - x).cwiseMax(0.0);
    const Vec above = (x - hi_).cwiseMax(0.0);
    return std::max(below.maxCoeff(), above.maxCoeff());
  }
  /// Same box with coordinate i collapsed to lo_i (face_lo) or hi_i (face_hi).
  HyperRect face_lo(Eigen::Index i) const {
    Vec h = hi_;
    h[i] = lo_[i];
    return {lo_, h};
  }
  HyperRect face_hi(Eigen::Index i) const {
    Vec l = lo_;
    l[i] = hi_[i];
    return {l, hi_};
  }

 private:
  Vec lo_;
  Vec hi_;
};

inline void to_json(nlohmann::json& j, const HyperRect& box) {
  j = nlohmann::json{{"lo", std::vector<double>(box.lo().data(), box.lo().data() + box.dim())},
                     {"hi", std::vector<double>(box.hi().data(), box.hi().data() + box.dim())}};
}

inline void from_json(const nlohmann::json& j, HyperRect& box) {
  if (!j.is_object() || !j.contains("lo") || !j.contains("hi")) {
    throw FormatError("HyperRect JSON needs \"lo\" and \"hi\"");
  }
  const auto lo = j.at("lo").get<std::vector<double>>();
  const auto hi = j.at("hi").get<std::vector<double>>();
  box = HyperRect(Eigen::Map<const Vec>(lo.data(), static_cast<Eigen::Index>(lo.size())),
                  Eigen::Map<const Vec>(hi.data(), static_cast<Eigen::Index>(hi.size())));
}

// ---------------------------------------------------------------------------
// Norms
// ---------------------------------------------------------------------------

enum class NormKind { inf, two, weighted_two };

/// Vector norm selector; weighted_two is ||x||_P = sqrt(x^T P x).
struct NormTag {
  NormKind kind = NormKind::inf;
  Mat P;

  static NormTag inf() { return {NormKind::inf, {}}; }
  static NormTag two() { return {NormKind::two, {}}; }
  static NormTag weighted_two(Mat P) {
    if (P.rows() != P.cols()) throw DimensionError("NormTag: P must be square");
    if (!P.isApprox(P.transpose(), 1e-12)) throw InvalidArgument("NormTag: P must be symmetric");
    Eigen::LLT<Mat> llt(P);
    if (llt.info() != Eigen::Success) throw InvalidArgument("NormTag: P must be positive definite");
    return {NormKind::weighted_two, std::move(P)};
  }

  /// R with P = R^T R, so ||x||_P = ||R x||_2. Identity for unweighted norms.
  Mat factor(Eigen::Index n) const {
    if (kind != NormKind::weighted_two) return Mat::Identity(n, n);
    if (P.rows() != n) throw DimensionError("NormTag: P dimension mismatch");
    return Eigen::LLT<Mat>(P).matrixU();
  }
};

inline std::string to_string(NormKind k) {
  switch (k) {
    case NormKind::inf: return "inf";
    case NormKind::two: return "two";
    case NormKind::weighted_two: return "weighted-two";
  }
  return "?";
}

inline double norm(const NormTag& tag, const Vec& x) {
  switch (tag.kind) {
    case NormKind::inf: return x.size() == 0 ? 0.0 : x.cwiseAbs().maxCoeff();
    case NormKind::two: return x.norm();
    case NormKind::weighted_two: return std::sqrt(x.dot(tag.P * x));
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Matrix utilities
// ---------------------------------------------------------------------------

/// Entrywise (max(A,0), min(A,0)).
inline std::pair<Mat, Mat> split_pos_neg(const Mat& A) {
  return {A.cwiseMax(0.0), A.cwiseMin(0.0)};
}

/// z with entry i replaced by w_i.
inline Vec replace_coord(const Vec& z, const Vec& w, Eigen::Index i) {
  if (z.size() != w.size()) throw DimensionError("replace_coord: z and w differ in dimension");
  if (i < 0 || i >= z.size()) throw std::out_of_range("replace_coord: index out of range");
  Vec out = z;
  out[i] = w[i];
  return out;
}

/// l-inf log-norm: max_i (a_ii + sum_{j != i} |a_ij|).
inline double matrix_measure_inf(const Mat& A) {
  if (A.rows() != A.cols()) throw DimensionError("matrix_measure_inf: matrix must be square");
  if (A.rows() == 0) return 0.0;
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    double row = A(i, i);
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
      if (j != i) row += std::abs(A(i, j));
    }
    best = std::max(best, row);
  }
  return best;
}

/// Log-norm induced by `tag`. For ||.||_P this is lambda_max(sym(R A R^-1)).
inline double matrix_measure(const NormTag& tag, const Mat& A) {
  if (A.rows() != A.cols()) throw DimensionError("matrix_measure: matrix must be square");
  if (tag.kind == NormKind::inf) return matrix_measure_inf(A);
  Mat M = A;
  if (tag.kind == NormKind::weighted_two) {
    const Mat R = tag.factor(A.rows());
    M = R * A * R.inverse();
  }
  const Mat S = 0.5 * (M + M.transpose());
  return Eigen::SelfAdjointEigenSolver<Mat>(S, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff();
}

/// Induced norm sup_{||u||_in <= 1} ||G u||_out for an n x m matrix.
/// The input norm must be unweighted (l-inf or l2).
inline double induced_norm(const NormTag& out, const NormTag& in, const Mat& G) {
  if (in.kind == NormKind::weighted_two) throw InvalidArgument("induced_norm: weighted input norm unsupported");
  const Eigen::Index m = G.cols();
  if (out.kind == NormKind::inf) {
    if (in.kind == NormKind::inf) return G.cwiseAbs().rowwise().sum().maxCoeff();
    return G.rowwise().norm().maxCoeff();
  }
  const Mat RG = out.factor(G.rows()) * G;
  if (in.kind == NormKind::two) {
    return Eigen::JacobiSVD<Mat>(RG).singularValues()(0);
  }
  // l-inf input ball: the convex maximum is attained at a sign vertex.
  if (m > 20) throw InvalidArgument("induced_norm: too many inputs for vertex enumeration");
  double best = 0.0;
  Vec s(m);
  for (unsigned long mask = 0; mask < (1ul << m); ++mask) {
    for (Eigen::Index j = 0; j < m; ++j) s[j] = (mask >> j) & 1ul ? 1.0 : -1.0;
    best = std::max(best, (RG * s).norm());
  }
  return best;
}

/// Half-widths of the tightest box containing the ball B(r, 0) of `tag`.
inline Vec ball_box_halfwidths(const NormTag& tag, Eigen::Index n, double r) {
  if (tag.kind == NormKind::weighted_two) {
    return r * tag.P.inverse().diagonal().cwiseSqrt();
  }
  return Vec::Constant(n, r);
}

/// box (+) B_inf(r, 0) = [lo - r, hi + r].
inline HyperRect minkowski_inflate_inf(const HyperRect& box, double r) {
  if (!(r >= 0.0)) throw InvalidArgument("minkowski_inflate_inf: negative radius");
  return {box.lo().array() - r, box.hi().array() + r};
}

/// Box hull of box (+) B(r, 0); exact for l-inf, the bounding box otherwise.
inline HyperRect minkowski_inflate(const HyperRect& box, double r, const NormTag& tag) {
  if (!(r >= 0.0)) throw InvalidArgument("minkowski_inflate: negative radius");
  if (tag.kind == NormKind::inf) return minkowski_inflate_inf(box, r);
  const Vec h = ball_box_halfwidths(tag, box.dim(), r);
  return {box.lo() - h, box.hi() + h};
}

/// Enclosure of {A v : A in [A_lo, A_hi], v in x}.
inline HyperRect interval_mat_vec(const Mat& A_lo, const Mat& A_hi, const HyperRect& x) {
  if (A_lo.rows() != A_hi.rows() || A_lo.cols() != A_hi.cols()) {
    throw DimensionError("interval_mat_vec: A_lo and A_hi differ in shape");
  }
  if (A_lo.cols() != x.dim()) throw DimensionError("interval_mat_vec: matrix/box dimension mismatch");
  Vec lo = Vec::Zero(A_lo.rows());
  Vec hi = Vec::Zero(A_lo.rows());
  for (Eigen::Index i = 0; i < A_lo.rows(); ++i) {
    for (Eigen::Index j = 0; j < A_lo.cols(); ++j) {
      const Interval prod = Interval(A_lo(i, j), A_hi(i, j)) * x[j];
      lo[i] += prod.lo;
      hi[i] += prod.hi;
    }
  }
  return {lo, hi};
}

/// Point-matrix specialisation: [A+ lo + A- hi, A+ hi + A- lo].
inline std::pair<Vec, Vec> affine_range(const Mat& A, const HyperRect& x) {
  const auto [Ap, An] = split_pos_neg(A);
  return {Ap * x.lo() + An * x.hi(), Ap * x.hi() + An * x.lo()};
}

}  // namespace cbfreach
