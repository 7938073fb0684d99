// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iomanip>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/LU>
#include <nlohmann/json.hpp>

#include "cbfreach/dynamics.hpp"
#include "cbfreach/inclusion.hpp"
#include "cbfreach/nnbound.hpp"

namespace cbfreach {

/// 2n-dimensional mixed-monotone embedding of x' = f~(x) + g(x) N(x).
struct EmbeddingSystem {
  InclusionFn f_tilde_inc;
  MatrixInclusion g_inc;
  Mlp net;
  BoundAlgo bound_algo = BoundAlgo::crown;
  CrownOptions crown_options;
  double dt = 0.04;
  double T = 10.0;
  /// Affine NN bounds are reused for up to `stride` steps while the current
  /// box stays inside the box they were computed on.
  std::size_t stride = 1;
  /// When set, the embedding runs in coordinates y = basis * x and every box
  /// is mapped back to the interval hull of its preimage. `original` is the
  /// same embedding in x; both are stepped and intersected each step.
  std::optional<Mat> basis;
  Mat basis_inv;
  std::shared_ptr<const EmbeddingSystem> original;

  Eigen::Index n() const { return net.input_dim(); }
  Eigen::Index m() const { return net.output_dim(); }
};

/// Embedding for a system with an exact f~ inclusion (affine f~) and constant g.
inline EmbeddingSystem make_embedding(const ControlAffineSystem& sys, const Mlp& net, BoundAlgo algo, double dt,
                                      double T) {
  if (net.input_dim() != sys.n || net.output_dim() != sys.m) {
    throw DimensionError("make_embedding: network shape does not match the system");
  }
  if (!sys.is_affine()) throw InvalidArgument("make_embedding: f~ is not affine; build the inclusion explicitly");
  if (!sys.g_is_constant) throw InvalidArgument("make_embedding: g is state dependent; build the inclusion explicitly");
  EmbeddingSystem es;
  es.f_tilde_inc = linear_inclusion(*sys.f_tilde_matrix, sys.f_tilde_offset.value_or(Vec::Zero(sys.n)));
  es.g_inc = constant_g_inclusion(sys.g(Vec::Zero(sys.n)));
  es.net = net;
  es.bound_algo = algo;
  es.dt = dt;
  es.T = T;
  return es;
}

/// Same embedding written in y = basis * x: f~ becomes S A S^-1 y + S c, g
/// becomes S G and the network sees S^-1 y through its first layer.
inline EmbeddingSystem make_embedding(const ControlAffineSystem& sys, const Mlp& net, BoundAlgo algo, double dt,
                                      double T, const Mat& basis) {
  if (basis.rows() != sys.n || basis.cols() != sys.n) throw DimensionError("make_embedding: basis must be n x n");
  Eigen::FullPivLU<Mat> lu(basis);
  if (!lu.isInvertible()) throw InvalidArgument("make_embedding: basis is singular");
  EmbeddingSystem es = make_embedding(sys, net, algo, dt, T);
  es.original = std::make_shared<const EmbeddingSystem>(es);
  const Mat inv = lu.inverse();
  es.f_tilde_inc = linear_inclusion(basis * *sys.f_tilde_matrix * inv,
                                    basis * sys.f_tilde_offset.value_or(Vec::Zero(sys.n)));
  es.g_inc = constant_g_inclusion(basis * sys.g(Vec::Zero(sys.n)));
  std::vector<Layer> layers = net.layers();
  layers.front().W = layers.front().W * inv;
  es.net = Mlp(std::move(layers));
  es.basis = basis;
  es.basis_inv = inv;
  return es;
}

struct EmbeddingRhs {
  Vec dlo;
  Vec dhi;
  /// Diagonal coefficient of the affine lower/upper models (NaN if unknown);
  /// used to keep the Euler update sound.
  Vec diag;
};

namespace detail {

/// Range of sum_j G_ij (C_j x + d_j) over x in `face`, d in [d_lo, d_hi] and
/// G in [G_lo, G_hi].
inline Interval input_term_range(const Mat& G_lo, const Mat& G_hi, const AffineBound& ab, const HyperRect& face,
                                 Eigen::Index i) {
  const bool point_g = G_lo.row(i) == G_hi.row(i);
  if (point_g) {
    const Eigen::RowVectorXd gi = G_lo.row(i);
    const Eigen::RowVectorXd gc = gi * ab.C;
    const auto [lo, hi] = affine_range(gc, face);
    double dlo = 0.0, dhi = 0.0;
    for (Eigen::Index j = 0; j < gi.size(); ++j) {
      dlo += gi[j] >= 0.0 ? gi[j] * ab.d_lo[j] : gi[j] * ab.d_hi[j];
      dhi += gi[j] >= 0.0 ? gi[j] * ab.d_hi[j] : gi[j] * ab.d_lo[j];
    }
    return {lo[0] + dlo, hi[0] + dhi};
  }
  const auto [cxlo, cxhi] = affine_range(ab.C, face);
  Interval total(0.0);
  for (Eigen::Index j = 0; j < ab.C.rows(); ++j) {
    total = total + Interval(G_lo(i, j), G_hi(i, j)) * Interval(cxlo[j] + ab.d_lo[j], cxhi[j] + ab.d_hi[j]);
  }
  return total;
}

inline EmbeddingRhs embed_rhs_with(const EmbeddingSystem& es, const HyperRect& box, const AffineBound& ab) {
  const Eigen::Index n = box.dim();
  const auto [G_lo, G_hi] = es.g_inc(box);
  EmbeddingRhs rhs{Vec(n), Vec(n), Vec::Constant(n, std::numeric_limits<double>::quiet_NaN())};
  const bool point_g = G_lo == G_hi;
  for (Eigen::Index i = 0; i < n; ++i) {
    const HyperRect flo = box.face_lo(i);
    const HyperRect fhi = box.face_hi(i);
    rhs.dlo[i] = es.f_tilde_inc(flo).first[i] + input_term_range(G_lo, G_hi, ab, flo, i).lo;
    rhs.dhi[i] = es.f_tilde_inc(fhi).second[i] + input_term_range(G_lo, G_hi, ab, fhi, i).hi;
    if (es.f_tilde_inc.matrix && point_g) {
      rhs.diag[i] = (*es.f_tilde_inc.matrix)(i, i) + (G_lo.row(i) * ab.C.col(i))(0);
    }
  }
  return rhs;
}

}  // namespace detail

/// Right-hand side of the embedding (in the embedding's own coordinates): for coordinate i the lower rate bounds
/// f~_i + [g(C x + d)]_i over the face x_i = lo_i of the box and the upper rate
/// bounds it over the face x_i = hi_i.
inline EmbeddingRhs embed_rhs(const EmbeddingSystem& es, const Vec& xlo, const Vec& xhi) {
  const HyperRect box(xlo, xhi);
  return detail::embed_rhs_with(es, box, affine_bound(es.net, box, es.bound_algo, es.crown_options));
}

/// Time-indexed boxes; radii are zero until inflated.
struct ReachTube {
  std::vector<double> times;
  std::vector<HyperRect> boxes;
  std::vector<double> radii;

  std::size_t size() const { return boxes.size(); }
  const HyperRect& initial() const { return boxes.front(); }
  const HyperRect& final() const { return boxes.back(); }
};

/// Forward-Euler integration of the embedding system from x0.
///
/// The update x_lo += dt * dlo is sound for the Euler-discretised closed loop
/// when 1 + dt * a_ii >= 0, where a_ii is the diagonal coefficient of the
/// affine rate model; otherwise the interior of the box can overtake the
/// face and the step is widened by (1 + dt * a_ii) * width_i.
namespace detail {

/// One corrected Euler step of the embedding; `ab` and `age` carry the reused
/// network bound between calls.
inline HyperRect embed_step(const EmbeddingSystem& es, const HyperRect& box, AffineBound& ab, std::size_t& age,
                            std::size_t stride, std::size_t k) {
  if (age >= stride || !ab.box.contains(box)) {
    ab = affine_bound(es.net, box, es.bound_algo, es.crown_options);
    age = 0;
  }
  ++age;
  const EmbeddingRhs rhs = embed_rhs_with(es, box, ab);
  Vec lo = box.lo() + es.dt * rhs.dlo;
  Vec hi = box.hi() + es.dt * rhs.dhi;
  const Vec w = box.width();
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    const double a = 1.0 + es.dt * rhs.diag[i];
    if (std::isnan(a) || a >= 0.0) continue;
    lo[i] += a * w[i];
    hi[i] -= a * w[i];
  }
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    if (!std::isfinite(lo[i]) || !std::isfinite(hi[i]) || lo[i] > hi[i]) {
      std::ostringstream msg;
      msg << "embedding order violated at step " << (k + 1) << ", coordinate " << i << ": lo=" << lo[i]
          << " hi=" << hi[i];
      throw OrderViolation(msg.str(), k + 1, static_cast<std::size_t>(i));
    }
  }
  return {std::move(lo), std::move(hi)};
}

/// a intersected with b, or a when rounding leaves them disjoint.
inline HyperRect meet(const HyperRect& a, const HyperRect& b) {
  const Vec lo = a.lo().cwiseMax(b.lo()), hi = a.hi().cwiseMin(b.hi());
  return (lo.array() <= hi.array()).all() ? HyperRect(lo, hi) : a;
}

}  // namespace detail

inline ReachTube integrate_tube(const EmbeddingSystem& es, const HyperRect& x0) {
  if (x0.dim() != es.n()) throw DimensionError("integrate_tube: initial box has wrong dimension");
  const std::size_t steps = step_count(es.dt, es.T);
  ReachTube tube;
  tube.times.reserve(steps + 1);
  tube.boxes.reserve(steps + 1);
  tube.times.push_back(0.0);
  tube.boxes.push_back(x0);

  const bool changed = es.basis.has_value();
  // x-coordinate companion; dropped once it breaks down, which is expected
  // when the basis change was needed in the first place.
  bool track_x = changed && es.original;
  HyperRect y = changed ? interval_mat_vec(*es.basis, *es.basis, x0) : x0;
  HyperRect x = x0;
  AffineBound ab, ab_x;
  std::size_t age = es.stride, age_x = es.stride;
  for (std::size_t k = 0; k < steps; ++k) {
    y = detail::embed_step(es, y, ab, age, es.stride, k);
    if (changed) {
      const HyperRect from_y = interval_mat_vec(es.basis_inv, es.basis_inv, y);
      if (track_x) {
        try {
          x = detail::meet(detail::embed_step(*es.original, x, ab_x, age_x, es.stride, k), from_y);
          y = detail::meet(y, interval_mat_vec(*es.basis, *es.basis, x));
        } catch (const OrderViolation&) {
          track_x = false;
          x = from_y;
        }
      } else {
        x = from_y;
      }
      tube.boxes.push_back(x);
    } else {
      tube.boxes.push_back(y);
    }
    tube.times.push_back(static_cast<double>(k + 1) * es.dt);
  }
  tube.radii.assign(tube.boxes.size(), 0.0);
  return tube;
}

/// JSON lines: {"t":..., "lo":[...], "hi":[...], "r":...} per stamp.
inline void write_tube_jsonl(std::ostream& os, const ReachTube& tube) {
  for (std::size_t k = 0; k < tube.size(); ++k) {
    nlohmann::json j = tube.boxes[k];
    j["t"] = tube.times[k];
    j["r"] = k < tube.radii.size() ? tube.radii[k] : 0.0;
    os << j.dump() << '\n';
  }
}

inline ReachTube read_tube_jsonl(std::istream& is) {
  ReachTube tube;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      tube.times.push_back(j.at("t").get<double>());
      tube.boxes.push_back(j.get<HyperRect>());
      tube.radii.push_back(j.value("r", 0.0));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("malformed tube line: ") + e.what());
    }
  }
  if (tube.boxes.empty()) throw FormatError("empty tube file");
  return tube;
}

}  // namespace cbfreach
