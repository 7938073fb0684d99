// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "cbfreach/fnn.hpp"

namespace cbfreach {

/// C x + d_lo <= N(x) <= C x + d_hi for every x in `box`.
struct AffineBound {
  Mat C;
  Vec d_lo;
  Vec d_hi;
  HyperRect box;
};

/// Interval bounds of every hidden pre-activation.
struct PreActBounds {
  std::vector<Vec> lo;
  std::vector<Vec> hi;
};

enum class BoundAlgo { ibp, crown };

inline std::string to_string(BoundAlgo a) { return a == BoundAlgo::ibp ? "ibp" : "crown"; }

inline BoundAlgo bound_algo_from_string(const std::string& s) {
  if (s == "ibp") return BoundAlgo::ibp;
  if (s == "crown") return BoundAlgo::crown;
  throw InvalidArgument("unknown bound algorithm \"" + s + "\"");
}

/// Lower-line slope for unstable ReLUs: adaptive picks 1 when hi >= -lo.
enum class ReluLowerSlope { adaptive, zero, one };

/// Source of the hidden pre-activation bounds used by the relaxation. `crown`
/// runs a backward pass per hidden layer and intersects with IBP.
enum class IntermediateBounds { ibp, crown };

struct CrownOptions {
  ReluLowerSlope lower_slope = ReluLowerSlope::adaptive;
  IntermediateBounds intermediate = IntermediateBounds::crown;
};

namespace detail {

inline void check_box(const Mlp& net, const HyperRect& box) {
  if (box.dim() != net.input_dim()) throw DimensionError("bound propagation: box dimension does not match the network");
}

/// Layerwise interval propagation; returns hidden pre-activation bounds and
/// writes the output interval.
inline PreActBounds propagate_intervals(const Mlp& net, const HyperRect& box, Vec& out_lo, Vec& out_hi) {
  PreActBounds pre;
  Vec lo = box.lo();
  Vec hi = box.hi();
  const auto& layers = net.layers();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto [Wp, Wn] = split_pos_neg(layers[k].W);
    Vec zlo = Wp * lo + Wn * hi + layers[k].b;
    Vec zhi = Wp * hi + Wn * lo + layers[k].b;
    if (k + 1 == layers.size()) {
      out_lo = std::move(zlo);
      out_hi = std::move(zhi);
      break;
    }
    pre.lo.push_back(zlo);
    pre.hi.push_back(zhi);
    if (layers[k].act == Activation::relu) {
      lo = zlo.cwiseMax(0.0);
      hi = zhi.cwiseMax(0.0);
    } else {
      lo = std::move(zlo);
      hi = std::move(zhi);
    }
  }
  return pre;
}

}  // namespace detail

inline PreActBounds preactivation_bounds(const Mlp& net, const HyperRect& box) {
  detail::check_box(net, box);
  Vec lo, hi;
  return detail::propagate_intervals(net, box, lo, hi);
}

/// Interval bound propagation: C = 0.
inline AffineBound ibp(const Mlp& net, const HyperRect& box) {
  detail::check_box(net, box);
  AffineBound ab;
  detail::propagate_intervals(net, box, ab.d_lo, ab.d_hi);
  ab.C = Mat::Zero(net.output_dim(), net.input_dim());
  ab.box = box;
  return ab;
}

namespace detail {

/// One backward relaxation pass from the affine map of layer `start` down to
/// the input. `upper` selects the bound direction; pre-activation bounds of
/// layers below `start` must be present in `pre`.
inline void crown_pass(const Mlp& net, const PreActBounds& pre, const CrownOptions& opt, bool upper, std::size_t start,
                       Mat& Lambda, Vec& offset) {
  const auto& layers = net.layers();
  Lambda = layers[start].W;
  offset = layers[start].b;
  for (std::size_t k = start; k-- > 0;) {
    const Layer& L = layers[k];
    if (L.act == Activation::relu) {
      const Vec& l = pre.lo[k];
      const Vec& u = pre.hi[k];
      for (Eigen::Index i = 0; i < l.size(); ++i) {
        double up_slope = 0.0, up_icpt = 0.0, lo_slope = 0.0;
        if (l[i] >= 0.0) {
          up_slope = lo_slope = 1.0;
        } else if (u[i] <= 0.0) {
          up_slope = lo_slope = 0.0;
        } else {
          up_slope = u[i] / (u[i] - l[i]);
          up_icpt = -up_slope * l[i];
          switch (opt.lower_slope) {
            case ReluLowerSlope::adaptive: lo_slope = u[i] >= -l[i] ? 1.0 : 0.0; break;
            case ReluLowerSlope::zero: lo_slope = 0.0; break;
            case ReluLowerSlope::one: lo_slope = 1.0; break;
          }
        }
        for (Eigen::Index r = 0; r < Lambda.rows(); ++r) {
          const double coef = Lambda(r, i);
          // Upper bound wants the upper line where coef > 0; lower bound where coef < 0.
          const bool use_upper_line = upper ? coef > 0.0 : coef < 0.0;
          if (use_upper_line) {
            offset[r] += coef * up_icpt;
            Lambda(r, i) = coef * up_slope;
          } else {
            Lambda(r, i) = coef * lo_slope;
          }
        }
      }
    }
    offset += Lambda * L.b;
    Lambda = Lambda * L.W;
  }
}

/// IBP bounds tightened layer by layer with backward passes.
inline PreActBounds crown_preactivation_bounds(const Mlp& net, const HyperRect& box, const CrownOptions& opt) {
  Vec out_lo, out_hi;
  PreActBounds pre = propagate_intervals(net, box, out_lo, out_hi);
  PreActBounds tight;
  for (std::size_t k = 0; k < pre.lo.size(); ++k) {
    Mat Lam;
    Vec off;
    crown_pass(net, tight, opt, false, k, Lam, off);
    Vec lo = affine_range(Lam, box).first + off;
    crown_pass(net, tight, opt, true, k, Lam, off);
    Vec hi = affine_range(Lam, box).second + off;
    tight.lo.push_back(lo.cwiseMax(pre.lo[k]));
    tight.hi.push_back(hi.cwiseMin(pre.hi[k]));
  }
  return tight;
}

}  // namespace detail

/// Backward linear relaxation. The two passes have different linear terms but
/// AffineBound carries one C per output row, so each row takes C_lo or C_up
/// and loosens the other side by bounding (C_up - C_lo) x over the box. A row
/// whose concretization is not inside the interval-propagation range falls
/// back to that constant range, so the result never concretizes looser than ibp.
inline AffineBound crown(const Mlp& net, const HyperRect& box, const CrownOptions& opt = {}) {
  detail::check_box(net, box);
  const PreActBounds pre = opt.intermediate == IntermediateBounds::crown ? detail::crown_preactivation_bounds(net, box, opt)
                                                                         : preactivation_bounds(net, box);
  const std::size_t last = net.layers().size() - 1;
  Mat Clo, Cup;
  Vec dlo, dup;
  detail::crown_pass(net, pre, opt, false, last, Clo, dlo);
  detail::crown_pass(net, pre, opt, true, last, Cup, dup);
  Vec ilo, ihi;
  detail::propagate_intervals(net, box, ilo, ihi);

  const auto [gap_min, gap_max] = affine_range(Cup - Clo, box);
  const auto [lo_min, lo_max] = affine_range(Clo, box);
  const auto [up_min, up_max] = affine_range(Cup, box);
  AffineBound ab;
  ab.C = Mat::Zero(Clo.rows(), Clo.cols());
  ab.d_lo = ilo;
  ab.d_hi = ihi;
  ab.box = box;
  for (Eigen::Index i = 0; i < Clo.rows(); ++i) {
    // Candidate rows: (C, d_lo, d_hi, concretized lo, concretized hi).
    const double a_lo = lo_min[i] + dlo[i], a_hi = lo_max[i] + dup[i] + gap_max[i];
    const double b_lo = up_min[i] + dlo[i] - gap_max[i], b_hi = up_max[i] + dup[i];
    // Ties go to the linear rows; the slack absorbs rounding on linear nets.
    const double tol = 1e-12 * (1.0 + std::abs(ilo[i]) + std::abs(ihi[i]));
    double best = ihi[i] - ilo[i] + tol;
    const auto take = [&](const Mat& C, double d_lo, double d_hi, double c_lo, double c_hi) {
      if (c_lo < ilo[i] - tol || c_hi > ihi[i] + tol || c_hi - c_lo > best) return;
      best = c_hi - c_lo;
      ab.C.row(i) = C.row(i);
      ab.d_lo[i] = d_lo;
      ab.d_hi[i] = d_hi;
    };
    take(Clo, dlo[i], dup[i] + gap_max[i], a_lo, a_hi);
    take(Cup, dlo[i] - gap_max[i], dup[i], b_lo, b_hi);
  }
  return ab;
}

inline AffineBound affine_bound(const Mlp& net, const HyperRect& box, BoundAlgo algo,
                                const CrownOptions& opt = {}) {
  return algo == BoundAlgo::ibp ? ibp(net, box) : crown(net, box, opt);
}

/// Concretization [min_box C x + d_lo, max_box C x + d_hi].
inline HyperRect output_interval(const AffineBound& ab) {
  const auto [lo, hi] = affine_range(ab.C, ab.box);
  return {lo + ab.d_lo, hi + ab.d_hi};
}

}  // namespace cbfreach
