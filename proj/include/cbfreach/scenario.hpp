// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cbfreach/filter.hpp"

namespace cbfreach {

/// Everything needed to reproduce one experiment without free parameters.
struct SimConfig {
  std::string name;
  double dt = 0.04;
  double T = 10.0;
  /// Training / M_C grid region.
  HyperRect domain;
  std::vector<std::size_t> grid_shape;
  /// Points of `domain` kept for training and for M_C (the compact set of the
  /// closeness bound is domain intersected with this region).
  std::function<bool(const Vec&)> keep;
  std::vector<HyperRect> initial_boxes;
  /// State norm for the closeness radius and input norm for M_C.
  NormTag state_norm = NormTag::inf();
  NormTag input_norm = NormTag::inf();
  /// Radius of the target balls used by reach verdicts.
  double verdict_radius = 0.3;
  /// Newton seeds for equilibrium search.
  std::vector<Vec> equilibrium_seeds;
  /// Coordinates y = T x for the embedding; identity when unset.
  std::optional<Mat> embedding_basis;
};

struct Scenario {
  ControlAffineSystem system;
  FilterProblem filter;
  SimConfig config;
};

namespace detail {

inline Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

inline Mat mat2(double a, double b, double c, double d) {
  Mat m(2, 2);
  m << a, b, c, d;
  return m;
}

inline std::vector<HyperRect> box_lattice(const std::vector<double>& x1_centres, const std::vector<double>& x2_centres,
                                          double half1, double half2) {
  std::vector<HyperRect> boxes;
  for (double c1 : x1_centres) {
    for (double c2 : x2_centres) {
      boxes.emplace_back(vec2(c1 - half1, c2 - half2), vec2(c1 + half1, c2 + half2));
    }
  }
  return boxes;
}

inline std::vector<Vec> seed_grid(const HyperRect& box, int n1, int n2) {
  std::vector<Vec> seeds;
  for (int i = 0; i < n1; ++i) {
    for (int j = 0; j < n2; ++j) {
      seeds.push_back(vec2(box.lo()[0] + (box.hi()[0] - box.lo()[0]) * i / (n1 - 1),
                           box.lo()[1] + (box.hi()[1] - box.lo()[1]) * j / (n2 - 1)));
    }
  }
  return seeds;
}

}  // namespace detail

/// Single integrator x' = u, kappa(x) = diag(-1,-5) x, circular obstacle at
/// (2,0) of radius 1 encoded through the rescaled barrier
/// h2(x) = (||x - (5,1)||^2 + 1) (||x - (2,0)||^2 - 1), alpha(s) = s.
inline Scenario make_scenario1() {
  using detail::mat2;
  using detail::vec2;
  const Mat K = mat2(-1.0, 0.0, 0.0, -5.0);
  const Vec o = vec2(2.0, 0.0);
  const Vec o2 = vec2(5.0, 1.0);

  Scenario s;
  auto& sys = s.system;
  sys.n = 2;
  sys.m = 2;
  sys.f = [](const Vec&) { return Vec(Vec::Zero(2)); };
  sys.g = [](const Vec&) { return Mat(Mat::Identity(2, 2)); };
  sys.kappa = [K](const Vec& x) { return Vec(K * x); };
  sys.jac_f_tilde = [K](const Vec&) { return K; };
  sys.g_is_constant = true;
  sys.f_tilde_matrix = K;
  sys.f_tilde_offset = Vec::Zero(2);

  auto h1 = [o](const Vec& x) { return (x - o).squaredNorm() - 1.0; };
  auto q = [o2](const Vec& x) { return (x - o2).squaredNorm() + 1.0; };
  CbfSpec cbf;
  cbf.name = "h2";
  cbf.h = [h1, q](const Vec& x) { return q(x) * h1(x); };
  cbf.grad_h = [h1, q, o, o2](const Vec& x) { return Vec(2.0 * q(x) * (x - o) + 2.0 * h1(x) * (x - o2)); };
  cbf.alpha_slope = 1.0;
  s.filter.cbfs.push_back(cbf);

  auto& cfg = s.config;
  cfg.name = "scenario1";
  cfg.dt = 0.04;
  cfg.T = 10.0;
  cfg.domain = HyperRect(vec2(-3.5, -3.0), vec2(4.5, 3.0));
  cfg.grid_shape = {376, 282};
  // The rescaled barrier has a critical point inside the obstacle where the
  // filter input is unbounded; the deep interior is never visited.
  cfg.keep = [o](const Vec& x) { return (x - o).norm() >= 0.8; };
  // Boxes wider than about 0.1 reach the obstacle too wide for the affine NN
  // bounds to contract there.
  cfg.initial_boxes = detail::box_lattice({3.6, 4.1}, {-2.2, -1.2, -0.3, 0.3, 1.2, 2.2}, 0.05, 0.05);
  cfg.state_norm = NormTag::inf();
  cfg.input_norm = NormTag::inf();
  cfg.verdict_radius = 0.3;
  cfg.equilibrium_seeds = detail::seed_grid(HyperRect(vec2(-1.0, -2.0), vec2(4.0, 2.0)), 11, 9);
  return s;
}

/// Double integrator x1' = x2, x2' = u with kappa(x) = -x1 - 2 x2, a disk of
/// radius 1 at (2,0) in the phase plane and the half-plane x2 >= -2.
inline Scenario make_scenario2() {
  using detail::mat2;
  using detail::vec2;
  const Mat A = mat2(0.0, 1.0, -1.0, -2.0);

  Scenario s;
  auto& sys = s.system;
  sys.n = 2;
  sys.m = 1;
  sys.f = [](const Vec& x) { return vec2(x[1], 0.0); };
  sys.g = [](const Vec&) {
    Mat g(2, 1);
    g << 0.0, 1.0;
    return g;
  };
  sys.kappa = [](const Vec& x) {
    Vec u(1);
    u << -x[0] - 2.0 * x[1];
    return u;
  };
  sys.jac_f_tilde = [A](const Vec&) { return A; };
  sys.g_is_constant = true;
  sys.f_tilde_matrix = A;
  sys.f_tilde_offset = Vec::Zero(2);

  CbfSpec disk;
  disk.name = "h1";
  disk.h = [](const Vec& x) { return (x[0] - 2.0) * (x[0] - 2.0) + x[1] * x[1] - 1.0; };
  disk.grad_h = [](const Vec& x) { return vec2(2.0 * (x[0] - 2.0), 2.0 * x[1]); };
  CbfSpec floor;
  floor.name = "h2";
  floor.h = [](const Vec& x) { return x[1] + 2.0; };
  floor.grad_h = [](const Vec&) { return vec2(0.0, 1.0); };
  s.filter.cbfs = {disk, floor};

  auto& cfg = s.config;
  cfg.name = "scenario2";
  cfg.dt = 0.05;
  cfg.T = 10.0;
  cfg.domain = HyperRect(vec2(-4.0, -1.5), vec2(6.0, 2.0));
  cfg.grid_shape = {400, 240};
  cfg.keep = [](const Vec& x) { return (x[0] - 2.0) * (x[0] - 2.0) + x[1] * x[1] >= 1.0; };
  // From (-1, 1) a box of half-width 0.15 passes the obstacle too wide for
  // the NN bounds; 0.1 keeps every tube contracting.
  cfg.initial_boxes = detail::box_lattice({-3.0, -2.0, -1.0}, {-1.0, 0.0, 1.0}, 0.1, 0.1);
  // Weighted l2 norm: in l-inf the first row of any J + gC is [0, 1], so the
  // log-norm never drops below 1.
  cfg.state_norm = NormTag::weighted_two(mat2(1.0, 0.7, 0.7, 0.98591933));
  cfg.input_norm = NormTag::inf();
  cfg.verdict_radius = 0.3;
  cfg.equilibrium_seeds = detail::seed_grid(HyperRect(vec2(-3.0, -1.0), vec2(5.0, 1.5)), 9, 6);
  // In x the interval embedding of A grows widths at rate -1 + sqrt(2). With
  // y = (-x2, x1 + x2) the system matrix is [[-1, 1], [0, -1]], which is
  // Metzler and Hurwitz, so box widths decay.
  cfg.embedding_basis = mat2(0.0, -1.0, 1.0, 1.0);
  return s;
}

inline Scenario make_scenario(const std::string& name) {
  if (name == "scenario1") return make_scenario1();
  if (name == "scenario2") return make_scenario2();
  throw InvalidArgument("unknown scenario \"" + name + "\"");
}

}  // namespace cbfreach
