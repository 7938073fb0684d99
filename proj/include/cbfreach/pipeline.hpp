// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cbfreach/closeness.hpp"
#include "cbfreach/embedding.hpp"
#include "cbfreach/fnn.hpp"
#include "cbfreach/scenario.hpp"
#include "cbfreach/verify.hpp"

namespace cbfreach {

struct ReachOptions {
  BoundAlgo algo = BoundAlgo::crown;
  std::optional<double> dt;
  std::optional<double> T;
  /// Skips the grid sweep when set.
  std::optional<double> Mc;
  std::optional<std::vector<std::size_t>> mc_grid;
  double mc_margin = 1.25;
  std::optional<std::vector<HyperRect>> boxes;
  std::optional<double> verdict_radius;
  std::size_t stride = 1;
  unsigned jobs = 1;
  bool equilibria = true;
};

struct BoxResult {
  ReachTube tube;
  ClosenessProfile profile;
  std::optional<ReachTube> inflated;
  std::optional<Verdict> verdict;
  std::string error;  // OrderViolation / divergence message
  bool inside_compact_set = true;
  double seconds = 0.0;
};

struct ReachResult {
  McEstimate mc;
  double ell = 0.0;
  double dt = 0.0;
  double T = 0.0;
  std::vector<EquilibriumReport> equilibria;
  std::vector<BoxResult> boxes;
  double tube_seconds = 0.0;  // wall clock for all tubes
};

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline McEstimate scenario_mc(const Scenario& s, const Mlp& net, const ReachOptions& opt) {
  if (opt.Mc) {
    McEstimate est;
    est.mc = *opt.Mc;
    est.grid_max = *opt.Mc / opt.mc_margin;
    return est;
  }
  McOptions mo;
  mo.margin = opt.mc_margin;
  mo.keep = s.config.keep;
  mo.jobs = opt.jobs;
  return estimate_mc(net, s.filter, s.system, s.config.domain, opt.mc_grid.value_or(s.config.grid_shape),
                     s.config.input_norm, mo);
}

inline ClosenessConfig scenario_closeness(const Scenario& s, double Mc) {
  ClosenessConfig cc;
  cc.compact_set = s.config.domain;
  cc.Mc = Mc;
  cc.norm = s.config.state_norm;
  cc.input_norm = s.config.input_norm;
  return cc;
}

/// Tube, closeness radius, inflation and verdict for every initial box.
inline ReachResult run_reach(const Scenario& s, const Mlp& net, const ReachOptions& opt = {}) {
  ReachResult res;
  res.dt = opt.dt.value_or(s.config.dt);
  res.T = opt.T.value_or(s.config.T);
  res.mc = scenario_mc(s, net, opt);
  const ClosenessConfig cc = scenario_closeness(s, res.mc.mc);
  res.ell = gain_ell(s.system, cc);
  if (opt.equilibria) res.equilibria = find_equilibria(s.system, s.filter, s.config.equilibrium_seeds);

  EmbeddingSystem es = s.config.embedding_basis
                           ? make_embedding(s.system, net, opt.algo, res.dt, res.T, *s.config.embedding_basis)
                           : make_embedding(s.system, net, opt.algo, res.dt, res.T);
  es.stride = opt.stride;
  const auto& boxes = opt.boxes ? *opt.boxes : s.config.initial_boxes;
  VerdictConfig vc;
  vc.radius = opt.verdict_radius.value_or(s.config.verdict_radius);
  res.boxes.resize(boxes.size());
  const auto t0 = std::chrono::steady_clock::now();
  parallel_for(boxes.size(), opt.jobs, [&](std::size_t b) {
    const auto tb = std::chrono::steady_clock::now();
    BoxResult& out = res.boxes[b];
    try {
      out.tube = integrate_tube(es, boxes[b]);
    } catch (const OrderViolation& e) {
      out.error = e.what();
      out.seconds = seconds_since(tb);
      return;
    }
    const auto c = c_profile(s.system, out.tube, net, opt.algo, cc);
    out.profile = r_profile(c, res.ell, cc.Mc, res.dt);
    for (const auto& box : out.tube.boxes) out.inside_compact_set = out.inside_compact_set && cc.compact_set.contains(box);
    if (out.profile.divergent) {
      out.error = "closeness radius diverged";
    } else {
      out.inflated = overapproximate(out.tube, out.profile, cc.norm);
      out.verdict = classify_reach(*out.inflated, res.equilibria, vc);
    }
    out.seconds = seconds_since(tb);
  });
  res.tube_seconds = seconds_since(t0);
  return res;
}

/// Per-box deviation bound of the inflation: |x_i - y_i| <= r * w_i whenever
/// ||x - y|| <= r in the state norm.
inline Vec radius_to_box(const NormTag& norm, Eigen::Index n) { return ball_box_halfwidths(norm, n, 1.0); }

}  // namespace cbfreach
