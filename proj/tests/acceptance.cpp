// SPDX-License-Identifier: Apache-2.0
// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "cbfreach/cbfreach.hpp"
#include "oracles.hpp"

using namespace cbfreach;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::cout << "criterion " << id << ": " << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
  if (!pass) ++failures;
}

std::string fmt(double v, int prec = 3) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

using Clock = std::chrono::steady_clock;

struct ScenarioRun {
  Scenario s;
  Mlp net;
  ReachResult reach;
  std::vector<ContainmentReport> nn, filtered;
  double reach_seconds = 0.0;
  double mc_seconds = 0.0;
};

ScenarioRun run_scenario(const std::string& name, const std::string& weights) {
  ScenarioRun r{make_scenario(name), load_weights(weights), {}, {}, {}, 0.0, 0.0};
  ReachOptions opt;
  opt.jobs = 1;
  // The containment budget covers tubes and sampling, not the M_C sweep.
  r.reach = run_reach(r.s, r.net, opt);
  r.reach_seconds = r.reach.tube_seconds;
  const auto t1 = Clock::now();
  const BatchField nn = nn_closed_loop(r.s.system, r.net);
  for (std::size_t b = 0; b < r.reach.boxes.size(); ++b) {
    r.nn.push_back(mc_containment(r.reach.boxes[b].tube, nn, 500, 100 + b));
  }
  r.mc_seconds = seconds_since(t1);
  const BatchField qp = filtered_closed_loop(r.s.system, r.s.filter);
  for (std::size_t b = 0; b < r.reach.boxes.size(); ++b) {
    if (r.reach.boxes[b].inflated) {
      r.filtered.push_back(mc_containment(*r.reach.boxes[b].inflated, qp, 500, 200 + b));
    } else {
      r.filtered.emplace_back();
    }
  }
  return r;
}

// 1 -------------------------------------------------------------------------
void criterion_qp() {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_int_distribution<int> rows(1, 3);
  std::uniform_real_distribution<double> slack(0.0, 1.0);
  double worst = 0.0, solver_seconds = 0.0;
  int mismatches = 0;
  for (int inst = 0; inst < 500; ++inst) {
    const int p = rows(rng);
    Mat A(p, 2);
    for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = nd(rng);
    Vec feas(2);
    feas << 2.0 * nd(rng), 2.0 * nd(rng);
    Vec b = A * feas;
    for (int i = 0; i < p; ++i) b[i] -= (slack(rng) < 0.3 ? 0.0 : slack(rng));
    const LinearConstraintSet cs{A, b, p};
    const auto t0 = Clock::now();
    const Vec th = solve_qp(cs);
    solver_seconds += std::chrono::duration<double>(Clock::now() - t0).count();
    const Vec ref = oracle::qp_grid_projection(A, b, feas.norm() + 0.05);
    const double err = (th - ref).cwiseAbs().maxCoeff();
    worst = std::max(worst, err);
    if (!(err <= 1e-6)) ++mismatches;
  }
  report(1, mismatches == 0 && solver_seconds < 5.0,
         "500 instances, max |solve_qp - oracle|_inf = " + fmt(worst) + ", mismatches " + std::to_string(mismatches) +
             ", solver time " + fmt(solver_seconds) + " s");
}

// 2 -------------------------------------------------------------------------
void criterion_equilibria(const ScenarioRun& r) {
  struct Target {
    double x1, x2;
    Stability cls;
    bool undesirable;
  };
  const double s3 = std::sqrt(3.0) / 2.0;
  const std::vector<Target> targets = {{3.0, 0.0, Stability::stable, true},
                                       {2.5, s3, Stability::saddle, true},
                                       {2.5, -s3, Stability::saddle, true},
                                       {0.0, 0.0, Stability::stable, false}};
  bool ok = true;
  std::ostringstream detail;
  double worst_res = 0.0;
  for (const auto& t : targets) {
    Vec z(2);
    z << t.x1, t.x2;
    const EquilibriumReport* hit = nullptr;
    for (const auto& e : r.reach.equilibria) {
      if ((e.location - z).cwiseAbs().maxCoeff() < 1e-4) hit = &e;
    }
    if (!hit) {
      ok = false;
      detail << "missing (" << t.x1 << "," << fmt(t.x2, 4) << ") ";
      continue;
    }
    worst_res = std::max(worst_res, hit->residual);
    if (hit->classification != t.cls || hit->is_undesirable != t.undesirable || !(hit->residual < 1e-8)) {
      ok = false;
      detail << "wrong report at (" << t.x1 << "," << fmt(t.x2, 4) << "): " << to_string(hit->classification) << ' ';
    }
  }
  detail << r.reach.equilibria.size() << " equilibria found, max residual " << fmt(worst_res);
  report(2, ok, detail.str());
}

// 3 -------------------------------------------------------------------------
void criterion_nn_containment(const std::vector<const ScenarioRun*>& runs) {
  bool ok = true;
  std::ostringstream detail;
  for (const auto* r : runs) {
    std::size_t bad = 0, total = 0;
    for (const auto& c : r->nn) {
      bad += c.violating_samples;
      total += c.samples;
    }
    const double secs = r->reach_seconds + r->mc_seconds;
    ok = ok && bad == 0 && secs < 60.0;
    detail << r->s.config.name << ": " << bad << '/' << total << " violating, " << r->nn.size() << " boxes in "
           << fmt(secs) << " s; ";
  }
  report(3, ok, detail.str());
}

// 4 -------------------------------------------------------------------------
void criterion_direct_bound(const std::vector<const ScenarioRun*>& runs) {
  bool ok = true;
  std::ostringstream detail;
  for (const auto* r : runs) {
    const auto& s = r->s;
    const double dt = s.config.dt;
    const ClosenessConfig cc = scenario_closeness(s, r->reach.mc.mc);
    const Vec scale = radius_to_box(cc.norm, s.system.n);
    EmbeddingSystem es = make_embedding(s.system, r->net, BoundAlgo::crown, dt, s.config.T);
    std::size_t undefined = 0;
    const auto usable = [&](const Vec& x) {
      return s.config.keep(x) && filter_defined_along(s.system, s.filter, x, dt, s.config.T);
    };
    const Mat X0 = sample_safe_set(s.filter, s.config.domain, 50, 44, usable, &undefined);
    const auto xs = integrate_batch(filtered_closed_loop(s.system, s.filter), X0, dt, s.config.T);
    const auto xn = integrate_batch(nn_closed_loop(s.system, r->net), X0, dt, s.config.T);
    std::size_t violations = 0, left_compact = 0;
    double worst_ratio = 0.0;
    for (Eigen::Index c = 0; c < X0.cols(); ++c) {
      const ReachTube point = integrate_tube(es, HyperRect(X0.col(c), X0.col(c)));
      const auto prof = r_profile(c_profile(s.system, point, r->net, BoundAlgo::crown, cc), r->reach.ell, cc.Mc, dt);
      bool inside = true;
      for (std::size_t k = 0; k < xs.size(); ++k) {
        const Vec e = (xs[k].col(c) - xn[k].col(c)).cwiseAbs();
        const Vec bound = prof.r_values[k] * scale.array() + 10.0 * dt;
        if ((e.array() > bound.array()).any()) ++violations;
        worst_ratio = std::max(worst_ratio, (e.array() / bound.array()).maxCoeff());
        inside = inside && cc.compact_set.contains(Vec(xs[k].col(c))) && cc.compact_set.contains(Vec(xn[k].col(c)));
      }
      if (!inside) ++left_compact;
    }
    ok = ok && violations == 0;
    detail << s.config.name << ": " << violations << " violating stamps, max error/bound " << fmt(worst_ratio)
           << " (" << left_compact << " pairs left C, " << undefined << " starts skipped); ";
  }
  report(4, ok, detail.str());
}

// 5 -------------------------------------------------------------------------
void criterion_inflated(const std::vector<const ScenarioRun*>& runs) {
  bool ok = true;
  std::ostringstream detail;
  for (const auto* r : runs) {
    std::size_t bad = 0, total = 0, missing = 0;
    for (std::size_t b = 0; b < r->filtered.size(); ++b) {
      if (!r->reach.boxes[b].inflated) {
        ++missing;
        continue;
      }
      bad += r->filtered[b].violating_samples;
      total += r->filtered[b].samples;
    }
    ok = ok && bad == 0 && missing == 0;
    detail << r->s.config.name << ": " << bad << '/' << total << " violating";
    if (missing) detail << ", " << missing << " boxes without an inflated tube";
    detail << "; ";
  }
  report(5, ok, detail.str());
}

// 6 -------------------------------------------------------------------------
void criterion_bounds() {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> width(0.05, 1.0);
  std::size_t violations = 0, dominated = 0;
  const int nets = 100;
  for (int t = 0; t < nets; ++t) {
    const Mlp net = oracle::random_relu_net({2, 16, 16, 2}, rng, 1.5);
    Vec c(2), h(2);
    c << nd(rng), nd(rng);
    h << width(rng), width(rng);
    const HyperRect box(c - h, c + h);
    const Mat X = sample_box(box, 10000, 1000 + t);
    const Mat Y = net.eval_batch(X);
    const AffineBound bi = ibp(net, box);
    const AffineBound bc = crown(net, box);
    for (const AffineBound* ab : {&bi, &bc}) {
      const Mat CX = ab->C * X;
      for (Eigen::Index k = 0; k < X.cols(); ++k) {
        const Vec lo = CX.col(k) + ab->d_lo;
        const Vec hi = CX.col(k) + ab->d_hi;
        if (((Y.col(k) - lo).array() < -1e-9).any() || ((Y.col(k) - hi).array() > 1e-9).any()) ++violations;
      }
    }
    if (output_interval(bi).contains(output_interval(bc), 1e-9)) ++dominated;
  }
  const double frac = static_cast<double>(dominated) / nets;
  report(6, violations == 0 && frac >= 0.99,
         std::to_string(violations) + " sandwich violations over 2 x 100 x 10^4 samples; crown within ibp on " +
             fmt(100.0 * frac) + "% of nets");
}

// 7 -------------------------------------------------------------------------
void criterion_r_profile() {
  const double dt = 1e-3, ell = 1.0, Mc = 0.2;
  double worst = 0.0;
  for (double c0 : {-1.0, 0.0, 1.0}) {
    const auto p = r_profile(std::vector<double>(1001, c0), ell, Mc, dt);
    for (std::size_t k = 1; k < p.r_values.size(); ++k) {
      const double t = static_cast<double>(k) * dt;
      const double exact = ell * Mc * (c0 == 0.0 ? t : std::expm1(c0 * t) / c0);
      worst = std::max(worst, std::abs(p.r_values[k] - exact) / exact);
    }
  }
  report(7, worst <= 0.01, "max relative deviation from the closed form " + fmt(worst));
}

// 8 -------------------------------------------------------------------------
void criterion_invariance(const std::vector<const ScenarioRun*>& runs) {
  bool ok = true;
  std::ostringstream detail;
  for (const auto* r : runs) {
    const auto& s = r->s;
    std::size_t undefined = 0;
    const auto defined = [&](const Vec& x) { return filter_defined_along(s.system, s.filter, x, s.config.dt, s.config.T); };
    const Mat X0 = sample_safe_set(s.filter, s.config.domain, 200, 88, defined, &undefined);
    const InvarianceReport inv = check_invariance(s.system, s.filter, X0, s.config.dt, s.config.T, 1e-3);
    ok = ok && inv.pass;
    detail << s.config.name << ": min h = " << fmt(*std::min_element(inv.min_h.begin(), inv.min_h.end()));
    if (undefined) detail << " (" << undefined << " starts skipped: filter QP infeasible along the trajectory)";
    detail << "; ";
  }
  report(8, ok, detail.str());
}

// 9 -------------------------------------------------------------------------
void criterion_verdicts(const ScenarioRun& s1, const ScenarioRun& s2) {
  std::map<Outcome, int> c1, c2;
  bool near_3_0 = false;
  for (const auto& b : s1.reach.boxes) {
    const Outcome o = b.verdict ? b.verdict->outcome : Outcome::inconclusive;
    ++c1[o];
    if (o == Outcome::enters_basin_of_undesirable && b.verdict->attractor &&
        (*b.verdict->attractor - detail::vec2(3.0, 0.0)).cwiseAbs().maxCoeff() < 1e-3) {
      near_3_0 = true;
    }
  }
  for (const auto& b : s2.reach.boxes) ++c2[b.verdict ? b.verdict->outcome : Outcome::inconclusive];
  auto summary = [](const std::map<Outcome, int>& m) {
    std::string out;
    for (const auto& [o, n] : m) out += to_string(o) + " x" + std::to_string(n) + " ";
    return out;
  };
  const bool s2_ok = c2[Outcome::converges_to_origin] == static_cast<int>(s2.reach.boxes.size());
  const bool s1_ok = near_3_0 && c1.size() >= 2;
  report(9, s1_ok && s2_ok, "scenario1: " + summary(c1) + "| scenario2: " + summary(c2));
}

// 10 ------------------------------------------------------------------------
void criterion_mutation(const std::vector<const ScenarioRun*>& runs) {
  bool ok = true;
  std::size_t tubes = 0, caught = 0;
  for (const auto* r : runs) {
    const BatchField nn = nn_closed_loop(r->s.system, r->net);
    for (std::size_t b = 0; b < r->reach.boxes.size(); ++b) {
      const ReachTube& tube = r->reach.boxes[b].tube;
      ReachTube mutated = shrink_tube(tube, 0.9);
      mutated.boxes[0] = tube.boxes[0];
      const auto rep = mc_containment(mutated, nn, 500, 300 + b);
      ++tubes;
      if (rep.violating_samples > 0) ++caught;
      else std::cout << "# mutation missed: " << r->s.config.name << " box " << b << '\n';
    }
  }
  ok = caught == tubes;
  report(10, ok, std::to_string(caught) + '/' + std::to_string(tubes) + " tubes shrunk by 10% flagged");
}

}  // namespace

int main(int argc, char** argv) {
  const std::string dir = argc > 1 ? argv[1] : CBFREACH_FIXTURE_DIR;
  try {
    criterion_qp();
    const ScenarioRun s1 = run_scenario("scenario1", dir + "/scenario1_weights.json");
    const ScenarioRun s2 = run_scenario("scenario2", dir + "/scenario2_weights.json");
    const std::vector<const ScenarioRun*> both = {&s1, &s2};
    std::cout << "# M_C scenario1 " << fmt(s1.reach.mc.mc) << ", scenario2 " << fmt(s2.reach.mc.mc) << std::endl;
    criterion_equilibria(s1);
    criterion_nn_containment(both);
    criterion_direct_bound(both);
    criterion_inflated(both);
    criterion_bounds();
    criterion_r_profile();
    criterion_invariance(both);
    criterion_verdicts(s1, s2);
    criterion_mutation(both);
  } catch (const std::exception& e) {
    std::cout << "acceptance aborted: " << e.what() << std::endl;
    return 1;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
