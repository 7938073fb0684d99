// SPDX-License-Identifier: Apache-2.0
// Command-line front end: dataset generation, reach tubes, oracles.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cbfreach/cbfreach.hpp"

namespace fs = std::filesystem;
using namespace cbfreach;
using nlohmann::json;

namespace {

enum Exit { ok = 0, failure = 1, containment_violation = 2, infeasible_dataset = 3, divergence = 4 };

/// Options shared by the subcommands. A JSON config fills them first and any
/// flag given on the command line wins.
struct RunConfig {
  std::string scenario = "scenario1";
  std::string weights;
  std::optional<double> dt;
  std::optional<double> T;
  std::string bound_algo = "crown";
  std::string out;
  std::uint64_t seed = 0;
  unsigned jobs = default_jobs();
  std::optional<double> Mc;
  std::vector<std::size_t> mc_grid;
  double mc_margin = 1.25;
  std::vector<HyperRect> initial_boxes;
  std::optional<double> verdict_radius;
  std::size_t stride = 1;
};

void load_config(const std::string& path, RunConfig& rc) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open config " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw FormatError("config " + path + ": " + e.what());
  }
  if (j.contains("scenario")) rc.scenario = j["scenario"].get<std::string>();
  if (j.contains("weights")) rc.weights = j["weights"].get<std::string>();
  if (j.contains("dt")) rc.dt = j["dt"].get<double>();
  if (j.contains("T")) rc.T = j["T"].get<double>();
  if (j.contains("bound_algo")) rc.bound_algo = j["bound_algo"].get<std::string>();
  if (j.contains("output_dir")) rc.out = j["output_dir"].get<std::string>();
  if (j.contains("seed")) rc.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("jobs")) rc.jobs = j["jobs"].get<unsigned>();
  if (j.contains("Mc")) rc.Mc = j["Mc"].get<double>();
  if (j.contains("mc_grid")) rc.mc_grid = j["mc_grid"].get<std::vector<std::size_t>>();
  if (j.contains("mc_margin")) rc.mc_margin = j["mc_margin"].get<double>();
  if (j.contains("initial_boxes")) rc.initial_boxes = j["initial_boxes"].get<std::vector<HyperRect>>();
  if (j.contains("verdict_radius")) rc.verdict_radius = j["verdict_radius"].get<double>();
  if (j.contains("stride")) rc.stride = j["stride"].get<std::size_t>();
}

struct Flags {
  std::string config;
  std::string scenario, weights, bound_algo, out;
  double dt = 0.0, T = 0.0, Mc = 0.0, verdict_radius = 0.0, mc_margin = 0.0;
  std::uint64_t seed = 0;
  unsigned jobs = 0;
  std::size_t stride = 1;
  std::vector<std::size_t> mc_grid;
  std::vector<double> box;
  std::map<std::string, CLI::Option*> given;
};

void add_common(CLI::App* cmd, Flags& f, bool reach_options) {
  f.given["config"] = cmd->add_option("--config", f.config, "JSON run configuration");
  f.given["scenario"] = cmd->add_option("--scenario", f.scenario, "scenario1 | scenario2");
  f.given["jobs"] = cmd->add_option("--jobs", f.jobs, "worker threads (default: logical cores)");
  f.given["out"] = cmd->add_option("--out", f.out, "output path or directory");
  if (!reach_options) return;
  f.given["weights"] = cmd->add_option("--weights", f.weights, "network weight file (JSON)");
  f.given["dt"] = cmd->add_option("--dt", f.dt, "Euler step");
  f.given["T"] = cmd->add_option("--T", f.T, "horizon");
  f.given["bound-algo"] = cmd->add_option("--bound-algo", f.bound_algo, "ibp | crown");
  f.given["seed"] = cmd->add_option("--seed", f.seed, "Monte-Carlo seed");
  f.given["Mc"] = cmd->add_option("--Mc", f.Mc, "approximation bound override");
  f.given["mc-grid"] = cmd->add_option("--mc-grid", f.mc_grid, "grid shape for the M_C sweep");
  f.given["mc-margin"] = cmd->add_option("--mc-margin", f.mc_margin, "safety factor on the grid maximum");
  f.given["box"] = cmd->add_option("--box", f.box, "initial box as lo1 .. lon hi1 .. hin (replaces defaults)");
  f.given["verdict-radius"] = cmd->add_option("--verdict-radius", f.verdict_radius, "target ball radius");
  f.given["stride"] = cmd->add_option("--stride", f.stride, "reuse NN bounds for this many steps");
}

bool has(const Flags& f, const std::string& name) {
  auto it = f.given.find(name);
  return it != f.given.end() && it->second->count() > 0;
}

RunConfig resolve(const Flags& f) {
  RunConfig rc;
  if (has(f, "config")) load_config(f.config, rc);
  if (has(f, "scenario")) rc.scenario = f.scenario;
  if (has(f, "weights")) rc.weights = f.weights;
  if (has(f, "dt")) rc.dt = f.dt;
  if (has(f, "T")) rc.T = f.T;
  if (has(f, "bound-algo")) rc.bound_algo = f.bound_algo;
  if (has(f, "out")) rc.out = f.out;
  if (has(f, "seed")) rc.seed = f.seed;
  if (has(f, "jobs")) rc.jobs = std::max(1u, f.jobs);
  if (has(f, "Mc")) rc.Mc = f.Mc;
  if (has(f, "mc-grid")) rc.mc_grid = f.mc_grid;
  if (has(f, "mc-margin")) rc.mc_margin = f.mc_margin;
  if (has(f, "verdict-radius")) rc.verdict_radius = f.verdict_radius;
  if (has(f, "stride")) rc.stride = std::max<std::size_t>(1, f.stride);
  if (has(f, "box")) {
    if (f.box.size() % 2 != 0) throw InvalidArgument("--box expects 2n numbers");
    const auto n = static_cast<Eigen::Index>(f.box.size() / 2);
    rc.initial_boxes = {HyperRect(Eigen::Map<const Vec>(f.box.data(), n), Eigen::Map<const Vec>(f.box.data() + n, n))};
  }
  if (rc.dt && !(*rc.dt > 0.0)) throw InvalidArgument("dt must be positive");
  if (rc.T && !(*rc.T > 0.0)) throw InvalidArgument("T must be positive");
  return rc;
}

Mlp require_weights(const RunConfig& rc) {
  if (rc.weights.empty()) throw InvalidArgument("--weights is required");
  return load_weights(rc.weights);
}

ReachOptions reach_options(const RunConfig& rc, const Scenario& s) {
  ReachOptions opt;
  opt.algo = bound_algo_from_string(rc.bound_algo);
  opt.dt = rc.dt;
  opt.T = rc.T;
  opt.Mc = rc.Mc;
  if (!rc.mc_grid.empty()) opt.mc_grid = rc.mc_grid;
  opt.mc_margin = rc.mc_margin;
  opt.verdict_radius = rc.verdict_radius;
  opt.stride = rc.stride;
  opt.jobs = rc.jobs;
  if (!rc.initial_boxes.empty()) {
    for (const auto& b : rc.initial_boxes) {
      if (b.dim() != s.system.n) throw DimensionError("initial box has the wrong dimension");
      if (!s.config.domain.contains(b)) std::cerr << "warning: initial box outside the scenario domain\n";
    }
    opt.boxes = rc.initial_boxes;
  }
  return opt;
}

/// Writes through a temporary file so readers never see partial output.
void write_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw FormatError("cannot write " + tmp.string());
    os << text;
  }
  fs::rename(tmp, path);
}

std::string box_name(const char* prefix, std::size_t b, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%02zu.%s", prefix, b, ext);
  return buf;
}

std::string fmt_box(const HyperRect& box) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  for (Eigen::Index i = 0; i < box.dim(); ++i) os << (i ? "x" : "") << '[' << box.lo()[i] << ',' << box.hi()[i] << ']';
  return os.str();
}

json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

// ---------------------------------------------------------------------------

int cmd_dataset(const Flags& f, const std::vector<std::size_t>& grid_flag) {
  const RunConfig rc = resolve(f);
  const Scenario s = make_scenario(rc.scenario);
  const auto grid = grid_flag.empty() ? s.config.grid_shape : grid_flag;
  const std::string out = rc.out.empty() ? rc.scenario + "_dataset.csv" : rc.out;
  DatasetOptions opt;
  opt.keep = s.config.keep;
  opt.jobs = rc.jobs;
  json prov = {{"scenario", rc.scenario}, {"grid_shape", grid}, {"domain", s.config.domain}};
  try {
    const Dataset ds = generate_dataset(s.filter, s.system, s.config.domain, grid, opt);
    std::ostringstream csv;
    write_dataset_csv(csv, ds);
    write_atomic(out, csv.str());
    prov["rows"] = ds.inputs.size();
    prov["excluded"] = ds.excluded;
    prov["infeasible"] = ds.infeasible;
    write_atomic(out + ".json", prov.dump(2) + "\n");
    std::cout << ds.inputs.size() << " rows written to " << out << " (excluded " << ds.excluded << ", infeasible "
              << ds.infeasible << ")\n";
    return ok;
  } catch (const InfeasibleError& e) {
    prov["error"] = e.what();
    write_atomic(out + ".json", prov.dump(2) + "\n");
    std::cerr << "error: " << e.what() << '\n';
    return infeasible_dataset;
  }
}

int cmd_mc(const Flags& f) {
  const RunConfig rc = resolve(f);
  const Scenario s = make_scenario(rc.scenario);
  const Mlp net = require_weights(rc);
  ReachOptions opt = reach_options(rc, s);
  opt.Mc.reset();
  const McEstimate est = scenario_mc(s, net, opt);
  const json j = {{"scenario", rc.scenario},
                  {"grid_max", est.grid_max},
                  {"Mc", est.mc},
                  {"argmax", vec_json(est.argmax)},
                  {"points", est.points}};
  if (rc.out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    write_atomic(rc.out, j.dump(2) + "\n");
  }
  return ok;
}

int cmd_reach(const Flags& f) {
  const RunConfig rc = resolve(f);
  const Scenario s = make_scenario(rc.scenario);
  const Mlp net = require_weights(rc);
  const fs::path dir = rc.out.empty() ? fs::path(rc.scenario + "_reach") : fs::path(rc.out);
  fs::create_directories(dir);
  const ReachResult res = run_reach(s, net, reach_options(rc, s));

  json summary = {{"scenario", rc.scenario},
                  {"bound_algo", rc.bound_algo},
                  {"dt", res.dt},
                  {"T", res.T},
                  {"Mc", res.mc.mc},
                  {"Mc_grid_max", res.mc.grid_max},
                  {"ell", res.ell},
                  {"state_norm", to_string(s.config.state_norm.kind)},
                  {"equilibria", res.equilibria},
                  {"wall_clock_s", res.tube_seconds}};
  int code = ok;
  std::cout << "M_C = " << res.mc.mc << " (grid max " << res.mc.grid_max << "), l = " << res.ell << '\n';
  std::cout << std::left << std::setw(4) << "box" << std::setw(30) << "initial" << std::setw(12) << "r(T)"
            << "verdict\n";
  json boxes = json::array();
  for (std::size_t b = 0; b < res.boxes.size(); ++b) {
    const BoxResult& br = res.boxes[b];
    json entry = {{"index", b}, {"inside_compact_set", br.inside_compact_set}};
    if (!br.tube.boxes.empty()) {
      std::ostringstream os;
      write_tube_jsonl(os, br.tube);
      write_atomic(dir / box_name("tube", b, "jsonl"), os.str());
    }
    if (br.inflated) {
      std::ostringstream os;
      write_tube_jsonl(os, *br.inflated);
      write_atomic(dir / box_name("inflated", b, "jsonl"), os.str());
    }
    std::string verdict_text = "error: " + br.error;
    if (br.verdict) {
      json v = *br.verdict;
      write_atomic(dir / box_name("verdict", b, "json"), v.dump(2) + "\n");
      entry["verdict"] = v;
      verdict_text = to_string(br.verdict->outcome);
    } else {
      entry["error"] = br.error;
      code = divergence;
    }
    if (!br.inside_compact_set) verdict_text += " (tube left the compact set; closeness bound not valid)";
    const double rT = br.profile.r_values.empty() ? 0.0 : br.profile.r_values.back();
    const HyperRect& x0 = br.tube.boxes.empty() ? (reach_options(rc, s).boxes ? rc.initial_boxes[b]
                                                                               : s.config.initial_boxes[b])
                                                : br.tube.initial();
    std::cout << std::left << std::setw(4) << b << std::setw(30) << fmt_box(x0) << std::setw(12) << rT
              << verdict_text << '\n';
    boxes.push_back(entry);
  }
  summary["boxes"] = boxes;
  write_atomic(dir / "summary.json", summary.dump(2) + "\n");
  std::cout << "tubes: " << res.boxes.size() << " in " << std::setprecision(3) << res.tube_seconds << " s; artifacts in "
            << dir.string() << '\n';
  return code;
}

std::vector<ReachTube> read_tubes(const fs::path& dir, const char* prefix) {
  std::vector<ReachTube> tubes;
  for (std::size_t b = 0;; ++b) {
    const fs::path p = dir / box_name(prefix, b, "jsonl");
    if (!fs::exists(p)) break;
    std::ifstream is(p);
    tubes.push_back(read_tube_jsonl(is));
  }
  return tubes;
}

int cmd_check(const Flags& f, const std::string& tubes_dir, std::size_t samples, std::size_t inv_samples) {
  const RunConfig rc = resolve(f);
  const Scenario s = make_scenario(rc.scenario);
  const Mlp net = require_weights(rc);
  const auto tubes = read_tubes(tubes_dir, "tube");
  const auto inflated = read_tubes(tubes_dir, "inflated");
  if (tubes.empty()) throw FormatError("no tube_NN.jsonl files in " + tubes_dir);

  const BatchField nn = nn_closed_loop(s.system, net);
  const BatchField qp = filtered_closed_loop(s.system, s.filter);
  std::vector<ContainmentReport> nn_rep(tubes.size()), qp_rep(inflated.size());
  parallel_for(tubes.size() + inflated.size(), rc.jobs, [&](std::size_t i) {
    if (i < tubes.size()) {
      nn_rep[i] = mc_containment(tubes[i], nn, samples, rc.seed + i);
    } else {
      const std::size_t b = i - tubes.size();
      qp_rep[b] = mc_containment(inflated[b], qp, samples, rc.seed + 1000 + b);
    }
  });
  const double dt = tubes[0].times.size() > 1 ? tubes[0].times[1] - tubes[0].times[0] : s.config.dt;
  const double T = tubes[0].times.back();
  // Starts from which the filter QP turns infeasible have no filtered
  // trajectory to check; they are skipped and counted.
  std::size_t skipped = 0;
  const auto defined = [&](const Vec& x) { return filter_defined_along(s.system, s.filter, x, dt, T); };
  const Mat x0 = sample_safe_set(s.filter, s.config.domain, inv_samples, rc.seed + 7, defined, &skipped);
  const InvarianceReport inv = check_invariance(s.system, s.filter, x0, dt, T, 1e-3);

  int code = ok;
  json boxes = json::array();
  for (std::size_t b = 0; b < tubes.size(); ++b) {
    json e = {{"index", b}, {"nn_vs_tube", nn_rep[b]}};
    if (!nn_rep[b].ok()) code = containment_violation;
    if (b < qp_rep.size()) {
      e["filtered_vs_inflated"] = qp_rep[b];
      if (!qp_rep[b].ok()) code = containment_violation;
    }
    std::cout << "box " << b << ": NN in tube " << (samples - nn_rep[b].violating_samples) << '/' << samples;
    if (b < qp_rep.size()) {
      std::cout << ", filtered in inflated tube " << (samples - qp_rep[b].violating_samples) << '/' << samples;
    }
    std::cout << '\n';
    boxes.push_back(e);
  }
  if (!inv.pass) code = containment_violation;
  std::cout << "invariance over " << inv.samples << " filtered trajectories: min h = [";
  for (std::size_t i = 0; i < inv.min_h.size(); ++i) std::cout << (i ? ", " : "") << inv.min_h[i];
  std::cout << "] " << (inv.pass ? "pass" : "FAIL");
  if (skipped) std::cout << " (" << skipped << " starts skipped: filter QP infeasible along the trajectory)";
  std::cout << '\n';
  const json report = {{"scenario", rc.scenario}, {"samples", samples}, {"seed", rc.seed},
                       {"boxes", boxes},          {"invariance", inv},  {"invariance_skipped", skipped},
                       {"pass", code == ok}};
  write_atomic(rc.out.empty() ? fs::path(tubes_dir) / "check.json" : fs::path(rc.out), report.dump(2) + "\n");
  return code;
}

int cmd_equilibria(const Flags& f) {
  const RunConfig rc = resolve(f);
  const Scenario s = make_scenario(rc.scenario);
  std::vector<std::string> log;
  const auto eqs = find_equilibria(s.system, s.filter, s.config.equilibrium_seeds, {}, &log);
  std::cout << std::left << std::setw(26) << "location" << std::setw(12) << "class" << std::setw(14) << "residual"
            << "undesirable\n";
  for (const auto& e : eqs) {
    std::ostringstream loc;
    loc << std::fixed << std::setprecision(6) << '(' << e.location[0];
    for (Eigen::Index i = 1; i < e.location.size(); ++i) loc << ", " << e.location[i];
    loc << ')';
    std::cout << std::setw(26) << loc.str() << std::setw(12) << to_string(e.classification) << std::setw(14)
              << e.residual << (e.is_undesirable ? "yes" : "no") << (e.nonsmooth ? " (non-smooth)" : "") << '\n';
  }
  const json j = {{"scenario", rc.scenario}, {"equilibria", eqs}, {"seeds", s.config.equilibrium_seeds.size()}};
  if (!rc.out.empty()) write_atomic(rc.out, j.dump(2) + "\n");
  return ok;
}

int cmd_simulate(const Flags& f, const std::vector<double>& x0v, const std::string& controller) {
  const RunConfig rc = resolve(f);
  const Scenario s = make_scenario(rc.scenario);
  if (static_cast<Eigen::Index>(x0v.size()) != s.system.n) throw DimensionError("--x0 has the wrong dimension");
  const Vec x0 = Eigen::Map<const Vec>(x0v.data(), s.system.n);
  VectorField control;
  std::optional<Mlp> net;
  if (controller == "nominal") {
    control = s.system.kappa;
  } else if (controller == "filter") {
    control = [&](const Vec& x) { return filtered_input(s.filter, s.system, x); };
  } else if (controller == "nn") {
    net = require_weights(rc);
    control = [&](const Vec& x) { return Vec(s.system.kappa(x) + net->eval(x)); };
  } else {
    throw InvalidArgument("unknown controller \"" + controller + "\"");
  }
  const Trajectory traj = integrate(s.system, control, x0, rc.dt.value_or(s.config.dt), rc.T.value_or(s.config.T));
  std::ostringstream os;
  write_csv(os, traj);
  if (rc.out.empty()) {
    std::cout << os.str();
  } else {
    write_atomic(rc.out, os.str());
  }
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reachability of CBF-QP filtered systems through neural surrogates"};
  app.require_subcommand(1);

  Flags f_dataset, f_mc, f_reach, f_check, f_eq, f_sim;
  std::vector<std::size_t> grid;
  auto* dataset = app.add_subcommand("dataset", "Sample the filter on the training grid (CSV)");
  add_common(dataset, f_dataset, false);
  dataset->add_option("--grid", grid, "grid shape, one count per state coordinate");

  auto* mc = app.add_subcommand("mc", "Estimate the approximation bound M_C of a network");
  add_common(mc, f_mc, true);

  auto* reach = app.add_subcommand("reach", "Reach tubes, closeness radius, inflated tubes and verdicts");
  add_common(reach, f_reach, true);

  std::string tubes_dir;
  std::size_t samples = 500, inv_samples = 200;
  auto* check = app.add_subcommand("check", "Monte-Carlo containment and invariance oracles on saved tubes");
  add_common(check, f_check, true);
  check->add_option("--tubes", tubes_dir, "directory written by reach")->required();
  check->add_option("--samples", samples, "trajectories per initial box");
  check->add_option("--invariance-samples", inv_samples, "filtered trajectories started in the safe set");

  auto* eq = app.add_subcommand("equilibria", "Equilibria of the filtered closed loop");
  add_common(eq, f_eq, false);

  std::vector<double> x0;
  std::string controller = "filter";
  auto* sim = app.add_subcommand("simulate", "Euler trajectory from one initial state (CSV)");
  add_common(sim, f_sim, true);
  sim->add_option("--x0", x0, "initial state")->required();
  sim->add_option("--controller", controller, "nominal | filter | nn");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*dataset) return cmd_dataset(f_dataset, grid);
    if (*mc) return cmd_mc(f_mc);
    if (*reach) return cmd_reach(f_reach);
    if (*check) return cmd_check(f_check, tubes_dir, samples, inv_samples);
    if (*eq) return cmd_equilibria(f_eq);
    if (*sim) return cmd_simulate(f_sim, x0, controller);
  } catch (const InfeasibleError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return failure;
  } catch (const DivergentProfile& e) {
    std::cerr << "error: " << e.what() << '\n';
    return divergence;
  } catch (const OrderViolation& e) {
    std::cerr << "error: " << e.what() << '\n';
    return divergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return failure;
  }
  return failure;
}
