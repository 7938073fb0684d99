// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cbfreach/filter.hpp"
#include "cbfreach/parallel.hpp"

namespace cbfreach {

enum class Activation { relu, identity };

inline std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "identity"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "identity") return Activation::identity;
  throw FormatError("unsupported activation \"" + s + "\"");
}

struct Layer {
  Mat W;  // n_out x n_in
  Vec b;
  Activation act = Activation::identity;
};

/// Dense feed-forward network; the last layer is affine.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) { validate(); }

  const std::vector<Layer>& layers() const { return layers_; }
  Eigen::Index input_dim() const { return layers_.front().W.cols(); }
  Eigen::Index output_dim() const { return layers_.back().W.rows(); }

  Vec eval(const Vec& x) const {
    if (x.size() != input_dim()) throw DimensionError("Mlp::eval: input has wrong dimension");
    Vec z = x;
    for (const auto& L : layers_) {
      z = L.W * z + L.b;
      if (L.act == Activation::relu) z = z.cwiseMax(0.0);
    }
    return z;
  }

  /// Column-wise batch evaluation.
  Mat eval_batch(const Mat& X) const {
    if (X.rows() != input_dim()) throw DimensionError("Mlp::eval_batch: input has wrong dimension");
    Mat Z = X;
    for (const auto& L : layers_) {
      Mat next = L.W * Z;
      next.colwise() += L.b;
      if (L.act == Activation::relu) next = next.cwiseMax(0.0);
      Z = std::move(next);
    }
    return Z;
  }

 private:
  void validate() const {
    if (layers_.empty()) throw FormatError("Mlp needs at least one layer");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const Layer& L = layers_[i];
      if (L.W.rows() != L.b.size()) throw FormatError("layer " + std::to_string(i) + ": bias size mismatch");
      if (L.W.rows() == 0 || L.W.cols() == 0) throw FormatError("layer " + std::to_string(i) + ": empty weights");
      if (i > 0 && L.W.cols() != layers_[i - 1].W.rows()) {
        throw FormatError("layer " + std::to_string(i) + ": input width does not match previous layer");
      }
      if (!L.W.allFinite() || !L.b.allFinite()) throw FormatError("layer " + std::to_string(i) + ": non-finite value");
    }
    if (layers_.back().act != Activation::identity) throw FormatError("output layer must be affine (identity)");
  }

  std::vector<Layer> layers_;
};

inline nlohmann::json to_json(const Mlp& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& L : net.layers()) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < L.W.rows(); ++r) {
      std::vector<double> row(static_cast<std::size_t>(L.W.cols()));
      for (Eigen::Index c = 0; c < L.W.cols(); ++c) row[static_cast<std::size_t>(c)] = L.W(r, c);
      rows.push_back(row);
    }
    layers.push_back({{"weights", rows},
                      {"bias", std::vector<double>(L.b.data(), L.b.data() + L.b.size())},
                      {"activation", to_string(L.act)}});
  }
  return {{"layers", layers}};
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("layers") || !j.at("layers").is_array()) {
    throw FormatError("weight file needs a \"layers\" array");
  }
  std::vector<Layer> layers;
  try {
    for (const auto& jl : j.at("layers")) {
      const auto rows = jl.at("weights").get<std::vector<std::vector<double>>>();
      const auto bias = jl.at("bias").get<std::vector<double>>();
      Layer L;
      const auto nr = static_cast<Eigen::Index>(rows.size());
      const auto nc = nr == 0 ? 0 : static_cast<Eigen::Index>(rows.front().size());
      L.W.resize(nr, nc);
      for (Eigen::Index r = 0; r < nr; ++r) {
        if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)].size()) != nc) {
          throw FormatError("ragged weight matrix");
        }
        for (Eigen::Index c = 0; c < nc; ++c) L.W(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      }
      L.b = Eigen::Map<const Vec>(bias.data(), static_cast<Eigen::Index>(bias.size()));
      L.act = activation_from_string(jl.at("activation").get<std::string>());
      layers.push_back(std::move(L));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed weight file: ") + e.what());
  }
  return Mlp(std::move(layers));
}

inline void save_weights(const Mlp& net, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  os << to_json(net).dump() << '\n';
}

inline Mlp load_weights(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open weight file " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("weight file is not valid JSON: ") + e.what());
  }
  return mlp_from_json(j);
}

// ---------------------------------------------------------------------------
// Grids and datasets
// ---------------------------------------------------------------------------

/// Tensor grid over `box`; the first coordinate varies slowest. A size-1 axis
/// sits at the lower bound.
inline std::vector<Vec> tensor_grid(const HyperRect& box, const std::vector<std::size_t>& shape) {
  if (static_cast<Eigen::Index>(shape.size()) != box.dim()) throw DimensionError("grid shape must match box dimension");
  std::size_t total = 1;
  for (auto s : shape) {
    if (s == 0) throw InvalidArgument("grid shape entries must be positive");
    total *= s;
  }
  std::vector<Vec> pts;
  pts.reserve(total);
  std::vector<std::size_t> idx(shape.size(), 0);
  for (std::size_t k = 0; k < total; ++k) {
    Vec x(box.dim());
    for (std::size_t d = 0; d < shape.size(); ++d) {
      const auto di = static_cast<Eigen::Index>(d);
      const double frac = shape[d] == 1 ? 0.0 : static_cast<double>(idx[d]) / static_cast<double>(shape[d] - 1);
      x[di] = box.lo()[di] + frac * (box.hi()[di] - box.lo()[di]);
    }
    pts.push_back(std::move(x));
    for (std::size_t d = shape.size(); d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  return pts;
}

struct Dataset {
  std::vector<Vec> inputs;
  std::vector<Vec> targets;
  HyperRect domain;
  std::vector<std::size_t> grid_shape;
  std::size_t excluded = 0;    // outside the keep region
  std::size_t infeasible = 0;  // QP infeasible or degenerate
};

struct DatasetOptions {
  /// Grid points with keep(x) == false are dropped before solving the QP.
  std::function<bool(const Vec&)> keep;
  double max_infeasible_fraction = 1e-3;
  unsigned jobs = 1;
};

/// Keep-region predicate {x : min_i h_i(x) >= -margin}.
inline std::function<bool(const Vec&)> safe_margin_region(const FilterProblem& fp, double margin) {
  return [&fp, margin](const Vec& x) { return fp.min_h(x) >= -margin; };
}

/// Grid samples of the filter correction v(x).
inline Dataset generate_dataset(const FilterProblem& fp, const ControlAffineSystem& sys, const HyperRect& domain,
                                const std::vector<std::size_t>& grid_shape, const DatasetOptions& opt = {}) {
  Dataset ds;
  ds.domain = domain;
  ds.grid_shape = grid_shape;
  const auto grid = tensor_grid(domain, grid_shape);
  std::vector<std::optional<Vec>> out(grid.size());
  std::vector<char> excluded(grid.size(), 0);
  parallel_for(grid.size(), opt.jobs, [&](std::size_t i) {
    if (opt.keep && !opt.keep(grid[i])) {
      excluded[i] = 1;
      return;
    }
    try {
      out[i] = filter_correction(fp, sys, grid[i]);
    } catch (const InfeasibleError&) {
    } catch (const DegenerateConstraintsError&) {
    }
  });
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (excluded[i]) {
      ++ds.excluded;
    } else if (!out[i]) {
      ++ds.infeasible;
    } else {
      ds.inputs.push_back(grid[i]);
      ds.targets.push_back(*out[i]);
    }
  }
  const std::size_t considered = grid.size() - ds.excluded;
  if (considered > 0 &&
      static_cast<double>(ds.infeasible) > opt.max_infeasible_fraction * static_cast<double>(considered)) {
    throw InfeasibleError("dataset generation: " + std::to_string(ds.infeasible) + " of " +
                          std::to_string(considered) + " grid points have an infeasible filter QP");
  }
  return ds;
}

/// CSV x1..xn,u1..um.
inline void write_dataset_csv(std::ostream& os, const Dataset& ds) {
  if (ds.inputs.empty()) return;
  const auto n = ds.inputs.front().size();
  const auto m = ds.targets.front().size();
  for (Eigen::Index i = 0; i < n; ++i) os << (i ? "," : "") << 'x' << (i + 1);
  for (Eigen::Index j = 0; j < m; ++j) os << ",u" << (j + 1);
  os << '\n';
  os << std::setprecision(17);
  for (std::size_t k = 0; k < ds.inputs.size(); ++k) {
    for (Eigen::Index i = 0; i < n; ++i) os << (i ? "," : "") << ds.inputs[k][i];
    for (Eigen::Index j = 0; j < m; ++j) os << ',' << ds.targets[k][j];
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Approximation error
// ---------------------------------------------------------------------------

struct McEstimate {
  double grid_max = 0.0;  // max_x ||N(x) - v(x)|| over the grid
  double mc = 0.0;        // grid_max * margin
  Vec argmax;
  std::size_t points = 0;
};

struct McOptions {
  double margin = 1.25;
  std::function<bool(const Vec&)> keep;
  unsigned jobs = 1;
};

/// Grid estimate of M_C = sup ||N(x) - v(x)||_U over `region`, inflated by a margin.
inline McEstimate estimate_mc(const Mlp& net, const FilterProblem& fp, const ControlAffineSystem& sys,
                              const HyperRect& region, const std::vector<std::size_t>& grid_shape,
                              const NormTag& norm_u = NormTag::inf(), const McOptions& opt = {}) {
  const auto grid = tensor_grid(region, grid_shape);
  std::vector<double> err(grid.size(), -1.0);
  parallel_for(grid.size(), opt.jobs, [&](std::size_t i) {
    if (opt.keep && !opt.keep(grid[i])) return;
    err[i] = norm(norm_u, net.eval(grid[i]) - filter_correction(fp, sys, grid[i]));
  });
  McEstimate est;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (err[i] < 0.0) continue;
    ++est.points;
    if (err[i] >= est.grid_max) {
      est.grid_max = err[i];
      est.argmax = grid[i];
    }
  }
  est.mc = est.grid_max * opt.margin;
  return est;
}

}  // namespace cbfreach
