#pragma once

// Synthetic measurement generator with a known ("hidden") model set, so the
// whole training pipeline can be checked without profiling hardware.
//
// Hidden models are ordinary PolynomialModels. Their coefficients are
// non-negative and their intercepts positive; every feature and special term
// is non-negative, so every hidden target is positive on any valid layer.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "perfmodel/arch.hpp"
#include "perfmodel/features.hpp"
#include "perfmodel/json_util.hpp"
#include "perfmodel/layer_model.hpp"
#include "perfmodel/random.hpp"

namespace perfmodel {

struct IntRange {
  Count lo = 1;
  Count hi = 1;
};

struct ConvRanges {
  IntRange batch{1, 16};
  IntRange in_channels{1, 128};
  IntRange in_side{8, 64};
  IntRange out_channels{8, 128};
  std::vector<Count> kernels{1, 3, 5, 7};
  IntRange stride{1, 2};
};

struct FcRanges {
  IntRange batch{1, 64};
  IntRange in_size{64, 4096};
  IntRange out_size{10, 4096};
};

struct PoolRanges {
  IntRange batch{1, 32};
  IntRange channels{8, 256};
  IntRange in_side{8, 64};
  std::vector<Count> kernels{2, 3};
  IntRange stride{1, 2};
};

// How one hidden model is specified: either explicit coefficients (column
// index -> value, index 0 being the intercept) or a random draw of `terms`
// monomials.
struct TruthSpec {
  int degree = 2;
  int terms = 6;
  std::optional<std::map<std::size_t, double>> coefficients;
};

struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t conv_count = 858;
  std::size_t fc_count = 116;
  std::size_t pool_count = 216;
  double noise_pct = 3.0;
  std::string platform_tag = "synthetic";
  std::map<std::pair<LayerKind, Target>, TruthSpec> truth{
      {{LayerKind::Conv, Target::Runtime}, {3, 6, std::nullopt}},
      {{LayerKind::FullyConnected, Target::Runtime}, {2, 5, std::nullopt}},
      {{LayerKind::Pool, Target::Runtime}, {3, 5, std::nullopt}},
      {{LayerKind::Conv, Target::Power}, {2, 6, std::nullopt}},
      {{LayerKind::FullyConnected, Target::Power}, {2, 5, std::nullopt}},
      {{LayerKind::Pool, Target::Power}, {2, 5, std::nullopt}},
  };
  ConvRanges conv;
  FcRanges fc;
  PoolRanges pool;
};

inline void validate(const SynthConfig& c) {
  if (!(c.noise_pct >= 0.0) || !std::isfinite(c.noise_pct)) throw DataError("noise_pct must be >= 0");
  auto check_range = [](const IntRange& r, const char* name, Count min_lo) {
    if (r.lo < min_lo || r.hi < r.lo) throw DataError(std::string("invalid sampling range for ") + name);
  };
  check_range(c.conv.batch, "conv.batch", 1);
  check_range(c.conv.in_channels, "conv.in_channels", 1);
  check_range(c.conv.in_side, "conv.in_side", 1);
  check_range(c.conv.out_channels, "conv.out_channels", 1);
  check_range(c.conv.stride, "conv.stride", 1);
  check_range(c.fc.batch, "fc.batch", 1);
  check_range(c.fc.in_size, "fc.in_size", 1);
  check_range(c.fc.out_size, "fc.out_size", 1);
  check_range(c.pool.batch, "pool.batch", 1);
  check_range(c.pool.channels, "pool.channels", 1);
  check_range(c.pool.in_side, "pool.in_side", 1);
  check_range(c.pool.stride, "pool.stride", 1);
  if (c.conv.kernels.empty() || c.pool.kernels.empty()) throw DataError("kernel choices must be non-empty");
  for (Count k : c.conv.kernels) {
    if (k < 1 || k > c.conv.in_side.lo) throw DataError("conv kernel choices must lie in [1, in_side.lo]");
  }
  for (Count k : c.pool.kernels) {
    if (k < 1 || k > c.pool.in_side.lo) throw DataError("pool kernel choices must lie in [1, in_side.lo]");
  }
  for (const auto& [key, spec] : c.truth) {
    if (spec.degree < 0) throw DataError("truth degree must be >= 0");
    if (!spec.coefficients && spec.terms < 1) throw DataError("truth term budget must be >= 1");
  }
}

inline LayerSpec sample_layer(LayerKind kind, const SynthConfig& c, Rng& rng) {
  auto pick = [&](const std::vector<Count>& choices) { return choices[rng.below(choices.size())]; };
  switch (kind) {
    case LayerKind::Conv: {
      ConvLayer l;
      l.batch = rng.between(c.conv.batch.lo, c.conv.batch.hi);
      l.in_channels = rng.between(c.conv.in_channels.lo, c.conv.in_channels.hi);
      l.in_h = rng.between(c.conv.in_side.lo, c.conv.in_side.hi);
      l.in_w = rng.between(c.conv.in_side.lo, c.conv.in_side.hi);
      l.out_channels = rng.between(c.conv.out_channels.lo, c.conv.out_channels.hi);
      l.kernel = pick(c.conv.kernels);
      l.stride = rng.between(c.conv.stride.lo, c.conv.stride.hi);
      l.padding = rng.between(0, l.kernel / 2);
      return l;
    }
    case LayerKind::FullyConnected: {
      FullyConnectedLayer l;
      l.batch = rng.between(c.fc.batch.lo, c.fc.batch.hi);
      l.in_size = rng.between(c.fc.in_size.lo, c.fc.in_size.hi);
      l.out_size = rng.between(c.fc.out_size.lo, c.fc.out_size.hi);
      return l;
    }
    case LayerKind::Pool: {
      PoolLayer l;
      l.batch = rng.between(c.pool.batch.lo, c.pool.batch.hi);
      l.channels = rng.between(c.pool.channels.lo, c.pool.channels.hi);
      l.in_h = l.in_w = rng.between(c.pool.in_side.lo, c.pool.in_side.hi);
      l.kernel = pick(c.pool.kernels);
      l.stride = rng.between(c.pool.stride.lo, c.pool.stride.hi);
      l.padding = 0;
      return l;
    }
  }
  return ConvLayer{};
}

namespace synth_detail {

inline constexpr std::size_t kPilotLayers = 256;

// Per-model target scale: intercept floor and the average contribution of one
// monomial (and of one special term, runtime only).
struct Scale {
  double intercept;
  double term_lo;
  double term_hi;
};

inline Scale scale_for(Target target) {
  return target == Target::Runtime ? Scale{2.0, 1.0, 3.0} : Scale{50.0, 4.0, 8.0};
}

inline std::uint64_t stream_seed(std::uint64_t seed, LayerKind kind, Target target, std::uint64_t salt) {
  // splitmix64 of the combined key
  std::uint64_t z = seed ^ (0x9E3779B97F4A7C15ULL * (1 + static_cast<std::uint64_t>(kind) * 2 +
                                                     static_cast<std::uint64_t>(target) + 8 * salt));
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace synth_detail

// Draws a random sparse hidden model. Monomials are chosen so that at least
// two (when available) have exactly the requested degree; coefficients are set
// so that each chosen term contributes a drawn amount on an average pilot
// layer, doubled for the top-degree terms so the degree is identifiable.
inline PolynomialModel random_truth_model(LayerKind kind, Target target, const TruthSpec& spec,
                                          const SynthConfig& config) {
  Rng rng(synth_detail::stream_seed(config.seed, kind, target, 1));
  PolynomialModel m;
  m.layer_kind = kind;
  m.target = target;
  m.degree = spec.degree;
  const std::size_t dim = feature_dimension(kind, target);
  m.basis = build_basis(dim, spec.degree);
  const std::size_t cols = m.column_count();
  m.scaler = Scaler{std::vector<double>(cols, 0.0), std::vector<double>(cols, 1.0), std::vector<bool>(cols, false)};
  m.cv_report.best_degree = spec.degree;
  m.cv_report.fold_seed = config.seed;

  Eigen::MatrixXd pilot(static_cast<Eigen::Index>(synth_detail::kPilotLayers), static_cast<Eigen::Index>(cols));
  {
    std::vector<double> row(cols);
    for (std::size_t i = 0; i < synth_detail::kPilotLayers; ++i) {
      design_row(m.basis, sample_layer(kind, config, rng), target, row);
      for (std::size_t j = 0; j < cols; ++j) pilot(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
  }
  const Eigen::VectorXd mean = pilot.colwise().mean().transpose();
  const synth_detail::Scale scale = synth_detail::scale_for(target);
  std::vector<std::size_t> top, lower;
  for (std::size_t j = 0; j < m.basis.size(); ++j) {
    const int d = total_degree(m.basis.exponents[j]);
    if (d == 0 || !(mean[static_cast<Eigen::Index>(j)] > 0.0)) continue;
    (d == spec.degree ? top : lower).push_back(j);
  }

  // Rank top-degree monomials by the part of their pilot variation that the
  // lower-degree monomials and the special terms cannot reproduce, relative to their mean. Terms
  // drawn from the upper quarter of that ranking make the hidden degree
  // distinguishable from the one below it under multiplicative noise.
  if (spec.degree > 1 && !top.empty()) {
    std::vector<Eigen::Index> lower_cols;
    for (std::size_t j = 0; j < cols; ++j) {
      if (j >= m.basis.size() || total_degree(m.basis.exponents[j]) < spec.degree) {
        lower_cols.push_back(static_cast<Eigen::Index>(j));
      }
    }
    Eigen::MatrixXd low(pilot.rows(), static_cast<Eigen::Index>(lower_cols.size()));
    for (std::size_t c = 0; c < lower_cols.size(); ++c) low.col(static_cast<Eigen::Index>(c)) = pilot.col(lower_cols[c]);
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(low);
    std::vector<double> novelty(m.basis.size(), 0.0);
    for (std::size_t j : top) {
      const Eigen::VectorXd col = pilot.col(static_cast<Eigen::Index>(j));
      const Eigen::VectorXd resid = col - low * qr.solve(col);
      novelty[j] = std::sqrt(resid.squaredNorm() / static_cast<double>(resid.size())) / mean[static_cast<Eigen::Index>(j)];
    }
    std::stable_sort(top.begin(), top.end(), [&](std::size_t a, std::size_t b) { return novelty[a] > novelty[b]; });
  }
  const auto budget = static_cast<std::size_t>(std::max(spec.terms, 1));
  const std::size_t n_top = std::min<std::size_t>(top.size(), std::max<std::size_t>(2, budget / 2));
  const std::size_t pool = std::min(top.size(), std::max(n_top, top.size() / 4));
  rng.shuffle(std::span<std::size_t>(top).first(pool));
  rng.shuffle(std::span<std::size_t>(lower));

  std::vector<std::size_t> chosen;
  chosen.insert(chosen.end(), top.begin(), top.begin() + static_cast<std::ptrdiff_t>(n_top));
  for (std::size_t j : lower) {
    if (chosen.size() >= budget) break;
    chosen.push_back(j);
  }
  for (std::size_t j = n_top; j < top.size() && chosen.size() < budget; ++j) chosen.push_back(top[j]);
  std::sort(chosen.begin(), chosen.end());

  m.coefficients.emplace(0, scale.intercept);
  for (std::size_t j : chosen) {
    const double weight = total_degree(m.basis.exponents[j]) == spec.degree ? 2.0 : 1.0;
    m.coefficients.emplace(j, weight * rng.uniform(scale.term_lo, scale.term_hi) / mean[static_cast<Eigen::Index>(j)]);
  }
  if (target == Target::Runtime) {
    // FLOP count is always the last special term.
    const std::size_t flops = cols - 1;
    m.coefficients.emplace(flops, rng.uniform(scale.term_lo, scale.term_hi) / mean[static_cast<Eigen::Index>(flops)]);
  }
  return m;
}

inline PolynomialModel explicit_truth_model(LayerKind kind, Target target, const TruthSpec& spec) {
  PolynomialModel m;
  m.layer_kind = kind;
  m.target = target;
  m.degree = spec.degree;
  m.basis = build_basis(feature_dimension(kind, target), spec.degree);
  const std::size_t cols = m.column_count();
  m.scaler = Scaler{std::vector<double>(cols, 0.0), std::vector<double>(cols, 1.0), std::vector<bool>(cols, false)};
  m.cv_report.best_degree = spec.degree;
  const double floor = synth_detail::scale_for(target).intercept;
  for (const auto& [j, c] : *spec.coefficients) {
    if (j >= cols) throw DataError("truth coefficient index " + std::to_string(j) + " out of range");
    if (!std::isfinite(c)) throw DataError("truth coefficient is not finite");
    if (c != 0.0) m.coefficients[j] = std::abs(c);
  }
  if (m.intercept() < floor) m.coefficients[0] = floor;
  return m;
}

inline ModelSet make_truth(const SynthConfig& config) {
  validate(config);
  ModelSet truth;
  truth.platform_tag = config.platform_tag;
  truth.created_at = "synthetic seed " + std::to_string(config.seed);
  for (LayerKind kind : kAllLayerKinds) {
    for (Target target : kAllTargets) {
      auto it = config.truth.find({kind, target});
      const TruthSpec spec = it == config.truth.end() ? TruthSpec{} : it->second;
      truth.insert(spec.coefficients ? explicit_truth_model(kind, target, spec)
                                     : random_truth_model(kind, target, spec, config));
    }
  }
  return truth;
}

struct SynthDataset {
  std::vector<MeasurementSample> samples;
  ModelSet truth;
};

inline double noisy(double clean, double noise_pct, Rng& rng) {
  if (noise_pct == 0.0) return clean;
  double factor;
  do {
    factor = 1.0 + noise_pct / 100.0 * rng.normal();
  } while (factor <= 0.01);
  return clean * factor;
}

// Samples layers (conv rows, then fc, then pool) and labels them with the
// hidden models plus multiplicative Gaussian noise.
inline std::vector<MeasurementSample> draw_samples(const SynthConfig& config, const ModelSet& truth,
                                                   std::uint64_t stream) {
  Rng rng(synth_detail::stream_seed(config.seed, LayerKind::Conv, Target::Runtime, 100 + stream));
  std::vector<MeasurementSample> out;
  auto add = [&](LayerKind kind, std::size_t count) {
    const auto& rt = truth.at(kind, Target::Runtime);
    const auto& pw = truth.at(kind, Target::Power);
    for (std::size_t i = 0; i < count; ++i) {
      MeasurementSample s;
      s.layer = sample_layer(kind, config, rng);
      s.runtime_ms = noisy(evaluate_raw(rt, s.layer), config.noise_pct, rng);
      s.power_w = noisy(evaluate_raw(pw, s.layer), config.noise_pct, rng);
      out.push_back(std::move(s));
    }
  };
  add(LayerKind::Conv, config.conv_count);
  add(LayerKind::FullyConnected, config.fc_count);
  add(LayerKind::Pool, config.pool_count);
  return out;
}

inline SynthDataset synthesize(const SynthConfig& config) {
  SynthDataset ds;
  ds.truth = make_truth(config);
  ds.samples = draw_samples(config, ds.truth, 0);
  return ds;
}

// A serial network of `layers` layers with kinds cycling conv, conv, pool,
// ..., ending in fully connected layers; hyper-parameters from the ranges.
inline NetworkSpec synth_network(const SynthConfig& config, std::size_t layers, std::uint64_t stream,
                                 const std::string& name = "synthetic") {
  Rng rng(synth_detail::stream_seed(config.seed, LayerKind::Pool, Target::Power, 1000 + stream));
  NetworkSpec net;
  net.name = name;
  const std::size_t fc_layers = std::min<std::size_t>(2, layers / 3);
  for (std::size_t i = 0; i < layers; ++i) {
    LayerKind kind = LayerKind::FullyConnected;
    if (i + fc_layers < layers) kind = (i % 3 == 2) ? LayerKind::Pool : LayerKind::Conv;
    net.layers.push_back(sample_layer(kind, config, rng));
  }
  return net;
}

// Config files ------------------------------------------------------------------

inline std::string truth_key(LayerKind kind, Target target) {
  return std::string(to_string(kind)) + "_" + std::string(to_string(target));
}

inline SynthConfig synth_config_from_json(const nlohmann::json& doc) {
  using nlohmann::json;
  if (!doc.is_object()) throw SchemaError("synth config: expected a JSON object");
  SynthConfig c;
  auto get_uint = [&](const json& obj, const char* key, auto& out, const std::string& path) {
    if (auto it = obj.find(key); it != obj.end()) {
      if (!it->is_number_integer() || it->get<std::int64_t>() < 0) {
        throw SchemaError(path + key + ": expected a non-negative integer");
      }
      out = it->get<std::remove_reference_t<decltype(out)>>();
    }
  };
  auto get_range = [&](const json& obj, const char* key, IntRange& out, const std::string& path) {
    if (auto it = obj.find(key); it != obj.end()) {
      if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number_integer() || !(*it)[1].is_number_integer()) {
        throw SchemaError(path + key + ": expected [lo, hi]");
      }
      out = {(*it)[0].get<Count>(), (*it)[1].get<Count>()};
    }
  };
  auto get_list = [&](const json& obj, const char* key, std::vector<Count>& out, const std::string& path) {
    if (auto it = obj.find(key); it != obj.end()) {
      if (!it->is_array()) throw SchemaError(path + key + ": expected an array of integers");
      out.clear();
      for (const auto& v : *it) {
        if (!v.is_number_integer()) throw SchemaError(path + key + ": expected an array of integers");
        out.push_back(v.get<Count>());
      }
    }
  };
  get_uint(doc, "seed", c.seed, "");
  if (auto it = doc.find("noise_pct"); it != doc.end()) {
    if (!it->is_number()) throw SchemaError("noise_pct: expected a number");
    c.noise_pct = it->get<double>();
  }
  if (auto it = doc.find("platform_tag"); it != doc.end()) {
    if (!it->is_string()) throw SchemaError("platform_tag: expected a string");
    c.platform_tag = it->get<std::string>();
  }
  if (auto it = doc.find("counts"); it != doc.end()) {
    if (!it->is_object()) throw SchemaError("counts: expected an object");
    get_uint(*it, "conv", c.conv_count, "counts.");
    get_uint(*it, "fc", c.fc_count, "counts.");
    get_uint(*it, "pool", c.pool_count, "counts.");
  }
  if (auto it = doc.find("ranges"); it != doc.end()) {
    if (!it->is_object()) throw SchemaError("ranges: expected an object");
    if (auto r = it->find("conv"); r != it->end()) {
      get_range(*r, "batch", c.conv.batch, "ranges.conv.");
      get_range(*r, "in_channels", c.conv.in_channels, "ranges.conv.");
      get_range(*r, "in_side", c.conv.in_side, "ranges.conv.");
      get_range(*r, "out_channels", c.conv.out_channels, "ranges.conv.");
      get_list(*r, "kernels", c.conv.kernels, "ranges.conv.");
      get_range(*r, "stride", c.conv.stride, "ranges.conv.");
    }
    if (auto r = it->find("fc"); r != it->end()) {
      get_range(*r, "batch", c.fc.batch, "ranges.fc.");
      get_range(*r, "in_size", c.fc.in_size, "ranges.fc.");
      get_range(*r, "out_size", c.fc.out_size, "ranges.fc.");
    }
    if (auto r = it->find("pool"); r != it->end()) {
      get_range(*r, "batch", c.pool.batch, "ranges.pool.");
      get_range(*r, "channels", c.pool.channels, "ranges.pool.");
      get_range(*r, "in_side", c.pool.in_side, "ranges.pool.");
      get_list(*r, "kernels", c.pool.kernels, "ranges.pool.");
      get_range(*r, "stride", c.pool.stride, "ranges.pool.");
    }
  }
  if (auto it = doc.find("truth"); it != doc.end()) {
    if (!it->is_object()) throw SchemaError("truth: expected an object");
    for (LayerKind kind : kAllLayerKinds) {
      for (Target target : kAllTargets) {
        const std::string key = truth_key(kind, target);
        auto t = it->find(key);
        if (t == it->end()) continue;
        const std::string path = "truth." + key + ".";
        if (!t->is_object()) throw SchemaError("truth." + key + ": expected an object");
        TruthSpec& spec = c.truth[{kind, target}];
        if (auto d = t->find("degree"); d != t->end()) {
          if (!d->is_number_integer()) throw SchemaError(path + "degree: expected an integer");
          spec.degree = d->get<int>();
        }
        if (auto n = t->find("terms"); n != t->end()) {
          if (!n->is_number_integer()) throw SchemaError(path + "terms: expected an integer");
          spec.terms = n->get<int>();
        }
        if (auto cs = t->find("coefficients"); cs != t->end()) {
          if (!cs->is_array()) throw SchemaError(path + "coefficients: expected [[index, value], ...]");
          std::map<std::size_t, double> coefs;
          for (const auto& pair : *cs) {
            if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_unsigned() || !pair[1].is_number()) {
              throw SchemaError(path + "coefficients: expected [[index, value], ...]");
            }
            coefs[pair[0].get<std::size_t>()] = pair[1].get<double>();
          }
          spec.coefficients = std::move(coefs);
        }
      }
    }
  }
  validate(c);
  return c;
}

}  // namespace perfmodel
