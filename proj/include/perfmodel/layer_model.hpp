#pragma once

// Per-layer-type runtime and power models: a sparse polynomial over the layer
// features plus linear terms in the layer's memory-access and FLOP counts.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "perfmodel/arch.hpp"
#include "perfmodel/cross_validation.hpp"
#include "perfmodel/features.hpp"
#include "perfmodel/json_util.hpp"
#include "perfmodel/lasso.hpp"
#include "perfmodel/metrics.hpp"

namespace perfmodel {

inline constexpr double kRuntimeFloorMs = 0.001;
inline constexpr double kIdlePowerW = 15.0;
inline constexpr double kDefaultPowerCapW = 250.0;
inline constexpr std::size_t kMinTrainingSamples = 20;
inline constexpr int kModelFormatVersion = 1;

struct MeasurementSample {
  LayerSpec layer;
  double runtime_ms = 0.0;
  double power_w = 0.0;

  friend bool operator==(const MeasurementSample&, const MeasurementSample&) = default;
};

inline double target_value(const MeasurementSample& s, Target target) {
  return target == Target::Runtime ? s.runtime_ms : s.power_w;
}

// Column layout: basis monomials (index 0 is the constant, i.e. the intercept),
// followed by the special terms.
struct PolynomialModel {
  LayerKind layer_kind = LayerKind::Conv;
  Target target = Target::Runtime;
  int degree = 0;
  MonomialBasis basis;
  Scaler scaler;
  std::map<std::size_t, double> coefficients;  // exact zeros omitted
  double lambda = 0.0;
  double train_rmse = 0.0;
  double train_rmspe = 0.0;
  CvReport cv_report;

  std::size_t special_count() const { return special_term_names(layer_kind).size(); }
  std::size_t column_count() const { return basis.size() + special_count(); }
  std::size_t nonzero_terms() const { return coefficients.size(); }
  double intercept() const {
    auto it = coefficients.find(0);
    return it == coefficients.end() ? 0.0 : it->second;
  }
  std::vector<std::string> column_names() const {
    auto names = feature_names(layer_kind, target);
    std::vector<std::string> out;
    out.reserve(column_count());
    for (const auto& e : basis.exponents) out.push_back(monomial_name(e, names));
    for (auto& s : special_term_names(layer_kind)) out.push_back(std::move(s));
    return out;
  }
};

inline bool operator==(const CvReport& a, const CvReport& b) {
  return a.grid == b.grid && a.degrees == b.degrees && a.rule == b.rule && a.best_degree == b.best_degree && a.best_lambda == b.best_lambda &&
         a.best_rmse == b.best_rmse && same_value(a.best_rmspe, b.best_rmspe) &&
         a.folds == b.folds && a.fold_seed == b.fold_seed && a.rng == b.rng;
}

inline bool operator==(const PolynomialModel& a, const PolynomialModel& b) {
  return a.layer_kind == b.layer_kind && a.target == b.target && a.degree == b.degree && a.basis == b.basis &&
         a.scaler == b.scaler && a.coefficients == b.coefficients && a.lambda == b.lambda &&
         a.train_rmse == b.train_rmse && a.train_rmspe == b.train_rmspe && a.cv_report == b.cv_report;
}

// Writes the model's column values for one layer into out.
inline void design_row(const MonomialBasis& basis, const LayerSpec& layer, Target target, std::span<double> out) {
  const FeatureVector fv = features_for(layer, target);
  const SpecialTerms st = special_terms(layer);
  if (out.size() != basis.size() + st.values.size()) throw DataError("design row buffer has the wrong size");
  expand_into(basis, fv.values, out.first(basis.size()));
  std::copy(st.values.begin(), st.values.end(), out.begin() + static_cast<std::ptrdiff_t>(basis.size()));
}

inline DesignMatrix build_design(std::span<const MeasurementSample> samples, LayerKind kind, Target target,
                                 int degree) {
  const MonomialBasis basis = build_basis(feature_dimension(kind, target), degree);
  const auto names = feature_names(kind, target);
  const auto specials = special_term_names(kind);
  DesignMatrix x;
  x.entries.resize(static_cast<Eigen::Index>(samples.size()),
                   static_cast<Eigen::Index>(basis.size() + specials.size()));
  std::vector<double> row(basis.size() + specials.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    design_row(basis, samples[i].layer, target, row);
    for (std::size_t j = 0; j < row.size(); ++j) x.entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
  }
  for (const auto& e : basis.exponents) x.col_names.push_back(monomial_name(e, names));
  for (const auto& s : specials) x.col_names.push_back(s);
  return x;
}

struct LayerPrediction {
  double value = 0.0;
  double raw = 0.0;
  bool clamped = false;
};

inline double clamp_floor(Target target) { return target == Target::Runtime ? kRuntimeFloorMs : kIdlePowerW; }

inline double evaluate_raw(const PolynomialModel& model, const LayerSpec& layer) {
  if (kind_of(layer) != model.layer_kind) {
    throw DataError("model for " + std::string(to_string(model.layer_kind)) + " layers applied to a " +
                    std::string(to_string(kind_of(layer))) + " layer");
  }
  std::vector<double> row(model.column_count());
  design_row(model.basis, layer, model.target, row);
  double v = 0.0;
  for (const auto& [j, c] : model.coefficients) v += c * row[j];
  return v;
}

// Non-positive raw values are floored (0.001 ms / 15 W idle) and flagged.
inline LayerPrediction predict_layer(const PolynomialModel& model, const LayerSpec& layer) {
  LayerPrediction out;
  out.raw = evaluate_raw(model, layer);
  if (out.raw <= 0.0) {
    out.value = clamp_floor(model.target);
    out.clamped = true;
  } else {
    out.value = out.raw;
  }
  return out;
}

// Training --------------------------------------------------------------------

struct TrainOptions {
  std::vector<int> degrees{1, 2, 3};
  std::size_t folds = 10;
  std::size_t lambda_count = 50;
  std::uint64_t seed = 0;
  LassoOptions lasso;
  unsigned threads = 1;
  SelectionRule rule = SelectionRule::OneStandardError;
  // Skips cross-validation: fit the single candidate degree at this penalty.
  std::optional<double> fixed_lambda;
  FitObserver observer;
};

inline LayerKind common_kind(std::span<const MeasurementSample> samples) {
  if (samples.empty()) throw DataError("no samples");
  const LayerKind kind = kind_of(samples.front().layer);
  for (const auto& s : samples) {
    if (kind_of(s.layer) != kind) throw DataError("training samples mix layer kinds");
  }
  return kind;
}

inline PolynomialModel train_layer_model(std::span<const MeasurementSample> samples, Target target,
                                         const TrainOptions& opts = {}) {
  if (samples.size() < kMinTrainingSamples) {
    throw DataError("insufficient data: " + std::to_string(samples.size()) + " samples, need at least " +
                    std::to_string(kMinTrainingSamples));
  }
  const LayerKind kind = common_kind(samples);
  std::vector<double> y(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) y[i] = target_value(samples[i], target);

  PolynomialModel model;
  model.layer_kind = kind;
  model.target = target;

  if (opts.fixed_lambda) {
    if (opts.degrees.size() != 1) throw DataError("a fixed lambda needs exactly one candidate degree");
    model.cv_report.best_degree = opts.degrees.front();
    model.cv_report.best_lambda = *opts.fixed_lambda;
    model.cv_report.fold_seed = opts.seed;
  } else {
    CvOptions cv;
    cv.folds = opts.folds;
    cv.lambda_count = opts.lambda_count;
    cv.seed = opts.seed;
    cv.lasso = opts.lasso;
    cv.threads = opts.threads;
    cv.rule = opts.rule;
    cv.observer = opts.observer;
    model.cv_report = cross_validate([&](int degree) { return build_design(samples, kind, target, degree); }, y,
                                     opts.degrees, cv);
  }

  model.degree = model.cv_report.best_degree;
  model.lambda = model.cv_report.best_lambda;
  const DesignMatrix design = build_design(samples, kind, target, model.degree);
  const LassoProblem problem(design, y);

  // Refit on all data, walking the path down to the selected penalty.
  LassoFit fit;
  if (opts.fixed_lambda) {
    fit = problem.fit(model.lambda, opts.lasso);
  } else {
    for (double lambda : problem.lambda_path(opts.lambda_count)) {
      if (lambda < model.lambda) break;
      fit = problem.fit(lambda, opts.lasso, fit.standardized.empty() ? nullptr : &fit);
    }
    fit = problem.fit(model.lambda, opts.lasso, fit.standardized.empty() ? nullptr : &fit);
  }

  model.basis = build_basis(feature_dimension(kind, target), model.degree);
  model.scaler = problem.scaler();
  for (std::size_t j = 0; j < fit.coefficients.size(); ++j) {
    if (fit.coefficients[j] != 0.0) model.coefficients.emplace(j, fit.coefficients[j]);
  }
  const std::vector<double> fitted = predict_rows(design.entries, fit.coefficients);
  model.train_rmse = rmse(fitted, y);
  model.train_rmspe = rmspe(fitted, y);
  return model;
}

// Model sets --------------------------------------------------------------------

struct ModelSet {
  std::map<std::pair<LayerKind, Target>, PolynomialModel> models;
  std::string platform_tag;
  std::string created_at;

  const PolynomialModel* find(LayerKind kind, Target target) const {
    auto it = models.find({kind, target});
    return it == models.end() ? nullptr : &it->second;
  }
  const PolynomialModel& at(LayerKind kind, Target target) const {
    const PolynomialModel* m = find(kind, target);
    if (m == nullptr) {
      throw DataError("model set has no " + std::string(to_string(kind)) + " " + std::string(to_string(target)) +
                      " model");
    }
    return *m;
  }
  void insert(PolynomialModel model) {
    const auto key = std::make_pair(model.layer_kind, model.target);
    models.insert_or_assign(key, std::move(model));
  }
  bool complete() const { return models.size() == 6; }

  friend bool operator==(const ModelSet&, const ModelSet&) = default;
};

inline nlohmann::json model_to_json(const PolynomialModel& m) {
  using nlohmann::json;
  auto decimals = [](const std::vector<double>& v) {
    json out = json::array();
    for (double d : v) out.push_back(format_double(d));
    return out;
  };
  json exponents = json::array();
  for (const auto& e : m.basis.exponents) exponents.push_back(e);
  json coefficients = json::array();
  for (const auto& [j, c] : m.coefficients) coefficients.push_back(json::array({j, format_double(c)}));
  json grid = json::array();
  for (const auto& g : m.cv_report.grid) {
    grid.push_back(json::array(
        {g.degree, format_double(g.lambda), format_double(g.cv_rmse), format_double(g.cv_rmspe)}));
  }
  json degree_rows = json::array();
  for (const auto& d : m.cv_report.degrees) {
    degree_rows.push_back(json::array({d.degree, format_double(d.lambda), format_double(d.cv_rmse),
                                       format_double(d.excess_mse), format_double(d.excess_se)}));
  }
  return {
      {"layer_kind", to_string(m.layer_kind)},
      {"target", to_string(m.target)},
      {"degree", m.degree},
      {"feature_names", feature_names(m.layer_kind, m.target)},
      {"special_names", special_term_names(m.layer_kind)},
      {"basis", {{"dimension", m.basis.dimension}, {"degree", m.basis.degree}, {"exponents", exponents}}},
      {"scaler",
       {{"means", decimals(m.scaler.means)}, {"stds", decimals(m.scaler.stds)}, {"constant", m.scaler.constant}}},
      {"coefficients", coefficients},
      {"lambda", format_double(m.lambda)},
      {"train_rmse", format_double(m.train_rmse)},
      {"train_rmspe", format_double(m.train_rmspe)},
      {"cv",
       {{"folds", m.cv_report.folds},
        {"seed", m.cv_report.fold_seed},
        {"rng", m.cv_report.rng},
        {"rule", to_string(m.cv_report.rule)},
        {"best_degree", m.cv_report.best_degree},
        {"best_lambda", format_double(m.cv_report.best_lambda)},
        {"best_rmse", format_double(m.cv_report.best_rmse)},
        {"best_rmspe", format_double(m.cv_report.best_rmspe)},
        {"degrees", degree_rows},
        {"grid", grid}}},
  };
}

inline PolynomialModel model_from_json(const nlohmann::json& obj, const std::string& path) {
  using namespace json_detail;
  PolynomialModel m;
  try {
    m.layer_kind = parse_layer_kind(get_string(obj, path, "layer_kind"));
    m.target = parse_target(get_string(obj, path, "target"));
  } catch (const SchemaError& e) {
    if (std::string(e.what()).rfind(path, 0) == 0) throw;
    throw SchemaError(path + ": " + e.what());
  }
  m.degree = static_cast<int>(get_int(obj, path, "degree"));

  const std::string bpath = path + ".basis";
  const auto& basis = field(obj, path, "basis");
  const auto dimension = static_cast<std::size_t>(get_int(basis, bpath, "dimension"));
  const int bdegree = static_cast<int>(get_int(basis, bpath, "degree"));
  if (dimension != feature_dimension(m.layer_kind, m.target)) {
    throw SchemaError(bpath + ".dimension: " + std::to_string(dimension) + " does not match the " +
                      std::to_string(feature_dimension(m.layer_kind, m.target)) + " features of this layer kind");
  }
  if (bdegree != m.degree || bdegree < 0) throw SchemaError(bpath + ".degree: inconsistent with model degree");
  m.basis = build_basis(dimension, bdegree);
  const auto& exps = get_array(basis, bpath, "exponents");
  if (exps.size() != m.basis.size()) throw SchemaError(bpath + ".exponents: wrong number of monomials");
  for (std::size_t j = 0; j < exps.size(); ++j) {
    const std::string epath = bpath + ".exponents[" + std::to_string(j) + "]";
    if (!exps[j].is_array() || exps[j].get<Exponents>() != m.basis.exponents[j]) {
      throw SchemaError(epath + ": does not match the canonical graded-lexicographic basis");
    }
  }

  const std::string spath = path + ".scaler";
  const auto& scaler = field(obj, path, "scaler");
  auto read_decimals = [&](const char* key) {
    std::vector<double> out;
    const auto& arr = get_array(scaler, spath, key);
    for (std::size_t i = 0; i < arr.size(); ++i) {
      out.push_back(as_decimal(arr[i], spath + "." + key + "[" + std::to_string(i) + "]"));
    }
    return out;
  };
  m.scaler.means = read_decimals("means");
  m.scaler.stds = read_decimals("stds");
  for (const auto& c : get_array(scaler, spath, "constant")) {
    if (!c.is_boolean()) throw SchemaError(spath + ".constant: expected booleans");
    m.scaler.constant.push_back(c.get<bool>());
  }
  if (m.scaler.means.size() != m.column_count() || m.scaler.stds.size() != m.column_count() ||
      m.scaler.constant.size() != m.column_count()) {
    throw SchemaError(spath + ": length does not match the model's column count");
  }

  const auto& coefs = get_array(obj, path, "coefficients");
  for (std::size_t i = 0; i < coefs.size(); ++i) {
    const std::string cpath = path + ".coefficients[" + std::to_string(i) + "]";
    const auto& pair = coefs[i];
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_unsigned()) {
      throw SchemaError(cpath + ": expected [index, \"decimal\"]");
    }
    const auto j = pair[0].get<std::size_t>();
    if (j >= m.column_count()) throw SchemaError(cpath + ": column index out of range");
    const double c = as_decimal(pair[1], cpath);
    if (!std::isfinite(c)) throw SchemaError(cpath + ": coefficient is not finite");
    if (c != 0.0) m.coefficients.emplace(j, c);
  }
  m.lambda = get_decimal(obj, path, "lambda");
  m.train_rmse = get_decimal(obj, path, "train_rmse");
  m.train_rmspe = get_decimal(obj, path, "train_rmspe");

  const std::string cvpath = path + ".cv";
  const auto& cv = field(obj, path, "cv");
  m.cv_report.folds = static_cast<std::size_t>(get_uint(cv, cvpath, "folds"));
  m.cv_report.fold_seed = get_uint(cv, cvpath, "seed");
  m.cv_report.rng = get_string(cv, cvpath, "rng");
  try {
    m.cv_report.rule = parse_selection_rule(get_string(cv, cvpath, "rule"));
  } catch (const SchemaError& e) {
    if (std::string(e.what()).rfind(cvpath, 0) == 0) throw;
    throw SchemaError(cvpath + ".rule: " + e.what());
  }
  m.cv_report.best_degree = static_cast<int>(get_int(cv, cvpath, "best_degree"));
  m.cv_report.best_lambda = get_decimal(cv, cvpath, "best_lambda");
  m.cv_report.best_rmse = get_decimal(cv, cvpath, "best_rmse");
  m.cv_report.best_rmspe = get_decimal(cv, cvpath, "best_rmspe");
  const auto& grid = get_array(cv, cvpath, "grid");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const std::string gpath = cvpath + ".grid[" + std::to_string(i) + "]";
    const auto& g = grid[i];
    if (!g.is_array() || g.size() != 4 || !g[0].is_number_integer()) {
      throw SchemaError(gpath + ": expected [degree, lambda, rmse, rmspe]");
    }
    m.cv_report.grid.push_back(
        {g[0].get<int>(), as_decimal(g[1], gpath + "[1]"), as_decimal(g[2], gpath + "[2]"), as_decimal(g[3], gpath + "[3]")});
  }
  const auto& degree_rows = get_array(cv, cvpath, "degrees");
  for (std::size_t i = 0; i < degree_rows.size(); ++i) {
    const std::string dpath = cvpath + ".degrees[" + std::to_string(i) + "]";
    const auto& d = degree_rows[i];
    if (!d.is_array() || d.size() != 5 || !d[0].is_number_integer()) {
      throw SchemaError(dpath + ": expected [degree, lambda, rmse, excess_mse, excess_se]");
    }
    m.cv_report.degrees.push_back({d[0].get<int>(), as_decimal(d[1], dpath + "[1]"), as_decimal(d[2], dpath + "[2]"),
                                   as_decimal(d[3], dpath + "[3]"), as_decimal(d[4], dpath + "[4]")});
  }
  return m;
}

inline nlohmann::json model_set_to_json(const ModelSet& set) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& [key, model] : set.models) models.push_back(model_to_json(model));
  return {{"format", kModelFormatVersion},
          {"platform_tag", set.platform_tag},
          {"created_at", set.created_at},
          {"models", models}};
}

inline ModelSet model_set_from_json(const nlohmann::json& doc) {
  using namespace json_detail;
  if (!doc.is_object()) throw SchemaError("model file: expected a JSON object");
  auto format = doc.find("format");
  if (format == doc.end() || !format->is_number_integer()) throw SchemaError("format: missing");
  if (format->get<std::int64_t>() != kModelFormatVersion) {
    throw VersionError("unsupported model format version " + format->dump() + " (expected " +
                       std::to_string(kModelFormatVersion) + ")");
  }
  ModelSet set;
  set.platform_tag = get_string(doc, "$", "platform_tag");
  set.created_at = get_string(doc, "$", "created_at");
  const auto& models = get_array(doc, "$", "models");
  for (std::size_t i = 0; i < models.size(); ++i) {
    PolynomialModel m = model_from_json(models[i], "models[" + std::to_string(i) + "]");
    if (set.find(m.layer_kind, m.target) != nullptr) {
      throw SchemaError("models[" + std::to_string(i) + "]: duplicate " + std::string(to_string(m.layer_kind)) +
                        " " + std::string(to_string(m.target)) + " model");
    }
    set.insert(std::move(m));
  }
  return set;
}

inline std::string dump_model_set(const ModelSet& set) { return model_set_to_json(set).dump(1) + "\n"; }

inline ModelSet parse_model_set(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("model file is not valid JSON (byte " + std::to_string(e.byte) + "): " + e.what());
  }
  return model_set_from_json(doc);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError("write to '" + path + "' failed");
}

inline void save_model_set(const ModelSet& set, const std::string& path) {
  write_text_file(path, dump_model_set(set));
}

inline ModelSet load_model_set(const std::string& path) { return parse_model_set(read_text_file(path)); }

}  // namespace perfmodel
