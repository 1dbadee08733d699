#pragma once

// Command implementations behind the perfmodel tool. Each takes parsed
// arguments and output streams and returns the process exit code:
// 0 success, 1 success with clamped predictions, 2 input errors.

#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "perfmodel/arch.hpp"
#include "perfmodel/dataset.hpp"
#include "perfmodel/epr.hpp"
#include "perfmodel/error.hpp"
#include "perfmodel/layer_model.hpp"
#include "perfmodel/network.hpp"
#include "perfmodel/synth.hpp"

namespace perfmodel {

inline constexpr int kExitOk = 0;
inline constexpr int kExitClamped = 1;
inline constexpr int kExitInputError = 2;

inline constexpr const char* kSeedEnvVar = "PERFMODEL_SEED";

// An explicit seed wins; otherwise PERFMODEL_SEED; otherwise 0.
inline std::uint64_t resolve_seed(std::optional<std::uint64_t> flag) {
  if (flag) return *flag;
  const char* env = std::getenv(kSeedEnvVar);
  if (env == nullptr || *env == '\0') return 0;
  std::string_view text(env);
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || end != text.data() + text.size()) {
    throw DataError(std::string(kSeedEnvVar) + " must be a non-negative integer, got '" + std::string(text) + "'");
  }
  return v;
}

namespace command_detail {

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInputError;
  }
}

inline std::string fixed(double v, int digits) { return report_detail::fixed(v, digits); }

inline std::string percent(double fraction) {
  std::ostringstream out;
  out << std::showpos << std::fixed << std::setprecision(2) << 100.0 * fraction << "%";
  return out.str();
}

inline constexpr std::size_t kMaxListedWarnings = 5;

inline void print_warnings(std::ostream& err, const std::vector<std::string>& warnings, const std::string& prefix) {
  for (std::size_t i = 0; i < warnings.size() && i < kMaxListedWarnings; ++i) {
    err << "warning: " << prefix << warnings[i] << "\n";
  }
  if (warnings.size() > kMaxListedWarnings) {
    err << "warning: " << prefix << (warnings.size() - kMaxListedWarnings) << " more warning(s) not shown\n";
  }
}

}  // namespace command_detail

// train ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string out;
  std::vector<int> degrees{1, 2, 3};
  std::size_t folds = 10;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  std::string platform_tag = "unspecified";
  std::string created_at = "unspecified";
  unsigned threads = 1;
};

inline ModelSet train_model_set(std::span<const MeasurementSample> samples, const TrainOptions& opts) {
  std::map<LayerKind, std::vector<MeasurementSample>> by_kind;
  for (LayerKind kind : kAllLayerKinds) {
    by_kind[kind] = samples_of_kind(samples, kind);
    if (by_kind[kind].empty()) {
      throw DataError("dataset has no " + std::string(to_string(kind)) + " rows; all three layer kinds are required");
    }
  }
  ModelSet set;
  for (LayerKind kind : kAllLayerKinds) {
    for (Target target : kAllTargets) {
      try {
        set.insert(train_layer_model(by_kind[kind], target, opts));
      } catch (const Error& e) {
        throw DataError(std::string(to_string(kind)) + " " + std::string(to_string(target)) + " model: " + e.what());
      }
    }
  }
  return set;
}

inline std::string training_summary(const ModelSet& set) {
  using command_detail::fixed;
  std::ostringstream out;
  out << std::left << std::setw(6) << "kind" << std::setw(9) << "target" << std::right << std::setw(7) << "degree"
      << std::setw(14) << "lambda" << std::setw(7) << "terms" << std::setw(12) << "cv_rmse" << std::setw(11)
      << "cv_rmspe" << std::setw(13) << "train_rmspe" << "\n";
  for (const auto& [key, m] : set.models) {
    std::ostringstream lambda;
    lambda << std::scientific << std::setprecision(4) << m.lambda;
    out << std::left << std::setw(6) << to_string(m.layer_kind) << std::setw(9) << to_string(m.target) << std::right
        << std::setw(7) << m.degree << std::setw(14) << lambda.str() << std::setw(7) << m.nonzero_terms()
        << std::setw(12) << fixed(m.cv_report.best_rmse, 4) << std::setw(10) << fixed(m.cv_report.best_rmspe, 2)
        << "%" << std::setw(12) << fixed(m.train_rmspe, 2) << "%\n";
  }
  return out.str();
}

inline int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  return command_detail::guarded(err, [&] {
    const MeasurementTable table = parse_measurements_csv(read_text_file(args.data));
    command_detail::print_warnings(err, table.warnings, "");
    TrainOptions opts;
    opts.degrees = args.degrees;
    opts.folds = args.folds;
    opts.seed = resolve_seed(args.seed);
    opts.fixed_lambda = args.lambda;
    opts.threads = args.threads;
    ModelSet set = train_model_set(table.samples, opts);
    set.platform_tag = args.platform_tag;
    set.created_at = args.created_at;
    save_model_set(set, args.out);
    out << "trained on " << table.samples.size() << " rows, seed " << opts.seed;
    if (args.lambda) {
      out << ", fixed lambda " << format_double(*args.lambda) << "\n";
    } else {
      out << ", " << opts.folds << "-fold cross-validation, degree rule " << to_string(opts.rule) << "\n";
    }
    out << training_summary(set);
    out << "wrote " << args.out << "\n";
    return kExitOk;
  });
}

// predict -------------------------------------------------------------------------

enum class ReportFormat { Text, Json, Csv };

inline ReportFormat parse_report_format(std::string_view text) {
  if (text == "text") return ReportFormat::Text;
  if (text == "json") return ReportFormat::Json;
  if (text == "csv") return ReportFormat::Csv;
  throw DataError("unknown format '" + std::string(text) + "' (expected text, json or csv)");
}

struct PredictArgs {
  std::string model;
  std::string network;
  ReportFormat format = ReportFormat::Text;
};

inline int cmd_predict(const PredictArgs& args, std::ostream& out, std::ostream& err) {
  return command_detail::guarded(err, [&] {
    const ModelSet models = load_model_set(args.model);
    const NetworkSpec net = parse_network(read_text_file(args.network));
    const PredictionReport report = predict_network(models, net);
    switch (args.format) {
      case ReportFormat::Text:
        out << report_to_text(report);
        break;
      case ReportFormat::Json:
        out << report_to_json(report).dump(2) << "\n";
        break;
      case ReportFormat::Csv:
        out << report_to_csv(report);
        break;
    }
    if (report.any_clamped) {
      err << "warning: some layer predictions were clamped to the floor values\n";
      return kExitClamped;
    }
    return kExitOk;
  });
}

// evaluate ------------------------------------------------------------------------

inline constexpr std::string_view kNetworkTotalsCsvHeader = "network,runtime_ms,power_w,energy_j";

inline std::map<std::string, Totals> parse_network_totals_csv(std::string_view text) {
  using namespace csv_detail;
  const auto rows = lines(text);
  if (rows.empty() || trim(rows.front()) != kNetworkTotalsCsvHeader) {
    throw DataError("network totals CSV header must be: " + std::string(kNetworkTotalsCsvHeader));
  }
  std::map<std::string, Totals> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (trim(rows[r]).empty()) continue;
    try {
      const auto f = split(rows[r]);
      if (f.size() != 4) throw DataError("expected 4 fields, found " + std::to_string(f.size()));
      const std::string name(trim(f[0]));
      if (name.empty()) throw DataError("network name is blank");
      Totals t{parse_positive(f[1], "runtime_ms"), parse_positive(f[2], "power_w"), parse_positive(f[3], "energy_j")};
      if (!out.emplace(name, t).second) throw DataError("network '" + name + "' listed twice");
    } catch (const Error& e) {
      throw DataError("row " + std::to_string(r) + " (line " + std::to_string(r + 1) + "): " + e.what());
    }
  }
  return out;
}

struct EvaluateArgs {
  std::optional<std::string> model;
  std::vector<std::string> data;     // per-layer measurement CSVs, one network each
  std::vector<std::string> reports;  // prediction report CSVs from predict
  std::optional<std::string> per_network;
};

inline std::string evaluation_table(std::span<const NetworkEvaluation> evals) {
  using command_detail::fixed;
  using command_detail::percent;
  std::ostringstream out;
  out << std::left << std::setw(16) << "network" << std::setw(10) << "quantity" << std::right << std::setw(14)
      << "predicted" << std::setw(14) << "layer_sum" << std::setw(10) << "error" << std::setw(14) << "measured"
      << std::setw(10) << "error" << "\n";
  auto cell = [](const std::optional<Totals>& t, double Totals::*f, int digits) {
    return t ? fixed((*t).*f, digits) : std::string("-");
  };
  auto err_cell = [](const std::optional<Totals>& t, double Totals::*f) {
    return t ? percent((*t).*f) : std::string("-");
  };
  const struct {
    const char* name;
    double Totals::*field;
    int digits;
  } quantities[] = {{"runtime", &Totals::runtime_ms, 3}, {"power", &Totals::power_w, 2}, {"energy", &Totals::energy_j, 4}};
  for (const auto& e : evals) {
    for (const auto& q : quantities) {
      out << std::left << std::setw(16) << e.network << std::setw(10) << q.name << std::right << std::setw(14)
          << fixed(e.predicted.*q.field, q.digits) << std::setw(14) << cell(e.layer_sums, q.field, q.digits)
          << std::setw(10) << err_cell(e.layer_sum_errors, q.field) << std::setw(14)
          << cell(e.measured, q.field, q.digits) << std::setw(10) << err_cell(e.measured_errors, q.field) << "\n";
    }
  }
  auto suite = [&](const char* label, std::optional<Totals> NetworkEvaluation::*member) {
    std::vector<Totals> errors;
    for (const auto& e : evals) {
      if (e.*member) errors.push_back(*(e.*member));
    }
    if (errors.empty()) return;
    const Totals r = suite_rmspe(errors);
    out << "RMSPE vs " << label << " over " << errors.size() << " network(s): runtime " << fixed(r.runtime_ms, 2)
        << "%, power " << fixed(r.power_w, 2) << "%, energy " << fixed(r.energy_j, 2) << "%\n";
  };
  suite("layer sums", &NetworkEvaluation::layer_sum_errors);
  suite("measured totals", &NetworkEvaluation::measured_errors);
  return out.str();
}

inline int cmd_evaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err) {
  return command_detail::guarded(err, [&] {
    if (args.data.empty() && args.reports.empty()) {
      throw DataError("nothing to evaluate: give --data measurement files or --report prediction files");
    }
    std::map<std::string, Totals> measured;
    if (args.per_network) measured = parse_network_totals_csv(read_text_file(*args.per_network));
    auto measured_for = [&](const std::string& name) -> std::optional<Totals> {
      auto it = measured.find(name);
      return it == measured.end() ? std::nullopt : std::optional<Totals>(it->second);
    };

    std::vector<NetworkEvaluation> evals;
    if (!args.data.empty()) {
      if (!args.model) throw DataError("--data needs --model to predict the measured layers");
      const ModelSet models = load_model_set(*args.model);
      for (const auto& path : args.data) {
        try {
          const MeasurementTable table = parse_measurements_csv(read_text_file(path));
          command_detail::print_warnings(err, table.warnings, path + ": ");
          if (table.samples.empty()) throw DataError("no measured layers");
          NetworkSpec net;
          net.name = std::filesystem::path(path).stem().string();
          std::vector<LayerMeasurement> layers;
          for (const auto& s : table.samples) {
            net.layers.push_back(s.layer);
            layers.push_back({s.runtime_ms, s.power_w});
          }
          const PredictionReport report = predict_network(models, net);
          evals.push_back(evaluate_network(report, actual_aggregates(layers), measured_for(net.name)));
        } catch (const Error& e) {
          throw DataError(path + ": " + e.what());
        }
      }
    }
    for (const auto& path : args.reports) {
      try {
        for (const auto& report : parse_report_csv(read_text_file(path))) {
          const auto m = measured_for(report.network_name);
          if (!m) throw DataError("no measured totals for network '" + report.network_name + "' (use --per-network)");
          evals.push_back(evaluate_network(report, std::nullopt, m));
        }
      } catch (const Error& e) {
        throw DataError(path + ": " + e.what());
      }
    }
    out << evaluation_table(evals);
    return kExitOk;
  });
}

// epr -----------------------------------------------------------------------------

struct EprArgs {
  std::optional<std::string> candidates;  // CSV file
  std::optional<std::string> inline_list;
  std::string alphas = "1,2,3,4";
};

inline int cmd_epr(const EprArgs& args, std::ostream& out, std::ostream& err) {
  return command_detail::guarded(err, [&] {
    if (args.candidates.has_value() == args.inline_list.has_value()) {
      throw DataError("give exactly one of --candidates and --inline");
    }
    const std::vector<CandidateArch> candidates = args.candidates
                                                      ? parse_candidates_csv(read_text_file(*args.candidates))
                                                      : parse_inline_candidates(*args.inline_list);
    const std::vector<int> alphas = parse_alpha_list(args.alphas);
    out << epr_table_to_text(epr_table(candidates, alphas));
    return kExitOk;
  });
}

// synth ---------------------------------------------------------------------------

struct SynthArgs {
  std::optional<std::string> config;
  std::string out;
  std::string truth;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> network_out;  // measurement CSV of one synthetic network
  std::size_t network_layers = 10;
};

// Layers of a synthetic network labeled with the noiseless hidden-truth values.
inline std::vector<MeasurementSample> label_network(const NetworkSpec& net, const ModelSet& truth) {
  std::vector<MeasurementSample> out;
  for (const auto& layer : net.layers) {
    const LayerKind kind = kind_of(layer);
    out.push_back({layer, evaluate_raw(truth.at(kind, Target::Runtime), layer),
                   evaluate_raw(truth.at(kind, Target::Power), layer)});
  }
  return out;
}

inline int cmd_synth(const SynthArgs& args, std::ostream& out, std::ostream& err) {
  return command_detail::guarded(err, [&] {
    SynthConfig config;
    bool config_has_seed = false;
    if (args.config) {
      nlohmann::json doc;
      try {
        doc = nlohmann::json::parse(read_text_file(*args.config));
      } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(*args.config + " is not valid JSON: " + e.what());
      }
      config = synth_config_from_json(doc);
      config_has_seed = doc.is_object() && doc.contains("seed");
    }
    if (args.seed || !config_has_seed) config.seed = resolve_seed(args.seed);
    const SynthDataset ds = synthesize(config);
    write_text_file(args.out, write_measurements_csv(ds.samples));
    save_model_set(ds.truth, args.truth);
    out << "seed " << config.seed << ": wrote " << ds.samples.size() << " rows (" << config.conv_count << " conv, "
        << config.fc_count << " fc, " << config.pool_count << " pool) to " << args.out << "\n";
    for (const auto& [key, m] : ds.truth.models) {
      out << "truth " << to_string(m.layer_kind) << " " << to_string(m.target) << ": degree " << m.degree << ", "
          << m.nonzero_terms() << " terms\n";
    }
    out << "wrote hidden models to " << args.truth << "\n";
    if (args.network_out) {
      const NetworkSpec net = synth_network(config, args.network_layers, 0,
                                            std::filesystem::path(*args.network_out).stem().string());
      write_text_file(*args.network_out, write_measurements_csv(label_network(net, ds.truth)));
      out << "wrote " << net.layers.size() << "-layer network to " << *args.network_out << "\n";
    }
    return kExitOk;
  });
}

}  // namespace perfmodel
