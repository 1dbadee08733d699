#pragma once

// Network-level composition of layer predictions, measured-value aggregates,
// and the evaluation of one against the other.
//
// Runtime adds over layers. Average power is the runtime-weighted mean of the
// layer powers, so total energy (J) = total runtime (ms) * average power (W)
// / 1000 = sum of the per-layer energies.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "perfmodel/arch.hpp"
#include "perfmodel/dataset.hpp"
#include "perfmodel/error.hpp"
#include "perfmodel/json_util.hpp"
#include "perfmodel/layer_model.hpp"

namespace perfmodel {

struct LayerBreakdown {
  std::size_t index = 0;  // 0-based position in the network
  LayerKind kind = LayerKind::Conv;
  double runtime_ms = 0.0;
  double power_w = 0.0;
  double energy_j = 0.0;
  bool runtime_clamped = false;
  bool power_clamped = false;

  friend bool operator==(const LayerBreakdown&, const LayerBreakdown&) = default;
};

struct PredictionReport {
  std::string network_name;
  std::vector<LayerBreakdown> per_layer;
  double total_runtime_ms = 0.0;
  double avg_power_w = 0.0;
  double total_energy_j = 0.0;
  bool any_clamped = false;

  friend bool operator==(const PredictionReport&, const PredictionReport&) = default;
};

inline double layer_energy_j(double runtime_ms, double power_w) { return runtime_ms * power_w / 1000.0; }

// Fills the energies, totals and clamp flag from the per-layer runtime and
// power values.
inline PredictionReport assemble_report(std::string network_name, std::vector<LayerBreakdown> layers) {
  if (layers.empty()) throw DataError("network '" + network_name + "' has no layers");
  PredictionReport report;
  report.network_name = std::move(network_name);
  double runtime = 0.0;
  double weighted = 0.0;
  for (auto& l : layers) {
    if (!(l.runtime_ms > 0.0) || !(l.power_w > 0.0)) {
      throw DataError("layer " + std::to_string(l.index + 1) + ": runtime and power must be positive");
    }
    l.energy_j = layer_energy_j(l.runtime_ms, l.power_w);
    runtime += l.runtime_ms;
    weighted += l.power_w * l.runtime_ms;
    report.any_clamped |= l.runtime_clamped || l.power_clamped;
  }
  report.per_layer = std::move(layers);
  report.total_runtime_ms = runtime;
  report.avg_power_w = weighted / runtime;
  report.total_energy_j = weighted / 1000.0;
  return report;
}

inline PredictionReport predict_network(const ModelSet& models, const NetworkSpec& net) {
  if (net.layers.empty()) throw DataError("network '" + net.name + "' has no layers");
  std::vector<LayerBreakdown> layers;
  layers.reserve(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& layer = net.layers[i];
    const LayerKind kind = kind_of(layer);
    const LayerPrediction t = predict_layer(models.at(kind, Target::Runtime), layer);
    const LayerPrediction p = predict_layer(models.at(kind, Target::Power), layer);
    layers.push_back({i, kind, t.value, p.value, 0.0, t.clamped, p.clamped});
  }
  return assemble_report(net.name, std::move(layers));
}

// Layer indices ordered by descending runtime (or energy); equal values keep
// network order.
inline std::vector<std::size_t> ranking_by(const PredictionReport& report, double LayerBreakdown::*field) {
  std::vector<std::size_t> order(report.per_layer.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return report.per_layer[a].*field > report.per_layer[b].*field;
  });
  return order;
}

inline std::vector<std::size_t> runtime_ranking(const PredictionReport& r) {
  return ranking_by(r, &LayerBreakdown::runtime_ms);
}
inline std::vector<std::size_t> energy_ranking(const PredictionReport& r) {
  return ranking_by(r, &LayerBreakdown::energy_j);
}

// Relative gap between total_runtime_ms * avg_power_w / 1000 and the sum of
// the per-layer energies.
inline double energy_identity_gap(const PredictionReport& r) {
  double sum = 0.0;
  for (const auto& l : r.per_layer) sum += l.energy_j;
  const double product = r.total_runtime_ms * r.avg_power_w / 1000.0;
  const double scale = std::max(std::abs(sum), std::abs(product));
  return scale == 0.0 ? 0.0 : std::abs(product - sum) / scale;
}

inline constexpr double kEnergyIdentityTolerance = 1e-9;

// Measured values ---------------------------------------------------------------

struct LayerMeasurement {
  double runtime_ms = 0.0;
  double power_w = 0.0;
};

struct ActualAggregates {
  double sum_runtime_ms = 0.0;
  double weighted_power_w = 0.0;
  double sum_energy_j = 0.0;

  friend bool operator==(const ActualAggregates&, const ActualAggregates&) = default;
};

inline ActualAggregates actual_aggregates(std::span<const LayerMeasurement> measured) {
  if (measured.empty()) throw DataError("no measured layers");
  double runtime = 0.0;
  double weighted = 0.0;
  for (std::size_t i = 0; i < measured.size(); ++i) {
    const auto& m = measured[i];
    if (!(m.runtime_ms > 0.0) || !(m.power_w > 0.0) || !std::isfinite(m.runtime_ms) || !std::isfinite(m.power_w)) {
      throw DataError("measured layer " + std::to_string(i + 1) + ": runtime and power must be positive");
    }
    runtime += m.runtime_ms;
    weighted += m.power_w * m.runtime_ms;
  }
  return {runtime, weighted / runtime, weighted / 1000.0};
}

// Evaluation --------------------------------------------------------------------

struct Totals {
  double runtime_ms = 0.0;
  double power_w = 0.0;
  double energy_j = 0.0;

  friend bool operator==(const Totals&, const Totals&) = default;
};

inline Totals totals_of(const PredictionReport& r) { return {r.total_runtime_ms, r.avg_power_w, r.total_energy_j}; }
inline Totals totals_of(const ActualAggregates& a) { return {a.sum_runtime_ms, a.weighted_power_w, a.sum_energy_j}; }

// Signed: positive means the prediction overestimates.
inline double relative_error(double predicted, double actual) {
  if (actual == 0.0 || !std::isfinite(actual)) throw DataError("actual value must be finite and non-zero");
  return (predicted - actual) / actual;
}

inline Totals relative_errors(const Totals& predicted, const Totals& actual) {
  return {relative_error(predicted.runtime_ms, actual.runtime_ms), relative_error(predicted.power_w, actual.power_w),
          relative_error(predicted.energy_j, actual.energy_j)};
}

// One network's predicted totals against the aggregates of its measured
// layers and, when available, against separately measured whole-network
// totals.
struct NetworkEvaluation {
  std::string network;
  Totals predicted;
  std::optional<Totals> layer_sums;
  std::optional<Totals> layer_sum_errors;
  std::optional<Totals> measured;
  std::optional<Totals> measured_errors;
};

inline NetworkEvaluation evaluate_network(const PredictionReport& report, std::optional<ActualAggregates> aggregates,
                                          std::optional<Totals> measured) {
  if (!aggregates && !measured) {
    throw DataError("network '" + report.network_name + "' has no measured values to compare against");
  }
  NetworkEvaluation e;
  e.network = report.network_name;
  e.predicted = totals_of(report);
  if (aggregates) {
    e.layer_sums = totals_of(*aggregates);
    e.layer_sum_errors = relative_errors(e.predicted, *e.layer_sums);
  }
  if (measured) {
    e.measured = *measured;
    e.measured_errors = relative_errors(e.predicted, *measured);
  }
  return e;
}

// Root mean square of the relative errors, in percent, per quantity.
inline Totals suite_rmspe(std::span<const Totals> errors) {
  if (errors.empty()) throw DataError("no evaluations to summarize");
  Totals sum;
  for (const auto& e : errors) {
    sum.runtime_ms += e.runtime_ms * e.runtime_ms;
    sum.power_w += e.power_w * e.power_w;
    sum.energy_j += e.energy_j * e.energy_j;
  }
  const auto n = static_cast<double>(errors.size());
  return {100.0 * std::sqrt(sum.runtime_ms / n), 100.0 * std::sqrt(sum.power_w / n),
          100.0 * std::sqrt(sum.energy_j / n)};
}

// Report emission -----------------------------------------------------------------

namespace report_detail {

inline std::string fixed(double v, int digits) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

inline std::string flags(const LayerBreakdown& l) {
  std::string s;
  if (l.runtime_clamped) s += "T";
  if (l.power_clamped) s += "P";
  return s.empty() ? "-" : s;
}

inline std::string index_list(const std::vector<std::size_t>& order) {
  std::string s;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(order[i] + 1);
  }
  return s;
}

}  // namespace report_detail

inline std::string energy_check_line(const PredictionReport& r) {
  using report_detail::fixed;
  const double gap = energy_identity_gap(r);
  std::ostringstream out;
  out << "check: " << fixed(r.total_runtime_ms, 4) << " ms x " << fixed(r.avg_power_w, 4) << " W / 1000 = "
      << fixed(r.total_runtime_ms * r.avg_power_w / 1000.0, 6) << " J, sum of layer energies "
      << fixed(r.total_energy_j, 6) << " J, relative gap " << std::scientific << std::setprecision(2) << gap << " "
      << (gap <= kEnergyIdentityTolerance ? "ok" : "FAILED");
  return out.str();
}

// Layers are numbered from 1 in every emitted format.
inline std::string report_to_text(const PredictionReport& r) {
  using report_detail::fixed;
  std::ostringstream out;
  out << "network: " << r.network_name << "\n";
  if (r.any_clamped) {
    out << "warning: totals include clamped layer predictions (flag T = runtime, P = power)\n";
  }
  out << std::left << std::setw(6) << "layer" << std::setw(6) << "kind" << std::right << std::setw(14)
      << "runtime_ms" << std::setw(12) << "power_w" << std::setw(12) << "energy_j" << std::setw(9) << "clamped"
      << "\n";
  for (const auto& l : r.per_layer) {
    out << std::left << std::setw(6) << l.index + 1 << std::setw(6) << to_string(l.kind) << std::right
        << std::setw(14) << fixed(l.runtime_ms, 4) << std::setw(12) << fixed(l.power_w, 2) << std::setw(12)
        << fixed(l.energy_j, 6) << std::setw(9) << report_detail::flags(l) << "\n";
  }
  out << "total runtime: " << fixed(r.total_runtime_ms, 4) << " ms\n";
  out << "average power: " << fixed(r.avg_power_w, 2) << " W\n";
  out << "total energy: " << fixed(r.total_energy_j, 6) << " J\n";
  out << "layers by runtime: " << report_detail::index_list(runtime_ranking(r)) << "\n";
  out << "layers by energy: " << report_detail::index_list(energy_ranking(r)) << "\n";
  out << energy_check_line(r) << "\n";
  return out.str();
}

inline nlohmann::json report_to_json(const PredictionReport& r) {
  using nlohmann::json;
  json layers = json::array();
  for (const auto& l : r.per_layer) {
    layers.push_back({{"index", l.index + 1},
                      {"kind", to_string(l.kind)},
                      {"runtime_ms", l.runtime_ms},
                      {"power_w", l.power_w},
                      {"energy_j", l.energy_j},
                      {"runtime_clamped", l.runtime_clamped},
                      {"power_clamped", l.power_clamped}});
  }
  auto one_based = [](std::vector<std::size_t> v) {
    for (auto& i : v) ++i;
    return v;
  };
  return {{"network", r.network_name},
          {"any_clamped", r.any_clamped},
          {"layers", layers},
          {"total_runtime_ms", r.total_runtime_ms},
          {"avg_power_w", r.avg_power_w},
          {"total_energy_j", r.total_energy_j},
          {"runtime_ranking", one_based(runtime_ranking(r))},
          {"energy_ranking", one_based(energy_ranking(r))},
          {"energy_identity_gap", energy_identity_gap(r)}};
}

inline constexpr std::string_view kReportCsvHeader =
    "network,layer,kind,runtime_ms,power_w,energy_j,runtime_clamped,power_clamped";

// One row per layer and a closing "total" row per network. Values use the
// shortest representation that reads back to the same double.
inline std::string report_csv_rows(const PredictionReport& r) {
  std::string out;
  for (const auto& l : r.per_layer) {
    out += r.network_name + "," + std::to_string(l.index + 1) + "," + std::string(to_string(l.kind)) + "," +
           format_double(l.runtime_ms) + "," + format_double(l.power_w) + "," + format_double(l.energy_j) + "," +
           (l.runtime_clamped ? "1" : "0") + "," + (l.power_clamped ? "1" : "0") + "\n";
  }
  out += r.network_name + ",total,," + format_double(r.total_runtime_ms) + "," + format_double(r.avg_power_w) + "," +
         format_double(r.total_energy_j) + "," + (r.any_clamped ? "1" : "0") + "," + (r.any_clamped ? "1" : "0") +
         "\n";
  return out;
}

inline std::string report_to_csv(const PredictionReport& r) {
  return std::string(kReportCsvHeader) + "\n" + report_csv_rows(r);
}

// Reads reports written by report_to_csv (several may be concatenated under
// one header). Totals are taken as written after checking them against the
// layer rows.
inline std::vector<PredictionReport> parse_report_csv(std::string_view text) {
  using namespace csv_detail;
  const auto rows = lines(text);
  if (rows.empty() || trim(rows.front()) != kReportCsvHeader) {
    throw DataError("report CSV header must be: " + std::string(kReportCsvHeader));
  }
  std::vector<PredictionReport> reports;
  std::vector<LayerBreakdown> pending;
  std::string pending_name;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const std::string where = "row " + std::to_string(r) + " (line " + std::to_string(r + 1) + ")";
    if (trim(rows[r]).empty()) continue;
    try {
      const auto f = split(rows[r]);
      if (f.size() != 8) throw DataError("expected 8 fields, found " + std::to_string(f.size()));
      const std::string name(trim(f[0]));
      if (name.empty()) throw DataError("network name is blank");
      if (!pending.empty() && name != pending_name) {
        throw DataError("network '" + pending_name + "' has no total row before '" + name + "'");
      }
      pending_name = name;
      auto decimal = [&](std::size_t c, const char* what) {
        double v = 0.0;
        if (!parse_double(trim(f[c]), v) || !std::isfinite(v)) {
          throw DataError(std::string("column '") + what + "' is not a decimal number");
        }
        return v;
      };
      auto flag = [&](std::size_t c) {
        const auto t = trim(f[c]);
        if (t != "0" && t != "1") throw DataError("clamp flags must be 0 or 1");
        return t == "1";
      };
      if (trim(f[1]) == "total") {
        if (pending.empty()) throw DataError("total row without layer rows");
        PredictionReport report = assemble_report(name, std::move(pending));
        pending.clear();
        const Totals written{decimal(3, "runtime_ms"), decimal(4, "power_w"), decimal(5, "energy_j")};
        const Totals computed = totals_of(report);
        auto close = [](double a, double b) { return std::abs(a - b) <= 1e-9 * std::max(std::abs(a), std::abs(b)); };
        if (!close(written.runtime_ms, computed.runtime_ms) || !close(written.power_w, computed.power_w) ||
            !close(written.energy_j, computed.energy_j)) {
          throw DataError("total row does not match the layer rows");
        }
        report.total_runtime_ms = written.runtime_ms;
        report.avg_power_w = written.power_w;
        report.total_energy_j = written.energy_j;
        reports.push_back(std::move(report));
        continue;
      }
      LayerBreakdown l;
      const Count index = parse_count(f[1], "layer");
      if (index != static_cast<Count>(pending.size()) + 1) throw DataError("layer numbers must run 1, 2, 3, ...");
      l.index = static_cast<std::size_t>(index - 1);
      l.kind = parse_layer_kind(trim(f[2]));
      l.runtime_ms = decimal(3, "runtime_ms");
      l.power_w = decimal(4, "power_w");
      const double energy = decimal(5, "energy_j");
      l.runtime_clamped = flag(6);
      l.power_clamped = flag(7);
      if (energy != layer_energy_j(l.runtime_ms, l.power_w)) {
        throw DataError("energy_j does not equal runtime_ms * power_w / 1000");
      }
      pending.push_back(l);
    } catch (const Error& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  if (!pending.empty()) throw DataError("network '" + pending_name + "' has no total row");
  if (reports.empty()) throw DataError("report CSV has no networks");
  return reports;
}

}  // namespace perfmodel
