#pragma once

// Measurement CSV: one schema for every layer kind, unused columns blank.

#include <charconv>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "perfmodel/arch.hpp"
#include "perfmodel/error.hpp"
#include "perfmodel/json_util.hpp"
#include "perfmodel/layer_model.hpp"

namespace perfmodel {

inline constexpr std::string_view kMeasurementCsvHeader =
    "layer_type,batch,in_channels,in_h,in_w,out_channels,kernel,stride,padding,in_size,out_size,channels,"
    "runtime_ms,power_w";

namespace csv_detail {

enum Column {
  kLayerType, kBatch, kInChannels, kInH, kInW, kOutChannels, kKernel, kStride, kPadding,
  kInSize, kOutSize, kChannels, kRuntime, kPower, kColumnCount
};

inline constexpr const char* kColumnNames[] = {
    "layer_type", "batch",    "in_channels", "in_h",     "in_w",       "out_channels", "kernel",
    "stride",     "padding",  "in_size",     "out_size", "channels",   "runtime_ms",   "power_w"};

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Splits text into lines, dropping a trailing empty line and any '\r'.
inline std::vector<std::string_view> lines(std::string_view text) {
  std::vector<std::string_view> out = split(text, '\n');
  for (auto& l : out) {
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
  }
  while (!out.empty() && out.back().empty()) out.pop_back();
  return out;
}

inline Count parse_count(std::string_view field, const char* name) {
  field = trim(field);
  if (field.empty()) throw DataError(std::string("column '") + name + "' is blank");
  Count v = 0;
  auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || end != field.data() + field.size()) {
    throw DataError(std::string("column '") + name + "' is not an integer: '" + std::string(field) + "'");
  }
  return v;
}

inline double parse_positive(std::string_view field, const char* name) {
  field = trim(field);
  double v = 0.0;
  if (!parse_double(field, v) || !std::isfinite(v)) {
    throw DataError(std::string("column '") + name + "' is not a decimal number: '" + std::string(field) + "'");
  }
  if (!(v > 0.0)) throw DataError(std::string("column '") + name + "' must be positive");
  return v;
}

}  // namespace csv_detail

struct MeasurementTable {
  std::vector<MeasurementSample> samples;
  std::vector<std::string> warnings;
};

inline std::string format_measurement_row(const MeasurementSample& s) {
  using namespace csv_detail;
  std::vector<std::string> f(kColumnCount);
  std::visit(
      [&](const auto& l) {
        using T = std::decay_t<decltype(l)>;
        f[kBatch] = std::to_string(l.batch);
        if constexpr (std::is_same_v<T, ConvLayer>) {
          f[kLayerType] = "conv";
          f[kInChannels] = std::to_string(l.in_channels);
          f[kInH] = std::to_string(l.in_h);
          f[kInW] = std::to_string(l.in_w);
          f[kOutChannels] = std::to_string(l.out_channels);
          f[kKernel] = std::to_string(l.kernel);
          f[kStride] = std::to_string(l.stride);
          f[kPadding] = std::to_string(l.padding);
        } else if constexpr (std::is_same_v<T, FullyConnectedLayer>) {
          f[kLayerType] = "fc";
          f[kInSize] = std::to_string(l.in_size);
          f[kOutSize] = std::to_string(l.out_size);
        } else {
          f[kLayerType] = "pool";
          f[kChannels] = std::to_string(l.channels);
          f[kInH] = std::to_string(l.in_h);
          f[kInW] = std::to_string(l.in_w);
          f[kKernel] = std::to_string(l.kernel);
          f[kStride] = std::to_string(l.stride);
          f[kPadding] = std::to_string(l.padding);
        }
      },
      s.layer);
  f[kRuntime] = format_double(s.runtime_ms);
  f[kPower] = format_double(s.power_w);
  std::string line;
  for (int i = 0; i < kColumnCount; ++i) {
    if (i) line += ',';
    line += f[i];
  }
  return line;
}

inline std::string write_measurements_csv(std::span<const MeasurementSample> samples) {
  std::string out(kMeasurementCsvHeader);
  out += '\n';
  for (const auto& s : samples) {
    out += format_measurement_row(s);
    out += '\n';
  }
  return out;
}

// Errors cite the 1-based data row (the header is not counted) and the file
// line. Power above power_cap_w is accepted with a warning.
inline MeasurementTable parse_measurements_csv(std::string_view text, double power_cap_w = kDefaultPowerCapW) {
  using namespace csv_detail;
  const auto rows = lines(text);
  if (rows.empty()) throw DataError("measurement CSV is empty (header row is mandatory)");
  {
    auto header = split(rows.front());
    bool ok = header.size() == kColumnCount;
    for (std::size_t i = 0; ok && i < header.size(); ++i) ok = trim(header[i]) == kColumnNames[i];
    if (!ok) throw DataError("measurement CSV header must be: " + std::string(kMeasurementCsvHeader));
  }
  MeasurementTable table;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const std::string where = "row " + std::to_string(r) + " (line " + std::to_string(r + 1) + ")";
    if (trim(rows[r]).empty()) continue;
    try {
      const auto f = split(rows[r]);
      if (f.size() != kColumnCount) {
        throw DataError("expected " + std::to_string(kColumnCount) + " fields, found " + std::to_string(f.size()));
      }
      auto count = [&](Column c) { return parse_count(f[c], kColumnNames[c]); };
      auto require_blank = [&](std::initializer_list<Column> cols) {
        for (Column c : cols) {
          if (!trim(f[c]).empty()) {
            throw DataError(std::string("column '") + kColumnNames[c] + "' must be blank for this layer type");
          }
        }
      };
      MeasurementSample s;
      switch (parse_layer_kind(trim(f[kLayerType]))) {
        case LayerKind::Conv:
          require_blank({kInSize, kOutSize, kChannels});
          s.layer = ConvLayer{count(kBatch),        count(kInChannels), count(kInH),   count(kInW),
                              count(kOutChannels), count(kKernel),     count(kStride), count(kPadding)};
          break;
        case LayerKind::FullyConnected:
          require_blank({kInChannels, kInH, kInW, kOutChannels, kKernel, kStride, kPadding, kChannels});
          s.layer = FullyConnectedLayer{count(kBatch), count(kInSize), count(kOutSize)};
          break;
        case LayerKind::Pool:
          require_blank({kInChannels, kOutChannels, kInSize, kOutSize});
          s.layer = PoolLayer{count(kBatch),  count(kChannels), count(kInH),
                              count(kInW),    count(kKernel),   count(kStride),
                              trim(f[kPadding]).empty() ? 0 : count(kPadding)};
          break;
      }
      validate(s.layer);
      s.runtime_ms = parse_positive(f[kRuntime], kColumnNames[kRuntime]);
      s.power_w = parse_positive(f[kPower], kColumnNames[kPower]);
      if (s.power_w > power_cap_w) {
        table.warnings.push_back(where + ": power " + format_double(s.power_w) + " W exceeds the platform cap of " +
                                 format_double(power_cap_w) + " W");
      }
      table.samples.push_back(std::move(s));
    } catch (const Error& e) {
      throw DataError(where + ": " + e.what());
    }
  }
  return table;
}

inline std::vector<MeasurementSample> samples_of_kind(std::span<const MeasurementSample> samples, LayerKind kind) {
  std::vector<MeasurementSample> out;
  for (const auto& s : samples) {
    if (kind_of(s.layer) == kind) out.push_back(s);
  }
  return out;
}

}  // namespace perfmodel
