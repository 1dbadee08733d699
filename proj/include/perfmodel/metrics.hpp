#pragma once

#include <cmath>
#include <span>
#include <string>

#include "perfmodel/error.hpp"

namespace perfmodel {

namespace detail {

inline void check_lengths(std::span<const double> pred, std::span<const double> actual) {
  if (pred.size() != actual.size()) {
    throw DataError("prediction/actual length mismatch (" + std::to_string(pred.size()) + " vs " +
                    std::to_string(actual.size()) + ")");
  }
  if (pred.empty()) throw DataError("metrics need at least one value");
}

}  // namespace detail

inline double rmse(std::span<const double> pred, std::span<const double> actual) {
  detail::check_lengths(pred, actual);
  double ss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - actual[i];
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(pred.size()));
}

// Root-mean-square of relative errors, in percent.
inline double rmspe(std::span<const double> pred, std::span<const double> actual) {
  detail::check_lengths(pred, actual);
  double ss = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (actual[i] == 0.0) throw DataError("rmspe undefined: actual value " + std::to_string(i) + " is zero");
    const double d = (pred[i] - actual[i]) / actual[i];
    ss += d * d;
  }
  return 100.0 * std::sqrt(ss / static_cast<double>(pred.size()));
}

}  // namespace perfmodel
