#pragma once

// K-fold cross-validation over (polynomial degree, lambda).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "perfmodel/lasso.hpp"
#include "perfmodel/random.hpp"

namespace perfmodel {

struct CvGridPoint {
  int degree = 0;
  double lambda = 0.0;
  double cv_rmse = 0.0;
  double cv_rmspe = 0.0;  // percent; NaN when some response is zero
};

inline bool same_value(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

inline bool operator==(const CvGridPoint& a, const CvGridPoint& b) {
  return a.degree == b.degree && a.lambda == b.lambda && a.cv_rmse == b.cv_rmse && same_value(a.cv_rmspe, b.cv_rmspe);
}

// The best grid point of one degree compared with the overall best point on
// the same held-out samples: excess_mse is the mean of the per-sample
// differences in squared error and excess_se its standard error.
struct DegreeSummary {
  int degree = 0;
  double lambda = 0.0;
  double cv_rmse = 0.0;
  double excess_mse = 0.0;
  double excess_se = 0.0;

  friend bool operator==(const DegreeSummary&, const DegreeSummary&) = default;
};

// MinimumError takes the grid point with the lowest cv_rmse. OneStandardError
// takes the smallest degree whose excess over the overall best is within one
// standard error, at that degree's best lambda. Larger bases nest the smaller
// ones, so a bigger degree can win by a margin that is pure noise; the second
// rule only moves up a degree when the improvement is resolvable.
enum class SelectionRule { MinimumError, OneStandardError };

inline std::string_view to_string(SelectionRule rule) {
  return rule == SelectionRule::MinimumError ? "min-error" : "one-se";
}

inline SelectionRule parse_selection_rule(std::string_view text) {
  if (text == "min-error") return SelectionRule::MinimumError;
  if (text == "one-se") return SelectionRule::OneStandardError;
  throw SchemaError("unknown selection rule '" + std::string(text) + "'");
}

struct CvReport {
  std::vector<CvGridPoint> grid;
  std::vector<DegreeSummary> degrees;
  SelectionRule rule = SelectionRule::MinimumError;
  int best_degree = 0;
  double best_lambda = 0.0;
  double best_rmse = 0.0;
  double best_rmspe = 0.0;
  std::size_t folds = 0;
  std::uint64_t fold_seed = 0;
  std::string rng = Rng::kAlgorithm;
};

using FitObserver =
    std::function<void(int degree, std::size_t fold, const LassoProblem& problem, const LassoFit& fit)>;

struct CvOptions {
  std::size_t folds = 10;
  std::size_t lambda_count = 50;
  std::uint64_t seed = 0;
  LassoOptions lasso;
  unsigned threads = 1;
  SelectionRule rule = SelectionRule::MinimumError;
  FitObserver observer;  // called once per fit; serialized by the caller
};

// Shuffles 0..n-1 once with the seed and cuts the permutation into `folds`
// contiguous chunks; the first n % folds chunks get one extra sample.
inline std::vector<std::vector<std::size_t>> make_folds(std::size_t n, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw DataError("cross-validation needs at least 2 folds");
  if (n < folds) {
    throw DataError("insufficient data: " + std::to_string(n) + " samples for " + std::to_string(folds) +
                    " folds");
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(perm));
  std::vector<std::vector<std::size_t>> out(folds);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t size = n / folds + (f < n % folds ? 1 : 0);
    out[f].assign(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                  perm.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return out;
}

using DesignBuilder = std::function<DesignMatrix(int degree)>;

namespace detail {

inline Eigen::MatrixXd select_rows(const Eigen::MatrixXd& x, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

// Visits grid points degree ascending, then lambda descending, keeping the
// first strict minimum. This breaks ties toward the smaller degree and then
// the larger lambda.
inline std::vector<std::size_t> search_order(const std::vector<CvGridPoint>& grid) {
  std::vector<std::size_t> order(grid.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (grid[a].degree != grid[b].degree) return grid[a].degree < grid[b].degree;
    return grid[a].lambda > grid[b].lambda;
  });
  return order;
}

// For every degree the full design is built once, the lambda path is taken
// from the full data, and each fold is fit along that path with warm starts.
// A grid point's score pools the squared errors of all held-out predictions.
inline CvReport cross_validate(const DesignBuilder& build, std::span<const double> y,
                               std::span<const int> degrees, const CvOptions& opts) {
  if (degrees.empty()) throw DataError("cross-validation needs at least one candidate degree");
  const std::size_t n = y.size();
  const auto folds = make_folds(n, opts.folds, opts.seed);
  bool any_zero = false;
  for (double v : y) any_zero |= (v == 0.0);

  CvReport report;
  report.rule = opts.rule;
  report.folds = opts.folds;
  report.fold_seed = opts.seed;
  std::mutex observer_mutex;
  // Per-sample squared held-out errors at each grid point, in grid order.
  std::vector<std::vector<double>> squared_errors;

  for (int degree : degrees) {
    const DesignMatrix design = build(degree);
    if (design.rows() != n) throw DataError("design builder returned the wrong number of rows");
    const std::vector<double> lambdas = LassoProblem(design, y).lambda_path(opts.lambda_count);

    // held_out[f][k][i]: prediction for the i-th sample of fold f at lambda k.
    std::vector<std::vector<std::vector<double>>> held_out(folds.size());
    detail::parallel_for(folds.size(), opts.threads, [&](std::size_t f) {
      std::vector<std::size_t> train;
      train.reserve(n - folds[f].size());
      for (std::size_t g = 0; g < folds.size(); ++g) {
        if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
      }
      DesignMatrix train_x{detail::select_rows(design.entries, train), design.col_names};
      std::vector<double> train_y(train.size());
      for (std::size_t i = 0; i < train.size(); ++i) train_y[i] = y[train[i]];
      const Eigen::MatrixXd test_x = detail::select_rows(design.entries, folds[f]);

      const LassoProblem problem(train_x, train_y);
      held_out[f].reserve(lambdas.size());
      const LassoFit* warm = nullptr;
      LassoFit previous;
      for (double lambda : lambdas) {
        LassoFit fit = problem.fit(lambda, opts.lasso, warm);
        held_out[f].push_back(predict_rows(test_x, fit.coefficients));
        if (opts.observer) {
          std::lock_guard lock(observer_mutex);
          opts.observer(degree, f, problem, fit);
        }
        previous = std::move(fit);
        warm = &previous;
      }
    });

    for (std::size_t k = 0; k < lambdas.size(); ++k) {
      std::vector<double> sq(n);
      double ss_rel = 0.0;
      for (std::size_t f = 0; f < folds.size(); ++f) {
        for (std::size_t i = 0; i < folds[f].size(); ++i) {
          const std::size_t sample = folds[f][i];
          const double d = held_out[f][k][i] - y[sample];
          sq[sample] = d * d;
          if (!any_zero) ss_rel += (d / y[sample]) * (d / y[sample]);
        }
      }
      const double mse = std::accumulate(sq.begin(), sq.end(), 0.0) / static_cast<double>(n);
      report.grid.push_back({degree, lambdas[k], std::sqrt(mse),
                             any_zero ? std::numeric_limits<double>::quiet_NaN()
                                      : 100.0 * std::sqrt(ss_rel / static_cast<double>(n))});
      squared_errors.push_back(std::move(sq));
    }
  }

  std::vector<std::size_t> degree_best;  // best grid index per degree, degree ascending
  std::size_t overall = 0;
  bool first = true;
  for (std::size_t idx : search_order(report.grid)) {
    const auto& point = report.grid[idx];
    if (degree_best.empty() || report.grid[degree_best.back()].degree != point.degree) {
      degree_best.push_back(idx);
    } else if (point.cv_rmse < report.grid[degree_best.back()].cv_rmse) {
      degree_best.back() = idx;
    }
    if (first || point.cv_rmse < report.grid[overall].cv_rmse) overall = idx;
    first = false;
  }

  std::size_t chosen = overall;
  bool picked = false;
  for (std::size_t idx : degree_best) {
    DegreeSummary summary{report.grid[idx].degree, report.grid[idx].lambda, report.grid[idx].cv_rmse, 0.0, 0.0};
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = squared_errors[idx][i] - squared_errors[overall][i];
      sum += diff;
      sum_sq += diff * diff;
    }
    const auto count = static_cast<double>(n);
    summary.excess_mse = sum / count;
    const double variance = std::max(0.0, (sum_sq - count * summary.excess_mse * summary.excess_mse) / (count - 1.0));
    summary.excess_se = std::sqrt(variance / count);
    if (opts.rule == SelectionRule::OneStandardError && !picked &&
        summary.excess_mse <= summary.excess_se) {
      chosen = idx;
      picked = true;
    }
    report.degrees.push_back(summary);
  }

  const auto& best = report.grid[chosen];
  report.best_degree = best.degree;
  report.best_lambda = best.lambda;
  report.best_rmse = best.cv_rmse;
  report.best_rmspe = best.cv_rmspe;
  return report;
}

}  // namespace perfmodel
