#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "perfmodel/cross_validation.hpp"
#include "test_support.hpp"

namespace perfmodel {
namespace {

TEST(Folds, EverySampleInExactlyOneFold) {
  testing::Gen gen(1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto folds = static_cast<std::size_t>(gen.integer(2, 20));
    const auto n = static_cast<std::size_t>(gen.integer(static_cast<std::int64_t>(folds), 500));
    const auto parts = make_folds(n, folds, static_cast<std::uint64_t>(trial));
    ASSERT_EQ(parts.size(), folds);
    std::vector<int> hits(n, 0);
    std::size_t smallest = n;
    std::size_t largest = 0;
    for (const auto& part : parts) {
      smallest = std::min(smallest, part.size());
      largest = std::max(largest, part.size());
      for (std::size_t i : part) {
        ASSERT_LT(i, n);
        ++hits[i];
      }
    }
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(hits[i], 1) << "n=" << n << " folds=" << folds;
    EXPECT_LE(largest - smallest, 1u);
  }
}

TEST(Folds, SeedDeterminesAssignment) {
  EXPECT_EQ(make_folds(100, 10, 5), make_folds(100, 10, 5));
  EXPECT_NE(make_folds(100, 10, 5), make_folds(100, 10, 6));
}

TEST(Folds, RejectsTooFewSamples) {
  EXPECT_THROW(make_folds(5, 10, 0), DataError);
  EXPECT_THROW(make_folds(5, 1, 0), DataError);
}

struct Problem {
  std::vector<double> x;
  std::vector<double> y;
};

Problem quadratic_problem(std::size_t n, double noise, std::uint64_t seed) {
  testing::Gen gen(seed);
  Problem p;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = gen.real(0.0, 4.0);
    p.x.push_back(v);
    p.y.push_back(5.0 + 2.0 * v + 3.0 * v * v + noise * gen.gauss());
  }
  return p;
}

// Columns 1, x, ..., x^degree.
DesignBuilder polynomial_builder(const std::vector<double>& x) {
  return [&x](int degree) {
    DesignMatrix d;
    d.entries.resize(static_cast<Eigen::Index>(x.size()), degree + 1);
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (int k = 0; k <= degree; ++k) d.entries(static_cast<Eigen::Index>(i), k) = std::pow(x[i], k);
    }
    return d;
  };
}

TEST(CrossValidation, GridScoresMatchIndependentRecomputation) {
  const Problem p = quadratic_problem(60, 1.0, 3);
  const std::vector<int> degrees{1, 2};
  CvOptions opts;
  opts.folds = 5;
  opts.lambda_count = 8;
  opts.seed = 42;
  const DesignBuilder build = polynomial_builder(p.x);
  const CvReport report = cross_validate(build, p.y, degrees, opts);
  ASSERT_EQ(report.grid.size(), 16u);

  const auto folds = make_folds(p.y.size(), 5, 42);
  for (const CvGridPoint& point : report.grid) {
    const DesignMatrix d = build(point.degree);
    double ss = 0.0;
    double ss_rel = 0.0;
    for (std::size_t f = 0; f < folds.size(); ++f) {
      std::vector<std::size_t> train;
      for (std::size_t i = 0; i < p.y.size(); ++i) {
        if (std::find(folds[f].begin(), folds[f].end(), i) == folds[f].end()) train.push_back(i);
      }
      DesignMatrix tx;
      tx.entries.resize(static_cast<Eigen::Index>(train.size()), d.entries.cols());
      std::vector<double> ty;
      for (std::size_t r = 0; r < train.size(); ++r) {
        tx.entries.row(static_cast<Eigen::Index>(r)) = d.entries.row(static_cast<Eigen::Index>(train[r]));
        ty.push_back(p.y[train[r]]);
      }
      const LassoFit fit = fit_lasso(tx, ty, point.lambda);
      for (std::size_t i : folds[f]) {
        double pred = 0.0;
        for (Eigen::Index c = 0; c < d.entries.cols(); ++c) {
          pred += fit.coefficients[static_cast<std::size_t>(c)] * d.entries(static_cast<Eigen::Index>(i), c);
        }
        ss += (pred - p.y[i]) * (pred - p.y[i]);
        ss_rel += std::pow((pred - p.y[i]) / p.y[i], 2);
      }
    }
    const double n = static_cast<double>(p.y.size());
    EXPECT_NEAR(point.cv_rmse, std::sqrt(ss / n), 1e-6 * std::sqrt(ss / n));
    EXPECT_NEAR(point.cv_rmspe, 100.0 * std::sqrt(ss_rel / n), 1e-6 * 100.0 * std::sqrt(ss_rel / n));
  }
}

TEST(CrossValidation, MinimumErrorPicksGridMinimum) {
  const Problem p = quadratic_problem(80, 2.0, 5);
  const std::vector<int> degrees{1, 2, 3};
  CvOptions opts;
  opts.lambda_count = 12;
  opts.rule = SelectionRule::MinimumError;
  const CvReport report = cross_validate(polynomial_builder(p.x), p.y, degrees, opts);
  double lowest = INFINITY;
  for (const auto& g : report.grid) lowest = std::min(lowest, g.cv_rmse);
  EXPECT_EQ(report.best_rmse, lowest);
  EXPECT_EQ(report.rule, SelectionRule::MinimumError);
  EXPECT_EQ(report.degrees.size(), 3u);
}

TEST(CrossValidation, TiesGoToSmallerDegree) {
  // Both candidate "degrees" build the same design, so every score ties.
  const Problem p = quadratic_problem(40, 1.0, 6);
  const DesignBuilder same = [&](int) { return polynomial_builder(p.x)(2); };
  const std::vector<int> degrees{3, 1};
  CvOptions opts;
  opts.lambda_count = 6;
  opts.rule = SelectionRule::MinimumError;
  const CvReport report = cross_validate(same, p.y, degrees, opts);
  EXPECT_EQ(report.best_degree, 1);
}

TEST(CrossValidation, TiesGoToLargerLambda) {
  std::vector<CvGridPoint> grid{{2, 0.1, 1.0, 0.0}, {1, 0.1, 1.0, 0.0}, {1, 0.5, 1.0, 0.0}, {2, 0.5, 1.0, 0.0}};
  const auto order = search_order(grid);
  EXPECT_EQ(order, (std::vector<std::size_t>{2, 1, 3, 0}));
}

TEST(CrossValidation, OneStandardErrorPrefersSimplerEquivalentDegree) {
  const Problem p = quadratic_problem(200, 1.0, 8);
  const std::vector<int> degrees{1, 2, 3, 4};
  CvOptions opts;
  opts.lambda_count = 15;
  opts.rule = SelectionRule::OneStandardError;
  const CvReport report = cross_validate(polynomial_builder(p.x), p.y, degrees, opts);
  EXPECT_EQ(report.best_degree, 2);
  ASSERT_EQ(report.degrees.size(), 4u);
  // Degree 1 lacks the quadratic term, so it is far outside one standard error.
  EXPECT_GT(report.degrees[0].excess_mse, report.degrees[0].excess_se);
  for (const auto& d : report.degrees) EXPECT_GE(d.excess_mse, 0.0);
}

TEST(CrossValidation, ThreadsDoNotChangeResults) {
  const Problem p = quadratic_problem(90, 1.5, 10);
  const std::vector<int> degrees{1, 2, 3};
  CvOptions opts;
  opts.lambda_count = 10;
  const CvReport serial = cross_validate(polynomial_builder(p.x), p.y, degrees, opts);
  opts.threads = 4;
  const CvReport parallel = cross_validate(polynomial_builder(p.x), p.y, degrees, opts);
  EXPECT_EQ(serial.grid, parallel.grid);
  EXPECT_EQ(serial.best_degree, parallel.best_degree);
  EXPECT_EQ(serial.best_lambda, parallel.best_lambda);
}

TEST(CrossValidation, ObserverSeesEveryFit) {
  const Problem p = quadratic_problem(30, 1.0, 12);
  const std::vector<int> degrees{1, 2};
  CvOptions opts;
  opts.folds = 3;
  opts.lambda_count = 4;
  std::size_t calls = 0;
  opts.observer = [&](int, std::size_t, const LassoProblem&, const LassoFit&) { ++calls; };
  cross_validate(polynomial_builder(p.x), p.y, degrees, opts);
  EXPECT_EQ(calls, 2u * 3u * 4u);
}

TEST(CrossValidation, RelativeErrorUndefinedWithZeroResponse) {
  Problem p = quadratic_problem(30, 1.0, 13);
  p.y[4] = 0.0;
  const std::vector<int> degrees{1};
  CvOptions opts;
  opts.folds = 3;
  opts.lambda_count = 3;
  const CvReport report = cross_validate(polynomial_builder(p.x), p.y, degrees, opts);
  for (const auto& g : report.grid) EXPECT_TRUE(std::isnan(g.cv_rmspe));
}

TEST(CrossValidation, RuleNames) {
  EXPECT_EQ(parse_selection_rule("one-se"), SelectionRule::OneStandardError);
  EXPECT_EQ(parse_selection_rule(to_string(SelectionRule::MinimumError)), SelectionRule::MinimumError);
  EXPECT_THROW(parse_selection_rule("best"), SchemaError);
}

}  // namespace
}  // namespace perfmodel
