#include <cmath>

#include <gtest/gtest.h>

#include "perfmodel/lasso.hpp"
#include "test_support.hpp"

namespace perfmodel {
namespace {

// Design with the leading all-ones column the solver expects.
DesignMatrix with_intercept(const Eigen::MatrixXd& x) {
  DesignMatrix d;
  d.entries.resize(x.rows(), x.cols() + 1);
  d.entries.col(0).setOnes();
  d.entries.rightCols(x.cols()) = x;
  return d;
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::MatrixXd random_matrix(testing::Gen& gen, Eigen::Index n, Eigen::Index p) {
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = gen.real(-2.0, 2.0) * (1.0 + static_cast<double>(j));
  }
  return x;
}

double max_relative_gap(const std::vector<double>& got, const Eigen::VectorXd& want) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < want.size(); ++j) {
    const double scale = std::max(1.0, std::abs(want[j]));
    worst = std::max(worst, std::abs(got[static_cast<std::size_t>(j)] - want[j]) / scale);
  }
  return worst;
}

TEST(Lasso, SoftThreshold) {
  EXPECT_EQ(soft_threshold(3.0, 1.0), 2.0);
  EXPECT_EQ(soft_threshold(-3.0, 1.0), -2.0);
  EXPECT_EQ(soft_threshold(0.5, 1.0), 0.0);
  EXPECT_EQ(soft_threshold(-1.0, 1.0), 0.0);
}

TEST(Lasso, StandardizeUsesPopulationStd) {
  DesignMatrix d;
  d.entries.resize(4, 3);
  d.entries << 1, 1, 7, 1, 2, 7, 1, 3, 7, 1, 4, 7;
  const auto [xs, s] = standardize(d);
  EXPECT_TRUE(s.constant[0]);
  EXPECT_TRUE(s.constant[2]);
  EXPECT_DOUBLE_EQ(s.means[1], 2.5);
  EXPECT_DOUBLE_EQ(s.stds[1], std::sqrt(1.25));
  EXPECT_NEAR(xs.entries.col(1).sum(), 0.0, 1e-15);
  EXPECT_NEAR(xs.entries.col(1).squaredNorm() / 4.0, 1.0, 1e-15);
  EXPECT_EQ(xs.entries(0, 2), 7.0);
}

TEST(Lasso, ZeroPenaltyMatchesLeastSquares) {
  testing::Gen gen(21);
  for (int instance = 0; instance < 20; ++instance) {
    const Eigen::Index p = gen.integer(1, 8);
    const Eigen::MatrixXd x = random_matrix(gen, 50, p);
    Eigen::VectorXd y(50);
    for (Eigen::Index i = 0; i < 50; ++i) y[i] = 3.0 + x.row(i).sum() * 0.7 + gen.gauss();
    const Eigen::VectorXd want = testing::ols_with_intercept(x, y);
    const LassoFit fit = fit_lasso(with_intercept(x), to_vector(y), 0.0);
    ASSERT_TRUE(fit.converged) << "instance " << instance;
    EXPECT_LT(max_relative_gap(fit.coefficients, want), 1e-6) << "instance " << instance << " p=" << p;
  }
}

TEST(Lasso, RealizableResponseIsRecoveredExactly) {
  testing::Gen gen(4);
  const Eigen::MatrixXd x = random_matrix(gen, 80, 5);
  Eigen::VectorXd beta(6);
  beta << 2.0, -1.5, 0.0, 4.0, 0.25, -3.0;
  const DesignMatrix d = with_intercept(x);
  const Eigen::VectorXd y = d.entries * beta;
  const LassoFit fit = fit_lasso(d, to_vector(y), 0.0);
  EXPECT_LT(max_relative_gap(fit.coefficients, beta), 1e-6);
}

TEST(Lasso, UnivariateClosedForm) {
  testing::Gen gen(9);
  const Eigen::MatrixXd x = random_matrix(gen, 40, 1);
  Eigen::VectorXd y(40);
  for (Eigen::Index i = 0; i < 40; ++i) y[i] = 1.0 + 2.0 * x(i, 0) + 0.5 * gen.gauss();

  const double n = 40.0;
  const double mx = x.col(0).mean();
  const double sx = std::sqrt((x.col(0).array() - mx).square().sum() / n);
  const double my = y.mean();
  const double z = ((x.col(0).array() - mx) / sx * (y.array() - my)).sum() / n;

  for (double lambda : {0.0, 0.1 * std::abs(z), 0.5 * std::abs(z), 0.99 * std::abs(z), 1.5 * std::abs(z)}) {
    const double slope = soft_threshold(z, lambda) / sx;
    const double intercept = my - slope * mx;
    const LassoFit fit = fit_lasso(with_intercept(x), to_vector(y), lambda);
    EXPECT_NEAR(fit.coefficients[1], slope, 1e-8) << "lambda " << lambda;
    EXPECT_NEAR(fit.coefficients[0], intercept, 1e-8) << "lambda " << lambda;
  }
}

TEST(Lasso, LambdaMaxZeroesEverything) {
  testing::Gen gen(12);
  const Eigen::MatrixXd x = random_matrix(gen, 60, 6);
  Eigen::VectorXd y(60);
  for (Eigen::Index i = 0; i < 60; ++i) y[i] = x(i, 2) - x(i, 4) + gen.gauss();
  const DesignMatrix d = with_intercept(x);
  const LassoProblem problem(d, to_vector(y));
  const double top = problem.lambda_max();
  const LassoFit at_top = problem.fit(top);
  for (std::size_t j = 1; j < at_top.coefficients.size(); ++j) EXPECT_EQ(at_top.coefficients[j], 0.0);
  EXPECT_NEAR(at_top.coefficients[0], y.mean(), 1e-12);
  const LassoFit below = problem.fit(top * 0.95);
  int nonzero = 0;
  for (std::size_t j = 1; j < below.coefficients.size(); ++j) nonzero += below.coefficients[j] != 0.0;
  EXPECT_GE(nonzero, 1);
}

TEST(Lasso, PathIsLogSpacedAndDescending) {
  testing::Gen gen(13);
  const Eigen::MatrixXd x = random_matrix(gen, 30, 3);
  Eigen::VectorXd y(30);
  for (Eigen::Index i = 0; i < 30; ++i) y[i] = x(i, 0) + gen.gauss();
  const LassoProblem problem(with_intercept(x), to_vector(y));
  const auto path = problem.lambda_path(50);
  ASSERT_EQ(path.size(), 50u);
  EXPECT_EQ(path.front(), problem.lambda_max());
  EXPECT_NEAR(path.back(), problem.lambda_max() * 1e-4, 1e-12 * problem.lambda_max());
  const double ratio = path[1] / path[0];
  for (std::size_t k = 1; k < path.size(); ++k) {
    EXPECT_LT(path[k], path[k - 1]);
    EXPECT_NEAR(path[k] / path[k - 1], ratio, 1e-9);
  }
}

TEST(Lasso, ConstantResponseGivesSinglePointPath) {
  Eigen::MatrixXd x(5, 1);
  x << 1, 2, 3, 4, 5;
  const std::vector<double> y(5, 4.0);
  const LassoProblem problem(with_intercept(x), y);
  EXPECT_EQ(problem.lambda_path(10), std::vector<double>{0.0});
  const LassoFit fit = problem.fit(0.0);
  EXPECT_DOUBLE_EQ(fit.coefficients[0], 4.0);
  EXPECT_EQ(fit.coefficients[1], 0.0);
}

// Optimality conditions computed here from scratch on the original-scale
// coefficients, without the solver's own kkt().
TEST(Lasso, SatisfiesOptimalityConditions) {
  testing::Gen gen(17);
  for (int instance = 0; instance < 10; ++instance) {
    const Eigen::Index p = gen.integer(3, 12);
    const Eigen::MatrixXd x = random_matrix(gen, 100, p);
    Eigen::VectorXd y(100);
    for (Eigen::Index i = 0; i < 100; ++i) y[i] = x(i, 0) - 2.0 * x(i, p - 1) + gen.gauss();
    const DesignMatrix d = with_intercept(x);
    const LassoProblem problem(d, to_vector(y));
    const double lambda = problem.lambda_max() * gen.real(0.01, 0.5);
    const LassoFit fit = problem.fit(lambda);
    ASSERT_TRUE(fit.converged);

    const Eigen::Map<const Eigen::VectorXd> b(fit.coefficients.data(), p + 1);
    const Eigen::VectorXd r = y - d.entries * b;
    EXPECT_NEAR(r.mean(), 0.0, 1e-9);
    for (Eigen::Index j = 0; j < p; ++j) {
      const double m = x.col(j).mean();
      const double s = std::sqrt((x.col(j).array() - m).square().sum() / 100.0);
      const double g = ((x.col(j).array() - m) / s * r.array()).sum() / 100.0;
      const double bs = b[j + 1] * s;  // standardized-scale coefficient
      if (bs == 0.0) {
        EXPECT_LE(std::abs(g), lambda + 1e-5);
      } else {
        EXPECT_NEAR(g, lambda * (bs > 0 ? 1.0 : -1.0), 1e-5);
      }
    }
    EXPECT_LE(problem.kkt(fit).max_violation, 1e-5);
  }
}

TEST(Lasso, ObjectiveNeverIncreases) {
  testing::Gen gen(31);
  const Eigen::MatrixXd x = random_matrix(gen, 70, 8);
  Eigen::VectorXd y(70);
  for (Eigen::Index i = 0; i < 70; ++i) y[i] = x.row(i).sum() + gen.gauss();
  LassoOptions opts;
  opts.record_objective = true;
  const LassoProblem problem(with_intercept(x), to_vector(y));
  const LassoFit fit = problem.fit(problem.lambda_max() * 0.05, opts);
  ASSERT_GE(fit.objective_trace.size(), 1u);
  for (std::size_t k = 1; k < fit.objective_trace.size(); ++k) {
    EXPECT_LE(fit.objective_trace[k], fit.objective_trace[k - 1] * (1.0 + 1e-12));
  }
}

TEST(Lasso, WarmStartReachesSameSolution) {
  testing::Gen gen(41);
  const Eigen::MatrixXd x = random_matrix(gen, 60, 6);
  Eigen::VectorXd y(60);
  for (Eigen::Index i = 0; i < 60; ++i) y[i] = x(i, 1) * 3.0 + gen.gauss();
  const LassoProblem problem(with_intercept(x), to_vector(y));
  const auto path = problem.lambda_path(20);
  const auto fits = problem.fit_path(path);
  const LassoFit cold = problem.fit(path.back());
  for (std::size_t j = 0; j < cold.coefficients.size(); ++j) {
    EXPECT_NEAR(fits.back().coefficients[j], cold.coefficients[j], 1e-6);
  }
}

TEST(Lasso, IterationCapIsReported) {
  testing::Gen gen(2);
  const Eigen::MatrixXd x = random_matrix(gen, 40, 6);
  Eigen::VectorXd y(40);
  for (Eigen::Index i = 0; i < 40; ++i) y[i] = x.row(i).sum() + gen.gauss();
  LassoOptions opts;
  opts.max_iter = 1;
  opts.tol = 0.0;
  const LassoFit fit = fit_lasso(with_intercept(x), to_vector(y), 0.01, opts);
  EXPECT_FALSE(fit.converged);
  EXPECT_EQ(fit.iterations, 1);
}

TEST(Lasso, RejectsBadInput) {
  Eigen::MatrixXd x(3, 1);
  x << 1, 2, 3;
  EXPECT_THROW(fit_lasso(with_intercept(x), std::vector<double>{1.0, 2.0}, 0.0), DataError);
  EXPECT_THROW(fit_lasso(with_intercept(x), std::vector<double>{1.0, NAN, 2.0}, 0.0), DataError);
  x(1, 0) = INFINITY;
  EXPECT_THROW(fit_lasso(with_intercept(x), std::vector<double>{1.0, 2.0, 3.0}, 0.0), DataError);
}

}  // namespace
}  // namespace perfmodel
