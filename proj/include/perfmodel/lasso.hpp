#pragma once

// L1-penalized least squares by cyclic coordinate descent.
//
// The problem solved is
//
//   minimize  (1/2n) ||y - X b||^2 + lambda * sum_{j>0} |b_j|
//
// on standardized columns (mean 0, population std 1). Column 0 of every
// design matrix is the all-ones intercept column; it is never penalized and is
// handled by centering y. Coefficients are reported back on the original
// column scale, with coefficients[0] holding the intercept so that a
// prediction is simply X.row(i) * coefficients.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "perfmodel/error.hpp"

namespace perfmodel {

struct DesignMatrix {
  Eigen::MatrixXd entries;  // rows = samples, cols = terms
  std::vector<std::string> col_names;

  std::size_t rows() const { return static_cast<std::size_t>(entries.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(entries.cols()); }
};

struct Scaler {
  std::vector<double> means;
  std::vector<double> stds;
  std::vector<bool> constant;

  friend bool operator==(const Scaler&, const Scaler&) = default;
};

inline void check_design(const DesignMatrix& x) {
  if (x.rows() < 1 || x.cols() < 1) throw DataError("design matrix must be non-empty");
  if (!x.entries.allFinite()) throw DataError("design matrix contains non-finite entries");
}

// Constant columns (every entry identical, which includes the intercept) are
// left untouched and carry mean 0, std 1.
inline std::pair<DesignMatrix, Scaler> standardize(const DesignMatrix& x) {
  check_design(x);
  const auto n = static_cast<double>(x.rows());
  DesignMatrix out = x;
  Scaler s;
  s.means.resize(x.cols());
  s.stds.resize(x.cols());
  s.constant.resize(x.cols());
  for (Eigen::Index j = 0; j < x.entries.cols(); ++j) {
    auto col = x.entries.col(j);
    const bool constant = (col.array() == col(0)).all();
    s.constant[j] = constant;
    if (constant) {
      s.means[j] = 0.0;
      s.stds[j] = 1.0;
      continue;
    }
    const double mean = col.sum() / n;
    const double sd = std::sqrt((col.array() - mean).square().sum() / n);
    s.means[j] = mean;
    s.stds[j] = sd;
    out.entries.col(j) = (col.array() - mean) / sd;
  }
  return {std::move(out), std::move(s)};
}

struct LassoOptions {
  double tol = 1e-7;  // max |coefficient change| over a sweep, standardized scale
  int max_iter = 10000;  // sweeps
  bool record_objective = false;
};

struct LassoFit {
  std::vector<double> coefficients;  // original scale; [0] is the intercept
  double intercept = 0.0;
  double lambda = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> standardized;     // coefficients on the standardized columns
  std::vector<double> objective_trace;  // per sweep, when requested
};

struct KktReport {
  double max_violation = 0.0;
  std::size_t worst_column = 0;

  bool ok(double tol) const { return max_violation <= tol; }
};

inline double soft_threshold(double z, double gamma) {
  if (z > gamma) return z - gamma;
  if (z < -gamma) return z + gamma;
  return 0.0;
}

// A design matrix and response prepared once (standardized, centered) so that
// many penalties can be fit against it.
class LassoProblem {
 public:
  LassoProblem(const DesignMatrix& x, std::span<const double> y) {
    check_design(x);
    if (y.size() != x.rows()) {
      throw DataError("response has " + std::to_string(y.size()) + " entries, design has " +
                      std::to_string(x.rows()) + " rows");
    }
    for (double v : y) {
      if (!std::isfinite(v)) throw DataError("response contains non-finite values");
    }
    auto [xs, scaler] = standardize(x);
    xs_ = std::move(xs.entries);
    scaler_ = std::move(scaler);
    n_ = static_cast<double>(x.rows());
    yc_ = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
    y_mean_ = yc_.sum() / n_;
    yc_.array() -= y_mean_;
    col_sq_.resize(xs_.cols());
    for (Eigen::Index j = 0; j < xs_.cols(); ++j) {
      col_sq_[j] = xs_.col(j).squaredNorm() / n_;
      if (j > 0 && !scaler_.constant[j]) penalized_.push_back(j);
    }
  }

  std::size_t rows() const { return static_cast<std::size_t>(xs_.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(xs_.cols()); }
  const Scaler& scaler() const { return scaler_; }
  const Eigen::MatrixXd& standardized_design() const { return xs_; }
  double response_mean() const { return y_mean_; }

  // Smallest penalty at which every penalized coefficient is zero.
  double lambda_max() const {
    double best = 0.0;
    for (Eigen::Index j : penalized_) best = std::max(best, std::abs(xs_.col(j).dot(yc_)) / n_);
    return best;
  }

  // Log-spaced from lambda_max down to lambda_max * 1e-4, descending. A response
  // with no variation (or no usable column) yields the single point {0}.
  std::vector<double> lambda_path(std::size_t count) const {
    if (count < 2) throw DataError("lambda path needs at least 2 points");
    const double top = lambda_max();
    if (!(top > 0.0)) return {0.0};
    std::vector<double> path(count);
    const double log_top = std::log(top);
    const double log_bottom = std::log(top * 1e-4);
    for (std::size_t k = 0; k < count; ++k) {
      const double t = static_cast<double>(k) / static_cast<double>(count - 1);
      path[k] = std::exp(log_top + t * (log_bottom - log_top));
    }
    path.front() = top;
    return path;
  }

  double objective(const Eigen::VectorXd& beta, const Eigen::VectorXd& residual, double lambda) const {
    double l1 = 0.0;
    for (Eigen::Index j : penalized_) l1 += std::abs(beta[j]);
    return residual.squaredNorm() / (2.0 * n_) + lambda * l1;
  }

  LassoFit fit(double lambda, const LassoOptions& opts = {}, const LassoFit* warm = nullptr) const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw DataError("lambda must be a finite value >= 0");
    const Eigen::Index p = xs_.cols();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    if (warm != nullptr && warm->standardized.size() == static_cast<std::size_t>(p)) {
      beta = Eigen::Map<const Eigen::VectorXd>(warm->standardized.data(), p);
    }
    Eigen::VectorXd r = yc_;
    for (Eigen::Index j : penalized_) {
      if (beta[j] != 0.0) r.noalias() -= beta[j] * xs_.col(j);
    }

    LassoFit fit;
    fit.lambda = lambda;
    std::vector<Eigen::Index> active;

    auto sweep = [&](std::span<const Eigen::Index> coords) {
      double max_change = 0.0;
      for (Eigen::Index j : coords) {
        const double old = beta[j];
        const double z = xs_.col(j).dot(r) / n_ + col_sq_[j] * old;
        const double updated = soft_threshold(z, lambda) / col_sq_[j];
        if (updated != old) {
          r.noalias() -= (updated - old) * xs_.col(j);
          beta[j] = updated;
          max_change = std::max(max_change, std::abs(updated - old));
        }
      }
      ++fit.iterations;
      if (opts.record_objective) fit.objective_trace.push_back(objective(beta, r, lambda));
      return max_change;
    };

    // Full sweeps establish the active set and its signs. Between full sweeps
    // the active block is solved directly (see polish_active), then swept to
    // convergence with a fresh direct solve every kPolishEvery sweeps. Only a
    // full sweep with every change below tol ends the fit.
    constexpr int kPolishEvery = 16;
    while (fit.iterations < opts.max_iter) {
      if (sweep(penalized_) < opts.tol) {
        fit.converged = true;
        break;
      }
      for (int inner = 0; fit.iterations < opts.max_iter; ++inner) {
        if (inner % kPolishEvery == 0) {
          active.clear();
          for (Eigen::Index j : penalized_) {
            if (beta[j] != 0.0) active.push_back(j);
          }
          polish_active(active, lambda, beta, r);
        }
        if (sweep(active) < opts.tol) break;
      }
    }

    fit.standardized.assign(beta.data(), beta.data() + p);
    fit.coefficients.assign(static_cast<std::size_t>(p), 0.0);
    double intercept = y_mean_;
    for (Eigen::Index j : penalized_) {
      const double b = beta[j] / scaler_.stds[j];
      fit.coefficients[j] = b;
      intercept -= b * scaler_.means[j];
    }
    fit.coefficients[0] = intercept;
    fit.intercept = intercept;
    return fit;
  }

  // Warm-started fits along a descending penalty sequence.
  std::vector<LassoFit> fit_path(std::span<const double> lambdas, const LassoOptions& opts = {}) const {
    std::vector<LassoFit> fits;
    fits.reserve(lambdas.size());
    for (double lambda : lambdas) fits.push_back(fit(lambda, opts, fits.empty() ? nullptr : &fits.back()));
    return fits;
  }

  // Largest deviation from the Lasso optimality conditions on the standardized
  // problem: |g_j| <= lambda for zero coefficients, g_j = lambda*sign(b_j)
  // otherwise, where g_j = <x_j, r>/n.
  KktReport kkt(const LassoFit& fit) const {
    const Eigen::Index p = xs_.cols();
    Eigen::Map<const Eigen::VectorXd> beta(fit.standardized.data(), p);
    Eigen::VectorXd r = yc_;
    for (Eigen::Index j : penalized_) {
      if (beta[j] != 0.0) r.noalias() -= beta[j] * xs_.col(j);
    }
    KktReport report;
    for (Eigen::Index j : penalized_) {
      const double g = xs_.col(j).dot(r) / n_;
      const double violation = beta[j] == 0.0 ? std::max(0.0, std::abs(g) - fit.lambda)
                                              : std::abs(g - fit.lambda * (beta[j] > 0 ? 1.0 : -1.0));
      if (violation > report.max_violation) {
        report.max_violation = violation;
        report.worst_column = static_cast<std::size_t>(j);
      }
    }
    return report;
  }

 private:
  // With the active set A and its signs s fixed, the objective restricted to
  // that orthant is the quadratic whose minimizer solves
  //   (X_A'X_A/n) b = X_A'y/n - lambda*s.
  // Moves beta toward that point, stopping at the first coordinate that would
  // change sign. That coordinate is set to zero, dropped from A, and the solve
  // repeated. Collinear monomials make the block nearly singular, so a tiny
  // ridge keeps the factorization usable; a step is kept only if the objective
  // does not increase.
  void polish_active(const std::vector<Eigen::Index>& active, double lambda, Eigen::VectorXd& beta,
                     Eigen::VectorXd& r) const {
    constexpr double kRidge = 1e-10;
    const auto m = static_cast<Eigen::Index>(active.size());
    if (m == 0) return;
    Eigen::MatrixXd xa(xs_.rows(), m);
    for (Eigen::Index a = 0; a < m; ++a) xa.col(a) = xs_.col(active[a]);
    Eigen::MatrixXd full_gram(m, m);
    full_gram.setZero();
    full_gram.selfadjointView<Eigen::Lower>().rankUpdate(xa.transpose(), 1.0 / n_);
    full_gram = full_gram.selfadjointView<Eigen::Lower>();
    const Eigen::VectorXd full_xy = (xa.transpose() * yc_) / n_;

    std::vector<Eigen::Index> live(static_cast<std::size_t>(m));  // positions into active
    for (Eigen::Index a = 0; a < m; ++a) live[static_cast<std::size_t>(a)] = a;
    while (!live.empty()) {
      const auto k = static_cast<Eigen::Index>(live.size());
      Eigen::MatrixXd gram(k, k);
      Eigen::VectorXd rhs(k), current(k), sign(k);
      for (Eigen::Index a = 0; a < k; ++a) {
        const Eigen::Index pa = live[static_cast<std::size_t>(a)];
        for (Eigen::Index b = 0; b < k; ++b) gram(a, b) = full_gram(pa, live[static_cast<std::size_t>(b)]);
        current[a] = beta[active[pa]];
        sign[a] = current[a] >= 0 ? 1.0 : -1.0;
        rhs[a] = full_xy[pa] - lambda * sign[a];
      }
      gram.diagonal().array() += kRidge;
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
      if (ldlt.info() != Eigen::Success) return;
      const Eigen::VectorXd target = ldlt.solve(rhs);
      if (!target.allFinite()) return;

      double step = 1.0;
      Eigen::Index blocking = -1;
      for (Eigen::Index a = 0; a < k; ++a) {
        if (target[a] * sign[a] < 0.0) {
          const double t = current[a] / (current[a] - target[a]);
          if (t < step) {
            step = t;
            blocking = a;
          }
        }
      }
      Eigen::VectorXd next = current + step * (target - current);
      if (blocking >= 0) next[blocking] = 0.0;
      for (Eigen::Index a = 0; a < k; ++a) {
        if (next[a] * sign[a] < 0.0) next[a] = 0.0;
      }
      const double before = objective(beta, r, lambda);
      Eigen::VectorXd trial_beta = beta;
      Eigen::VectorXd trial_r = r;
      for (Eigen::Index a = 0; a < k; ++a) {
        const double delta = next[a] - current[a];
        if (delta != 0.0) {
          const Eigen::Index pa = live[static_cast<std::size_t>(a)];
          trial_r.noalias() -= delta * xa.col(pa);
          trial_beta[active[pa]] = next[a];
        }
      }
      if (!(objective(trial_beta, trial_r, lambda) <= before)) return;
      beta.swap(trial_beta);
      r.swap(trial_r);
      if (blocking < 0) return;
      std::erase_if(live, [&](Eigen::Index pa) { return beta[active[pa]] == 0.0; });
    }
  }

  Eigen::MatrixXd xs_;
  Eigen::VectorXd yc_;
  Eigen::VectorXd col_sq_;
  std::vector<Eigen::Index> penalized_;
  Scaler scaler_;
  double y_mean_ = 0.0;
  double n_ = 1.0;
};

inline LassoFit fit_lasso(const DesignMatrix& x, std::span<const double> y, double lambda,
                          const LassoOptions& opts = {}) {
  return LassoProblem(x, y).fit(lambda, opts);
}

inline std::vector<double> lambda_path(const DesignMatrix& x, std::span<const double> y, std::size_t count) {
  return LassoProblem(x, y).lambda_path(count);
}

inline std::vector<double> predict_rows(const Eigen::MatrixXd& x, std::span<const double> coefficients) {
  Eigen::Map<const Eigen::VectorXd> b(coefficients.data(), static_cast<Eigen::Index>(coefficients.size()));
  Eigen::VectorXd out = x * b;
  return {out.data(), out.data() + out.size()};
}

}  // namespace perfmodel
