#include "tensorreg/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tensorreg/errors.hpp"
#include "tensorreg/rng.hpp"

namespace tensorreg {

namespace {

double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

Eigen::MatrixXd build_design(const RegressionData& data) {
  const int n = data.n;
  const std::int64_t V = data.num_voxels();
  const int p = data.p();
  Eigen::MatrixXd design(n, p + V);
  if (p > 0) design.leftCols(p) = data.Z;
  for (int i = 0; i < n; ++i)
    for (std::int64_t v = 0; v < V; ++v)
      design(i, p + v) = data.x[static_cast<size_t>(i) * V + v];
  if (!design.allFinite()) throw DomainError("lasso_fit: non-finite design");
  return design;
}

double objective(const Eigen::VectorXd& resid, const Eigen::VectorXd& beta, double lambda, int n) {
  return resid.squaredNorm() / (2.0 * n) + lambda * beta.lpNorm<1>();
}

}  // namespace

Eigen::VectorXd lasso_path_point(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                                 double lambda, const LassoOptions& options,
                                 Eigen::VectorXd beta, std::vector<double>* objective_trace) {
  const int n = static_cast<int>(design.rows());
  const Eigen::Index d = design.cols();
  Eigen::VectorXd col_sq(d);
  for (Eigen::Index j = 0; j < d; ++j) col_sq[j] = design.col(j).squaredNorm() / n;
  Eigen::VectorXd resid = response - design * beta;
  double obj = objective(resid, beta, lambda, n);
  if (objective_trace) objective_trace->push_back(obj);
  auto one_sweep = [&]() {
    double max_delta = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      if (col_sq[j] <= 0.0) continue;
      const double old = beta[j];
      const double z = design.col(j).dot(resid) / n + col_sq[j] * old;
      const double next = soft_threshold(z, lambda) / col_sq[j];
      if (next != old) {
        resid -= design.col(j) * (next - old);
        beta[j] = next;
        max_delta = std::max(max_delta, std::abs(next - old));
      }
    }
    return max_delta;
  };
  for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
    one_sweep();
    const double new_obj = objective(resid, beta, lambda, n);
    if (objective_trace) objective_trace->push_back(new_obj);
    const double denom = std::max(std::abs(obj), 1e-12);
    if (std::abs(obj - new_obj) / denom < options.tolerance) break;
    obj = new_obj;
  }
  // polish to stationarity so the KKT conditions hold tightly
  for (int sweep = 0; sweep < options.max_sweeps; ++sweep)
    if (one_sweep() < 1e-11) break;
  return beta;
}

LassoFit lasso_fit(const RegressionData& data, const LassoOptions& options) {
  data.validate();
  const Eigen::MatrixXd design = build_design(data);
  const Eigen::VectorXd& y = data.y;
  const int n = data.n;
  const Eigen::Index d = design.cols();

  double lambda_max = 0.0;
  for (Eigen::Index j = 0; j < d; ++j)
    lambda_max = std::max(lambda_max, std::abs(design.col(j).dot(y)) / n);
  if (lambda_max <= 0.0) lambda_max = 1.0;

  LassoFit fit;
  fit.lambda_grid.resize(static_cast<size_t>(options.grid_size));
  for (int g = 0; g < options.grid_size; ++g) {
    const double f = options.grid_size == 1
                         ? 0.0
                         : static_cast<double>(g) / (options.grid_size - 1);
    fit.lambda_grid[static_cast<size_t>(g)] =
        lambda_max * std::pow(options.lambda_min_ratio, f);
  }

  // k-fold assignment by shuffled index
  const int folds = std::max(2, std::min(options.folds, n));
  std::vector<int> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  RngStream rng(options.seed);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
  }

  fit.cv_mse.assign(fit.lambda_grid.size(), 0.0);
  for (int fold = 0; fold < folds; ++fold) {
    std::vector<int> train, test;
    for (int i = 0; i < n; ++i)
      ((i % folds == fold) ? test : train).push_back(perm[static_cast<size_t>(i)]);
    Eigen::MatrixXd dtr(train.size(), d);
    Eigen::VectorXd ytr(train.size());
    for (size_t i = 0; i < train.size(); ++i) {
      dtr.row(static_cast<Eigen::Index>(i)) = design.row(train[i]);
      ytr[static_cast<Eigen::Index>(i)] = y[train[i]];
    }
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(d);
    for (size_t g = 0; g < fit.lambda_grid.size(); ++g) {
      beta = lasso_path_point(dtr, ytr, fit.lambda_grid[g], options, beta);
      double mse = 0.0;
      for (int i : test) {
        const double err = y[i] - design.row(i).dot(beta);
        mse += err * err;
      }
      fit.cv_mse[g] += mse / static_cast<double>(test.size()) / folds;
    }
  }

  size_t best = 0;
  for (size_t g = 1; g < fit.cv_mse.size(); ++g)
    if (fit.cv_mse[g] < fit.cv_mse[best]) best = g;
  fit.lambda = fit.lambda_grid[best];

  // warm-started refit on the full data down to the chosen penalty
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d);
  for (size_t g = 0; g < best; ++g)
    beta = lasso_path_point(design, y, fit.lambda_grid[g], options, beta);
  fit.coefficients = lasso_path_point(design, y, fit.lambda, options, beta, &fit.objective_trace);
  return fit;
}

Eigen::VectorXd predict(const LassoFit& fit, const RegressionData& data) {
  const Eigen::MatrixXd design = build_design(data);
  if (design.cols() != fit.coefficients.size())
    throw StructuralError("predict: coefficient length does not match design");
  return design * fit.coefficients;
}

DenseTensor lasso_coefficient_tensor(const LassoFit& fit, const RegressionData& data) {
  const std::int64_t V = data.num_voxels();
  const int p = data.p();
  if (fit.coefficients.size() != p + V)
    throw StructuralError("lasso_coefficient_tensor: coefficient length mismatch");
  std::vector<double> vals(static_cast<size_t>(V));
  for (std::int64_t v = 0; v < V; ++v) {
    double b = fit.coefficients[p + v];
    if (data.standardized) {
      if (data.record.constant_voxel[static_cast<size_t>(v)])
        b = 0.0;
      else
        b *= data.record.y_sd / data.record.x_sd[v];
    }
    vals[static_cast<size_t>(v)] = b;
  }
  return DenseTensor(data.shape, std::move(vals));
}

double kkt_violation(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                     const Eigen::VectorXd& coefficients, double lambda) {
  const int n = static_cast<int>(design.rows());
  const Eigen::VectorXd resid = response - design * coefficients;
  double worst = 0.0;
  for (Eigen::Index j = 0; j < design.cols(); ++j) {
    if (design.col(j).squaredNorm() <= 0.0) continue;
    const double c = design.col(j).dot(resid) / n;
    const double b = coefficients[j];
    const double viol = b == 0.0 ? std::max(0.0, std::abs(c) - lambda)
                                 : std::abs(c - lambda * (b > 0 ? 1.0 : -1.0));
    worst = std::max(worst, viol);
  }
  return worst;
}

}  // namespace tensorreg
