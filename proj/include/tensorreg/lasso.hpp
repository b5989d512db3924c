#pragma once

#include <Eigen/Core>
#include <vector>

#include "tensorreg/regression_data.hpp"
#include "tensorreg/tensor.hpp"

namespace tensorreg {

/// L1-penalized least squares over [gamma; vec(B)] with objective
///   (1/2n) ||y - X b||^2 + lambda ||b||_1
/// on standardized columns; every coefficient is penalized.
struct LassoFit {
  Eigen::VectorXd coefficients;      // length p + prod(p_j), fit-scale
  double lambda = 0.0;               // chosen penalty
  std::vector<double> objective_trace;
  std::vector<double> lambda_grid;
  std::vector<double> cv_mse;
};

struct LassoOptions {
  int grid_size = 20;
  double lambda_min_ratio = 1e-4;
  int folds = 5;
  double tolerance = 1e-7;   // relative objective change
  int max_sweeps = 1000;
  std::uint64_t seed = 1;    // fold assignment shuffling
};

/// Coordinate descent with soft-thresholding and warm starts down a
/// log-spaced grid from lambda_max; lambda chosen by k-fold CV mean squared
/// error, then refit on the full data.
LassoFit lasso_fit(const RegressionData& data, const LassoOptions& options = {});

/// Coordinate descent at one fixed penalty (exposed for tests and CV).
Eigen::VectorXd lasso_path_point(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                                 double lambda, const LassoOptions& options,
                                 Eigen::VectorXd warm_start,
                                 std::vector<double>* objective_trace = nullptr);

Eigen::VectorXd predict(const LassoFit& fit, const RegressionData& data);

/// Estimated coefficient tensor on the original response/voxel scale.
DenseTensor lasso_coefficient_tensor(const LassoFit& fit, const RegressionData& standardized);

/// Max KKT violation at the solution: |x_j'r/n| - lambda for inactive
/// coordinates, |x_j'r/n - lambda sign(b_j)| for active ones.
double kkt_violation(const Eigen::MatrixXd& design, const Eigen::VectorXd& response,
                     const Eigen::VectorXd& coefficients, double lambda);

}  // namespace tensorreg
