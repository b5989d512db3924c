#pragma once

#include <Eigen/Core>
#include <span>
#include <vector>

#include "tensorreg/tensor.hpp"

namespace tensorreg {

/// Column means/sds of the raw data, kept so estimates can be reported on the
/// original scale. sd uses the n-1 denominator. A voxel with zero variance is
/// flagged and its standardized column is identically zero.
struct Standardization {
  double y_mean = 0.0;
  double y_sd = 1.0;
  Eigen::VectorXd z_mean;
  Eigen::VectorXd z_sd;
  Eigen::VectorXd x_mean;
  Eigen::VectorXd x_sd;
  std::vector<bool> constant_voxel;
};

/// Scalar response y, fixed-effect design Z (n x p, p >= 0) and n tensor
/// predictors of common shape, stored sample-major: voxel v of sample i lives
/// at x[i * num_voxels + v] in the DenseTensor layout.
struct RegressionData {
  int n = 0;
  TensorShape shape;
  Eigen::VectorXd y;
  Eigen::MatrixXd Z;
  std::vector<double> x;
  bool standardized = false;
  Standardization record;

  int p() const { return static_cast<int>(Z.cols()); }
  std::int64_t num_voxels() const { return shape.num_voxels(); }
  std::span<const double> sample(int i) const {
    return std::span<const double>(x).subspan(static_cast<size_t>(i) * num_voxels(),
                                              static_cast<size_t>(num_voxels()));
  }
  void validate() const;
};

/// Centers and scales y, every voxel column of X, and every column of Z;
/// records the transform. Throws DomainError for a zero-variance response.
RegressionData standardize_data(const RegressionData& raw);

}  // namespace tensorreg
