#include "tensorreg/regression_data.hpp"

#include <cmath>

#include "tensorreg/errors.hpp"

namespace tensorreg {

void RegressionData::validate() const {
  if (n < 1) throw StructuralError("RegressionData: n must be >= 1");
  if (y.size() != n) throw StructuralError("RegressionData: y length != n");
  if (Z.size() > 0 && Z.rows() != n) throw StructuralError("RegressionData: Z rows != n");
  if (static_cast<std::int64_t>(x.size()) != static_cast<std::int64_t>(n) * num_voxels())
    throw StructuralError("RegressionData: X payload size != n * voxels");
  if (!y.allFinite() || (Z.size() > 0 && !Z.allFinite()))
    throw StructuralError("RegressionData: non-finite response or design entry");
  for (double v : x)
    if (!std::isfinite(v)) throw StructuralError("RegressionData: non-finite voxel value");
}

RegressionData standardize_data(const RegressionData& raw) {
  raw.validate();
  if (raw.n < 2) throw DomainError("standardize_data: needs at least 2 samples");
  RegressionData out = raw;
  const int n = raw.n;
  const std::int64_t V = raw.num_voxels();

  const double y_mean = raw.y.mean();
  const double y_sd = std::sqrt((raw.y.array() - y_mean).square().sum() / (n - 1));
  if (!(y_sd > 0.0)) throw DomainError("standardize_data: response has zero variance");
  out.y = (raw.y.array() - y_mean) / y_sd;
  out.record.y_mean = y_mean;
  out.record.y_sd = y_sd;

  const int p = raw.p();
  out.record.z_mean = Eigen::VectorXd::Zero(p);
  out.record.z_sd = Eigen::VectorXd::Ones(p);
  for (int j = 0; j < p; ++j) {
    const double m = raw.Z.col(j).mean();
    const double sd = std::sqrt((raw.Z.col(j).array() - m).square().sum() / (n - 1));
    out.record.z_mean[j] = m;
    if (sd > 0.0) {
      out.record.z_sd[j] = sd;
      out.Z.col(j) = (raw.Z.col(j).array() - m) / sd;
    } else {
      out.Z.col(j).setZero();
    }
  }

  out.record.x_mean = Eigen::VectorXd::Zero(V);
  out.record.x_sd = Eigen::VectorXd::Ones(V);
  out.record.constant_voxel.assign(static_cast<size_t>(V), false);
  for (std::int64_t v = 0; v < V; ++v) {
    double m = 0.0;
    for (int i = 0; i < n; ++i) m += raw.x[static_cast<size_t>(i) * V + v];
    m /= n;
    double ss = 0.0;
    for (int i = 0; i < n; ++i) {
      const double d = raw.x[static_cast<size_t>(i) * V + v] - m;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / (n - 1));
    out.record.x_mean[v] = m;
    if (sd > 0.0) {
      out.record.x_sd[v] = sd;
      for (int i = 0; i < n; ++i)
        out.x[static_cast<size_t>(i) * V + v] = (raw.x[static_cast<size_t>(i) * V + v] - m) / sd;
    } else {
      out.record.constant_voxel[static_cast<size_t>(v)] = true;
      for (int i = 0; i < n; ++i) out.x[static_cast<size_t>(i) * V + v] = 0.0;
    }
  }
  out.standardized = true;
  return out;
}

}  // namespace tensorreg
