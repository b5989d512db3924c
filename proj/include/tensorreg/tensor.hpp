#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

#include "tensorreg/errors.hpp"

namespace tensorreg {

/// Shape of a D-way array, D >= 1. Voxel (i_1,...,i_D) is stored at flat
/// offset i_1 + p_1*(i_2 + p_2*(i_3 + ...)): the first index varies fastest,
/// so vec(b_1 o b_2 o ... o b_D) = b_D (x) ... (x) b_1 holds literally.
class TensorShape {
 public:
  TensorShape() = default;
  explicit TensorShape(std::vector<int> dims);

  int order() const { return static_cast<int>(dims_.size()); }
  int dim(int mode) const { return dims_[mode]; }
  const std::vector<int>& dims() const { return dims_; }
  std::int64_t num_voxels() const { return num_voxels_; }
  /// Flat-offset step between consecutive indices along `mode`.
  std::int64_t stride(int mode) const;
  /// Index along `mode` of the voxel at flat offset `flat`.
  int mode_index(std::int64_t flat, int mode) const;

  bool operator==(const TensorShape& other) const { return dims_ == other.dims_; }

 private:
  std::vector<int> dims_;
  std::int64_t num_voxels_ = 0;
};

/// Dense D-way tensor of doubles in the layout documented on TensorShape.
/// Immutable after construction; all entries are finite.
class DenseTensor {
 public:
  DenseTensor() = default;
  DenseTensor(TensorShape shape, std::vector<double> values);
  static DenseTensor zeros(const TensorShape& shape);

  const TensorShape& shape() const { return shape_; }
  std::int64_t size() const { return shape_.num_voxels(); }
  double operator[](std::int64_t flat) const { return values_[static_cast<size_t>(flat)]; }
  double at(std::span<const int> index) const;
  std::span<const double> values() const { return values_; }

 private:
  TensorShape shape_;
  std::vector<double> values_;
};

/// Rank-R set of margin vectors beta_j^(r), j = 1..D, r = 1..R.
struct ParafacFactors {
  TensorShape shape;
  int rank = 0;
  // margin(r, j) has length shape.dim(j); stored row-major in r.
  std::vector<Eigen::VectorXd> margins;

  Eigen::VectorXd& margin(int r, int j) { return margins[static_cast<size_t>(r) * shape.order() + j]; }
  const Eigen::VectorXd& margin(int r, int j) const {
    return margins[static_cast<size_t>(r) * shape.order() + j];
  }
  static ParafacFactors zeros(const TensorShape& shape, int rank);
  void validate() const;
};

/// Tucker model: per-mode factor lists and a dense core of shape (R_1,...,R_D).
struct TuckerModel {
  TensorShape shape;
  std::vector<std::vector<Eigen::VectorXd>> factors;  // factors[j][r_j], length shape.dim(j)
  DenseTensor core;
  void validate() const;
};

/// B(i_1,...,i_D) = sum_r prod_j beta_{j,i_j}^(r).
DenseTensor assemble_parafac(const ParafacFactors& factors);

/// B(i_1,...,i_D) = sum_{r_1..r_D} core(r_1..r_D) prod_j beta_{j,i_j}^(r_j).
DenseTensor assemble_tucker(const TuckerModel& model);

/// Stacks entries in storage order (first index fastest).
Eigen::VectorXd vectorize(const DenseTensor& t);

/// <X, B> = vec(X)'vec(B); shapes must match.
double inner_product(const DenseTensor& x, const DenseTensor& b);

/// H_j^(r) with entry k = sum over voxels with i_j = k of
/// x(i_1..i_D) * prod_{l != j} beta_{l,i_l}^(r). Satisfies
/// <x, B_r> = beta_j^(r) . H_j^(r) for every mode j.
Eigen::VectorXd margin_contraction(const DenseTensor& x, const ParafacFactors& factors,
                                   int mode, int component);
/// Same, with x given as a flat span in the documented layout.
Eigen::VectorXd margin_contraction(std::span<const double> x, const ParafacFactors& factors,
                                   int mode, int component);

/// Rescales margins so beta_{j,1}^(r) = 1 for j < D and reorders components so
/// beta_{D,1}^(1) > ... > beta_{D,1}^(R); the assembled tensor is unchanged.
/// Throws CanonicalizationError when a leading element is zero or leaders tie.
ParafacFactors canonicalize_report(const ParafacFactors& factors);

}  // namespace tensorreg
