#include "tensorreg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tensorreg {

TensorShape::TensorShape(std::vector<int> dims) : dims_(std::move(dims)) {
  if (dims_.empty()) throw StructuralError("TensorShape: order must be >= 1");
  std::int64_t n = 1;
  for (int p : dims_) {
    if (p < 1) throw StructuralError("TensorShape: every dimension must be >= 1");
    if (n > std::numeric_limits<std::int64_t>::max() / p)
      throw StructuralError("TensorShape: voxel count overflows");
    n *= p;
  }
  num_voxels_ = n;
}

std::int64_t TensorShape::stride(int mode) const {
  std::int64_t s = 1;
  for (int j = 0; j < mode; ++j) s *= dims_[j];
  return s;
}

int TensorShape::mode_index(std::int64_t flat, int mode) const {
  return static_cast<int>((flat / stride(mode)) % dims_[mode]);
}

DenseTensor::DenseTensor(TensorShape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (static_cast<std::int64_t>(values_.size()) != shape_.num_voxels())
    throw StructuralError("DenseTensor: value count does not match shape");
  for (double v : values_)
    if (!std::isfinite(v)) throw StructuralError("DenseTensor: non-finite entry");
}

DenseTensor DenseTensor::zeros(const TensorShape& shape) {
  return DenseTensor(shape, std::vector<double>(static_cast<size_t>(shape.num_voxels()), 0.0));
}

double DenseTensor::at(std::span<const int> index) const {
  std::int64_t flat = 0;
  std::int64_t stride = 1;
  for (int j = 0; j < shape_.order(); ++j) {
    if (index[j] < 0 || index[j] >= shape_.dim(j))
      throw StructuralError("DenseTensor::at: index out of range");
    flat += index[j] * stride;
    stride *= shape_.dim(j);
  }
  return values_[static_cast<size_t>(flat)];
}

ParafacFactors ParafacFactors::zeros(const TensorShape& shape, int rank) {
  if (rank < 1) throw StructuralError("ParafacFactors: rank must be >= 1");
  ParafacFactors f;
  f.shape = shape;
  f.rank = rank;
  f.margins.reserve(static_cast<size_t>(rank) * shape.order());
  for (int r = 0; r < rank; ++r)
    for (int j = 0; j < shape.order(); ++j)
      f.margins.emplace_back(Eigen::VectorXd::Zero(shape.dim(j)));
  return f;
}

void ParafacFactors::validate() const {
  if (rank < 1) throw StructuralError("ParafacFactors: rank must be >= 1");
  if (static_cast<int>(margins.size()) != rank * shape.order())
    throw StructuralError("ParafacFactors: margin count does not match rank and order");
  for (int r = 0; r < rank; ++r)
    for (int j = 0; j < shape.order(); ++j) {
      const auto& m = margin(r, j);
      if (m.size() != shape.dim(j))
        throw StructuralError("ParafacFactors: margin length does not match shape");
      if (!m.allFinite()) throw StructuralError("ParafacFactors: non-finite margin entry");
    }
}

void TuckerModel::validate() const {
  const int D = shape.order();
  if (core.shape().order() != D)
    throw StructuralError("TuckerModel: core order does not match shape order");
  if (static_cast<int>(factors.size()) != D)
    throw StructuralError("TuckerModel: factor list count does not match order");
  for (int j = 0; j < D; ++j) {
    if (static_cast<int>(factors[j].size()) != core.shape().dim(j))
      throw StructuralError("TuckerModel: factor count does not match core rank");
    for (const auto& f : factors[j]) {
      if (f.size() != shape.dim(j))
        throw StructuralError("TuckerModel: factor length does not match shape");
      if (!f.allFinite()) throw StructuralError("TuckerModel: non-finite factor entry");
    }
  }
}

DenseTensor assemble_parafac(const ParafacFactors& factors) {
  factors.validate();
  const TensorShape& shape = factors.shape;
  const int D = shape.order();
  const std::int64_t V = shape.num_voxels();
  std::vector<double> out(static_cast<size_t>(V), 0.0);
  std::vector<int> idx(static_cast<size_t>(D), 0);
  for (int r = 0; r < factors.rank; ++r) {
    std::fill(idx.begin(), idx.end(), 0);
    // Odometer walk in layout order; prod[j] caches the partial product of
    // margins j..D-1 at the current index so each voxel costs O(1) amortized.
    std::vector<double> prod(static_cast<size_t>(D) + 1);
    prod[static_cast<size_t>(D)] = 1.0;
    for (int j = D - 1; j >= 0; --j)
      prod[static_cast<size_t>(j)] = prod[static_cast<size_t>(j) + 1] * factors.margin(r, j)[0];
    for (std::int64_t v = 0;; ++v) {
      out[static_cast<size_t>(v)] += prod[0];
      int j = 0;
      while (j < D && ++idx[static_cast<size_t>(j)] == shape.dim(j)) {
        idx[static_cast<size_t>(j)] = 0;
        ++j;
      }
      if (j == D) break;
      for (int l = j; l >= 0; --l)
        prod[static_cast<size_t>(l)] =
            prod[static_cast<size_t>(l) + 1] * factors.margin(r, l)[idx[static_cast<size_t>(l)]];
    }
  }
  return DenseTensor(shape, std::move(out));
}

DenseTensor assemble_tucker(const TuckerModel& model) {
  model.validate();
  const TensorShape& shape = model.shape;
  const TensorShape& cshape = model.core.shape();
  const int D = shape.order();
  std::vector<double> out(static_cast<size_t>(shape.num_voxels()), 0.0);
  // Sum over core entries of weighted rank-1 assemblies.
  std::vector<int> ridx(static_cast<size_t>(D), 0);
  for (std::int64_t c = 0; c < cshape.num_voxels(); ++c) {
    const double w = model.core[c];
    if (w == 0.0) {
      // advance odometer
      int j = 0;
      while (j < D && ++ridx[static_cast<size_t>(j)] == cshape.dim(j)) {
        ridx[static_cast<size_t>(j)] = 0;
        ++j;
      }
      continue;
    }
    ParafacFactors one = ParafacFactors::zeros(shape, 1);
    for (int j = 0; j < D; ++j) one.margin(0, j) = model.factors[j][ridx[static_cast<size_t>(j)]];
    DenseTensor t = assemble_parafac(one);
    for (std::int64_t v = 0; v < shape.num_voxels(); ++v) out[static_cast<size_t>(v)] += w * t[v];
    int j = 0;
    while (j < D && ++ridx[static_cast<size_t>(j)] == cshape.dim(j)) {
      ridx[static_cast<size_t>(j)] = 0;
      ++j;
    }
  }
  return DenseTensor(shape, std::move(out));
}

Eigen::VectorXd vectorize(const DenseTensor& t) {
  return Eigen::Map<const Eigen::VectorXd>(t.values().data(), t.size());
}

double inner_product(const DenseTensor& x, const DenseTensor& b) {
  if (!(x.shape() == b.shape())) throw StructuralError("inner_product: shape mismatch");
  double s = 0.0;
  for (std::int64_t v = 0; v < x.size(); ++v) s += x[v] * b[v];
  return s;
}

Eigen::VectorXd margin_contraction(std::span<const double> x, const ParafacFactors& factors,
                                   int mode, int component) {
  factors.validate();
  const TensorShape& shape = factors.shape;
  const int D = shape.order();
  if (mode < 0 || mode >= D) throw StructuralError("margin_contraction: mode out of range");
  if (component < 0 || component >= factors.rank)
    throw StructuralError("margin_contraction: component out of range");
  const std::int64_t V = shape.num_voxels();
  if (static_cast<std::int64_t>(x.size()) != V)
    throw StructuralError("margin_contraction: tensor size does not match factor shape");

  Eigen::VectorXd h = Eigen::VectorXd::Zero(shape.dim(mode));
  // Single pass over voxels in layout order with an odometer; weight is the
  // product of all margins except `mode` at the current multi-index.
  std::vector<int> idx(static_cast<size_t>(D), 0);
  for (std::int64_t v = 0; v < V; ++v) {
    double w = 1.0;
    for (int l = 0; l < D; ++l)
      if (l != mode) w *= factors.margin(component, l)[idx[static_cast<size_t>(l)]];
    h[idx[static_cast<size_t>(mode)]] += x[static_cast<size_t>(v)] * w;
    int j = 0;
    while (j < D && ++idx[static_cast<size_t>(j)] == shape.dim(j)) {
      idx[static_cast<size_t>(j)] = 0;
      ++j;
    }
  }
  return h;
}

Eigen::VectorXd margin_contraction(const DenseTensor& x, const ParafacFactors& factors,
                                   int mode, int component) {
  if (!(x.shape() == factors.shape))
    throw StructuralError("margin_contraction: tensor shape does not match factors");
  return margin_contraction(x.values(), factors, mode, component);
}

ParafacFactors canonicalize_report(const ParafacFactors& factors) {
  factors.validate();
  const int D = factors.shape.order();
  ParafacFactors out = factors;
  for (int r = 0; r < out.rank; ++r) {
    double carry = 1.0;
    for (int j = 0; j < D - 1; ++j) {
      const double lead = out.margin(r, j)[0];
      if (lead == 0.0 || !std::isfinite(1.0 / lead))
        throw CanonicalizationError("canonicalize_report: zero leading margin element");
      out.margin(r, j) /= lead;
      carry *= lead;
    }
    out.margin(r, D - 1) *= carry;
  }
  std::vector<int> order(static_cast<size_t>(out.rank));
  for (int r = 0; r < out.rank; ++r) order[static_cast<size_t>(r)] = r;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return out.margin(a, D - 1)[0] > out.margin(b, D - 1)[0];
  });
  for (int r = 0; r + 1 < out.rank; ++r)
    if (out.margin(order[static_cast<size_t>(r)], D - 1)[0] ==
        out.margin(order[static_cast<size_t>(r) + 1], D - 1)[0])
      throw CanonicalizationError("canonicalize_report: tied component leaders");
  ParafacFactors sorted = out;
  for (int r = 0; r < out.rank; ++r)
    for (int j = 0; j < D; ++j) sorted.margin(r, j) = out.margin(order[static_cast<size_t>(r)], j);
  return sorted;
}

}  // namespace tensorreg
