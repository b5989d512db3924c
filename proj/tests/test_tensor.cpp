#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "tensorreg/rng.hpp"
#include "tensorreg/tensor.hpp"

using namespace tensorreg;

namespace {

ParafacFactors random_factors(RngStream& rng, const TensorShape& shape, int rank) {
  ParafacFactors f = ParafacFactors::zeros(shape, rank);
  for (int r = 0; r < rank; ++r)
    for (int j = 0; j < shape.order(); ++j)
      for (int k = 0; k < shape.dim(j); ++k) f.margin(r, j)[k] = rng.normal();
  return f;
}

// brute-force oracle: evaluate the sum-of-products formula voxel by voxel
double parafac_voxel(const ParafacFactors& f, const std::vector<int>& idx) {
  double s = 0.0;
  for (int r = 0; r < f.rank; ++r) {
    double prod = 1.0;
    for (int j = 0; j < f.shape.order(); ++j) prod *= f.margin(r, j)[idx[static_cast<size_t>(j)]];
    s += prod;
  }
  return s;
}

double frobenius(const DenseTensor& t) {
  double s = 0.0;
  for (std::int64_t v = 0; v < t.size(); ++v) s += t[v] * t[v];
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("shape validation and layout") {
  CHECK_THROWS_AS(TensorShape({0, 2}), StructuralError);
  CHECK_THROWS_AS(TensorShape(std::vector<int>{}), StructuralError);
  TensorShape s({2, 3, 4});
  CHECK(s.num_voxels() == 24);
  CHECK(s.stride(0) == 1);
  CHECK(s.stride(1) == 2);
  CHECK(s.stride(2) == 6);
  CHECK(s.mode_index(7, 0) == 1);
  CHECK(s.mode_index(7, 1) == 0);
  CHECK(s.mode_index(7, 2) == 1);
}

TEST_CASE("assemble_parafac outer product D=2 R=1") {
  ParafacFactors f = ParafacFactors::zeros(TensorShape({2, 2}), 1);
  f.margin(0, 0) << 1.0, 2.0;
  f.margin(0, 1) << 3.0, 4.0;
  DenseTensor b = assemble_parafac(f);
  // B[i,j] = beta1[i]*beta2[j]: rows (3,4) and (6,8)
  CHECK(b.at(std::vector<int>{0, 0}) == 3.0);
  CHECK(b.at(std::vector<int>{0, 1}) == 4.0);
  CHECK(b.at(std::vector<int>{1, 0}) == 6.0);
  CHECK(b.at(std::vector<int>{1, 1}) == 8.0);
}

TEST_CASE("assemble_parafac zero margin annihilates") {
  RngStream rng(7);
  ParafacFactors f = random_factors(rng, TensorShape({3, 4}), 2);
  f.margin(0, 1).setZero();
  f.margin(1, 1).setZero();
  DenseTensor b = assemble_parafac(f);
  for (std::int64_t v = 0; v < b.size(); ++v) CHECK(b[v] == 0.0);
}

TEST_CASE("assemble_parafac matches triple-loop oracle D=3 R=2") {
  RngStream rng(11);
  TensorShape shape({3, 2, 4});
  ParafacFactors f = random_factors(rng, shape, 2);
  DenseTensor b = assemble_parafac(f);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 4; ++k) {
        std::vector<int> idx{i, j, k};
        CHECK(b.at(idx) == doctest::Approx(parafac_voxel(f, idx)).epsilon(1e-12));
      }
}

TEST_CASE("assemble_parafac shape mismatch") {
  ParafacFactors f = ParafacFactors::zeros(TensorShape({2, 2}), 1);
  f.margins[0] = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(assemble_parafac(f), StructuralError);
}

TEST_CASE("tucker with superdiagonal core equals parafac") {
  RngStream rng(3);
  TensorShape shape({3, 4});
  const int R = 2;
  ParafacFactors f = random_factors(rng, shape, R);
  TuckerModel m;
  m.shape = shape;
  m.factors.resize(2);
  for (int j = 0; j < 2; ++j)
    for (int r = 0; r < R; ++r) m.factors[static_cast<size_t>(j)].push_back(f.margin(r, j));
  std::vector<double> core(static_cast<size_t>(R) * R, 0.0);
  core[0] = 1.0;
  core[3] = 1.0;
  m.core = DenseTensor(TensorShape({R, R}), core);
  DenseTensor bt = assemble_tucker(m);
  DenseTensor bp = assemble_parafac(f);
  for (std::int64_t v = 0; v < bt.size(); ++v) CHECK(bt[v] == doctest::Approx(bp[v]));
}

TEST_CASE("tucker zero core gives zero tensor; mismatched core errors") {
  TuckerModel m;
  m.shape = TensorShape({2, 2});
  m.factors = {{Eigen::VectorXd::Ones(2)}, {Eigen::VectorXd::Ones(2)}};
  m.core = DenseTensor::zeros(TensorShape({1, 1}));
  DenseTensor b = assemble_tucker(m);
  for (std::int64_t v = 0; v < b.size(); ++v) CHECK(b[v] == 0.0);

  m.core = DenseTensor::zeros(TensorShape({2, 1}));
  CHECK_THROWS_AS(assemble_tucker(m), StructuralError);
}

TEST_CASE("tucker matches quadruple-loop oracle D=2") {
  RngStream rng(5);
  TensorShape shape({3, 4});
  TuckerModel m;
  m.shape = shape;
  m.factors.resize(2);
  for (int j = 0; j < 2; ++j)
    for (int r = 0; r < 2; ++r) {
      Eigen::VectorXd v(shape.dim(j));
      for (int k = 0; k < v.size(); ++k) v[k] = rng.normal();
      m.factors[static_cast<size_t>(j)].push_back(v);
    }
  std::vector<double> core(4);
  for (auto& c : core) c = rng.normal();
  m.core = DenseTensor(TensorShape({2, 2}), core);
  DenseTensor b = assemble_tucker(m);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      double want = 0.0;
      for (int r1 = 0; r1 < 2; ++r1)
        for (int r2 = 0; r2 < 2; ++r2)
          want += m.core.at(std::vector<int>{r1, r2}) * m.factors[0][static_cast<size_t>(r1)][i] *
                  m.factors[1][static_cast<size_t>(r2)][j];
      CHECK(b.at(std::vector<int>{i, j}) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("vectorize follows first-index-fastest layout") {
  // matrix [[1,3],[2,4]]: entries (1,1)=1 (1,2)=3 (2,1)=2 (2,2)=4
  DenseTensor t(TensorShape({2, 2}), {1.0, 2.0, 3.0, 4.0});
  CHECK(t.at(std::vector<int>{0, 0}) == 1.0);
  CHECK(t.at(std::vector<int>{0, 1}) == 3.0);
  Eigen::VectorXd v = vectorize(t);
  CHECK(v[0] == 1.0);
  CHECK(v[1] == 2.0);
  CHECK(v[2] == 3.0);
  CHECK(v[3] == 4.0);
}

TEST_CASE("vec of rank-1 equals reversed Kronecker product") {
  RngStream rng(13);
  SUBCASE("D=2") {
    TensorShape shape({3, 2});
    ParafacFactors f = random_factors(rng, shape, 1);
    Eigen::VectorXd v = vectorize(assemble_parafac(f));
    const Eigen::VectorXd& b1 = f.margin(0, 0);
    const Eigen::VectorXd& b2 = f.margin(0, 1);
    Eigen::VectorXd kron(6);
    for (int j = 0; j < 2; ++j)
      for (int i = 0; i < 3; ++i) kron[i + 3 * j] = b2[j] * b1[i];
    CHECK((v - kron).lpNorm<Eigen::Infinity>() < 1e-14);
  }
  SUBCASE("D=3") {
    TensorShape shape({2, 3, 2});
    ParafacFactors f = random_factors(rng, shape, 1);
    Eigen::VectorXd v = vectorize(assemble_parafac(f));
    // b3 (x) b2 (x) b1 computed independently
    Eigen::VectorXd kron(12);
    int pos = 0;
    for (int k = 0; k < 2; ++k)
      for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 2; ++i)
          kron[pos++] = f.margin(0, 2)[k] * f.margin(0, 1)[j] * f.margin(0, 0)[i];
    CHECK((v - kron).lpNorm<Eigen::Infinity>() < 1e-14);
  }
}

TEST_CASE("inner_product basics") {
  DenseTensor ones(TensorShape({2, 2}), {1.0, 1.0, 1.0, 1.0});
  DenseTensor b(TensorShape({2, 2}), {1.0, 3.0, 2.0, 4.0});
  CHECK(inner_product(ones, b) == 10.0);
  CHECK(inner_product(ones, DenseTensor::zeros(TensorShape({2, 2}))) == 0.0);
  CHECK_THROWS_AS(inner_product(ones, DenseTensor::zeros(TensorShape({2, 3}))), StructuralError);
}

TEST_CASE("inner_product matches vectorize-then-dot on random 4x4x4 pair") {
  RngStream rng(17);
  TensorShape shape({4, 4, 4});
  auto rand_tensor = [&]() {
    std::vector<double> vals(64);
    for (auto& v : vals) v = rng.normal();
    return DenseTensor(shape, vals);
  };
  DenseTensor x = rand_tensor(), b = rand_tensor();
  CHECK(inner_product(x, b) == doctest::Approx(vectorize(x).dot(vectorize(b))).epsilon(1e-12));
}

TEST_CASE("inner_product symmetric and bilinear") {
  RngStream rng(19);
  TensorShape shape({3, 3});
  auto rand_tensor = [&]() {
    std::vector<double> vals(9);
    for (auto& v : vals) v = rng.normal();
    return DenseTensor(shape, vals);
  };
  DenseTensor x = rand_tensor(), y = rand_tensor(), z = rand_tensor();
  CHECK(inner_product(x, y) == doctest::Approx(inner_product(y, x)));
  std::vector<double> comb(9);
  for (int v = 0; v < 9; ++v) comb[static_cast<size_t>(v)] = 2.0 * y[v] - 3.0 * z[v];
  CHECK(inner_product(x, DenseTensor(shape, comb)) ==
        doctest::Approx(2.0 * inner_product(x, y) - 3.0 * inner_product(x, z)).epsilon(1e-12));
}

TEST_CASE("margin_contraction identity-weighted row sums") {
  DenseTensor x(TensorShape({2, 2}), {1.0, 0.0, 0.0, 1.0});  // identity matrix
  ParafacFactors f = ParafacFactors::zeros(TensorShape({2, 2}), 1);
  f.margin(0, 0) << 5.0, 7.0;  // irrelevant for mode-0 contraction
  f.margin(0, 1) << 1.0, 1.0;
  Eigen::VectorXd h = margin_contraction(x, f, 0, 0);
  CHECK(h[0] == 1.0);
  CHECK(h[1] == 1.0);
  CHECK_THROWS_AS(margin_contraction(x, f, 2, 0), StructuralError);
  CHECK_THROWS_AS(margin_contraction(x, f, 0, 1), StructuralError);
}

TEST_CASE("margin_contraction zero when another margin vanishes") {
  RngStream rng(23);
  TensorShape shape({3, 4});
  ParafacFactors f = random_factors(rng, shape, 1);
  f.margin(0, 1).setZero();
  std::vector<double> vals(12);
  for (auto& v : vals) v = rng.normal();
  Eigen::VectorXd h = margin_contraction(DenseTensor(shape, vals), f, 0, 0);
  CHECK(h.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("contraction satisfies the inner-product identity") {
  RngStream rng(29);
  TensorShape shape({3, 4});
  ParafacFactors f = random_factors(rng, shape, 1);
  std::vector<double> vals(12);
  for (auto& v : vals) v = rng.normal();
  DenseTensor x(shape, vals);
  const double ip = inner_product(x, assemble_parafac(f));
  for (int j = 0; j < 2; ++j) {
    Eigen::VectorXd h = margin_contraction(x, f, j, 0);
    CHECK(f.margin(0, j).dot(h) == doctest::Approx(ip).epsilon(1e-12));
  }
}

TEST_CASE("back-fitting identity across components") {
  RngStream rng(31);
  TensorShape shape({4, 3, 2});
  const int R = 3;
  ParafacFactors f = random_factors(rng, shape, R);
  std::vector<double> vals(static_cast<size_t>(shape.num_voxels()));
  for (auto& v : vals) v = rng.normal();
  DenseTensor x(shape, vals);
  const double ip = inner_product(x, assemble_parafac(f));
  for (int j = 0; j < 3; ++j) {
    double acc = 0.0;
    for (int r = 0; r < R; ++r) acc += f.margin(r, j).dot(margin_contraction(x, f, j, r));
    CHECK(acc == doctest::Approx(ip).epsilon(1e-10));
  }
}

TEST_CASE("degenerate D=1 tensors work") {
  TensorShape shape({4});
  ParafacFactors f = ParafacFactors::zeros(shape, 2);
  f.margin(0, 0) << 1.0, 2.0, 3.0, 4.0;
  f.margin(1, 0) << 1.0, 1.0, 1.0, 1.0;
  DenseTensor b = assemble_parafac(f);
  CHECK(b[0] == 2.0);
  CHECK(b[3] == 5.0);
  DenseTensor x(shape, {1.0, 0.0, 0.0, 2.0});
  Eigen::VectorXd h = margin_contraction(x, f, 0, 0);
  CHECK(h[0] == 1.0);
  CHECK(h[3] == 2.0);
}

TEST_CASE("canonicalize_report leaves canonical factors unchanged") {
  ParafacFactors f = ParafacFactors::zeros(TensorShape({2, 2}), 2);
  f.margin(0, 0) << 1.0, 2.0;
  f.margin(0, 1) << 5.0, 1.0;
  f.margin(1, 0) << 1.0, -1.0;
  f.margin(1, 1) << 2.0, 3.0;
  ParafacFactors c = canonicalize_report(f);
  for (int r = 0; r < 2; ++r)
    for (int j = 0; j < 2; ++j)
      CHECK((c.margin(r, j) - f.margin(r, j)).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("canonicalize_report undoes scale indeterminacy") {
  RngStream rng(37);
  TensorShape shape({3, 3});
  ParafacFactors f = random_factors(rng, shape, 2);
  ParafacFactors g = f;
  g.margin(0, 0) *= 2.0;
  g.margin(0, 1) *= 0.5;
  ParafacFactors cf = canonicalize_report(f);
  ParafacFactors cg = canonicalize_report(g);
  for (int r = 0; r < 2; ++r)
    for (int j = 0; j < 2; ++j)
      CHECK((cf.margin(r, j) - cg.margin(r, j)).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("canonicalize_report sorts permuted components to one form") {
  RngStream rng(41);
  TensorShape shape({3, 2, 2});
  ParafacFactors f = random_factors(rng, shape, 3);
  ParafacFactors perm = f;
  for (int j = 0; j < 3; ++j) {
    perm.margin(0, j) = f.margin(2, j);
    perm.margin(2, j) = f.margin(0, j);
  }
  ParafacFactors cf = canonicalize_report(f);
  ParafacFactors cp = canonicalize_report(perm);
  DenseTensor bf = assemble_parafac(cf);
  DenseTensor orig = assemble_parafac(f);
  for (int r = 0; r < 3; ++r)
    for (int j = 0; j < 3; ++j)
      CHECK((cf.margin(r, j) - cp.margin(r, j)).lpNorm<Eigen::Infinity>() < 1e-12);
  // assembled tensor preserved to relative Frobenius tolerance
  double diff = 0.0;
  for (std::int64_t v = 0; v < bf.size(); ++v) diff += (bf[v] - orig[v]) * (bf[v] - orig[v]);
  CHECK(std::sqrt(diff) <= 1e-10 * frobenius(orig));
}

TEST_CASE("canonicalize_report error paths") {
  ParafacFactors f = ParafacFactors::zeros(TensorShape({2, 2}), 1);
  f.margin(0, 0) << 0.0, 1.0;  // zero leading element
  f.margin(0, 1) << 1.0, 1.0;
  CHECK_THROWS_AS(canonicalize_report(f), CanonicalizationError);

  ParafacFactors g = ParafacFactors::zeros(TensorShape({2, 2}), 2);
  g.margin(0, 0) << 1.0, 2.0;
  g.margin(0, 1) << 3.0, 1.0;
  g.margin(1, 0) << 2.0, 1.0;
  g.margin(1, 1) << 1.5, 2.0;  // leaders tie after rescale: 3 vs 2*1.5
  CHECK_THROWS_AS(canonicalize_report(g), CanonicalizationError);
}

TEST_CASE("mode permutation equivariance of the algebra") {
  RngStream rng(43);
  TensorShape shape({3, 4});
  ParafacFactors f = random_factors(rng, shape, 2);
  std::vector<double> vals(12);
  for (auto& v : vals) v = rng.normal();
  DenseTensor x(shape, vals);

  // transpose both the tensor and the factor modes
  TensorShape tshape({4, 3});
  std::vector<double> tvals(12);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j)
      tvals[static_cast<size_t>(j + 4 * i)] = vals[static_cast<size_t>(i + 3 * j)];
  DenseTensor xt(tshape, tvals);
  ParafacFactors ft = ParafacFactors::zeros(tshape, 2);
  for (int r = 0; r < 2; ++r) {
    ft.margin(r, 0) = f.margin(r, 1);
    ft.margin(r, 1) = f.margin(r, 0);
  }
  CHECK(inner_product(x, assemble_parafac(f)) ==
        doctest::Approx(inner_product(xt, assemble_parafac(ft))).epsilon(1e-12));
  for (int r = 0; r < 2; ++r) {
    Eigen::VectorXd h0 = margin_contraction(x, f, 0, r);
    Eigen::VectorXd h1 = margin_contraction(xt, ft, 1, r);
    CHECK((h0 - h1).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}
