#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "tensorreg/errors.hpp"
#include "tensorreg/pgm.hpp"
#include "tensorreg/simgen.hpp"

using namespace tensorreg;

namespace {

ScenarioSpec spec_2d(int p, int rank, double sparsity, std::uint64_t seed) {
  ScenarioSpec s;
  s.kind = ScenarioKind::Generated2d;
  s.shape = TensorShape({p, p});
  s.true_rank = rank;
  s.sparsity = sparsity;
  s.n = 50;
  s.seed = seed;
  return s;
}

double max_abs(const DenseTensor& t) {
  double m = 0.0;
  for (std::int64_t v = 0; v < t.size(); ++v) m = std::max(m, std::abs(t[v]));
  return m;
}

std::string temp_file(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("rank-1 single-voxel construction") {
  // force one-cell runs by asking for the minimum sparsity a 1-voxel run gives
  ScenarioSpec s = spec_2d(8, 1, 1.0 / 64.0, 3);
  RngStream rng(s.seed);
  DenseTensor b = gen_rank_r_2d(rng, s);
  int nonzero = 0;
  for (std::int64_t v = 0; v < b.size(); ++v)
    if (std::abs(b[v]) > 1e-12) ++nonzero;
  CHECK(nonzero >= 1);
  CHECK(sparsity_fraction(b, s.kind) ==
        doctest::Approx(nonzero / 64.0).epsilon(1e-12));
}

TEST_CASE("generated 2d hits the sparsity window with exact parafac rank") {
  ScenarioSpec s = spec_2d(64, 3, 0.07, 11);
  RngStream rng(s.seed);
  DenseTensor b = gen_rank_r_2d(rng, s);
  const double achieved = sparsity_fraction(b, s.kind);
  CHECK(achieved >= 0.04);
  CHECK(achieved <= 0.10);
  CHECK(max_abs(b) == doctest::Approx(1.0).epsilon(1e-12));
  // matrix rank <= 3 via the 4th singular value
  Eigen::MatrixXd m(64, 64);
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 64; ++j) m(i, j) = b[i + 64 * j];
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  CHECK(svd.singularValues()[3] < 1e-10 * svd.singularValues()[0]);
}

TEST_CASE("generated 2d max signal rescale is exact") {
  ScenarioSpec s = spec_2d(16, 2, 0.10, 17);
  s.max_signal = 2.5;
  RngStream rng(s.seed);
  DenseTensor b = gen_rank_r_2d(rng, s);
  CHECK(max_abs(b) == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("generators are deterministic given seed and spec") {
  ScenarioSpec s = spec_2d(16, 3, 0.08, 23);
  GeneratedDataset a = generate_scenario(s);
  GeneratedDataset b = generate_scenario(s);
  CHECK(a.data.y == b.data.y);
  CHECK(a.data.x == b.data.x);
  for (std::int64_t v = 0; v < a.b_true.size(); ++v) CHECK(a.b_true[v] == b.b_true[v]);
}

TEST_CASE("mask image loading") {
  SUBCASE("all-black image gives the zero tensor") {
    PgmImage img;
    img.width = 4;
    img.height = 3;
    img.max_value = 255;
    img.pixels.assign(12, 0);
    const std::string path = temp_file("trg_black.pgm");
    write_pgm(path, img);
    DenseTensor b = load_mask_image(path);
    for (std::int64_t v = 0; v < b.size(); ++v) CHECK(b[v] == 0.0);
    CHECK(b.shape().dim(0) == 3);
    CHECK(b.shape().dim(1) == 4);
  }
  SUBCASE("checkerboard 4x4 has 8 set voxels") {
    PgmImage img;
    img.width = 4;
    img.height = 4;
    img.max_value = 255;
    img.pixels.assign(16, 0);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c)
        if ((r + c) % 2 == 0) img.pixels[static_cast<size_t>(r) * 4 + c] = 255;
    const std::string path = temp_file("trg_checker.pgm");
    write_pgm(path, img);
    DenseTensor b = load_mask_image(path);
    CHECK(sparsity_fraction(b, ScenarioKind::MaskImage) == 0.5);
  }
  SUBCASE("ascii P2 maps pixel fraction exactly") {
    const std::string path = temp_file("trg_ascii.pgm");
    {
      std::ofstream out(path);
      out << "P2\n# comment line\n3 2\n255\n255 0 0\n0 128 0\n";
    }
    DenseTensor b = load_mask_image(path, 2.0);
    // pixels > 127.5: (0,0)=255 and (1,1)=128
    CHECK(b.at(std::vector<int>{0, 0}) == 2.0);
    CHECK(b.at(std::vector<int>{1, 1}) == 2.0);
    CHECK(sparsity_fraction(b, ScenarioKind::MaskImage) == doctest::Approx(2.0 / 6.0));
  }
  SUBCASE("malformed files report byte offsets") {
    const std::string path = temp_file("trg_bad.pgm");
    {
      std::ofstream out(path);
      out << "P5\n4 4\n255\nshort";
    }
    try {
      load_mask_image(path);
      CHECK(false);
    } catch (const InputError& e) {
      CHECK(e.byte_offset() >= 0);
    }
    {
      std::ofstream out(path);
      out << "P7\n4 4\n255\n";
    }
    CHECK_THROWS_AS(load_mask_image(path), InputError);
  }
}

TEST_CASE("3d cases match an independent reimplementation") {
  // second implementation written as literal formula transcription
  const double pi = std::numbers::pi;
  auto oracle = [&](int case_id) {
    std::vector<Eigen::VectorXd> b(3, Eigen::VectorXd::Zero(30)), a(3, Eigen::VectorXd::Zero(30));
    if (case_id == 1) {
      for (int k = 1; k <= 15; ++k) b[0][15 + k - 1] = std::sin(k * pi / 4);
      b[1] = b[0];
      for (int k = 1; k <= 10; ++k) b[2][k - 1] = std::sin(k * pi / 4);
      for (int k = 1; k <= 10; ++k) a[0][20 + k - 1] = std::sin(k * pi / 4);
      for (int k = 1; k <= 15; ++k) a[1][15 + k - 1] = std::cos(k * pi / 4);
      for (int k = 1; k <= 15; ++k) a[2][k - 1] = std::sin(k * pi / 4);
    } else if (case_id == 2) {
      for (int k = 1; k <= 15; ++k) b[0][15 + k - 1] = std::sin(k * pi / 6);
      b[1] = b[0];
      for (int k = 1; k <= 20; ++k) b[2][k - 1] = std::sin(k * pi / 6);
      for (int k = 1; k <= 15; ++k) a[0][15 + k - 1] = std::sin(k * pi / 4);
      for (int k = 1; k <= 10; ++k) a[1][20 + k - 1] = std::cos(k * pi / 6);
      for (int k = 1; k <= 15; ++k) a[2][k - 1] = std::sin(k * pi / 6);
    } else {
      for (int k = 1; k <= 20; ++k) b[0][10 + k - 1] = std::sin(k * pi / 6);
      b[1] = b[0];
      for (int k = 1; k <= 20; ++k) b[2][k - 1] = std::sin(k * pi / 6);
      for (int k = 1; k <= 10; ++k) a[0][20 + k - 1] = std::sin(k * pi / 4);
      for (int k = 1; k <= 20; ++k) a[1][10 + k - 1] = std::cos(k * pi / 4);
      for (int k = 1; k <= 20; ++k) a[2][k - 1] = std::sin(k * pi / 6);
    }
    std::vector<double> vals(27000);
    for (int i3 = 0; i3 < 30; ++i3)
      for (int i2 = 0; i2 < 30; ++i2)
        for (int i1 = 0; i1 < 30; ++i1)
          vals[static_cast<size_t>(i1 + 30 * (i2 + 30 * i3))] =
              b[0][i1] * b[1][i2] * b[2][i3] + a[0][i1] * a[1][i2] * a[2][i3];
    return DenseTensor(TensorShape({30, 30, 30}), vals);
  };
  for (int case_id = 1; case_id <= 3; ++case_id) {
    CAPTURE(case_id);
    DenseTensor got = gen_3d_case(case_id);
    DenseTensor want = oracle(case_id);
    double max_diff = 0.0;
    for (std::int64_t v = 0; v < got.size(); ++v)
      max_diff = std::max(max_diff, std::abs(got[v] - want[v]));
    CHECK(max_diff < 1e-12);
  }
  CHECK_THROWS_AS(gen_3d_case(0), DomainError);
  CHECK_THROWS_AS(gen_3d_case(4), DomainError);
}

TEST_CASE("3d case support counts") {
  // strict-nonzero support from the margin extents:
  // case 1: 15*15*10 + 10*15*15 - 10*15*10 = 3000
  DenseTensor b1 = gen_3d_case(1);
  std::int64_t nz = 0;
  for (std::int64_t v = 0; v < b1.size(); ++v)
    if (b1[v] != 0.0) ++nz;
  CHECK(nz == 3000);
  CHECK(sparsity_fraction(b1, ScenarioKind::Case3d1) == doctest::Approx(3000.0 / 27000.0));
  // case 3 is approximately 30% nonzero
  DenseTensor b3 = gen_3d_case(3);
  CHECK(sparsity_fraction(b3, ScenarioKind::Case3d3) == doctest::Approx(0.296).epsilon(0.01));
}

TEST_CASE("response simulation laws") {
  SUBCASE("pure noise when B and gamma vanish") {
    ScenarioSpec s = spec_2d(4, 1, 0.5, 29);
    s.n = 20000;
    s.noise_sd = 1.7;
    RngStream rng(31);
    GeneratedDataset ds = simulate_response(rng, DenseTensor::zeros(s.shape), s);
    const double var = (ds.data.y.array() - ds.data.y.mean()).square().sum() / (s.n - 1);
    CHECK(var == doctest::Approx(1.7 * 1.7).epsilon(0.05));
  }
  SUBCASE("zero noise gives the exact linear predictor") {
    ScenarioSpec s = spec_2d(3, 1, 0.5, 37);
    s.n = 40;
    s.noise_sd = 0.0;
    std::vector<double> vals(9, 0.0);
    vals[4] = 1.25;
    DenseTensor b(s.shape, vals);
    RngStream rng(41);
    GeneratedDataset ds = simulate_response(rng, b, s);
    for (int i = 0; i < s.n; ++i)
      CHECK(ds.data.y[i] ==
            doctest::Approx(1.25 * ds.data.x[static_cast<size_t>(i) * 9 + 4]).epsilon(1e-12));
  }
  SUBCASE("variance decomposition var(y) = sigma0^2 + ||B||_F^2") {
    ScenarioSpec s = spec_2d(4, 2, 0.4, 43);
    s.n = 4000;
    RngStream truth_rng(47);
    DenseTensor b = gen_rank_r_2d(truth_rng, s);
    double frob2 = 0.0;
    for (std::int64_t v = 0; v < b.size(); ++v) frob2 += b[v] * b[v];
    RngStream rng(53);
    GeneratedDataset ds = simulate_response(rng, b, s);
    const double var = (ds.data.y.array() - ds.data.y.mean()).square().sum() / (s.n - 1);
    CHECK(var == doctest::Approx(1.0 + frob2).epsilon(0.05));
  }
  SUBCASE("fixed effects use a continuous and a sign-coded column") {
    ScenarioSpec s = spec_2d(3, 1, 0.5, 59);
    s.n = 500;
    s.gamma_true = Eigen::VectorXd(2);
    s.gamma_true << 0.5, 2.0;
    RngStream rng(61);
    GeneratedDataset ds = simulate_response(rng, DenseTensor::zeros(s.shape), s);
    CHECK(ds.data.p() == 2);
    for (int i = 0; i < s.n; ++i)
      CHECK(std::abs(std::abs(ds.data.Z(i, 1)) - 1.0) < 1e-12);
  }
}

TEST_CASE("scenario validation") {
  ScenarioSpec s = spec_2d(4, 1, 0.0, 1);
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = spec_2d(4, 1, 0.5, 1);
  s.kind = ScenarioKind::MaskImage;
  CHECK_THROWS_AS(s.validate(), ConfigError);  // missing mask path
  CHECK_THROWS_AS(parse_scenario_kind("nonsense"), ConfigError);
}

TEST_CASE("infeasible sparsity target errors after retries") {
  // on a 4x4 grid the achievable rank-1 rectangle areas skip the 0.33 window
  ScenarioSpec s = spec_2d(4, 1, 0.33, 67);
  RngStream rng(s.seed);
  CHECK_THROWS_AS(gen_rank_r_2d(rng, s), DomainError);
}
