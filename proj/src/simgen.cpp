#include "tensorreg/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tensorreg/errors.hpp"
#include "tensorreg/pgm.hpp"

namespace tensorreg {

ScenarioKind parse_scenario_kind(const std::string& name) {
  if (name == "generated-2d") return ScenarioKind::Generated2d;
  if (name == "mask-image") return ScenarioKind::MaskImage;
  if (name == "case3d-1") return ScenarioKind::Case3d1;
  if (name == "case3d-2") return ScenarioKind::Case3d2;
  if (name == "case3d-3") return ScenarioKind::Case3d3;
  throw ConfigError("unknown scenario kind: " + name);
}

std::string scenario_kind_name(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::Generated2d: return "generated-2d";
    case ScenarioKind::MaskImage: return "mask-image";
    case ScenarioKind::Case3d1: return "case3d-1";
    case ScenarioKind::Case3d2: return "case3d-2";
    case ScenarioKind::Case3d3: return "case3d-3";
  }
  return "unknown";
}

void ScenarioSpec::validate() const {
  if (!(sparsity > 0.0) || sparsity > 1.0)
    throw ConfigError("ScenarioSpec: sparsity must lie in (0,1]");
  if (!(max_signal > 0.0)) throw ConfigError("ScenarioSpec: max_signal must be positive");
  if (n < 1) throw ConfigError("ScenarioSpec: n must be >= 1");
  if (!(noise_sd >= 0.0)) throw ConfigError("ScenarioSpec: noise_sd must be >= 0");
  if (kind == ScenarioKind::Generated2d) {
    if (shape.order() != 2) throw ConfigError("ScenarioSpec: generated-2d requires a 2-way shape");
    if (true_rank < 1) throw ConfigError("ScenarioSpec: true rank must be >= 1");
  }
  if (kind == ScenarioKind::MaskImage && mask_path.empty())
    throw ConfigError("ScenarioSpec: mask-image requires mask_path");
}

double sparsity_fraction(const DenseTensor& b, ScenarioKind kind) {
  const bool strict = kind == ScenarioKind::Case3d1 || kind == ScenarioKind::Case3d2 ||
                      kind == ScenarioKind::Case3d3;
  std::int64_t nz = 0;
  for (std::int64_t v = 0; v < b.size(); ++v) {
    const double a = std::abs(b[v]);
    if (strict ? (a > 0.0) : (a > 1e-12)) ++nz;
  }
  return static_cast<double>(nz) / static_cast<double>(b.size());
}

DenseTensor gen_rank_r_2d(RngStream& rng, const ScenarioSpec& spec) {
  spec.validate();
  if (spec.kind != ScenarioKind::Generated2d)
    throw ConfigError("gen_rank_r_2d: spec kind must be generated-2d");
  const int p1 = spec.shape.dim(0);
  const int p2 = spec.shape.dim(1);
  const double target_area = spec.sparsity * p1 * p2 / spec.true_rank;
  const double side = std::sqrt(std::max(target_area, 1.0));

  auto run_vector = [&](int p) {
    // contiguous run of +-1 entries, usually sized near sqrt(target area);
    // sometimes fully uniform so every rectangle area stays reachable
    int len;
    if (rng.uniform() < 0.75) {
      len = std::max(
          1, std::min<int>(p, static_cast<int>(std::lround(side * (0.7 + 0.7 * rng.uniform())))));
    } else {
      len = 1 + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(p));
    }
    const int start = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(p - len + 1));
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    Eigen::VectorXd v = Eigen::VectorXd::Zero(p);
    for (int k = 0; k < len; ++k) v[start + k] = sign;
    return v;
  };

  for (int attempt = 0; attempt < 1000; ++attempt) {
    ParafacFactors f = ParafacFactors::zeros(spec.shape, spec.true_rank);
    for (int r = 0; r < spec.true_rank; ++r) {
      f.margin(r, 0) = run_vector(p1);
      f.margin(r, 1) = run_vector(p2);
    }
    DenseTensor b = assemble_parafac(f);
    double maxabs = 0.0;
    for (std::int64_t v = 0; v < b.size(); ++v) maxabs = std::max(maxabs, std::abs(b[v]));
    if (maxabs == 0.0) continue;
    std::vector<double> vals(b.values().begin(), b.values().end());
    for (double& x : vals) x *= spec.max_signal / maxabs;
    DenseTensor scaled(spec.shape, std::move(vals));
    const double achieved = sparsity_fraction(scaled, spec.kind);
    if (std::abs(achieved - spec.sparsity) <= 0.03) return scaled;
  }
  throw DomainError("gen_rank_r_2d: could not hit target sparsity within 1000 attempts");
}

DenseTensor load_mask_image(const std::string& path, double max_signal) {
  PgmImage img = read_pgm(path);
  std::vector<double> vals(static_cast<size_t>(img.width) * img.height, 0.0);
  // tensor mode 1 = image row, mode 2 = image column
  const TensorShape shape({img.height, img.width});
  for (int row = 0; row < img.height; ++row)
    for (int col = 0; col < img.width; ++col) {
      const int pix = img.pixels[static_cast<size_t>(row) * img.width + col];
      if (2 * pix > img.max_value)
        vals[static_cast<size_t>(col) * img.height + row] = max_signal;
    }
  return DenseTensor(shape, std::move(vals));
}

DenseTensor gen_3d_case(int case_id) {
  if (case_id < 1 || case_id > 3) throw DomainError("gen_3d_case: case_id must be 1, 2 or 3");
  const int p = 30;
  const TensorShape shape({p, p, p});
  const double pi = std::numbers::pi;

  // (0,...,0, f(1..len)) or (f(1..len), 0,...,0)
  auto padded = [&](int len, bool leading_zeros, bool use_cos, double denom) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(p);
    for (int k = 1; k <= len; ++k) {
      const double x = k * pi / denom;
      const double val = use_cos ? std::cos(x) : std::sin(x);
      v[leading_zeros ? p - len + (k - 1) : k - 1] = val;
    }
    return v;
  };

  ParafacFactors f = ParafacFactors::zeros(shape, 2);
  switch (case_id) {
    case 1:
      f.margin(0, 0) = padded(15, true, false, 4.0);   // b1
      f.margin(0, 1) = padded(15, true, false, 4.0);   // b2
      f.margin(0, 2) = padded(10, false, false, 4.0);  // b3
      f.margin(1, 0) = padded(10, true, false, 4.0);   // a1
      f.margin(1, 1) = padded(15, true, true, 4.0);    // a2
      f.margin(1, 2) = padded(15, false, false, 4.0);  // a3
      break;
    case 2:
      f.margin(0, 0) = padded(15, true, false, 6.0);
      f.margin(0, 1) = padded(15, true, false, 6.0);
      f.margin(0, 2) = padded(20, false, false, 6.0);
      f.margin(1, 0) = padded(15, true, false, 4.0);
      f.margin(1, 1) = padded(10, true, true, 6.0);
      f.margin(1, 2) = padded(15, false, false, 6.0);
      break;
    case 3:
      f.margin(0, 0) = padded(20, true, false, 6.0);
      f.margin(0, 1) = padded(20, true, false, 6.0);
      f.margin(0, 2) = padded(20, false, false, 6.0);
      f.margin(1, 0) = padded(10, true, false, 4.0);
      f.margin(1, 1) = padded(20, true, true, 4.0);
      f.margin(1, 2) = padded(20, false, false, 6.0);
      break;
  }
  return assemble_parafac(f);
}

GeneratedDataset simulate_response(RngStream& rng, const DenseTensor& b_true,
                                   const ScenarioSpec& spec) {
  const std::int64_t V = b_true.size();
  const int n = spec.n;
  const int p = static_cast<int>(spec.gamma_true.size());
  GeneratedDataset out;
  out.data.n = n;
  out.data.shape = b_true.shape();
  out.data.x.resize(static_cast<size_t>(n) * V);
  out.data.Z.resize(n, p);
  out.data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    double lp = 0.0;
    double* xi = out.data.x.data() + static_cast<size_t>(i) * V;
    for (std::int64_t v = 0; v < V; ++v) {
      xi[v] = rng.normal();
      lp += xi[v] * b_true[v];
    }
    for (int j = 0; j < p; ++j) {
      // column 1: continuous ("age"); column 2: +-1 coded binary ("sex")
      out.data.Z(i, j) = (j == 1) ? (rng.uniform() < 0.5 ? -1.0 : 1.0) : rng.normal();
      lp += out.data.Z(i, j) * spec.gamma_true[j];
    }
    out.data.y[i] = lp + spec.noise_sd * rng.normal();
  }
  out.b_true = b_true;
  out.gamma_true = spec.gamma_true;
  out.noise_sd = spec.noise_sd;
  out.achieved_sparsity = sparsity_fraction(b_true, spec.kind);
  double bbar = 0.0;
  for (std::int64_t v = 0; v < V; ++v) bbar = std::max(bbar, std::abs(b_true[v]));
  out.max_signal = bbar;
  out.kind = scenario_kind_name(spec.kind);
  out.data.validate();
  return out;
}

GeneratedDataset generate_scenario(const ScenarioSpec& spec) {
  spec.validate();
  RngStream rng(spec.seed);
  RngStream truth_rng = rng.substream("truth");
  DenseTensor b_true;
  switch (spec.kind) {
    case ScenarioKind::Generated2d: b_true = gen_rank_r_2d(truth_rng, spec); break;
    case ScenarioKind::MaskImage: b_true = load_mask_image(spec.mask_path, spec.max_signal); break;
    case ScenarioKind::Case3d1: b_true = gen_3d_case(1); break;
    case ScenarioKind::Case3d2: b_true = gen_3d_case(2); break;
    case ScenarioKind::Case3d3: b_true = gen_3d_case(3); break;
  }
  RngStream resp_rng = rng.substream("response");
  return simulate_response(resp_rng, b_true, spec);
}

}  // namespace tensorreg
