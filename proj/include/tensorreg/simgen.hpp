#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>

#include "tensorreg/regression_data.hpp"
#include "tensorreg/rng.hpp"
#include "tensorreg/tensor.hpp"

namespace tensorreg {

enum class ScenarioKind { Generated2d, MaskImage, Case3d1, Case3d2, Case3d3 };

ScenarioKind parse_scenario_kind(const std::string& name);
std::string scenario_kind_name(ScenarioKind kind);

/// Declarative recipe for one simulation scenario.
struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::Generated2d;
  TensorShape shape;            // Generated2d; mask/3d kinds derive their own
  int true_rank = 3;            // Generated2d only
  double sparsity = 0.07;       // target fraction of nonzero voxels
  double max_signal = 1.0;      // bbar = max |B|
  int n = 1000;
  double noise_sd = 1.0;        // sigma_0
  Eigen::VectorXd gamma_true;   // fixed-effect truth; empty means no Z
  std::string mask_path;        // MaskImage only
  std::uint64_t seed = 1;
  void validate() const;
};

struct GeneratedDataset {
  RegressionData data;          // raw (unstandardized) simulated data
  DenseTensor b_true;
  Eigen::VectorXd gamma_true;
  double noise_sd = 1.0;
  double achieved_sparsity = 0.0;
  double max_signal = 0.0;      // realized max |B_true|
  std::string kind;
};

/// Sum of true_rank outer products of contiguous +-1 index runs, rescaled so
/// max |B| = max_signal. Retries placement until the achieved sparsity is
/// within 3 percentage points of the target; throws after 1000 attempts.
DenseTensor gen_rank_r_2d(RngStream& rng, const ScenarioSpec& spec);

/// Thresholds a portable graymap at 50% gray into {0, max_signal}.
DenseTensor load_mask_image(const std::string& path, double max_signal = 1.0);

/// The three deterministic 30x30x30 rank-2 sin/cos truths. Margins are
/// evaluated in double precision, so sine zeros at multiples of pi keep a
/// ~1e-16 residue exactly as an elementwise evaluation of the formulas gives.
DenseTensor gen_3d_case(int case_id);

/// Voxels of each X_i iid N(0,1); y = Z gamma + <X, B> + noise_sd * eps.
/// Z is empty unless spec.gamma_true is non-empty, in which case its columns
/// are a standard normal and a +-1 coded Bernoulli(0.5).
GeneratedDataset simulate_response(RngStream& rng, const DenseTensor& b_true,
                                   const ScenarioSpec& spec);

/// Builds B_true per spec.kind and simulates the dataset.
GeneratedDataset generate_scenario(const ScenarioSpec& spec);

/// Fraction of entries with |b| above the reporting threshold for the kind:
/// strictly nonzero for the 3d cases (matching how the sin/cos formulas are
/// tallied), |b| > 1e-12 otherwise.
double sparsity_fraction(const DenseTensor& b, ScenarioKind kind);

}  // namespace tensorreg
