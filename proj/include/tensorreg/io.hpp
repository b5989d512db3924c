#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tensorreg/gibbs.hpp"
#include "tensorreg/lasso.hpp"
#include "tensorreg/metrics.hpp"
#include "tensorreg/simgen.hpp"

namespace tensorreg {

/// A run = scenario + fit schedule + methods + replicates, read from a JSON
/// config (schema_version 1) with CLI overrides applied on top.
struct RunConfig {
  ScenarioSpec scenario;
  FitConfig fit;
  std::vector<std::string> methods{"mdgdp", "lasso"};
  int replicates = 1;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  void validate() const;
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
nlohmann::json run_config_to_json(const RunConfig& config);

// ---- named-array container ---------------------------------------------
// Binary layout: 8-byte magic "TRNMAT01", u32 little-endian header length,
// header JSON (meta + group table), then per group rows*cols doubles,
// little-endian, column-major.

struct NamedArrayView {
  std::string name;
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::span<const double> data;
};

struct LoadedArrays {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Eigen::MatrixXd>> arrays;
  const Eigen::MatrixXd& at(const std::string& name) const;
  bool has(const std::string& name) const;
};

/// Atomic write (temp file + rename).
void write_named_arrays(const std::string& path, const nlohmann::json& meta,
                        const std::vector<NamedArrayView>& groups);
LoadedArrays read_named_arrays(const std::string& path);

// ---- dataset / fit-result persistence ------------------------------------

void save_dataset(const std::string& path, const GeneratedDataset& dataset,
                  std::uint64_t seed);
GeneratedDataset load_dataset(const std::string& path);

void save_posterior(const std::string& path, const PosteriorOutput& output,
                    const nlohmann::json& fit_meta);
PosteriorOutput load_posterior(const std::string& path);

void save_lasso(const std::string& path, const LassoFit& fit, const DenseTensor& coef_tensor,
                const nlohmann::json& meta);
/// Returns the original-scale coefficient tensor plus fit metadata.
std::pair<DenseTensor, nlohmann::json> load_lasso(const std::string& path);

// ---- rendering ------------------------------------------------------------

/// Renders a tensor slice (2D) to an 8-bit graymap with the symmetric linear
/// scale [-limit, limit]: pixel = floor(255.9999 * (v + limit) / (2*limit)).
/// Zero maps to mid-gray 127.
void render_tensor_2d(const std::string& path, const DenseTensor& t, double limit);

/// Renders truth and estimate with a shared scale; 3D tensors emit one image
/// per slice along the last mode. A sidecar .txt records the value range.
void cmd_render_pair(const std::string& out_prefix_truth, const std::string& out_prefix_estimate,
                     const DenseTensor& truth, const DenseTensor& estimate);

// ---- commands -------------------------------------------------------------

void cmd_simulate(const RunConfig& config, bool force);
void cmd_fit(const RunConfig& config, bool force);
void cmd_eval(const RunConfig& config, bool force);
void cmd_render(const RunConfig& config, bool force);
void cmd_prior_table(int D, const std::vector<int>& ranks, long n_samples,
                     std::uint64_t seed, const std::string& out_path, bool force);

/// Honors the TENSORREG_THREADS environment variable (>= 1).
int configured_thread_count();

std::string dataset_path(const RunConfig& config, int replicate);
std::string chain_path(const RunConfig& config, int replicate, const std::string& method);

}  // namespace tensorreg
