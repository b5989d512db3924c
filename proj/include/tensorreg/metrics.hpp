#pragma once

#include <optional>
#include <vector>

#include "tensorreg/tensor.hpp"

namespace tensorreg {

/// Scores for one estimate against one truth, with nan-free optionals where a
/// voxel group is empty. Group membership uses |truth| > 1e-12.
struct EvalReport {
  std::optional<double> rmse_nonzero;
  std::optional<double> rmse_zero;
  double rmse_overall = 0.0;
  std::optional<double> coverage_nonzero;
  double coverage_overall = 0.0;
  std::optional<double> length_nonzero;
  double mean_length = 0.0;
  bool has_intervals = false;
};

/// Across-replicate mean and n-1 standard deviation per metric.
struct AggregateReport {
  EvalReport mean;
  EvalReport sd;
  int replicates = 0;
};

struct RmseSplit {
  std::optional<double> nonzero;
  std::optional<double> zero;
  double overall = 0.0;
};

RmseSplit rmse_split(const DenseTensor& estimate, const DenseTensor& truth);

struct CoverageResult {
  std::optional<double> coverage_nonzero;
  double coverage_overall = 0.0;
  std::optional<double> length_nonzero;
  double mean_length = 0.0;
};

/// Fraction of voxels whose [lo, hi] interval contains the truth, split by
/// group, plus mean interval width.
CoverageResult coverage_length(const DenseTensor& lower, const DenseTensor& upper,
                               const DenseTensor& truth);

EvalReport evaluate(const DenseTensor& estimate, const DenseTensor& truth);
EvalReport evaluate(const DenseTensor& estimate, const DenseTensor& lower,
                    const DenseTensor& upper, const DenseTensor& truth);

AggregateReport aggregate_replicates(const std::vector<EvalReport>& reports);

}  // namespace tensorreg
