#include "tensorreg/metrics.hpp"

#include <cmath>

#include "tensorreg/errors.hpp"

namespace tensorreg {

namespace {
constexpr double kZeroThreshold = 1e-12;

// mean/sd over replicates of one optional metric
template <typename Get>
void aggregate_metric(const std::vector<EvalReport>& reports, Get get,
                      std::optional<double>& mean_out, std::optional<double>& sd_out) {
  double sum = 0.0;
  int count = 0;
  for (const auto& r : reports) {
    const auto v = get(r);
    if (v.has_value()) {
      sum += *v;
      ++count;
    }
  }
  if (count == 0) {
    mean_out.reset();
    sd_out.reset();
    return;
  }
  const double mean = sum / count;
  double ss = 0.0;
  for (const auto& r : reports) {
    const auto v = get(r);
    if (v.has_value()) ss += (*v - mean) * (*v - mean);
  }
  mean_out = mean;
  sd_out = count > 1 ? std::sqrt(ss / (count - 1)) : 0.0;
}
}  // namespace

RmseSplit rmse_split(const DenseTensor& estimate, const DenseTensor& truth) {
  if (!(estimate.shape() == truth.shape())) throw StructuralError("rmse_split: shape mismatch");
  double ss_nz = 0.0, ss_z = 0.0;
  std::int64_t n_nz = 0, n_z = 0;
  for (std::int64_t v = 0; v < truth.size(); ++v) {
    const double d = estimate[v] - truth[v];
    if (std::abs(truth[v]) > kZeroThreshold) {
      ss_nz += d * d;
      ++n_nz;
    } else {
      ss_z += d * d;
      ++n_z;
    }
  }
  RmseSplit out;
  if (n_nz > 0) out.nonzero = std::sqrt(ss_nz / static_cast<double>(n_nz));
  if (n_z > 0) out.zero = std::sqrt(ss_z / static_cast<double>(n_z));
  out.overall = std::sqrt((ss_nz + ss_z) / static_cast<double>(truth.size()));
  return out;
}

CoverageResult coverage_length(const DenseTensor& lower, const DenseTensor& upper,
                               const DenseTensor& truth) {
  if (!(lower.shape() == truth.shape()) || !(upper.shape() == truth.shape()))
    throw StructuralError("coverage_length: shape mismatch");
  std::int64_t cov_nz = 0, cov_z = 0, n_nz = 0, n_z = 0;
  double len_nz = 0.0, len_all = 0.0;
  for (std::int64_t v = 0; v < truth.size(); ++v) {
    const double lo = lower[v];
    const double hi = upper[v];
    if (!(lo <= hi)) throw StructuralError("coverage_length: interval with lower > upper");
    const bool covers = lo <= truth[v] && truth[v] <= hi;
    len_all += hi - lo;
    if (std::abs(truth[v]) > kZeroThreshold) {
      ++n_nz;
      len_nz += hi - lo;
      if (covers) ++cov_nz;
    } else {
      ++n_z;
      if (covers) ++cov_z;
    }
  }
  CoverageResult out;
  if (n_nz > 0) {
    out.coverage_nonzero = static_cast<double>(cov_nz) / static_cast<double>(n_nz);
    out.length_nonzero = len_nz / static_cast<double>(n_nz);
  }
  out.coverage_overall = static_cast<double>(cov_nz + cov_z) / static_cast<double>(truth.size());
  out.mean_length = len_all / static_cast<double>(truth.size());
  return out;
}

EvalReport evaluate(const DenseTensor& estimate, const DenseTensor& truth) {
  const RmseSplit r = rmse_split(estimate, truth);
  EvalReport out;
  out.rmse_nonzero = r.nonzero;
  out.rmse_zero = r.zero;
  out.rmse_overall = r.overall;
  return out;
}

EvalReport evaluate(const DenseTensor& estimate, const DenseTensor& lower,
                    const DenseTensor& upper, const DenseTensor& truth) {
  EvalReport out = evaluate(estimate, truth);
  const CoverageResult c = coverage_length(lower, upper, truth);
  out.coverage_nonzero = c.coverage_nonzero;
  out.coverage_overall = c.coverage_overall;
  out.length_nonzero = c.length_nonzero;
  out.mean_length = c.mean_length;
  out.has_intervals = true;
  return out;
}

AggregateReport aggregate_replicates(const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw DomainError("aggregate_replicates: no replicates");
  AggregateReport agg;
  agg.replicates = static_cast<int>(reports.size());
  auto plain = [](double EvalReport::*field) {
    return [field](const EvalReport& r) { return std::optional<double>(r.*field); };
  };
  auto opt = [](std::optional<double> EvalReport::*field) {
    return [field](const EvalReport& r) { return r.*field; };
  };
  std::optional<double> m, s;

  aggregate_metric(reports, opt(&EvalReport::rmse_nonzero), agg.mean.rmse_nonzero,
                   agg.sd.rmse_nonzero);
  aggregate_metric(reports, opt(&EvalReport::rmse_zero), agg.mean.rmse_zero, agg.sd.rmse_zero);
  aggregate_metric(reports, plain(&EvalReport::rmse_overall), m, s);
  agg.mean.rmse_overall = m.value();
  agg.sd.rmse_overall = s.value();

  bool any_intervals = false;
  for (const auto& r : reports) any_intervals = any_intervals || r.has_intervals;
  if (any_intervals) {
    aggregate_metric(reports, opt(&EvalReport::coverage_nonzero), agg.mean.coverage_nonzero,
                     agg.sd.coverage_nonzero);
    aggregate_metric(reports, opt(&EvalReport::length_nonzero), agg.mean.length_nonzero,
                     agg.sd.length_nonzero);
    aggregate_metric(reports, plain(&EvalReport::coverage_overall), m, s);
    agg.mean.coverage_overall = m.value();
    agg.sd.coverage_overall = s.value();
    aggregate_metric(reports, plain(&EvalReport::mean_length), m, s);
    agg.mean.mean_length = m.value();
    agg.sd.mean_length = s.value();
    agg.mean.has_intervals = true;
    agg.sd.has_intervals = true;
  }
  return agg;
}

}  // namespace tensorreg
