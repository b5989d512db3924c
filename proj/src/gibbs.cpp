#include "tensorreg/gibbs.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>
#include <numeric>

#include "tensorreg/distributions.hpp"
#include "tensorreg/errors.hpp"

namespace tensorreg {

namespace {
constexpr double kTiny = 1e-300;

double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * (static_cast<double>(sorted.size()) - 1.0);
  const size_t lo = static_cast<size_t>(pos);
  const size_t hi = std::min(lo + 1, sorted.size() - 1);
  if (sorted[lo] == sorted[hi]) return sorted[lo];
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}
}  // namespace

void FitConfig::validate() const {
  if (rank < 1) throw ConfigError("FitConfig: rank must be >= 1");
  if (iterations < 1 || burn_in < 0 || burn_in >= iterations)
    throw ConfigError("FitConfig: need 0 <= burn_in < iterations");
  if (thin < 1) throw ConfigError("FitConfig: thinning must be >= 1");
  if (griddy_samples < 1) throw ConfigError("FitConfig: griddy sample count must be >= 1");
  if (!(scale_v > 0.0) || !(noise_v > 0.0))
    throw ConfigError("FitConfig: scale_v and noise_v must be positive");
  if (!(fixed_effect_prior_variance > 0.0))
    throw ConfigError("FitConfig: fixed-effect prior variance must be positive");
}

double FitConfig::resolved_s0_sq() const {
  return noise_s0_sq > 0.0 ? noise_s0_sq : calibrate_noise_prior(noise_v);
}

double calibrate_noise_prior(double v, double target_prob) {
  if (!(v > 0.0)) throw DomainError("calibrate_noise_prior: v must be positive");
  if (!(target_prob > 0.0) || !(target_prob < 1.0))
    throw DomainError("calibrate_noise_prior: target probability must lie in (0,1)");
  const double k = v / 2.0;
  // Pr(sigma^2 <= 1) = Q(k, theta) with theta = v*s0^2/2, decreasing in theta.
  double lo = 0.0, hi = 1.0;
  while (gamma_q(k, hi) > target_prob) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (gamma_q(k, mid) > target_prob)
      lo = mid;
    else
      hi = mid;
  }
  return (lo + hi) / v;  // s0^2 = 2*theta/v
}

PosteriorSummary summarize(const Eigen::MatrixXd& draws, const TensorShape& shape) {
  const Eigen::Index K = draws.rows();
  if (K < 1) throw DomainError("summarize: empty chain");
  if (draws.cols() != shape.num_voxels()) throw StructuralError("summarize: draw width != voxels");
  const std::int64_t V = shape.num_voxels();
  std::vector<double> mean(static_cast<size_t>(V)), lo(static_cast<size_t>(V)),
      hi(static_cast<size_t>(V));
  std::vector<double> col(static_cast<size_t>(K));
  for (std::int64_t v = 0; v < V; ++v) {
    for (Eigen::Index k = 0; k < K; ++k) col[static_cast<size_t>(k)] = draws(k, v);
    mean[static_cast<size_t>(v)] =
        std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(K);
    std::sort(col.begin(), col.end());
    lo[static_cast<size_t>(v)] = quantile_sorted(col, 0.025);
    hi[static_cast<size_t>(v)] = quantile_sorted(col, 0.975);
  }
  return PosteriorSummary{DenseTensor(shape, std::move(mean)), DenseTensor(shape, std::move(lo)),
                          DenseTensor(shape, std::move(hi))};
}

double effective_sample_size(const Eigen::VectorXd& series) {
  const Eigen::Index M = series.size();
  if (M < 4) return static_cast<double>(M);
  const double mean = series.mean();
  Eigen::VectorXd c = series.array() - mean;
  const double var = c.squaredNorm() / static_cast<double>(M);
  if (!(var > 0.0)) return static_cast<double>(M);
  auto rho = [&](Eigen::Index k) {
    double s = 0.0;
    for (Eigen::Index i = 0; i + k < M; ++i) s += c[i] * c[i + k];
    return s / (static_cast<double>(M) * var);
  };
  // Geyer initial positive sequence over lag pairs
  double tau = 1.0;
  for (Eigen::Index k = 1; k + 1 < M; k += 2) {
    const double pair = rho(k) + rho(k + 1);
    if (pair <= 0.0) break;
    tau += 2.0 * pair;
  }
  return std::clamp(static_cast<double>(M) / tau, 1.0, static_cast<double>(M));
}

PosteriorSummary PosteriorOutput::original_scale() const {
  if (!fit_standardized) return summary;
  const std::int64_t V = shape.num_voxels();
  std::vector<double> mean(static_cast<size_t>(V)), lo(static_cast<size_t>(V)),
      hi(static_cast<size_t>(V));
  for (std::int64_t v = 0; v < V; ++v) {
    if (record.constant_voxel[static_cast<size_t>(v)]) {
      mean[static_cast<size_t>(v)] = lo[static_cast<size_t>(v)] = hi[static_cast<size_t>(v)] = 0.0;
      continue;
    }
    const double f = record.y_sd / record.x_sd[v];
    mean[static_cast<size_t>(v)] = summary.mean[v] * f;
    lo[static_cast<size_t>(v)] = summary.lower[v] * f;
    hi[static_cast<size_t>(v)] = summary.upper[v] * f;
  }
  return PosteriorSummary{DenseTensor(shape, std::move(mean)), DenseTensor(shape, std::move(lo)),
                          DenseTensor(shape, std::move(hi))};
}

Eigen::VectorXd PosteriorOutput::gamma_mean_original() const {
  if (gamma_draws.cols() == 0) return Eigen::VectorXd();
  Eigen::VectorXd mean = gamma_draws.colwise().mean();
  if (!fit_standardized) return mean;
  for (Eigen::Index j = 0; j < mean.size(); ++j)
    mean[j] *= record.y_sd / record.z_sd[j];
  return mean;
}

GibbsSampler::GibbsSampler(RegressionData data, FitConfig config, MdgdpHyper hyper)
    : data_(std::move(data)),
      config_(std::move(config)),
      hyper_(std::move(hyper)),
      rng_(config_.seed) {
  data_.validate();
  config_.validate();
  hyper_.validate();
  if (hyper_.D != data_.shape.order())
    throw StructuralError("GibbsSampler: hyper D does not match data shape");
  if (hyper_.R != config_.rank) throw StructuralError("GibbsSampler: hyper R != config rank");
  s0_sq_ = config_.resolved_s0_sq();
  p0_ = 0;
  for (int j = 0; j < data_.shape.order(); ++j) p0_ += data_.shape.dim(j);
  const std::int64_t V = data_.num_voxels();
  mode_index_.resize(static_cast<size_t>(data_.shape.order()));
  for (int j = 0; j < data_.shape.order(); ++j) {
    auto& tab = mode_index_[static_cast<size_t>(j)];
    tab.resize(static_cast<size_t>(V));
    const std::int64_t stride = data_.shape.stride(j);
    const int pj = data_.shape.dim(j);
    for (std::int64_t v = 0; v < V; ++v)
      tab[static_cast<size_t>(v)] = static_cast<std::int32_t>((v / stride) % pj);
  }
  weight_buf_.resize(static_cast<size_t>(V));
  init_state();
}

void GibbsSampler::init_state() {
  RngStream init_rng = rng_.substream("init");
  state_.prior = sample_prior_state(init_rng, hyper_, data_.shape);
  // Warm-start margins from a greedy rank-1 deflation of the matched-filter
  // estimate X'y/n. A damped prior draw needs hundreds of sweeps to grow
  // through the shrinkage prior before the chain sees the signal; the warm
  // start removes that transient without touching the stationary law.
  const std::int64_t V = data_.num_voxels();
  const int D = data_.shape.order();
  std::vector<double> residual(static_cast<size_t>(V), 0.0);
  for (int i = 0; i < data_.n; ++i) {
    const double* xi = data_.x.data() + static_cast<size_t>(i) * V;
    for (std::int64_t v = 0; v < V; ++v) residual[static_cast<size_t>(v)] += xi[v] * data_.y[i];
  }
  for (std::int64_t v = 0; v < V; ++v) residual[static_cast<size_t>(v)] /= data_.n;

  state_.factors = ParafacFactors::zeros(data_.shape, config_.rank);
  ParafacFactors rank1 = ParafacFactors::zeros(data_.shape, 1);
  for (int r = 0; r < config_.rank; ++r) {
    for (int j = 0; j < D; ++j) {
      Eigen::VectorXd m(data_.shape.dim(j));
      for (int k = 0; k < m.size(); ++k) m[k] = init_rng.normal();
      rank1.margin(0, j) = m / std::max(m.norm(), 1e-12);
    }
    DenseTensor res_tensor(data_.shape, residual);
    for (int sweep = 0; sweep < 12; ++sweep) {
      for (int j = 0; j < D; ++j) {
        Eigen::VectorXd fiber = margin_contraction(res_tensor, rank1, j, 0);
        const double norm = fiber.norm();
        if (norm <= 1e-12) {
          fiber.setZero();
          fiber[0] = 1.0;
          rank1.margin(0, j) = fiber;
        } else {
          rank1.margin(0, j) = fiber / norm;
        }
      }
    }
    const double weight =
        rank1.margin(0, 0).dot(margin_contraction(res_tensor, rank1, 0, 0));
    const double magnitude = std::pow(std::abs(weight), 1.0 / D);
    for (int j = 0; j < D; ++j) {
      const double scale = (j == 0 && weight < 0.0) ? -magnitude : magnitude;
      state_.factors.margin(r, j) = scale * rank1.margin(0, j);
    }
    DenseTensor fitted = assemble_parafac(rank1);
    for (std::int64_t v = 0; v < V; ++v)
      residual[static_cast<size_t>(v)] -= weight * fitted[v];
  }
  state_.gamma = Eigen::VectorXd::Zero(data_.p());
  state_.sigma_sq = 1.0;
  rebuild_caches();
}

void GibbsSampler::set_state(const ChainState& state) {
  state_ = state;
  rebuild_caches();
}

void GibbsSampler::set_response(const Eigen::VectorXd& y) {
  if (y.size() != data_.n) throw StructuralError("set_response: length mismatch");
  data_.y = y;
  rebuild_caches();
}

void GibbsSampler::rebuild_caches() {
  const int n = data_.n;
  const int R = config_.rank;
  const std::int64_t V = data_.num_voxels();
  comp_lp_.resize(n, R);
  for (int r = 0; r < R; ++r) {
    // rank-1 voxel weights for component r
    for (std::int64_t v = 0; v < V; ++v) {
      double w = 1.0;
      for (int j = 0; j < data_.shape.order(); ++j)
        w *= state_.factors.margin(r, j)[mode_index_[static_cast<size_t>(j)][static_cast<size_t>(v)]];
      weight_buf_[static_cast<size_t>(v)] = w;
    }
    for (int i = 0; i < n; ++i) {
      const double* xi = data_.x.data() + static_cast<size_t>(i) * V;
      double s = 0.0;
      for (std::int64_t v = 0; v < V; ++v) s += xi[v] * weight_buf_[static_cast<size_t>(v)];
      comp_lp_(i, r) = s;
    }
  }
  zgamma_ = data_.p() > 0 ? Eigen::VectorXd(data_.Z * state_.gamma)
                          : Eigen::VectorXd(Eigen::VectorXd::Zero(n));
  resid_ = data_.y - zgamma_ - comp_lp_.rowwise().sum();
}

void GibbsSampler::build_contraction(int r, int j, Eigen::MatrixXd& h) {
  const int n = data_.n;
  const std::int64_t V = data_.num_voxels();
  const int pj = data_.shape.dim(j);
  const int D = data_.shape.order();
  auto& wbuf = weight_buf_;
  for (std::int64_t v = 0; v < V; ++v) {
    double w = 1.0;
    for (int l = 0; l < D; ++l)
      if (l != j)
        w *= state_.factors.margin(r, l)[mode_index_[static_cast<size_t>(l)][static_cast<size_t>(v)]];
    wbuf[static_cast<size_t>(v)] = w;
  }
  h.setZero(n, pj);
  const auto& idx = mode_index_[static_cast<size_t>(j)];
  for (int i = 0; i < n; ++i) {
    const double* xi = data_.x.data() + static_cast<size_t>(i) * V;
    double* hi = h.data() + i;  // column-major: h(i,k) at hi[k*n]
    for (std::int64_t v = 0; v < V; ++v)
      hi[static_cast<std::int64_t>(idx[static_cast<size_t>(v)]) * n] +=
          xi[v] * wbuf[static_cast<size_t>(v)];
  }
}

void GibbsSampler::step_alpha_phi_tau() {
  const int R = config_.rank;
  const int D = data_.shape.order();
  // S_r = sum_j beta_j' W_jr^{-1} beta_j
  Eigen::VectorXd S = Eigen::VectorXd::Zero(R);
  for (int r = 0; r < R; ++r)
    for (int j = 0; j < D; ++j) {
      const Eigen::VectorXd& beta = state_.factors.margin(r, j);
      const Eigen::VectorXd& w = state_.prior.w_at(r, j, D);
      for (int k = 0; k < beta.size(); ++k) S[r] += beta[k] * beta[k] / std::max(w[k], kTiny);
    }

  // (1a) griddy-Gibbs over the alpha grid: simple Monte Carlo estimate of the
  // marginal margin-likelihood under each grid value.
  const int G = static_cast<int>(hyper_.alpha_grid.size());
  if (G > 1) {
    const int M = config_.griddy_samples;
    Eigen::VectorXd logp(G);
    for (int g = 0; g < G; ++g) {
      const double alpha = hyper_.alpha_grid[static_cast<size_t>(g)];
      const double a_t = hyper_.a_tau(alpha);
      const double b_t = hyper_.b_tau(alpha);
      const Eigen::VectorXd conc = Eigen::VectorXd::Constant(R, alpha);
      double lse = -std::numeric_limits<double>::infinity();
      std::vector<double> logw(static_cast<size_t>(M));
      for (int l = 0; l < M; ++l) {
        const Eigen::VectorXd phi = sample_dirichlet(rng_, conc);
        const double tau = sample_gamma(rng_, a_t, b_t);
        double lw = 0.0;
        for (int r = 0; r < R; ++r) {
          const double t = std::max(phi[r] * tau, kTiny);
          lw += -(p0_ / 2.0) * std::log(t) - S[r] / (2.0 * t);
        }
        logw[static_cast<size_t>(l)] = lw;
      }
      const double mx = *std::max_element(logw.begin(), logw.end());
      double acc = 0.0;
      for (double lw : logw) acc += std::exp(lw - mx);
      lse = mx + std::log(acc / M);
      logp[g] = lse;
    }
    const double mx = logp.maxCoeff();
    if (!std::isfinite(mx)) {
      std::cerr << "tensorreg: warning: all griddy-Gibbs weights underflowed; "
                   "redrawing alpha uniformly\n";
      griddy_probs_ = Eigen::VectorXd::Constant(G, 1.0 / G);
    } else {
      griddy_probs_ = (logp.array() - mx).exp();
      griddy_probs_ /= griddy_probs_.sum();
    }
    double u = rng_.uniform();
    int pick = G - 1;
    for (int g = 0; g < G; ++g) {
      u -= griddy_probs_[g];
      if (u <= 0.0) {
        pick = g;
        break;
      }
    }
    state_.prior.alpha = hyper_.alpha_grid[static_cast<size_t>(pick)];
  } else {
    griddy_probs_ = Eigen::VectorXd::Ones(1);
    state_.prior.alpha = hyper_.alpha_grid[0];
  }

  // (1b) Phi via normalized giG, then tau.
  const double alpha = state_.prior.alpha;
  const double b_t = hyper_.b_tau(alpha);
  const Eigen::VectorXd p_vec = Eigen::VectorXd::Constant(R, alpha - p0_ / 2.0);
  state_.prior.phi = sample_normalized_gig(rng_, p_vec, 2.0 * b_t, S);
  double sum_d = 0.0;
  for (int r = 0; r < R; ++r) sum_d += S[r] / std::max(state_.prior.phi[r], kTiny);
  GigParams tau_params{hyper_.a_tau(alpha) - R * p0_ / 2.0, 2.0 * b_t, sum_d};
  if (tau_params.b < kTiny && tau_params.p < 0.0) tau_params.b = kTiny;
  state_.prior.tau = sample_gig(rng_, tau_params);
}

void GibbsSampler::step_margin_scales(int component, int mode) {
  const int D = data_.shape.order();
  const int pj = data_.shape.dim(mode);
  const double t_r = std::max(state_.prior.phi[component] * state_.prior.tau, kTiny);
  const Eigen::VectorXd& beta = state_.factors.margin(component, mode);
  // (2a) lambda from the collapsed double-exponential margin, then the local
  // scales given lambda.
  const double lam = sample_gamma(
      rng_, hyper_.a_lambda + pj, hyper_.b_lambda + beta.lpNorm<1>() / std::sqrt(t_r));
  state_.prior.lambda(mode, component) = lam;
  Eigen::VectorXd& w = state_.prior.w_at(component, mode, D);
  for (int k = 0; k < pj; ++k)
    w[k] = sample_gig(rng_, GigParams{0.5, lam * lam, beta[k] * beta[k] / t_r});
}

void GibbsSampler::step_margin_beta(int component, int mode, const Eigen::VectorXd& ytilde) {
  const int D = data_.shape.order();
  const int pj = data_.shape.dim(mode);
  const double t_r = std::max(state_.prior.phi[component] * state_.prior.tau, kTiny);
  const Eigen::VectorXd& w = state_.prior.w_at(component, mode, D);
  // (2b) Gaussian margin draw in precision form.
  Eigen::MatrixXd h;
  build_contraction(component, mode, h);
  Eigen::MatrixXd precision = h.transpose() * h / state_.sigma_sq;
  for (int k = 0; k < pj; ++k) precision(k, k) += 1.0 / std::max(w[k] * t_r, kTiny);
  const Eigen::VectorXd linear = h.transpose() * ytilde / state_.sigma_sq;
  try {
    state_.factors.margin(component, mode) = sample_mvn_precision(rng_, precision, linear);
  } catch (const NumericalError& e) {
    throw NumericalError("step_margins: margin (mode " + std::to_string(mode + 1) +
                         ", component " + std::to_string(component + 1) + "): " + e.what());
  }
  if (mode == D - 1) {
    comp_lp_.col(component) = h * state_.factors.margin(component, mode);
  }
}

void GibbsSampler::step_margins() {
  const int R = config_.rank;
  const int D = data_.shape.order();
  for (int r = 0; r < R; ++r) {
    const Eigen::VectorXd ytilde = resid_ + comp_lp_.col(r);
    for (int j = 0; j < D; ++j) {
      step_margin_scales(r, j);
      step_margin_beta(r, j, ytilde);
    }
    // step_margin_beta refreshed <X_i, B_r> from the last-mode contraction
    resid_ = ytilde - comp_lp_.col(r);
  }
}

void GibbsSampler::step_gamma_sigma() {
  const int n = data_.n;
  const int p = data_.p();
  const double v = config_.noise_v;
  Eigen::VectorXd ytilde = data_.y - comp_lp_.rowwise().sum();
  double b_sigma;
  Eigen::VectorXd mu;
  Eigen::LLT<Eigen::MatrixXd> llt;
  if (p > 0) {
    Eigen::MatrixXd prec = data_.Z.transpose() * data_.Z;
    prec.diagonal().array() += 1.0 / config_.fixed_effect_prior_variance;
    llt.compute(prec);
    if (llt.info() != Eigen::Success)
      throw NumericalError("step_gamma_sigma: Z'Z + prior precision not positive definite");
    mu = llt.solve(data_.Z.transpose() * ytilde);
    b_sigma = (v * s0_sq_ + ytilde.squaredNorm() - ytilde.dot(data_.Z * mu)) / 2.0;
  } else {
    b_sigma = (v * s0_sq_ + ytilde.squaredNorm()) / 2.0;
  }
  const double a_sigma = (n + v) / 2.0;
  state_.sigma_sq = 1.0 / sample_gamma(rng_, a_sigma, std::max(b_sigma, kTiny));
  if (p > 0) {
    Eigen::VectorXd z(p);
    for (int j = 0; j < p; ++j) z[j] = rng_.normal();
    state_.gamma = mu + std::sqrt(state_.sigma_sq) * llt.matrixU().solve(z);
    zgamma_ = data_.Z * state_.gamma;
  }
  resid_ = ytilde - zgamma_;
}

void GibbsSampler::sweep() {
  step_alpha_phi_tau();
  step_margins();
  step_gamma_sigma();
}

double GibbsSampler::residual_drift() const {
  const std::int64_t V = data_.num_voxels();
  DenseTensor b = assemble_parafac(state_.factors);
  double drift = 0.0;
  for (int i = 0; i < data_.n; ++i) {
    const double* xi = data_.x.data() + static_cast<size_t>(i) * V;
    double lp = 0.0;
    for (std::int64_t v = 0; v < V; ++v) lp += xi[v] * b[v];
    const double fresh = data_.y[i] - zgamma_[i] - lp;
    drift = std::max(drift, std::abs(fresh - resid_[i]));
  }
  return drift;
}

double GibbsSampler::log_likelihood() const {
  const double s2 = state_.sigma_sq;
  return -0.5 * data_.n * std::log(2.0 * std::numbers::pi * s2) -
         0.5 * resid_.squaredNorm() / s2;
}

PosteriorOutput GibbsSampler::run(const ProgressFn& progress) {
  const int K = (config_.iterations - config_.burn_in) / config_.thin;
  const std::int64_t V = data_.num_voxels();
  PosteriorOutput out;
  out.shape = data_.shape;
  out.b_draws.resize(K, V);
  out.gamma_draws.resize(K, data_.p());
  out.sigma_sq_draws.resize(K);
  out.alpha_draws.resize(K);
  out.tau_draws.resize(K);
  out.phi_draws.resize(K, config_.rank);
  int k = 0;
  for (int it = 1; it <= config_.iterations; ++it) {
    try {
      sweep();
    } catch (const NumericalError& e) {
      throw NumericalError("iteration " + std::to_string(it) + ": " + e.what());
    }
    if (it > config_.burn_in && (it - config_.burn_in) % config_.thin == 0 && k < K) {
      const DenseTensor b = assemble_parafac(state_.factors);
      for (std::int64_t v = 0; v < V; ++v) out.b_draws(k, v) = b[v];
      out.gamma_draws.row(k) = state_.gamma.transpose();
      out.sigma_sq_draws[k] = state_.sigma_sq;
      out.alpha_draws[k] = state_.prior.alpha;
      out.tau_draws[k] = state_.prior.tau;
      out.phi_draws.row(k) = state_.prior.phi.transpose();
      ++k;
    }
    if (progress && (it % 10 == 0 || it == config_.iterations))
      progress(it, log_likelihood(), state_.sigma_sq, state_.prior.alpha);
  }
  out.summary = summarize(out.b_draws, data_.shape);
  out.fit_standardized = data_.standardized;
  out.record = data_.record;
  out.ess["sigma_sq"] = effective_sample_size(out.sigma_sq_draws);
  out.ess["tau"] = effective_sample_size(out.tau_draws);
  out.ess["alpha"] = effective_sample_size(out.alpha_draws);
  // mean ESS over a spread of voxels
  double acc = 0.0;
  int cnt = 0;
  const std::int64_t step = std::max<std::int64_t>(1, V / 16);
  for (std::int64_t v = 0; v < V; v += step) {
    acc += effective_sample_size(out.b_draws.col(v));
    ++cnt;
  }
  out.ess["B"] = acc / cnt;
  return out;
}

PosteriorOutput run_chain(const RegressionData& raw, const FitConfig& config,
                          const MdgdpHyper& hyper, const GibbsSampler::ProgressFn& progress) {
  GibbsSampler sampler(standardize_data(raw), config, hyper);
  return sampler.run(progress);
}

}  // namespace tensorreg
