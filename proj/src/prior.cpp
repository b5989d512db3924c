#include "tensorreg/prior.hpp"

#include <algorithm>
#include <cmath>

#include "tensorreg/errors.hpp"

namespace tensorreg {

double MdgdpHyper::b_tau(double alpha) const {
  return alpha * std::pow(static_cast<double>(R) / v, 1.0 / D);
}

void MdgdpHyper::validate() const {
  if (D < 1 || R < 1) throw DomainError("MdgdpHyper: D and R must be >= 1");
  if (!(a_lambda > 2.0)) throw DomainError("MdgdpHyper: a_lambda must exceed 2");
  if (!(b_lambda > 0.0) || !(v > 0.0)) throw DomainError("MdgdpHyper: b_lambda, v must be positive");
  if (alpha_grid.empty()) throw DomainError("MdgdpHyper: empty alpha grid");
  for (double a : alpha_grid)
    if (!(a > 0.0) || a > 1.0) throw DomainError("MdgdpHyper: alpha grid values must lie in (0,1]");
}

MdgdpHyper default_hyper(int D, int R) {
  if (D < 1 || R < 1) throw DomainError("default_hyper: D and R must be >= 1");
  MdgdpHyper h;
  h.D = D;
  h.R = R;
  h.a_lambda = 3.0;
  h.b_lambda = std::pow(h.a_lambda, 1.0 / (2.0 * D));
  h.v = 1.0;
  const double lo = std::pow(static_cast<double>(R), -static_cast<double>(D));
  const double hi = std::pow(static_cast<double>(R), -0.10);
  if (lo == hi) {
    h.alpha_grid = {lo};
  } else {
    h.alpha_grid.resize(10);
    for (int i = 0; i < 10; ++i) h.alpha_grid[static_cast<size_t>(i)] = lo + (hi - lo) * i / 9.0;
  }
  return h;
}

MdgdpState sample_prior_state(RngStream& rng, const MdgdpHyper& hyper, const TensorShape& shape) {
  hyper.validate();
  if (shape.order() != hyper.D) throw StructuralError("sample_prior_state: shape order != D");
  MdgdpState s;
  const size_t g = static_cast<size_t>(rng.next_u64() % hyper.alpha_grid.size());
  s.alpha = hyper.alpha_grid[g];
  s.phi = sample_dirichlet(rng, Eigen::VectorXd::Constant(hyper.R, s.alpha));
  s.tau = sample_gamma(rng, hyper.a_tau(s.alpha), hyper.b_tau(s.alpha));
  s.lambda.resize(hyper.D, hyper.R);
  s.w.resize(static_cast<size_t>(hyper.D) * hyper.R);
  for (int r = 0; r < hyper.R; ++r)
    for (int j = 0; j < hyper.D; ++j) {
      const double lam = sample_gamma(rng, hyper.a_lambda, hyper.b_lambda);
      s.lambda(j, r) = lam;
      Eigen::VectorXd wv(shape.dim(j));
      for (int k = 0; k < shape.dim(j); ++k) wv[k] = sample_exponential(rng, lam * lam / 2.0);
      s.w_at(r, j, hyper.D) = std::move(wv);
    }
  return s;
}

ParafacFactors sample_prior_margins(RngStream& rng, const MdgdpState& state,
                                    const TensorShape& shape) {
  const int D = shape.order();
  const int R = static_cast<int>(state.phi.size());
  ParafacFactors f = ParafacFactors::zeros(shape, R);
  for (int r = 0; r < R; ++r) {
    const double scale = std::max(state.phi[r] * state.tau, 1e-300);
    for (int j = 0; j < D; ++j) {
      Eigen::VectorXd m(shape.dim(j));
      const Eigen::VectorXd& wv = state.w_at(r, j, D);
      for (int k = 0; k < shape.dim(j); ++k) m[k] = rng.normal() * std::sqrt(scale * wv[k]);
      f.margin(r, j) = std::move(m);
    }
  }
  return f;
}

VarianceBounds voxel_variance_bounds(const MdgdpHyper& hyper, double alpha) {
  if (hyper.D <= 1) throw DomainError("voxel_variance_bounds: requires D > 1");
  if (!(hyper.a_lambda > 2.0))
    throw DomainError("voxel_variance_bounds: C_lambda requires a_lambda > 2");
  if (!(alpha > 0.0)) throw DomainError("voxel_variance_bounds: alpha must be positive");
  const double c_lambda =
      hyper.b_lambda * hyper.b_lambda / ((hyper.a_lambda - 1.0) * (hyper.a_lambda - 2.0));
  const double a_tau_const = std::exp((hyper.D * hyper.D - 3.0 * hyper.D) / 2.0);
  const double ratio = 2.0 * c_lambda / hyper.b_tau(alpha);
  VarianceBounds b;
  b.lower = hyper.R * std::pow(alpha, hyper.D) * std::pow(ratio, hyper.D);
  b.upper = a_tau_const * std::pow(ratio, hyper.D) * std::exp(alpha * hyper.R * hyper.D);
  return b;
}

PriorQuantiles induced_prior_quantiles(RngStream& rng, int D, int R, long n_samples) {
  if (n_samples < 1) throw DomainError("induced_prior_quantiles: n_samples must be positive");
  MdgdpHyper hyper = default_hyper(D, R);
  const double alpha = 1.0 / R;
  const double a_tau = hyper.a_tau(alpha);
  const double b_tau = hyper.b_tau(alpha);
  std::vector<double> abs_b(static_cast<size_t>(n_samples));
  const Eigen::VectorXd conc = Eigen::VectorXd::Constant(R, alpha);
  for (long i = 0; i < n_samples; ++i) {
    const Eigen::VectorXd phi = sample_dirichlet(rng, conc);
    const double tau = sample_gamma(rng, a_tau, b_tau);
    double voxel = 0.0;
    for (int r = 0; r < R; ++r) {
      double prod = 1.0;
      for (int j = 0; j < D; ++j) {
        const double lam = sample_gamma(rng, hyper.a_lambda, hyper.b_lambda);
        const double w = sample_exponential(rng, lam * lam / 2.0);
        prod *= rng.normal() * std::sqrt(std::max(phi[r] * tau, 1e-300) * w);
      }
      voxel += prod;
    }
    abs_b[static_cast<size_t>(i)] = std::abs(voxel);
  }
  std::sort(abs_b.begin(), abs_b.end());
  auto quantile = [&](double q) {
    const double pos = q * (static_cast<double>(abs_b.size()) - 1.0);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, abs_b.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return abs_b[lo] * (1.0 - frac) + abs_b[hi] * frac;
  };
  PriorQuantiles out;
  out.D = D;
  out.R = R;
  out.q = {quantile(0.05), quantile(0.25), quantile(0.50), quantile(0.75), quantile(0.95)};
  return out;
}

}  // namespace tensorreg
