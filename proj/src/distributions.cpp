#include "tensorreg/distributions.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "tensorreg/errors.hpp"

namespace tensorreg {

namespace {

constexpr double kTinyPositive = 1e-300;
constexpr double kHugePositive = 1e300;

double clamp_positive(double x) { return std::min(std::max(x, kTinyPositive), kHugePositive); }

// --- standardized giG: Z ~ f(z) prop. to z^(lam-1) exp(-(omega/2)(z + 1/z)),
// lam >= 0, omega > 0. All samplers below return log(Z).

// Unnormalized log density of Z.
inline double gig_logf(double lam, double omega, double z) {
  return (lam - 1.0) * std::log(z) - 0.5 * omega * (z + 1.0 / z);
}

// omega*cosh(s) and omega*sinh(s) without overflowing cosh/sinh themselves.
inline double omega_cosh(double omega, double s) {
  const double t = std::log(omega) + std::abs(s) + std::log1p(std::exp(-2.0 * std::abs(s))) -
                   std::numbers::ln2;
  return t > 700.0 ? std::numeric_limits<double>::infinity() : std::exp(t);
}
inline double omega_sinh(double omega, double s) {
  const double as = std::abs(s);
  if (as < 1e-8) return omega * s;
  const double t = std::log(omega) + as + std::log1p(-std::exp(-2.0 * as)) - std::numbers::ln2;
  const double m = t > 700.0 ? std::numeric_limits<double>::infinity() : std::exp(t);
  return s < 0 ? -m : m;
}

// Fallback for parameter corners where the ratio-of-uniforms setups lose
// precision: S = log Z has density prop. to exp(lam*s - omega*cosh(s)), which
// is strictly log-concave for every lam, so a two-tangent piecewise
// exponential hat is always valid. The tangent search only tunes acceptance.
double gig_log_tangent(RngStream& rng, double lam, double omega) {
  const double s_star = std::asinh(lam / omega);
  const double kappa = std::hypot(lam, omega);  // |h''| at the mode
  const double h_star = lam * s_star - omega_cosh(omega, s_star);
  auto hhat = [&](double s) { return lam * s - omega_cosh(omega, s) - h_star; };

  auto find_offset = [&](double sign) {
    double delta = std::min(1.0 / std::sqrt(kappa), std::max(1.0, std::log(4.0 / omega)));
    for (int it = 0; it < 200; ++it) {
      const double v = hhat(s_star + sign * delta);
      if (v < -4.0)
        delta /= 1.7;
      else if (v > -0.25)
        delta *= 1.7;
      else
        break;
    }
    return delta;
  };
  const double s_l = s_star - find_offset(-1.0);
  const double s_r = s_star + find_offset(+1.0);
  const double g_l = lam - omega_sinh(omega, s_l);
  const double g_r = lam - omega_sinh(omega, s_r);
  const double c_l = s_l - hhat(s_l) / g_l;
  const double c_r = s_r - hhat(s_r) / g_r;
  const double area_l = 1.0 / g_l;
  const double area_m = c_r - c_l;
  const double area_r = -1.0 / g_r;
  const double total = area_l + area_m + area_r;

  for (int it = 0; it < 100000; ++it) {
    const double u = rng.uniform() * total;
    double s, hat;
    if (u < area_l) {
      s = c_l + std::log(rng.uniform()) / g_l;
      hat = g_l * (s - c_l);
    } else if (u < area_l + area_m) {
      s = c_l + rng.uniform() * area_m;
      hat = 0.0;
    } else {
      s = c_r + std::log(rng.uniform()) / g_r;
      hat = g_r * (s - c_r);
    }
    if (std::log(rng.uniform()) <= hhat(s) - hat) return s;
  }
  throw NumericalError("sample_gig: tangent sampler failed to accept");
}

// Ratio-of-uniforms with shift by the mode, for lam >= 1 or omega > 1.
// Works in the scaled variable t = z/m so the boundary cubic stays O(1).
double gig_rou_shift(RngStream& rng, double lam, double omega) {
  const double s = (lam - 1.0) + std::hypot(lam - 1.0, omega);  // = omega * mode
  const double log_m = std::log(s) - std::log(omega);
  const double c1 = 2.0 * (lam - 1.0);
  const double c3 = omega * (omega / s);
  // log f(m t) - log f(m), well scaled for any omega
  auto lrel = [&](double t) {
    return (lam - 1.0) * std::log(t) - 0.5 * (s * (t - 1.0) + c3 * (1.0 / t - 1.0));
  };
  // extrema of (t-1)*sqrt(f(mt)): roots of t^3 + a2 t^2 + a1 t + a0
  const double a2 = -(4.0 + c1 + s) / s;
  const double a1 = (c1 - c3) / s;
  const double a0 = c3 / s;
  if (!std::isfinite(a2) || std::abs(a2) > 1e55) return gig_log_tangent(rng, lam, omega);

  const double pc = a1 - a2 * a2 / 3.0;
  const double qc = 2.0 * a2 * a2 * a2 / 27.0 - a2 * a1 / 3.0 + a0;
  if (!(pc < 0.0)) return gig_log_tangent(rng, lam, omega);
  const double fak = 2.0 * std::sqrt(-pc / 3.0);
  double arg = -qc / 2.0 / std::sqrt(-pc * pc * pc / 27.0);
  arg = std::clamp(arg, -1.0, 1.0);
  const double fi = std::acos(arg);
  const double t_plus = fak * std::cos(fi / 3.0) - a2 / 3.0;
  const double t_minus = fak * std::cos(fi / 3.0 + 4.0 * std::numbers::pi / 3.0) - a2 / 3.0;
  if (!(t_minus > 0.0 && t_minus < 1.0 && t_plus > 1.0))
    return gig_log_tangent(rng, lam, omega);

  const double u_plus = (t_plus - 1.0) * std::exp(0.5 * lrel(t_plus));
  const double u_minus = (t_minus - 1.0) * std::exp(0.5 * lrel(t_minus));
  for (int it = 0; it < 100000; ++it) {
    const double u = u_minus + rng.uniform() * (u_plus - u_minus);
    const double v = rng.uniform();
    const double t = u / v + 1.0;
    if (t > 0.0 && 2.0 * std::log(v) <= lrel(t)) return log_m + std::log(t);
  }
  throw NumericalError("sample_gig: ratio-of-uniforms (shift) failed to accept");
}

// Plain ratio-of-uniforms for 0 <= lam < 1 with moderate omega.
double gig_rou_noshift(RngStream& rng, double lam, double omega) {
  const double m = omega / ((1.0 - lam) + std::hypot(1.0 - lam, omega));
  const double lfm = gig_logf(lam, omega, m);
  const double x_u = ((lam + 1.0) + std::hypot(lam + 1.0, omega)) / omega;
  const double u_max = x_u * std::exp(0.5 * (gig_logf(lam, omega, x_u) - lfm));
  for (int it = 0; it < 100000; ++it) {
    const double u = u_max * rng.uniform();
    const double v = rng.uniform();
    const double z = u / v;
    if (2.0 * std::log(v) <= gig_logf(lam, omega, z) - lfm) return std::log(z);
  }
  throw NumericalError("sample_gig: ratio-of-uniforms (no shift) failed to accept");
}

// Piecewise hat rejection for 0 <= lam < 1 and small omega: constant near 0,
// x^(lam-1) body, exponential tail.
double gig_concave(RngStream& rng, double lam, double omega) {
  const double m = omega / ((1.0 - lam) + std::hypot(1.0 - lam, omega));
  const double x0 = omega / (1.0 - lam);
  const double log_k0 = gig_logf(lam, omega, m);
  const double k0 = std::exp(log_k0);
  double a_piece[3];
  double log_k1 = 0.0, log_k2 = 0.0, tail_start = 0.0;
  a_piece[0] = k0 * x0;
  if (x0 >= 2.0 / omega) {
    a_piece[1] = 0.0;
    log_k2 = (lam - 1.0) * std::log(x0);
    tail_start = x0;
    a_piece[2] = std::exp(log_k2) * (2.0 / omega) * std::exp(-omega * x0 / 2.0);
  } else {
    log_k1 = -omega;
    a_piece[1] = (lam == 0.0)
                     ? std::exp(log_k1) * std::log(2.0 / (omega * x0))
                     : std::exp(log_k1) / lam *
                           (std::pow(2.0 / omega, lam) - std::pow(x0, lam));
    log_k2 = (lam - 1.0) * std::log(2.0 / omega);
    tail_start = 2.0 / omega;
    a_piece[2] = std::exp(log_k2) * (2.0 / omega) * std::exp(-1.0);
  }
  const double total = a_piece[0] + a_piece[1] + a_piece[2];
  if (!std::isfinite(total) || total <= 0.0) return gig_log_tangent(rng, lam, omega);

  for (int it = 0; it < 100000; ++it) {
    const double u = rng.uniform() * total;
    double z, log_hat;
    if (u < a_piece[0]) {
      z = x0 * rng.uniform();
      log_hat = log_k0;
    } else if (u < a_piece[0] + a_piece[1]) {
      const double w = rng.uniform();
      z = (lam == 0.0)
              ? x0 * std::pow(2.0 / (omega * x0), w)
              : std::pow(std::pow(x0, lam) +
                             w * (std::pow(2.0 / omega, lam) - std::pow(x0, lam)),
                         1.0 / lam);
      log_hat = log_k1 + (lam - 1.0) * std::log(z);
    } else {
      z = tail_start - (2.0 / omega) * std::log(rng.uniform());
      log_hat = log_k2 - omega * z / 2.0;
    }
    if (std::log(rng.uniform()) <= gig_logf(lam, omega, z) - log_hat) return std::log(z);
  }
  throw NumericalError("sample_gig: concave-hat sampler failed to accept");
}

double gig_log_standardized(RngStream& rng, double lam, double omega) {
  if (lam >= 1.0 || omega > 1.0) return gig_rou_shift(rng, lam, omega);
  if (omega >= std::min(0.5, (2.0 / 3.0) * std::sqrt(1.0 - lam)))
    return gig_rou_noshift(rng, lam, omega);
  return gig_concave(rng, lam, omega);
}

}  // namespace

void GigParams::validate() const {
  if (!std::isfinite(p) || !(a >= 0.0) || !(b >= 0.0) || !std::isfinite(a) || !std::isfinite(b))
    throw DomainError("GigParams: parameters must be finite with a, b >= 0");
  if (a == 0.0 && b == 0.0) throw DomainError("GigParams: a and b cannot both be zero");
  if (a == 0.0 && !(p < 0.0)) throw DomainError("GigParams: a = 0 requires p < 0");
  if (b == 0.0 && !(p > 0.0)) throw DomainError("GigParams: b = 0 requires p > 0");
}

double sample_gamma(RngStream& rng, double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) || !std::isfinite(rate))
    throw DomainError("sample_gamma: shape and rate must be positive");
  if (shape < 1.0) {
    const double u = rng.uniform();
    return clamp_positive(sample_gamma(rng, shape + 1.0, rate) * std::pow(u, 1.0 / shape));
  }
  // Marsaglia-Tsang squeeze
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / (3.0 * std::sqrt(d));
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return clamp_positive(d * v / rate);
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return clamp_positive(d * v / rate);
  }
}

double sample_exponential(RngStream& rng, double rate) {
  if (!(rate > 0.0) || !std::isfinite(rate))
    throw DomainError("sample_exponential: rate must be positive");
  return clamp_positive(-std::log(rng.uniform()) / rate);
}

Eigen::VectorXd sample_dirichlet(RngStream& rng, const Eigen::VectorXd& concentrations) {
  if (concentrations.size() == 0) throw DomainError("sample_dirichlet: empty concentrations");
  Eigen::VectorXd g(concentrations.size());
  for (Eigen::Index i = 0; i < g.size(); ++i) g[i] = sample_gamma(rng, concentrations[i], 1.0);
  g /= g.sum();
  return g;
}

double sample_gig(RngStream& rng, const GigParams& params) {
  params.validate();
  if (params.b == 0.0) return sample_gamma(rng, params.p, params.a / 2.0);
  if (params.a == 0.0) return clamp_positive(1.0 / sample_gamma(rng, -params.p, params.b / 2.0));

  double a = params.a, b = params.b, p = params.p;
  const bool flipped = p < 0.0;
  if (flipped) {
    std::swap(a, b);
    p = -p;
  }
  const double log_eta = 0.5 * (std::log(b) - std::log(a));
  const double omega = std::exp(0.5 * (std::log(a) + std::log(b)));
  const double log_z = gig_log_standardized(rng, p, omega);
  double log_x = log_eta + log_z;
  if (flipped) log_x = -log_x;
  return std::exp(std::clamp(log_x, std::log(kTinyPositive), std::log(kHugePositive)));
}

Eigen::VectorXd sample_normalized_gig(RngStream& rng, const Eigen::VectorXd& p, double a,
                                      const Eigen::VectorXd& b) {
  if (p.size() == 0 || p.size() != b.size())
    throw DomainError("sample_normalized_gig: parameter lists must be non-empty and equal length");
  Eigen::VectorXd t(p.size());
  for (Eigen::Index r = 0; r < p.size(); ++r) {
    double br = b[r];
    if (br < kTinyPositive && p[r] < 0.0) br = kTinyPositive;
    t[r] = std::max(sample_gig(rng, GigParams{p[r], a, br}), kTinyPositive);
  }
  Eigen::VectorXd phi = t / t.sum();
  phi /= phi.sum();
  return phi;
}

Eigen::VectorXd sample_mvn_precision(RngStream& rng, const Eigen::MatrixXd& precision,
                                     const Eigen::VectorXd& linear) {
  if (precision.rows() != precision.cols() || precision.rows() != linear.size())
    throw NumericalError("sample_mvn_precision: dimension mismatch");
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success)
    throw NumericalError("sample_mvn_precision: precision matrix is not positive definite");
  Eigen::VectorXd mean = llt.solve(linear);
  Eigen::VectorXd z(linear.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  // x = mean + U^{-1} z with precision = U'U gives covariance precision^{-1}
  Eigen::VectorXd x = mean + llt.matrixU().solve(z);
  return x;
}

double gamma_p(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw DomainError("gamma_p: invalid arguments");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) {
    // series expansion
    double ap = a, sum = 1.0 / a, del = sum;
    for (int n = 0; n < 1000; ++n) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  return 1.0 - gamma_q(a, x);
}

double gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw DomainError("gamma_q: invalid arguments");
  if (x < a + 1.0) return 1.0 - gamma_p(a, x);
  // Lentz continued fraction
  const double fpmin = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / fpmin, d = 1.0 / b, h = d;
  for (int i = 1; i <= 1000; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < fpmin) d = fpmin;
    c = b + an / c;
    if (std::abs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace tensorreg
