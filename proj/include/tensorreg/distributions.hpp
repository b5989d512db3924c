#pragma once

#include <Eigen/Core>
#include <span>

#include "tensorreg/rng.hpp"

namespace tensorreg {

/// Generalized inverse Gaussian parameters for the density
///   f(x) proportional to x^(p-1) * exp(-(a*x + b/x)/2)  on (0, inf).
/// Valid when not both a and b are zero, a = 0 requires p < 0, and b = 0
/// requires p > 0.
struct GigParams {
  double p = 0.0;
  double a = 0.0;
  double b = 0.0;
  void validate() const;
};

/// Gamma draw, shape/rate parameterization.
double sample_gamma(RngStream& rng, double shape, double rate);

double sample_exponential(RngStream& rng, double rate);

Eigen::VectorXd sample_dirichlet(RngStream& rng, const Eigen::VectorXd& concentrations);

/// giG draw. Ratio-of-uniforms with mode shift for p-heavy regimes, plain
/// ratio-of-uniforms and a concave piecewise hat for the sub-unit regimes,
/// with a log-space tangent sampler as the numerically degenerate fallback.
/// The result is clamped into [1e-300, 1e300].
double sample_gig(RngStream& rng, const GigParams& params);

/// Draws T_r ~ giG(p_r, a, b_r) independently and returns phi_r = T_r / sum T.
/// A b_r below 1e-300 with p_r < 0 is clamped to 1e-300 rather than rejected:
/// this occurs naturally when a component has been annihilated by shrinkage.
Eigen::VectorXd sample_normalized_gig(RngStream& rng, const Eigen::VectorXd& p,
                                      double a, const Eigen::VectorXd& b);

/// Gaussian draw for the density proportional to exp(-x'Qx/2 + x'l): mean
/// Q^{-1} l, covariance Q^{-1}, via one Cholesky factorization of Q. Throws
/// NumericalError when Q is not symmetric positive definite.
Eigen::VectorXd sample_mvn_precision(RngStream& rng, const Eigen::MatrixXd& precision,
                                     const Eigen::VectorXd& linear);

/// Regularized lower/upper incomplete gamma functions P(a,x), Q(a,x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

}  // namespace tensorreg
