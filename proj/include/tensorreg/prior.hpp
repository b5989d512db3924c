#pragma once

#include <Eigen/Core>
#include <array>
#include <vector>

#include "tensorreg/distributions.hpp"
#include "tensorreg/rng.hpp"
#include "tensorreg/tensor.hpp"

namespace tensorreg {

/// Hyperparameters of the multiway Dirichlet generalized-double-Pareto prior.
/// Defaults: a_lambda = 3, b_lambda = a_lambda^(1/(2D)), alpha grid of 10
/// equally spaced values on [R^-D, R^-0.10], v = 1. The derived component
/// scales are a_tau(alpha) = R*alpha and b_tau(alpha) = alpha*(R/v)^(1/D);
/// a_tau = sum_r alpha_r must hold exactly for the giG/Dirichlet split of the
/// scale update to be valid.
struct MdgdpHyper {
  int D = 0;
  int R = 0;
  double a_lambda = 3.0;
  double b_lambda = 1.0;
  double v = 1.0;
  std::vector<double> alpha_grid;

  double a_tau(double alpha) const { return R * alpha; }
  double b_tau(double alpha) const;
  void validate() const;
};

MdgdpHyper default_hyper(int D, int R);

/// One realization of every latent scale in the prior.
struct MdgdpState {
  double alpha = 0.0;
  Eigen::VectorXd phi;            // simplex over components
  double tau = 0.0;
  Eigen::MatrixXd lambda;         // D x R rates
  std::vector<Eigen::VectorXd> w; // indexed [r*D + j], length p_j

  Eigen::VectorXd& w_at(int r, int j, int D) { return w[static_cast<size_t>(r) * D + j]; }
  const Eigen::VectorXd& w_at(int r, int j, int D) const {
    return w[static_cast<size_t>(r) * D + j];
  }
};

/// alpha uniform on the grid; Phi ~ Dirichlet(alpha,...); tau ~ Ga(a_tau,b_tau);
/// lambda_jr iid Ga(a_lambda, b_lambda); w_jrk iid Exp(lambda_jr^2 / 2).
MdgdpState sample_prior_state(RngStream& rng, const MdgdpHyper& hyper, const TensorShape& shape);

/// beta_{j,k}^(r) ~ N(0, phi_r * tau * w_{jr,k}) independently.
ParafacFactors sample_prior_margins(RngStream& rng, const MdgdpState& state,
                                    const TensorShape& shape);

struct VarianceBounds {
  double lower = 0.0;
  double upper = 0.0;
};

/// Closed-form bounds on the induced voxel-level prior variance:
/// lower = R alpha^D (2 C_lambda / b_tau)^D,
/// upper = A_tau (2 C_lambda / b_tau)^D exp(alpha R D), with
/// C_lambda = b_lambda^2 / ((a_lambda-1)(a_lambda-2)) and
/// A_tau = exp((D^2 - 3D)/2). Requires D > 1 and a_lambda > 2; the bound is
/// stated for alpha of the form c/R with integer c but remains evaluable for
/// any alpha > 0.
VarianceBounds voxel_variance_bounds(const MdgdpHyper& hyper, double alpha);

struct PriorQuantiles {
  int D = 0;
  int R = 0;
  // |B| quantiles at 5, 25, 50, 75, 95 percent
  std::array<double, 5> q{};
};

/// Monte Carlo quantiles of the absolute induced coefficient at one voxel
/// under defaults with alpha fixed at 1/R, integrating over all latents.
PriorQuantiles induced_prior_quantiles(RngStream& rng, int D, int R, long n_samples);

}  // namespace tensorreg
