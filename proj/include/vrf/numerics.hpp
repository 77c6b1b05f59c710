#pragma once
// Gaussian algebra and the independent numerical oracles used to verify every
// closed-form expression in the model. All functions are pure; summations run
// in a fixed left-to-right order for determinism.

#include <span>

#include "vrf/gaussian.hpp"

namespace vrf {

// Squared Wasserstein-2 distance between diagonal Gaussians, normalized by
// dimension: (1/D)(sum_d (mu_q-mu_p)^2 + sum_d (std_q-std_p)^2).
double w2_squared(const DiagonalGaussian& q, const DiagonalGaussian& p);

// Product-of-Gaussians fusion: precisions add, the mean is precision-weighted.
//   mean = (sum_i mu_i / std_i^2) / (sum_i 1/std_i^2),  var = 1/(sum_i 1/std_i^2)
// Errors on an empty list; callers own the fallback policy.
DiagonalGaussian pog_aggregate(std::span<const DiagonalGaussian> observations);

// Closed-form approximation of E[sigmoid(z)], z ~ N(mu, var):
// sigmoid(mu / sqrt(1 + pi*var/8)).
double mackay_prob(double mu_delta, double var_delta);

// Trapezoid-rule oracle for E[sigmoid(z)], z ~ N(mu, var), integrating over
// mu +- 10*sqrt(var) with `nodes` points. var = 0 degenerates to sigmoid(mu).
double quadrature_expect_sigmoid(double mu, double var, int nodes = 20001);

// log N(z; mean, diag(std^2)).
double gauss_logpdf(std::span<const double> z, const DiagonalGaussian& g);

// log of the uniform mixture density: logsumexp_k log N(z; p_k) - log K.
double mog_logdensity(std::span<const double> z, const MixturePrior& prior);

// Closed-form KL(q || p) between diagonal Gaussians.
double kl_diag_closed(const DiagonalGaussian& q, const DiagonalGaussian& p);

// Differential entropy: 0.5 * sum_d (1 + log 2pi + log std[d]^2).
double entropy_diag(const DiagonalGaussian& g);

}  // namespace vrf
