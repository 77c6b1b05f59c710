#pragma once
// The K learnable probabilistic preference bases: initialization, the
// Wasserstein-softmax user-weight derivation, and the pairwise separation
// loss that keeps the bases apart.

#include <cstdint>
#include <span>
#include <vector>

#include "vrf/encoder.hpp"
#include "vrf/gaussian.hpp"
#include "vrf/param_store.hpp"

namespace vrf {

struct BasisShape {
  std::size_t count = 8;   // K
  std::size_t latent = 64; // D
  double tau_d = 1.0;      // assignment temperature
  double tau_m = 1.0;      // separation margin
};

// Materialized view of the basis entries ("bases.mean.k" / "bases.std_raw.k",
// std = softplus(raw) + 1e-4) together with the two temperatures.
struct PreferenceBasisSet {
  std::vector<DiagonalGaussian> bases;
  double tau_d = 1.0;
  double tau_m = 1.0;

  static PreferenceBasisSet from_store(const ParamStore& store,
                                       const BasisShape& shape);
  MixturePrior prior() const { return MixturePrior(bases); }
  std::size_t count() const { return bases.size(); }
  std::size_t latent() const { return bases.front().dim(); }
};

// A point on the (K-1)-simplex plus the scalar uncertainty of the user it
// was derived from (mean of the user's std across dimensions).
struct UserWeights {
  std::vector<double> w;
  double mean_uncertainty = 0.0;
};

// Means i.i.d. N(0,1); raw stds set so that softplus(raw) + 1e-4 == 1.0.
void init_bases(ParamStore& store, const BasisShape& shape, std::uint64_t seed);

// w_k = softmax_k(-W2^2(q, p_k) / tau_d).
UserWeights derive_weights(const DiagonalGaussian& q,
                           const PreferenceBasisSet& bases);

// sum over the given squared distances of max(0, margin - d2). Factored out
// so the hinge arithmetic is testable on arbitrary distance lists.
double separation_penalty(std::span<const double> pairwise_sq, double margin);

// sum_{i<j} max(0, tau_m - W2^2(p_i, p_j)); zero iff every pair is separated
// by at least the margin.
double separation_loss(const PreferenceBasisSet& bases);

namespace graph {

// std nodes are softplus(raw) + 1e-4, matching the plain view.
GaussNodes basis_nodes(ad::Tape& tape, const BoundParams& params,
                       std::size_t k, std::size_t latent);
ad::Id w2_squared(ad::Tape& tape, const GaussNodes& q, const GaussNodes& p);
std::vector<ad::Id> derive_weights(ad::Tape& tape, const GaussNodes& q,
                                   std::span<const GaussNodes> bases,
                                   double tau_d);
ad::Id separation_loss(ad::Tape& tape, std::span<const GaussNodes> bases,
                       double tau_m);

}  // namespace graph
}  // namespace vrf
