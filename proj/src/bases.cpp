#include "vrf/bases.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "vrf/mathutil.hpp"
#include "vrf/numerics.hpp"

namespace vrf {

namespace {

std::string mean_name(std::size_t k) {
  return "bases.mean." + std::to_string(k);
}
std::string std_raw_name(std::size_t k) {
  return "bases.std_raw." + std::to_string(k);
}

}  // namespace

PreferenceBasisSet PreferenceBasisSet::from_store(const ParamStore& store,
                                                  const BasisShape& shape) {
  PreferenceBasisSet set;
  set.tau_d = shape.tau_d;
  set.tau_m = shape.tau_m;
  set.bases.reserve(shape.count);
  for (std::size_t k = 0; k < shape.count; ++k) {
    const auto& mean = store.at(mean_name(k)).value;
    const auto& raw = store.at(std_raw_name(k)).value;
    if (mean.size() != shape.latent || raw.size() != shape.latent)
      throw std::invalid_argument("PreferenceBasisSet: basis " +
                                  std::to_string(k) + " has wrong dimension");
    std::vector<double> std_out(shape.latent);
    for (std::size_t d = 0; d < shape.latent; ++d)
      std_out[d] = softplus(raw[d]) + 1e-4;
    set.bases.emplace_back(mean, std::move(std_out));
  }
  return set;
}

void init_bases(ParamStore& store, const BasisShape& shape,
                std::uint64_t seed) {
  if (shape.count < 2 || shape.latent < 1)
    throw std::invalid_argument("init_bases: need K >= 2 and D >= 1");
  std::mt19937_64 rng(mix_seed(seed, fnv1a("bases")));
  std::normal_distribution<double> normal(0.0, 1.0);
  const double raw_unit = inv_softplus(1.0 - 1e-4);  // softplus(raw)+1e-4 == 1
  for (std::size_t k = 0; k < shape.count; ++k) {
    ParamEntry& mean = store.add(mean_name(k), {shape.latent});
    for (double& x : mean.value) x = normal(rng);
    ParamEntry& raw = store.add(std_raw_name(k), {shape.latent});
    std::fill(raw.value.begin(), raw.value.end(), raw_unit);
  }
}

UserWeights derive_weights(const DiagonalGaussian& q,
                           const PreferenceBasisSet& bases) {
  const std::size_t k_count = bases.count();
  std::vector<double> logits(k_count);
  for (std::size_t k = 0; k < k_count; ++k)
    logits[k] = -w2_squared(q, bases.bases[k]) / bases.tau_d;
  const double lse = logsumexp(logits);
  UserWeights out;
  out.w.resize(k_count);
  for (std::size_t k = 0; k < k_count; ++k)
    out.w[k] = std::exp(logits[k] - lse);
  double unc = 0.0;
  for (double s : q.std) unc += s;
  out.mean_uncertainty = unc / static_cast<double>(q.dim());
  return out;
}

double separation_penalty(std::span<const double> pairwise_sq, double margin) {
  double s = 0.0;
  for (double d2 : pairwise_sq) s += std::max(0.0, margin - d2);
  return s;
}

double separation_loss(const PreferenceBasisSet& bases) {
  if (bases.count() < 2)
    throw std::invalid_argument("separation_loss: need at least two bases");
  std::vector<double> d2;
  d2.reserve(bases.count() * (bases.count() - 1) / 2);
  for (std::size_t i = 0; i < bases.count(); ++i)
    for (std::size_t j = i + 1; j < bases.count(); ++j)
      d2.push_back(w2_squared(bases.bases[i], bases.bases[j]));
  return separation_penalty(d2, bases.tau_m);
}

namespace graph {

GaussNodes basis_nodes(ad::Tape& tape, const BoundParams& params,
                       std::size_t k, std::size_t latent) {
  const auto mean = params.at(mean_name(k));
  const auto raw = params.at(std_raw_name(k));
  if (mean.size() != latent || raw.size() != latent)
    throw std::invalid_argument("basis_nodes: dimension mismatch");
  GaussNodes g;
  g.mean.assign(mean.begin(), mean.end());
  g.std.resize(latent);
  for (std::size_t d = 0; d < latent; ++d)
    g.std[d] = tape.add_const(tape.softplus(raw[d]), 1e-4);
  return g;
}

ad::Id w2_squared(ad::Tape& tape, const GaussNodes& q, const GaussNodes& p) {
  const std::size_t dim = q.mean.size();
  if (p.mean.size() != dim)
    throw std::invalid_argument("w2_squared: dimension mismatch");
  std::vector<ad::Id> terms;
  terms.reserve(2 * dim);
  for (std::size_t d = 0; d < dim; ++d) {
    const ad::Id dm = tape.sub(q.mean[d], p.mean[d]);
    terms.push_back(tape.mul(dm, dm));
    const ad::Id ds = tape.sub(q.std[d], p.std[d]);
    terms.push_back(tape.mul(ds, ds));
  }
  return tape.mul_const(tape.sum(terms), 1.0 / static_cast<double>(dim));
}

std::vector<ad::Id> derive_weights(ad::Tape& tape, const GaussNodes& q,
                                   std::span<const GaussNodes> bases,
                                   double tau_d) {
  std::vector<ad::Id> logits(bases.size());
  for (std::size_t k = 0; k < bases.size(); ++k)
    logits[k] = tape.mul_const(w2_squared(tape, q, bases[k]), -1.0 / tau_d);
  return tape.softmax(logits);
}

ad::Id separation_loss(ad::Tape& tape, std::span<const GaussNodes> bases,
                       double tau_m) {
  const ad::Id margin = tape.constant(tau_m);
  std::vector<ad::Id> terms;
  terms.reserve(bases.size() * (bases.size() - 1) / 2);
  for (std::size_t i = 0; i < bases.size(); ++i)
    for (std::size_t j = i + 1; j < bases.size(); ++j)
      terms.push_back(
          tape.max0(tape.sub(margin, w2_squared(tape, bases[i], bases[j]))));
  return tape.sum(terms);
}

}  // namespace graph
}  // namespace vrf
