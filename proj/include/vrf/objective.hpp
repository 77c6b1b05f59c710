#pragma once
// Training losses: the variance-attenuated Bradley-Terry objective and its
// delta statistics, the mixture-prior KL regularizer, the combined training
// objective, and the plain-BT / deterministic reward-factorization baselines.
// Every loss exists twice: a plain evaluation path and a tape graph builder;
// the two consume identical seeds and agree to machine precision.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vrf/bases.hpp"
#include "vrf/encoder.hpp"
#include "vrf/gaussian.hpp"
#include "vrf/param_store.hpp"

namespace vrf {

struct HeadShape {
  std::size_t embed_dim = 64;  // H
  std::size_t hidden = 16;     // H/4 by default
  std::size_t count = 8;       // K basis scores (1 for the BT baseline)
  double dropout = 0.0;        // hidden-layer dropout, train-time only
};

// Reward-head entries "<prefix>w1" (hidden x H, row-major), "<prefix>b1",
// "<prefix>w2" (K x hidden), "<prefix>b2". Xavier weights, zero biases.
void init_head(ParamStore& store, const HeadShape& shape, std::uint64_t seed,
               const std::string& prefix = "head.");

// Eval-mode forward (dropout off): the K basis scores of one embedding.
std::vector<double> basis_rewards(std::span<const double> embedding,
                                  const ParamStore& store,
                                  const HeadShape& shape,
                                  const std::string& prefix = "head.");

struct DeltaStats {
  double mu_delta = 0.0;
  double var_delta = 0.0;         // weighted population variance, no Bessel
  std::vector<double> delta_phi;  // phi_plus - phi_minus
};

// mu = sum_k w_k d_k; var = sum_k w_k (d_k - mu)^2.
DeltaStats delta_stats(std::span<const double> w,
                       std::span<const double> phi_plus,
                       std::span<const double> phi_minus);

// -log of the variance-attenuated preference probability
// sigmoid(mu/sqrt(1 + pi*var/8)), computed as softplus(-z) for stability
// (identical value, no log-of-underflow).
double vbt_loss(const DeltaStats& stats);

// MC estimate of KL(q || prior):
//   -entropy(q) - (1/S) sum_s log p(mu + sigma .* eps_s)
// with eps_s seeded standard normals (reparameterization).
double reg_loss_mc(const DiagonalGaussian& q, const MixturePrior& prior,
                   std::size_t s_samples, std::uint64_t seed);

// The S x D standard-normal draws behind reg_loss_mc, exposed so the plain
// and graph paths consume identical noise.
std::vector<double> mc_epsilons(std::size_t s_samples, std::size_t dim,
                                std::uint64_t seed);

// One (user, target-triplet) pair with the user's epoch reference attached.
struct BatchItem {
  std::string user_id;
  const Triplet* target = nullptr;
  std::span<const Triplet> reference;  // ignored by the baselines
};

struct ObjectiveConfig {
  EncoderShape enc;
  BasisShape bases;
  HeadShape head;
  double beta = 0.001;
  std::size_t mc_samples = 5;
  std::uint64_t seed = 1;  // global seed; MC noise keys on (seed, step, user)
  std::uint64_t step = 0;
};

struct LossTerms {
  double total = 0.0, vbt = 0.0, sep = 0.0, reg = 0.0;
};

// mean VBT over batch items + separation + beta * mean REG over the batch's
// distinct users. Plain path, dropout off. Errors on an empty batch.
LossTerms total_loss(std::span<const BatchItem> batch, const ParamStore& store,
                     const ObjectiveConfig& cfg);

// Baselines (plain): mean -log sigmoid(r+ - r-) with a scalar head, and the
// factorized variant with free per-user simplex weights from entries
// "rf.logits.<user_id>". Both error on an empty batch; rf errors on a user
// without trained logits.
double bt_loss(std::span<const BatchItem> batch, const ParamStore& store,
               const HeadShape& shape);
double rf_loss(std::span<const BatchItem> batch, const ParamStore& store,
               const HeadShape& shape);

namespace graph {

// Head forward; `dropout_mask` (size hidden; entries 0 or 1/(1-p)) scales the
// hidden layer when dropout is active during training.
std::vector<ad::Id> basis_rewards(ad::Tape& tape,
                                  std::span<const double> embedding,
                                  const BoundParams& params,
                                  const HeadShape& shape,
                                  const std::string& prefix = "head.",
                                  std::span<const double> dropout_mask = {});

struct TotalLossNodes {
  ad::Id total, vbt, sep, reg;
};

TotalLossNodes total_loss(ad::Tape& tape, const BoundParams& params,
                          std::span<const BatchItem> batch,
                          const ObjectiveConfig& cfg);

ad::Id bt_loss(ad::Tape& tape, const BoundParams& params,
               std::span<const BatchItem> batch, const HeadShape& shape);
ad::Id rf_loss(ad::Tape& tape, const BoundParams& params,
               std::span<const BatchItem> batch, const HeadShape& shape);

}  // namespace graph
}  // namespace vrf
