#include "vrf/objective.hpp"

#include <cmath>
#include <map>
#include <random>
#include <stdexcept>

#include "vrf/mathutil.hpp"
#include "vrf/numerics.hpp"

namespace vrf {

namespace {

void xavier_fill(std::span<double> w, std::size_t fan_in, std::size_t fan_out,
                 std::mt19937_64& rng) {
  std::normal_distribution<double> normal(
      0.0, std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)));
  for (double& x : w) x = normal(rng);
}

std::string logits_name(const std::string& user_id) {
  return "rf.logits." + user_id;
}

// Stable simplex softmax used by the plain rf path.
std::vector<double> softmax_plain(std::span<const double> logits) {
  const double lse = logsumexp(logits);
  std::vector<double> w(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    w[i] = std::exp(logits[i] - lse);
  return w;
}

}  // namespace

void init_head(ParamStore& store, const HeadShape& shape, std::uint64_t seed,
               const std::string& prefix) {
  std::mt19937_64 rng(mix_seed(seed, fnv1a(prefix)));
  ParamEntry& w1 = store.add(prefix + "w1", {shape.hidden, shape.embed_dim});
  xavier_fill(w1.value, shape.embed_dim, shape.hidden, rng);
  store.add(prefix + "b1", {shape.hidden});
  ParamEntry& w2 = store.add(prefix + "w2", {shape.count, shape.hidden});
  xavier_fill(w2.value, shape.hidden, shape.count, rng);
  store.add(prefix + "b2", {shape.count});
}

std::vector<double> basis_rewards(std::span<const double> embedding,
                                  const ParamStore& store,
                                  const HeadShape& shape,
                                  const std::string& prefix) {
  if (embedding.size() != shape.embed_dim)
    throw std::invalid_argument("basis_rewards: embedding length mismatch");
  const auto& w1 = store.at(prefix + "w1").value;
  const auto& b1 = store.at(prefix + "b1").value;
  const auto& w2 = store.at(prefix + "w2").value;
  const auto& b2 = store.at(prefix + "b2").value;
  if (w1.size() != shape.hidden * shape.embed_dim ||
      w2.size() != shape.count * shape.hidden)
    throw std::invalid_argument("basis_rewards: head shapes do not match");
  std::vector<double> hidden(shape.hidden);
  for (std::size_t j = 0; j < shape.hidden; ++j)
    hidden[j] = gelu(
        dot(std::span(w1).subspan(j * shape.embed_dim, shape.embed_dim),
            embedding) +
        b1[j]);
  std::vector<double> out(shape.count);
  for (std::size_t k = 0; k < shape.count; ++k)
    out[k] =
        dot(std::span(w2).subspan(k * shape.hidden, shape.hidden), hidden) +
        b2[k];
  return out;
}

DeltaStats delta_stats(std::span<const double> w,
                       std::span<const double> phi_plus,
                       std::span<const double> phi_minus) {
  if (w.size() != phi_plus.size() || w.size() != phi_minus.size())
    throw std::invalid_argument("delta_stats: length mismatch");
  DeltaStats s;
  s.delta_phi.resize(w.size());
  for (std::size_t k = 0; k < w.size(); ++k)
    s.delta_phi[k] = phi_plus[k] - phi_minus[k];
  s.mu_delta = dot(w, s.delta_phi);
  double var = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double dev = s.delta_phi[k] - s.mu_delta;
    var += w[k] * (dev * dev);
  }
  s.var_delta = var;
  return s;
}

double vbt_loss(const DeltaStats& stats) {
  const double z =
      stats.mu_delta / std::sqrt(1.0 + kPi * stats.var_delta / 8.0);
  return softplus(-z);
}

std::vector<double> mc_epsilons(std::size_t s_samples, std::size_t dim,
                                std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> eps(s_samples * dim);
  for (double& e : eps) e = normal(rng);
  return eps;
}

double reg_loss_mc(const DiagonalGaussian& q, const MixturePrior& prior,
                   std::size_t s_samples, std::uint64_t seed) {
  if (s_samples < 1)
    throw std::invalid_argument("reg_loss_mc: need at least one sample");
  const std::vector<double> eps = mc_epsilons(s_samples, q.dim(), seed);
  std::vector<double> z(q.dim());
  double cross = 0.0;
  for (std::size_t s = 0; s < s_samples; ++s) {
    for (std::size_t d = 0; d < q.dim(); ++d)
      z[d] = q.mean[d] + q.std[d] * eps[s * q.dim() + d];
    cross += mog_logdensity(z, prior);
  }
  return -entropy_diag(q) - cross / static_cast<double>(s_samples);
}

LossTerms total_loss(std::span<const BatchItem> batch, const ParamStore& store,
                     const ObjectiveConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("total_loss: empty batch");
  const PreferenceBasisSet bases =
      PreferenceBasisSet::from_store(store, cfg.bases);
  const MixturePrior prior = bases.prior();

  // Each distinct user is encoded once and regularized once.
  std::map<std::string, const BatchItem*> users;
  for (const BatchItem& item : batch) users.emplace(item.user_id, &item);
  std::map<std::string, UserWeights> weights;
  std::map<std::string, DiagonalGaussian> gaussians;
  for (const auto& [uid, item] : users) {
    AggregateResult agg = encode_user(item->reference, store, cfg.enc);
    weights.emplace(uid, derive_weights(agg.user, bases));
    gaussians.emplace(uid, std::move(agg.user));
  }

  LossTerms terms;
  for (const BatchItem& item : batch) {
    const std::vector<double> phi_plus =
        basis_rewards(item.target->chosen_embedding, store, cfg.head);
    const std::vector<double> phi_minus =
        basis_rewards(item.target->rejected_embedding, store, cfg.head);
    terms.vbt +=
        vbt_loss(delta_stats(weights.at(item.user_id).w, phi_plus, phi_minus));
  }
  terms.vbt /= static_cast<double>(batch.size());

  terms.sep = separation_loss(bases);

  for (const auto& [uid, g] : gaussians)
    terms.reg += reg_loss_mc(g, prior, cfg.mc_samples,
                             mix_seed(cfg.seed, cfg.step, fnv1a(uid)));
  terms.reg /= static_cast<double>(gaussians.size());

  terms.total = terms.vbt + terms.sep + cfg.beta * terms.reg;
  return terms;
}

double bt_loss(std::span<const BatchItem> batch, const ParamStore& store,
               const HeadShape& shape) {
  if (batch.empty()) throw std::invalid_argument("bt_loss: empty batch");
  double loss = 0.0;
  for (const BatchItem& item : batch) {
    const double rp =
        basis_rewards(item.target->chosen_embedding, store, shape)[0];
    const double rm =
        basis_rewards(item.target->rejected_embedding, store, shape)[0];
    loss += softplus(-(rp - rm));
  }
  return loss / static_cast<double>(batch.size());
}

double rf_loss(std::span<const BatchItem> batch, const ParamStore& store,
               const HeadShape& shape) {
  if (batch.empty()) throw std::invalid_argument("rf_loss: empty batch");
  double loss = 0.0;
  for (const BatchItem& item : batch) {
    const std::string name = logits_name(item.user_id);
    if (!store.has(name))
      throw std::out_of_range("rf_loss: no trained weights for user " +
                              item.user_id);
    const std::vector<double> w = softmax_plain(store.at(name).value);
    const std::vector<double> phi_plus =
        basis_rewards(item.target->chosen_embedding, store, shape);
    const std::vector<double> phi_minus =
        basis_rewards(item.target->rejected_embedding, store, shape);
    std::vector<double> delta(w.size());
    for (std::size_t k = 0; k < w.size(); ++k)
      delta[k] = phi_plus[k] - phi_minus[k];
    loss += softplus(-dot(w, delta));
  }
  return loss / static_cast<double>(batch.size());
}

namespace graph {

std::vector<ad::Id> basis_rewards(ad::Tape& tape,
                                  std::span<const double> embedding,
                                  const BoundParams& params,
                                  const HeadShape& shape,
                                  const std::string& prefix,
                                  std::span<const double> dropout_mask) {
  if (embedding.size() != shape.embed_dim)
    throw std::invalid_argument("basis_rewards: embedding length mismatch");
  const auto w1 = params.at(prefix + "w1");
  const auto b1 = params.at(prefix + "b1");
  const auto w2 = params.at(prefix + "w2");
  const auto b2 = params.at(prefix + "b2");
  std::vector<ad::Id> emb(embedding.size());
  for (std::size_t i = 0; i < embedding.size(); ++i)
    emb[i] = tape.constant(embedding[i]);
  std::vector<ad::Id> hidden(shape.hidden);
  for (std::size_t j = 0; j < shape.hidden; ++j) {
    hidden[j] = tape.gelu(tape.add(
        tape.dot(w1.subspan(j * shape.embed_dim, shape.embed_dim), emb),
        b1[j]));
    if (!dropout_mask.empty())
      hidden[j] = tape.mul_const(hidden[j], dropout_mask[j]);
  }
  std::vector<ad::Id> out(shape.count);
  for (std::size_t k = 0; k < shape.count; ++k)
    out[k] = tape.add(tape.dot(w2.subspan(k * shape.hidden, shape.hidden), hidden),
                      b2[k]);
  return out;
}

namespace {

// -log sigmoid(mu/sqrt(1 + pi*var/8)) as graph nodes.
ad::Id vbt_node(ad::Tape& tape, std::span<const ad::Id> w,
                std::span<const ad::Id> phi_plus,
                std::span<const ad::Id> phi_minus) {
  std::vector<ad::Id> delta(w.size());
  for (std::size_t k = 0; k < w.size(); ++k)
    delta[k] = tape.sub(phi_plus[k], phi_minus[k]);
  const ad::Id mu = tape.dot(w, delta);
  std::vector<ad::Id> sq(w.size());
  for (std::size_t k = 0; k < w.size(); ++k) {
    const ad::Id dev = tape.sub(delta[k], mu);
    sq[k] = tape.mul(dev, dev);
  }
  const ad::Id var = tape.dot(w, sq);
  const ad::Id z = tape.div(
      mu, tape.sqrt(tape.add_const(tape.mul_const(var, kPi / 8.0), 1.0)));
  return tape.softplus(tape.neg(z));
}

// MC KL(q || mixture of bases): shares the per-basis inv-std and log-std-sum
// nodes across samples and users via the caller-provided caches.
struct BasisCache {
  std::vector<ad::Id> inv_std;  // K x D
  std::vector<ad::Id> log_std_sum;  // K
};

BasisCache make_basis_cache(ad::Tape& tape,
                            std::span<const GaussNodes> bases) {
  BasisCache cache;
  const std::size_t dim = bases.empty() ? 0 : bases[0].std.size();
  const ad::Id one = tape.constant(1.0);
  cache.inv_std.resize(bases.size() * dim);
  cache.log_std_sum.resize(bases.size());
  for (std::size_t k = 0; k < bases.size(); ++k) {
    std::vector<ad::Id> logs(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      cache.inv_std[k * dim + d] = tape.div(one, bases[k].std[d]);
      logs[d] = tape.log(bases[k].std[d]);
    }
    cache.log_std_sum[k] = tape.sum(logs);
  }
  return cache;
}

ad::Id reg_node(ad::Tape& tape, const GaussNodes& q,
                std::span<const GaussNodes> bases, const BasisCache& cache,
                std::size_t s_samples, std::uint64_t seed) {
  const std::size_t dim = q.mean.size();
  const std::size_t k_count = bases.size();
  const std::vector<double> eps = mc_epsilons(s_samples, dim, seed);

  // -entropy(q) = -(sum_d log std_d + D*0.5*(1+log 2pi))
  std::vector<ad::Id> logs(dim);
  for (std::size_t d = 0; d < dim; ++d) logs[d] = tape.log(q.std[d]);
  const ad::Id entropy = tape.add_const(
      tape.sum(logs),
      static_cast<double>(dim) * 0.5 * (1.0 + std::log(2.0 * kPi)));

  std::vector<ad::Id> mog(s_samples);
  std::vector<ad::Id> z(dim), lps(k_count), sq(dim);
  for (std::size_t s = 0; s < s_samples; ++s) {
    for (std::size_t d = 0; d < dim; ++d)
      z[d] = tape.add(q.mean[d], tape.mul_const(q.std[d], eps[s * dim + d]));
    for (std::size_t k = 0; k < k_count; ++k) {
      for (std::size_t d = 0; d < dim; ++d) {
        const ad::Id t =
            tape.mul(tape.sub(z[d], bases[k].mean[d]), cache.inv_std[k * dim + d]);
        sq[d] = tape.mul(t, t);
      }
      lps[k] = tape.add_const(
          tape.sub(tape.mul_const(tape.sum(sq), -0.5), cache.log_std_sum[k]),
          -0.5 * static_cast<double>(dim) * std::log(2.0 * kPi));
    }
    mog[s] = tape.add_const(tape.logsumexp(lps),
                            -std::log(static_cast<double>(k_count)));
  }
  const ad::Id cross =
      tape.mul_const(tape.sum(mog), 1.0 / static_cast<double>(s_samples));
  return tape.neg(tape.add(entropy, cross));
}

}  // namespace

TotalLossNodes total_loss(ad::Tape& tape, const BoundParams& params,
                          std::span<const BatchItem> batch,
                          const ObjectiveConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("total_loss: empty batch");

  std::vector<GaussNodes> bases(cfg.bases.count);
  for (std::size_t k = 0; k < cfg.bases.count; ++k)
    bases[k] = vrf::graph::basis_nodes(tape, params, k, cfg.bases.latent);

  // Encode and weigh each distinct user once.
  std::map<std::string, const BatchItem*> users;
  for (const BatchItem& item : batch) users.emplace(item.user_id, &item);
  std::map<std::string, GaussNodes> gaussians;
  std::map<std::string, std::vector<ad::Id>> weights;
  for (const auto& [uid, item] : users) {
    GaussNodes q = encode_user(tape, item->reference, params, cfg.enc);
    weights.emplace(uid,
                    vrf::graph::derive_weights(tape, q, bases, cfg.bases.tau_d));
    gaussians.emplace(uid, std::move(q));
  }

  // Dropout masks are drawn in batch order, two head passes per item.
  std::mt19937_64 dropout_rng(
      mix_seed(cfg.seed, fnv1a("dropout"), cfg.step));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto draw_mask = [&]() {
    std::vector<double> mask;
    if (cfg.head.dropout > 0.0) {
      mask.resize(cfg.head.hidden);
      for (double& m : mask)
        m = unif(dropout_rng) < cfg.head.dropout
                ? 0.0
                : 1.0 / (1.0 - cfg.head.dropout);
    }
    return mask;
  };

  std::vector<ad::Id> vbt_items(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const BatchItem& item = batch[i];
    const std::vector<double> mask_p = draw_mask();
    const std::vector<ad::Id> phi_plus = basis_rewards(
        tape, item.target->chosen_embedding, params, cfg.head, "head.", mask_p);
    const std::vector<double> mask_m = draw_mask();
    const std::vector<ad::Id> phi_minus =
        basis_rewards(tape, item.target->rejected_embedding, params, cfg.head,
                      "head.", mask_m);
    vbt_items[i] = vbt_node(tape, weights.at(item.user_id), phi_plus, phi_minus);
  }

  TotalLossNodes out;
  out.vbt = tape.mul_const(tape.sum(vbt_items),
                           1.0 / static_cast<double>(batch.size()));
  out.sep = vrf::graph::separation_loss(tape, bases, cfg.bases.tau_m);

  const BasisCache cache = make_basis_cache(tape, bases);
  std::vector<ad::Id> regs;
  regs.reserve(gaussians.size());
  for (const auto& [uid, q] : gaussians)
    regs.push_back(reg_node(tape, q, bases, cache, cfg.mc_samples,
                            mix_seed(cfg.seed, cfg.step, fnv1a(uid))));
  out.reg = tape.mul_const(tape.sum(regs),
                           1.0 / static_cast<double>(regs.size()));

  out.total =
      tape.add(tape.add(out.vbt, out.sep), tape.mul_const(out.reg, cfg.beta));
  return out;
}

ad::Id bt_loss(ad::Tape& tape, const BoundParams& params,
               std::span<const BatchItem> batch, const HeadShape& shape) {
  if (batch.empty()) throw std::invalid_argument("bt_loss: empty batch");
  std::vector<ad::Id> items(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const ad::Id rp = basis_rewards(tape, batch[i].target->chosen_embedding,
                                    params, shape)[0];
    const ad::Id rm = basis_rewards(tape, batch[i].target->rejected_embedding,
                                    params, shape)[0];
    items[i] = tape.softplus(tape.neg(tape.sub(rp, rm)));
  }
  return tape.mul_const(tape.sum(items),
                        1.0 / static_cast<double>(batch.size()));
}

ad::Id rf_loss(ad::Tape& tape, const BoundParams& params,
               std::span<const BatchItem> batch, const HeadShape& shape) {
  if (batch.empty()) throw std::invalid_argument("rf_loss: empty batch");
  // One softmax per distinct user.
  std::map<std::string, std::vector<ad::Id>> weights;
  for (const BatchItem& item : batch) {
    if (weights.count(item.user_id)) continue;
    const std::string name = logits_name(item.user_id);
    if (!params.has(name))
      throw std::out_of_range("rf_loss: no trained weights for user " +
                              item.user_id);
    weights.emplace(item.user_id, tape.softmax(params.at(name)));
  }
  std::vector<ad::Id> items(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const BatchItem& item = batch[i];
    const std::vector<ad::Id> phi_plus =
        basis_rewards(tape, item.target->chosen_embedding, params, shape);
    const std::vector<ad::Id> phi_minus =
        basis_rewards(tape, item.target->rejected_embedding, params, shape);
    std::vector<ad::Id> delta(phi_plus.size());
    for (std::size_t k = 0; k < delta.size(); ++k)
      delta[k] = tape.sub(phi_plus[k], phi_minus[k]);
    items[i] =
        tape.softplus(tape.neg(tape.dot(weights.at(item.user_id), delta)));
  }
  return tape.mul_const(tape.sum(items),
                        1.0 / static_cast<double>(batch.size()));
}

}  // namespace graph
}  // namespace vrf
