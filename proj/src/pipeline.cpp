#include "vrf/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <random>
#include <stdexcept>

#include "vrf/mathutil.hpp"
#include "vrf/numerics.hpp"
#include "vrf/optimizer.hpp"

namespace vrf {

std::string model_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::vrf: return "vrf";
    case ModelKind::bt: return "bt";
    case ModelKind::rf: return "rf";
  }
  throw std::logic_error("model_name: invalid kind");
}

ModelKind model_from_name(const std::string& name) {
  if (name == "vrf") return ModelKind::vrf;
  if (name == "bt") return ModelKind::bt;
  if (name == "rf") return ModelKind::rf;
  throw std::invalid_argument("unknown model '" + name +
                              "' (expected vrf, bt, or rf)");
}

namespace {

std::string rf_logits_name(const std::string& user_id) {
  return "rf.logits." + user_id;
}

std::vector<double> softmax_plain(std::span<const double> logits) {
  std::vector<double> w(logits.begin(), logits.end());
  const double lse = logsumexp(w);
  for (double& x : w) x = std::exp(x - lse);
  return w;
}

ModelInfo make_info(const Dataset& ds, const TrainConfig& cfg,
                    ModelKind kind) {
  ModelInfo info;
  info.kind = kind;
  const std::size_t h = ds.meta.embedding_dim;
  info.enc.embed_dim = h;
  info.enc.hidden =
      cfg.encoder_hidden > 0 ? cfg.encoder_hidden : std::max<std::size_t>(1, h / 2);
  info.enc.latent = cfg.latent_dim;
  info.bases.count = cfg.basis_count;
  info.bases.latent = cfg.latent_dim;
  info.bases.tau_d = cfg.tau_d;
  info.bases.tau_m = cfg.tau_m;
  info.head.embed_dim = h;
  info.head.hidden = std::max<std::size_t>(1, h / 4);
  info.head.count = kind == ModelKind::bt ? 1 : cfg.basis_count;
  info.head.dropout = kind == ModelKind::vrf ? cfg.dropout : 0.0;
  info.beta = cfg.beta;
  info.mc_samples = cfg.mc_samples;
  info.seed = cfg.seed;
  return info;
}

// Per-user score function for the epoch metrics: returns the simplex weights
// to combine the shared heads with (BT's single head takes weight 1).
std::vector<double> metrics_weights(const UserRecord& user,
                                    const ParamStore& store,
                                    const ModelInfo& info) {
  switch (info.kind) {
    case ModelKind::bt:
      return {1.0};
    case ModelKind::vrf:
      return infer_user(user.reference_set, store, info).weights.w;
    case ModelKind::rf: {
      const std::string name = rf_logits_name(user.user_id);
      if (store.has(name)) return softmax_plain(store.at(name).value);
      return rf_adapt_weights(user.reference_set, store, info).w;
    }
  }
  throw std::logic_error("metrics_weights: invalid kind");
}

double split_accuracy(const Dataset& ds, const ParamStore& store,
                      const ModelInfo& info, Split split) {
  std::size_t correct = 0, total = 0;
  for (const UserRecord& user : ds.users) {
    if (user.split != split || user.target_set.empty()) continue;
    const std::vector<double> w = metrics_weights(user, store, info);
    for (const Triplet& t : user.target_set) {
      const double rp =
          personalized_reward(w, t.chosen_embedding, store, info);
      const double rm =
          personalized_reward(w, t.rejected_embedding, store, info);
      correct += rp > rm ? 1 : 0;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / total;
}

std::string param_norms(const ParamStore& store) {
  std::string out;
  char buf[64];
  for (const auto& [name, entry] : store) {
    if (!is_trainable_name(name)) continue;
    double sq = 0.0;
    for (double v : entry.value) sq += v * v;
    std::snprintf(buf, sizeof(buf), "%.6g", std::sqrt(sq));
    out += " |" + name + "|=" + buf;
  }
  return out;
}

}  // namespace

void write_model_info(ParamStore& store, const ModelInfo& info) {
  store.set_scalar("cfg.model", static_cast<double>(info.kind));
  store.set_scalar("cfg.embed_dim", static_cast<double>(info.enc.embed_dim));
  store.set_scalar("cfg.encoder_hidden", static_cast<double>(info.enc.hidden));
  store.set_scalar("cfg.latent_dim", static_cast<double>(info.enc.latent));
  store.set_scalar("cfg.basis_count", static_cast<double>(info.bases.count));
  store.set_scalar("cfg.head_hidden", static_cast<double>(info.head.hidden));
  store.set_scalar("cfg.head_count", static_cast<double>(info.head.count));
  store.set_scalar("cfg.tau_d", info.bases.tau_d);
  store.set_scalar("cfg.tau_m", info.bases.tau_m);
  store.set_scalar("cfg.beta", info.beta);
  store.set_scalar("cfg.mc_samples", static_cast<double>(info.mc_samples));
  store.set_scalar("cfg.dropout", info.head.dropout);
  store.set_scalar("cfg.seed", static_cast<double>(info.seed));
}

ModelInfo read_model_info(const ParamStore& store) {
  ModelInfo info;
  const int kind = static_cast<int>(store.scalar("cfg.model"));
  if (kind < 0 || kind > 2)
    throw std::runtime_error("checkpoint: invalid cfg.model value");
  info.kind = static_cast<ModelKind>(kind);
  info.enc.embed_dim = static_cast<std::size_t>(store.scalar("cfg.embed_dim"));
  info.enc.hidden =
      static_cast<std::size_t>(store.scalar("cfg.encoder_hidden"));
  info.enc.latent = static_cast<std::size_t>(store.scalar("cfg.latent_dim"));
  info.bases.count = static_cast<std::size_t>(store.scalar("cfg.basis_count"));
  info.bases.latent = info.enc.latent;
  info.bases.tau_d = store.scalar("cfg.tau_d");
  info.bases.tau_m = store.scalar("cfg.tau_m");
  info.head.embed_dim = info.enc.embed_dim;
  info.head.hidden = static_cast<std::size_t>(store.scalar("cfg.head_hidden"));
  info.head.count = static_cast<std::size_t>(store.scalar("cfg.head_count"));
  info.head.dropout = store.scalar("cfg.dropout");
  info.beta = store.scalar("cfg.beta");
  info.mc_samples = static_cast<std::size_t>(store.scalar("cfg.mc_samples"));
  info.seed = static_cast<std::uint64_t>(store.scalar("cfg.seed"));
  return info;
}

TrainResult train(const Dataset& ds, const TrainConfig& cfg, ModelKind kind,
                  std::ostream* metrics) {
  const ModelInfo info = make_info(ds, cfg, kind);

  TrainResult result;
  ParamStore& params = result.params;
  switch (kind) {
    case ModelKind::vrf:
      init_encoder(params, info.enc, cfg.seed);
      init_bases(params, info.bases, cfg.seed);
      init_head(params, info.head, cfg.seed);
      break;
    case ModelKind::bt:
      init_head(params, info.head, cfg.seed);
      break;
    case ModelKind::rf:
      init_head(params, info.head, cfg.seed);
      for (const UserRecord& user : ds.users)
        if (user.split == Split::seen)
          params.add(rf_logits_name(user.user_id), {info.head.count});
      break;
  }
  write_model_info(params, info);

  // Pair counts are epoch-invariant: the conditioning set changes membership
  // each epoch, never size.
  std::vector<const UserRecord*> seen;
  std::size_t pairs_per_epoch = 0;
  for (const UserRecord& user : ds.users) {
    if (user.split != Split::seen) continue;
    seen.push_back(&user);
    const std::size_t pool = user.reference_set.size();
    pairs_per_epoch += pool - std::min(cfg.epoch_reference_size, pool);
  }
  if (cfg.epochs > 0 && pairs_per_epoch == 0)
    throw std::runtime_error(
        "train: no training pairs; the epoch reference size consumes every "
        "reference pool");
  const std::size_t batch = std::max<std::size_t>(1, cfg.batch_size);
  const std::size_t steps_per_epoch = (pairs_per_epoch + batch - 1) / batch;

  OptimState optim;
  optim.cfg.weight_decay = cfg.weight_decay;
  optim.base_lr = cfg.learning_rate;
  optim.total_steps = cfg.epochs * steps_per_epoch;
  optim.warmup_steps = cfg.warmup_steps;

  ObjectiveConfig ocfg;
  ocfg.enc = info.enc;
  ocfg.bases = info.bases;
  ocfg.head = info.head;
  ocfg.beta = info.beta;
  ocfg.mc_samples = info.mc_samples;
  ocfg.seed = cfg.seed;

  ad::Tape tape;
  char line[512];
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::uint64_t epoch_seed = mix_seed(cfg.seed, fnv1a("epoch"), epoch);

    // Materialize each user's conditioning set C_u, then pair every
    // remaining pool triplet with it as a training target.
    std::vector<std::vector<Triplet>> cond(seen.size());
    std::vector<BatchItem> items;
    items.reserve(pairs_per_epoch);
    for (std::size_t u = 0; u < seen.size(); ++u) {
      const UserRecord& user = *seen[u];
      const std::vector<std::size_t> picked = sample_epoch_reference_indices(
          user, cfg.epoch_reference_size, epoch_seed);
      std::vector<bool> in_cond(user.reference_set.size(), false);
      for (std::size_t i : picked) {
        in_cond[i] = true;
        cond[u].push_back(user.reference_set[i]);
      }
      for (std::size_t i = 0; i < user.reference_set.size(); ++i)
        if (!in_cond[i])
          items.push_back({user.user_id, &user.reference_set[i], {}});
    }
    // Spans must be attached after cond stops growing.
    std::size_t cursor = 0;
    for (std::size_t u = 0; u < seen.size(); ++u) {
      const std::size_t count =
          seen[u]->reference_set.size() - cond[u].size();
      for (std::size_t i = 0; i < count; ++i)
        items[cursor++].reference = cond[u];
    }
    std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, fnv1a("shuffle"), epoch));
    deterministic_shuffle(items, shuffle_rng);

    double ep_loss = 0, ep_vbt = 0, ep_sep = 0, ep_reg = 0;
    std::size_t ep_steps = 0;
    for (std::size_t off = 0; off < items.size(); off += batch) {
      const std::size_t n = std::min(batch, items.size() - off);
      const std::span<const BatchItem> chunk(items.data() + off, n);
      const std::size_t step = params.step_count;
      LossTerms terms;
      try {
        tape.reset();
        const BoundParams bound = BoundParams::bind(tape, params);
        ad::Id root;
        if (kind == ModelKind::vrf) {
          ocfg.step = step;
          const graph::TotalLossNodes nodes =
              graph::total_loss(tape, bound, chunk, ocfg);
          root = nodes.total;
          terms = {tape.val(nodes.total), tape.val(nodes.vbt),
                   tape.val(nodes.sep), tape.val(nodes.reg)};
        } else {
          root = kind == ModelKind::bt
                     ? graph::bt_loss(tape, bound, chunk, info.head)
                     : graph::rf_loss(tape, bound, chunk, info.head);
          terms = {tape.val(root), tape.val(root), 0.0, 0.0};
        }
        tape.backward(root);
        params.zero_grads();
        bound.write_grads(tape, params);
      } catch (const ad::TapeError& e) {
        throw std::runtime_error("train: numerical failure at step " +
                                 std::to_string(step) + ": " + e.what() +
                                 ";" + param_norms(params));
      }
      const double lr = scheduled_lr(optim, step);
      adamw_step(params, optim, lr);

      ep_loss += terms.total;
      ep_vbt += terms.vbt;
      ep_sep += terms.sep;
      ep_reg += terms.reg;
      ++ep_steps;
      if (metrics) {
        std::snprintf(line, sizeof(line),
                      "step epoch=%zu step=%zu loss=%.17g vbt=%.17g "
                      "sep=%.17g reg=%.17g lr=%.17g\n",
                      epoch, step, terms.total, terms.vbt, terms.sep,
                      terms.reg, lr);
        *metrics << line;
      }
    }

    EpochRow row;
    row.epoch = epoch;
    row.loss = ep_loss / ep_steps;
    row.vbt = ep_vbt / ep_steps;
    row.sep = ep_sep / ep_steps;
    row.reg = ep_reg / ep_steps;
    row.seen_acc = split_accuracy(ds, params, info, Split::seen);
    row.unseen_acc = split_accuracy(ds, params, info, Split::unseen);
    result.epochs.push_back(row);
    if (metrics) {
      std::snprintf(line, sizeof(line),
                    "epoch epoch=%zu loss=%.17g vbt=%.17g sep=%.17g "
                    "reg=%.17g seen_acc=%.17g unseen_acc=%.17g\n",
                    epoch, row.loss, row.vbt, row.sep, row.reg, row.seen_acc,
                    row.unseen_acc);
      *metrics << line;
    }
  }
  return result;
}

InferResult infer_user(std::span<const Triplet> reference,
                       const ParamStore& store, const ModelInfo& info) {
  if (info.kind != ModelKind::vrf)
    throw std::runtime_error("infer_user: checkpoint model is '" +
                             model_name(info.kind) + "', expected 'vrf'");
  AggregateResult agg = encode_user(reference, store, info.enc);
  const PreferenceBasisSet bases =
      PreferenceBasisSet::from_store(store, info.bases);
  InferResult out{derive_weights(agg.user, bases), std::move(agg.user),
                  agg.fallback};
  return out;
}

double personalized_reward(std::span<const double> w,
                           std::span<const double> embedding,
                           const ParamStore& store, const ModelInfo& info) {
  const std::vector<double> phi = basis_rewards(embedding, store, info.head);
  return dot(w, phi);
}

UserWeights rf_adapt_weights(std::span<const Triplet> reference,
                             const ParamStore& store, const ModelInfo& info,
                             std::size_t steps, double lr) {
  const std::size_t k = info.head.count;
  UserWeights out;
  out.mean_uncertainty = 0.0;
  if (reference.empty()) {
    out.w.assign(k, 1.0 / static_cast<double>(k));
    return out;
  }

  // The shared heads are frozen: per-triplet basis score deltas are plain
  // constants, and only the K logits live on the tape.
  std::vector<std::vector<double>> deltas;
  deltas.reserve(reference.size());
  for (const Triplet& t : reference) {
    const std::vector<double> phi_p =
        basis_rewards(t.chosen_embedding, store, info.head);
    const std::vector<double> phi_m =
        basis_rewards(t.rejected_embedding, store, info.head);
    std::vector<double> d(k);
    for (std::size_t i = 0; i < k; ++i) d[i] = phi_p[i] - phi_m[i];
    deltas.push_back(std::move(d));
  }

  ParamStore local;
  local.add("logits", {k});
  OptimState optim;
  optim.base_lr = lr;
  optim.total_steps = steps;

  ad::Tape tape;
  for (std::size_t s = 0; s < steps; ++s) {
    tape.reset();
    const BoundParams bound = BoundParams::bind(tape, local);
    const std::vector<ad::Id> w = tape.softmax(bound.at("logits"));
    std::vector<ad::Id> losses;
    losses.reserve(deltas.size());
    for (const std::vector<double>& d : deltas) {
      std::vector<ad::Id> dc(k);
      for (std::size_t i = 0; i < k; ++i) dc[i] = tape.constant(d[i]);
      losses.push_back(tape.softplus(tape.neg(tape.dot(w, dc))));
    }
    const ad::Id loss = tape.mul_const(
        tape.sum(losses), 1.0 / static_cast<double>(losses.size()));
    tape.backward(loss);
    local.zero_grads();
    bound.write_grads(tape, local);
    adamw_step(local, optim, lr);
  }
  out.w = softmax_plain(local.at("logits").value);
  return out;
}

}  // namespace vrf
