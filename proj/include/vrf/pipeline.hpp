#pragma once
// End-to-end training loop for the three model kinds, checkpoint metadata,
// and the inference entry points (user encoding -> basis weights ->
// personalized rewards; gradient-based weight adaptation for the
// reward-factorization baseline).

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "vrf/bases.hpp"
#include "vrf/data.hpp"
#include "vrf/encoder.hpp"
#include "vrf/objective.hpp"
#include "vrf/param_store.hpp"

namespace vrf {

enum class ModelKind { vrf = 0, bt = 1, rf = 2 };

std::string model_name(ModelKind kind);
ModelKind model_from_name(const std::string& name);  // throws on unknown

struct TrainConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 8;
  double learning_rate = 2e-5;
  double weight_decay = 0.01;
  double dropout = 0.0;
  std::size_t basis_count = 8;     // K
  std::size_t latent_dim = 64;     // D
  std::size_t encoder_hidden = 0;  // 0 -> H/2
  double tau_d = 1.0;
  double tau_m = 1.0;
  double beta = 0.001;
  std::size_t mc_samples = 5;
  std::size_t epoch_reference_size = 9;  // |C_u| resampled each epoch
  std::uint64_t seed = 1;
  std::size_t warmup_steps = 0;
};

struct EpochRow {
  std::size_t epoch = 0;
  double loss = 0.0, vbt = 0.0, sep = 0.0, reg = 0.0;
  double seen_acc = 0.0, unseen_acc = 0.0;
};

struct TrainResult {
  ParamStore params;
  std::vector<EpochRow> epochs;
};

// Trains on the seen users' reference pools (epoch conditioning sets are
// resampled; the held-out targets of both splits are never trained on).
// Writes one "step ..." metrics line per optimizer step and one "epoch ..."
// line per epoch to `metrics` when non-null. Deterministic given (ds, cfg).
TrainResult train(const Dataset& ds, const TrainConfig& cfg, ModelKind kind,
                  std::ostream* metrics = nullptr);

// The run metadata stored in a checkpoint as rank-0 "cfg.*" entries.
struct ModelInfo {
  ModelKind kind = ModelKind::vrf;
  EncoderShape enc;
  BasisShape bases;
  HeadShape head;
  double beta = 0.001;
  std::size_t mc_samples = 5;
  std::uint64_t seed = 1;
};

void write_model_info(ParamStore& store, const ModelInfo& info);
ModelInfo read_model_info(const ParamStore& store);  // throws if absent

struct InferResult {
  UserWeights weights;
  DiagonalGaussian user;
  bool fallback = false;  // empty reference set -> N(0, I)
};

// Encode a reference set and derive basis weights (the main model only).
InferResult infer_user(std::span<const Triplet> reference,
                       const ParamStore& store, const ModelInfo& info);

// w . basis_rewards(embedding).
double personalized_reward(std::span<const double> w,
                           std::span<const double> embedding,
                           const ParamStore& store, const ModelInfo& info);

// Baseline adaptation for a user unseen at training time: fit free simplex
// logits to the reference set by gradient descent against the frozen shared
// heads. Returns softmax(logits) after `steps` updates (fixed lr, no decay).
UserWeights rf_adapt_weights(std::span<const Triplet> reference,
                             const ParamStore& store, const ModelInfo& info,
                             std::size_t steps = 100, double lr = 0.05);

}  // namespace vrf
