#pragma once
// AdamW with decoupled weight decay and the cosine learning-rate schedule.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vrf/param_store.hpp"

namespace vrf {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

// Per-parameter moment accumulators plus the run's schedule hyperparameters.
struct OptimState {
  AdamWConfig cfg;
  double base_lr = 0.0;
  std::size_t total_steps = 0;
  std::size_t warmup_steps = 0;  // 0 = no warmup (the default)
  // name -> (first moment, second moment), shapes matching the parameter
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>
      moments;
};

// One decoupled-weight-decay Adam update over every trainable entry, using
// finalized gradients; increments step_count and zeroes the gradients.
// Errors on a non-finite gradient, naming the entry.
void adamw_step(ParamStore& params, OptimState& state, double lr);

// base * 0.5 * (1 + cos(pi * step / total)); equals base at step 0 and 0 at
// step == total; steps beyond total clamp to 0.
double cosine_lr(std::size_t step, std::size_t total, double base);

// The schedule actually applied each step: cosine, scaled linearly during the
// optional warmup window.
double scheduled_lr(const OptimState& state, std::size_t step);

}  // namespace vrf
