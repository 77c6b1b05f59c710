#include "vrf/diffengine.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace vrf {

namespace {

ad::Tape& scratch_tape() {
  thread_local ad::Tape tape;
  tape.reset();
  return tape;
}

}  // namespace

double compute_gradients(const GraphBuilder& objective, ParamStore& params) {
  ad::Tape& tape = scratch_tape();
  const BoundParams bound = BoundParams::bind(tape, params);
  const ad::Id root = objective(tape, bound);
  tape.backward(root);
  params.zero_grads();
  bound.write_grads(tape, params);
  return tape.val(root);
}

double evaluate_objective(const GraphBuilder& objective,
                          const ParamStore& params) {
  ad::Tape& tape = scratch_tape();
  const BoundParams bound = BoundParams::bind(tape, params);
  return tape.val(objective(tape, bound));
}

FdReport fd_check(const GraphBuilder& objective, ParamStore& params,
                  double epsilon, std::size_t sample, std::uint64_t seed) {
  if (!(epsilon >= 1e-7 && epsilon <= 1e-3))
    throw std::invalid_argument("fd_check: epsilon outside [1e-7, 1e-3]");

  // Flat coordinate space over trainable entries, in sorted-name order.
  struct Slot {
    std::string name;
    std::size_t index;
  };
  std::vector<Slot> slots;
  for (const auto& [name, e] : params) {
    if (!is_trainable_name(name)) continue;
    for (std::size_t i = 0; i < e.size(); ++i) slots.push_back({name, i});
  }
  if (sample < slots.size()) {
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates: the first `sample` become the chosen set.
    for (std::size_t i = 0; i < sample; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, slots.size() - 1);
      std::swap(slots[i], slots[pick(rng)]);
    }
    slots.resize(sample);
  }

  const double f0 = compute_gradients(objective, params);
  std::vector<std::pair<std::string, std::vector<double>>> grads;
  for (const auto& [name, e] : params)
    if (is_trainable_name(name)) grads.emplace_back(name, e.grad);
  auto grad_of = [&](const std::string& name, std::size_t idx) {
    for (const auto& [n, g] : grads)
      if (n == name) return g[idx];
    throw std::logic_error("fd_check: missing gradient for " + name);
  };

  FdReport report;
  for (const Slot& s : slots) {
    double& x = params.at(s.name).value[s.index];
    const double saved = x;
    x = saved + epsilon;
    const double fp = evaluate_objective(objective, params);
    x = saved - epsilon;
    const double fm = evaluate_objective(objective, params);
    x = saved;

    const double numeric = (fp - fm) / (2.0 * epsilon);
    const double analytic = grad_of(s.name, s.index);
    const double rel = std::abs(analytic - numeric) /
                       std::max(1e-8, std::abs(analytic) + std::abs(numeric));
    // At a hinge/kink the one-sided slopes disagree, so the second difference
    // (fp - 2 f0 + fm) stays O(eps) instead of O(eps^2).
    const double second = std::abs(fp - 2.0 * f0 + fm) / epsilon;
    const bool kink = second > 0.05 * (1.0 + std::abs(numeric));

    report.coords.push_back({s.name, s.index, analytic, numeric, rel, kink});
    if (kink)
      ++report.kink_count;
    else
      report.max_rel_error = std::max(report.max_rel_error, rel);
  }
  return report;
}

}  // namespace vrf
