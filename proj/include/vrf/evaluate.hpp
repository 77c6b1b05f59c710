#pragma once
// Evaluation harness: a model-agnostic scorer interface over checkpoints,
// pairwise preference accuracy by split, few-shot adaptation curves,
// uncertainty-tercile calibration, best-of-n regret against ground truth,
// adaptation latency, and multi-seed report aggregation with JSON/CSV output.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vrf/data.hpp"
#include "vrf/pipeline.hpp"

namespace vrf {

// Uniform view of one trained model: adapt to a user's reference
// observations, then score candidate embeddings under the adapted weights.
// Closures hold references to the backing store; keep it alive.
struct Scorer {
  std::string model;
  std::function<UserWeights(const UserRecord&, std::span<const Triplet>)>
      adapt;
  std::function<double(std::span<const double>, std::span<const double>)>
      reward;
};

Scorer make_scorer(const ParamStore& store, const ModelInfo& info);

// One user's pooled target-set outcome under some conditioning set.
struct UserEval {
  std::string user_id;
  double mean_uncertainty = 0.0;
  std::size_t correct = 0, total = 0;
};

UserEval evaluate_user(const Scorer& scorer, const UserRecord& user,
                       std::span<const Triplet> reference);

struct SplitAccuracy {
  double seen = 0.0, unseen = 0.0;
  double overall = 0.0;  // macro average of the two splits
};

// Micro accuracy per split (seen users condition on their full reference
// pool; unseen users on their held-out reference set).
SplitAccuracy accuracy_report(const Scorer& scorer, const Dataset& ds,
                              std::size_t jobs = 1);

struct FewshotPoint {
  std::size_t m = 0;
  double accuracy = 0.0;          // pooled over unseen users
  double mean_uncertainty = 0.0;  // averaged over unseen users
};

struct FewshotResult {
  std::vector<FewshotPoint> curve;
  // per_user[i] holds every unseen user's outcome at curve[i].m, in dataset
  // order. Conditioning sets are nested prefixes of one seeded permutation
  // per user, so growing m only ever adds observations.
  std::vector<std::vector<UserEval>> per_user;
};

FewshotResult fewshot_curve(const Scorer& scorer, const Dataset& ds,
                            std::span<const std::size_t> sizes,
                            std::uint64_t seed, std::size_t jobs = 1);

// The deterministic per-user reference-order permutation behind the few-shot
// and regret protocols.
std::vector<std::size_t> fewshot_permutation(const UserRecord& user,
                                             std::uint64_t seed);

struct UncertaintyBin {
  double min_uncertainty = 0.0, max_uncertainty = 0.0;
  std::size_t users = 0, correct = 0, total = 0;
  double accuracy = 0.0;
};

// Terciles by predicted uncertainty (ties broken by user id); needs at least
// three users. Earlier bins never have fewer users than later ones.
std::vector<UncertaintyBin> uncertainty_bins(std::vector<UserEval> users);

struct RegretPoint {
  std::size_t m = 0;
  double regret = 0.0;  // mean over (unseen user, held-out prompt)
};

// Best-of-n selection: adapt on the first m permuted reference triplets,
// pick argmax reward among each held-out prompt's candidates, and measure
// the true composite score gap to the best candidate. Needs ground truth.
std::vector<RegretPoint> best_of_n_regret(const Scorer& scorer,
                                          const Dataset& ds,
                                          std::span<const std::size_t> sizes,
                                          std::uint64_t seed,
                                          std::size_t jobs = 1);

struct TimingStats {
  double median_ms = 0.0, p95_ms = 0.0;
  std::size_t users = 0;
};

// Wall-clock cost of scorer.adapt over up to max_users unseen users (full
// reference sets), after `warmup` untimed calls.
TimingStats time_adaptation(const Scorer& scorer, const Dataset& ds,
                            std::size_t max_users, std::size_t warmup = 3);

struct SeedStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n-1); 0 when n < 2
  std::vector<double> values;
};

SeedStats seed_stats(std::span<const double> values);

struct EvalOptions {
  std::vector<std::size_t> fewshot_sizes = {1, 3, 5, 7, 9};
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
  std::size_t timing_users = 20;
  std::size_t timing_warmup = 3;
  bool timing = true;
  bool regret = true;     // skipped quietly when ground truth is absent
  bool fewshot = true;
};

struct EvalReport {
  std::string model;
  std::size_t checkpoint_count = 0;
  SeedStats seen_acc, unseen_acc, overall_acc;
  std::vector<std::size_t> fewshot_sizes;
  std::vector<SeedStats> fewshot_acc;          // parallel to fewshot_sizes
  std::vector<SeedStats> fewshot_uncertainty;  // parallel to fewshot_sizes
  std::vector<SeedStats> regret;               // parallel; empty if skipped
  std::vector<UncertaintyBin> bins;  // pooled across seeds, full reference
  TimingStats timing;                // first checkpoint only
};

// Every checkpoint must share one model kind; seeds may differ.
EvalReport evaluate_checkpoints(const Dataset& ds,
                                std::span<const ParamStore> stores,
                                const EvalOptions& opts);

std::string report_to_json(const EvalReport& report);

// fewshot.csv, bins.csv, timing.csv under `dir` (created if needed).
void write_report_csvs(const EvalReport& report, const std::string& dir);

}  // namespace vrf
