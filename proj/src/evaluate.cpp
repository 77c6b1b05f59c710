#include "vrf/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "vrf/mathutil.hpp"

namespace vrf {

namespace {

// Runs body(i) for i in [0, count) over `jobs` threads with contiguous
// ranges. Results must land in preallocated slots so the reduction order
// stays the caller's, independent of jobs.
template <typename F>
void parallel_users(std::size_t count, std::size_t jobs, F&& body) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(jobs);
  const std::size_t chunk = (count + jobs - 1) / jobs;
  for (std::size_t j = 0; j < jobs; ++j) {
    const std::size_t lo = j * chunk, hi = std::min(count, lo + chunk);
    pool.emplace_back([&, j, lo, hi]() {
      try {
        for (std::size_t i = lo; i < hi; ++i) body(i);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    });
  }
  for (std::thread& t : pool) t.join();
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<const UserRecord*> split_users(const Dataset& ds, Split split) {
  std::vector<const UserRecord*> out;
  for (const UserRecord& u : ds.users)
    if (u.split == split) out.push_back(&u);
  return out;
}

std::vector<Triplet> permuted_prefix(const UserRecord& user, std::size_t m,
                                     std::uint64_t seed) {
  const std::vector<std::size_t> perm = fewshot_permutation(user, seed);
  std::vector<Triplet> out;
  const std::size_t take = std::min(m, perm.size());
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i)
    out.push_back(user.reference_set[perm[i]]);
  return out;
}

}  // namespace

Scorer make_scorer(const ParamStore& store, const ModelInfo& info) {
  Scorer s;
  s.model = model_name(info.kind);
  s.reward = [&store, info](std::span<const double> w,
                            std::span<const double> emb) {
    return personalized_reward(w, emb, store, info);
  };
  switch (info.kind) {
    case ModelKind::vrf:
      s.adapt = [&store, info](const UserRecord&,
                               std::span<const Triplet> ref) {
        return infer_user(ref, store, info).weights;
      };
      break;
    case ModelKind::bt:
      s.adapt = [](const UserRecord&, std::span<const Triplet>) {
        return UserWeights{{1.0}, 0.0};
      };
      break;
    case ModelKind::rf:
      s.adapt = [&store, info](const UserRecord& user,
                               std::span<const Triplet> ref) {
        const std::string name = "rf.logits." + user.user_id;
        if (store.has(name)) {
          std::span<const double> logits = store.at(name).value;
          std::vector<double> w(logits.begin(), logits.end());
          const double lse = logsumexp(w);
          for (double& x : w) x = std::exp(x - lse);
          return UserWeights{std::move(w), 0.0};
        }
        return rf_adapt_weights(ref, store, info);
      };
      break;
  }
  return s;
}

UserEval evaluate_user(const Scorer& scorer, const UserRecord& user,
                       std::span<const Triplet> reference) {
  if (user.target_set.empty())
    throw std::invalid_argument("evaluate_user: user " + user.user_id +
                                " has no held-out targets");
  const UserWeights uw = scorer.adapt(user, reference);
  UserEval out;
  out.user_id = user.user_id;
  out.mean_uncertainty = uw.mean_uncertainty;
  for (const Triplet& t : user.target_set) {
    const double rp = scorer.reward(uw.w, t.chosen_embedding);
    const double rm = scorer.reward(uw.w, t.rejected_embedding);
    out.correct += rp > rm ? 1 : 0;
    ++out.total;
  }
  return out;
}

SplitAccuracy accuracy_report(const Scorer& scorer, const Dataset& ds,
                              std::size_t jobs) {
  SplitAccuracy acc;
  for (Split split : {Split::seen, Split::unseen}) {
    const std::vector<const UserRecord*> users = split_users(ds, split);
    std::vector<UserEval> evals(users.size());
    parallel_users(users.size(), jobs, [&](std::size_t i) {
      evals[i] = evaluate_user(scorer, *users[i], users[i]->reference_set);
    });
    std::size_t correct = 0, total = 0;
    for (const UserEval& e : evals) {
      correct += e.correct;
      total += e.total;
    }
    const double a = total == 0 ? 0.0 : static_cast<double>(correct) / total;
    (split == Split::seen ? acc.seen : acc.unseen) = a;
  }
  acc.overall = 0.5 * (acc.seen + acc.unseen);
  return acc;
}

std::vector<std::size_t> fewshot_permutation(const UserRecord& user,
                                             std::uint64_t seed) {
  std::vector<std::size_t> perm(user.reference_set.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::mt19937_64 rng(mix_seed(seed, fnv1a(user.user_id), fnv1a("fewshot")));
  deterministic_shuffle(perm, rng);
  return perm;
}

FewshotResult fewshot_curve(const Scorer& scorer, const Dataset& ds,
                            std::span<const std::size_t> sizes,
                            std::uint64_t seed, std::size_t jobs) {
  const std::vector<const UserRecord*> users = split_users(ds, Split::unseen);
  if (users.empty())
    throw std::invalid_argument("fewshot_curve: dataset has no unseen users");
  FewshotResult result;
  for (std::size_t m : sizes) {
    std::vector<UserEval> evals(users.size());
    parallel_users(users.size(), jobs, [&](std::size_t i) {
      const std::vector<Triplet> ref = permuted_prefix(*users[i], m, seed);
      evals[i] = evaluate_user(scorer, *users[i], ref);
    });
    FewshotPoint point;
    point.m = m;
    std::size_t correct = 0, total = 0;
    double unc = 0.0;
    for (const UserEval& e : evals) {
      correct += e.correct;
      total += e.total;
      unc += e.mean_uncertainty;
    }
    point.accuracy = total == 0 ? 0.0 : static_cast<double>(correct) / total;
    point.mean_uncertainty = unc / static_cast<double>(evals.size());
    result.curve.push_back(point);
    result.per_user.push_back(std::move(evals));
  }
  return result;
}

std::vector<UncertaintyBin> uncertainty_bins(std::vector<UserEval> users) {
  if (users.size() < 3)
    throw std::invalid_argument(
        "uncertainty_bins: need at least three users for terciles");
  std::sort(users.begin(), users.end(),
            [](const UserEval& a, const UserEval& b) {
              if (a.mean_uncertainty != b.mean_uncertainty)
                return a.mean_uncertainty < b.mean_uncertainty;
              return a.user_id < b.user_id;
            });
  const std::size_t n = users.size();
  const std::size_t sizes[3] = {(n + 2) / 3, (n + 1) / 3, n / 3};
  std::vector<UncertaintyBin> bins;
  std::size_t at = 0;
  for (std::size_t b = 0; b < 3; ++b) {
    UncertaintyBin bin;
    bin.users = sizes[b];
    bin.min_uncertainty = users[at].mean_uncertainty;
    bin.max_uncertainty = users[at + sizes[b] - 1].mean_uncertainty;
    for (std::size_t i = 0; i < sizes[b]; ++i, ++at) {
      bin.correct += users[at].correct;
      bin.total += users[at].total;
    }
    bin.accuracy = bin.total == 0
                       ? 0.0
                       : static_cast<double>(bin.correct) / bin.total;
    bins.push_back(bin);
  }
  return bins;
}

std::vector<RegretPoint> best_of_n_regret(const Scorer& scorer,
                                          const Dataset& ds,
                                          std::span<const std::size_t> sizes,
                                          std::uint64_t seed,
                                          std::size_t jobs) {
  if (!ds.has_ground_truth())
    throw DataError(DataErrorCode::ground_truth,
                    "best_of_n_regret: dataset carries no ground truth");
  const std::vector<const UserRecord*> users = split_users(ds, Split::unseen);
  const std::size_t h = ds.meta.embedding_dim;
  std::vector<RegretPoint> out;
  for (std::size_t m : sizes) {
    std::vector<double> sums(users.size(), 0.0);
    std::vector<std::size_t> counts(users.size(), 0);
    parallel_users(users.size(), jobs, [&](std::size_t i) {
      const UserRecord& user = *users[i];
      const std::vector<Triplet> ref = permuted_prefix(user, m, seed);
      const UserWeights uw = scorer.adapt(user, ref);
      std::vector<double> emb(h);
      for (const CandidateSet& p : user.prompts) {
        if (p.role != 1) continue;
        const std::size_t cands = p.candidates(h);
        std::size_t pick = 0;
        double best_reward = -std::numeric_limits<double>::infinity();
        double best_true = -std::numeric_limits<double>::infinity();
        double pick_true = 0.0;
        for (std::size_t c = 0; c < cands; ++c) {
          for (std::size_t d = 0; d < h; ++d)
            emb[d] = static_cast<double>(p.embeddings[c * h + d]);
          const double r = scorer.reward(uw.w, emb);
          const double t = true_composite_score(user, p, c);
          if (r > best_reward) {
            best_reward = r;
            pick = c;
            pick_true = t;
          }
          best_true = std::max(best_true, t);
        }
        (void)pick;
        sums[i] += best_true - pick_true;
        ++counts[i];
      }
    });
    double total = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < users.size(); ++i) {
      total += sums[i];
      n += counts[i];
    }
    out.push_back({m, n == 0 ? 0.0 : total / static_cast<double>(n)});
  }
  return out;
}

TimingStats time_adaptation(const Scorer& scorer, const Dataset& ds,
                            std::size_t max_users, std::size_t warmup) {
  const std::vector<const UserRecord*> users = split_users(ds, Split::unseen);
  const std::size_t n = std::min(max_users, users.size());
  TimingStats stats;
  if (n == 0) return stats;
  for (std::size_t w = 0; w < warmup; ++w)
    scorer.adapt(*users[0], users[0]->reference_set);
  std::vector<double> ms(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    scorer.adapt(*users[i], users[i]->reference_set);
    const auto t1 = std::chrono::steady_clock::now();
    ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  std::sort(ms.begin(), ms.end());
  stats.users = n;
  stats.median_ms = ms[(n - 1) / 2];
  const std::size_t p95 = static_cast<std::size_t>(
      std::ceil(0.95 * static_cast<double>(n)));
  stats.p95_ms = ms[std::max<std::size_t>(1, p95) - 1];
  return stats;
}

SeedStats seed_stats(std::span<const double> values) {
  SeedStats s;
  s.values.assign(values.begin(), values.end());
  if (s.values.empty()) return s;
  double sum = 0.0;
  for (double v : s.values) sum += v;
  s.mean = sum / static_cast<double>(s.values.size());
  if (s.values.size() > 1) {
    double sq = 0.0;
    for (double v : s.values) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(s.values.size() - 1));
  }
  return s;
}

EvalReport evaluate_checkpoints(const Dataset& ds,
                                std::span<const ParamStore> stores,
                                const EvalOptions& opts) {
  if (stores.empty())
    throw std::invalid_argument("evaluate_checkpoints: no checkpoints");
  EvalReport report;
  report.checkpoint_count = stores.size();
  report.fewshot_sizes = opts.fewshot_sizes;

  std::vector<double> seen, unseen, overall;
  std::vector<std::vector<double>> fs_acc(opts.fewshot_sizes.size());
  std::vector<std::vector<double>> fs_unc(opts.fewshot_sizes.size());
  std::vector<std::vector<double>> regrets(opts.fewshot_sizes.size());
  std::vector<UserEval> pooled_bins;
  bool did_regret = false;

  for (std::size_t s = 0; s < stores.size(); ++s) {
    const ModelInfo info = read_model_info(stores[s]);
    if (s == 0)
      report.model = model_name(info.kind);
    else if (report.model != model_name(info.kind))
      throw std::invalid_argument(
          "evaluate_checkpoints: checkpoints mix model kinds");
    const Scorer scorer = make_scorer(stores[s], info);

    const SplitAccuracy acc = accuracy_report(scorer, ds, opts.jobs);
    seen.push_back(acc.seen);
    unseen.push_back(acc.unseen);
    overall.push_back(acc.overall);

    if (opts.fewshot) {
      const FewshotResult fs =
          fewshot_curve(scorer, ds, opts.fewshot_sizes, opts.seed, opts.jobs);
      for (std::size_t i = 0; i < fs.curve.size(); ++i) {
        fs_acc[i].push_back(fs.curve[i].accuracy);
        fs_unc[i].push_back(fs.curve[i].mean_uncertainty);
      }
    }
    if (opts.regret && ds.has_ground_truth()) {
      const std::vector<RegretPoint> r = best_of_n_regret(
          scorer, ds, opts.fewshot_sizes, opts.seed, opts.jobs);
      for (std::size_t i = 0; i < r.size(); ++i)
        regrets[i].push_back(r[i].regret);
      did_regret = true;
    }
    for (const UserRecord* user : split_users(ds, Split::unseen))
      pooled_bins.push_back(
          evaluate_user(scorer, *user, user->reference_set));
    if (opts.timing && s == 0)
      report.timing = time_adaptation(scorer, ds, opts.timing_users,
                                      opts.timing_warmup);
  }

  report.seen_acc = seed_stats(seen);
  report.unseen_acc = seed_stats(unseen);
  report.overall_acc = seed_stats(overall);
  if (opts.fewshot)
    for (std::size_t i = 0; i < opts.fewshot_sizes.size(); ++i) {
      report.fewshot_acc.push_back(seed_stats(fs_acc[i]));
      report.fewshot_uncertainty.push_back(seed_stats(fs_unc[i]));
    }
  if (did_regret)
    for (std::size_t i = 0; i < opts.fewshot_sizes.size(); ++i)
      report.regret.push_back(seed_stats(regrets[i]));
  if (pooled_bins.size() >= 3)
    report.bins = uncertainty_bins(std::move(pooled_bins));
  return report;
}

namespace {

nlohmann::json stats_json(const SeedStats& s) {
  return {{"mean", s.mean}, {"stddev", s.stddev}, {"values", s.values}};
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["model"] = report.model;
  j["checkpoints"] = report.checkpoint_count;
  j["accuracy"] = {{"seen", stats_json(report.seen_acc)},
                   {"unseen", stats_json(report.unseen_acc)},
                   {"overall", stats_json(report.overall_acc)}};
  nlohmann::json fewshot = nlohmann::json::array();
  for (std::size_t i = 0; i < report.fewshot_acc.size(); ++i)
    fewshot.push_back({{"m", report.fewshot_sizes[i]},
                       {"accuracy", stats_json(report.fewshot_acc[i])},
                       {"mean_uncertainty",
                        stats_json(report.fewshot_uncertainty[i])}});
  j["fewshot"] = fewshot;
  nlohmann::json regret = nlohmann::json::array();
  for (std::size_t i = 0; i < report.regret.size(); ++i)
    regret.push_back({{"m", report.fewshot_sizes[i]},
                      {"regret", stats_json(report.regret[i])}});
  j["best_of_n_regret"] = regret;
  nlohmann::json bins = nlohmann::json::array();
  for (const UncertaintyBin& b : report.bins)
    bins.push_back({{"min_uncertainty", b.min_uncertainty},
                    {"max_uncertainty", b.max_uncertainty},
                    {"users", b.users},
                    {"correct", b.correct},
                    {"total", b.total},
                    {"accuracy", b.accuracy}});
  j["uncertainty_bins"] = bins;
  j["timing"] = {{"median_ms", report.timing.median_ms},
                 {"p95_ms", report.timing.p95_ms},
                 {"users", report.timing.users}};
  return j.dump(2) + "\n";
}

void write_report_csvs(const EvalReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  char buf[128];
  {
    std::ofstream out(dir + "/fewshot.csv", std::ios::trunc);
    out << "m,accuracy_mean,accuracy_stddev,uncertainty_mean,"
           "uncertainty_stddev\n";
    for (std::size_t i = 0; i < report.fewshot_acc.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g\n",
                    report.fewshot_sizes[i], report.fewshot_acc[i].mean,
                    report.fewshot_acc[i].stddev,
                    report.fewshot_uncertainty[i].mean,
                    report.fewshot_uncertainty[i].stddev);
      out << buf;
    }
  }
  {
    std::ofstream out(dir + "/bins.csv", std::ios::trunc);
    out << "bin,min_uncertainty,max_uncertainty,users,correct,total,"
           "accuracy\n";
    for (std::size_t i = 0; i < report.bins.size(); ++i) {
      const UncertaintyBin& b = report.bins[i];
      std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%zu,%zu,%zu,%.17g\n",
                    i, b.min_uncertainty, b.max_uncertainty, b.users,
                    b.correct, b.total, b.accuracy);
      out << buf;
    }
  }
  {
    std::ofstream out(dir + "/timing.csv", std::ios::trunc);
    out << "model,users,median_ms,p95_ms\n";
    std::snprintf(buf, sizeof(buf), "%s,%zu,%.17g,%.17g\n",
                  report.model.c_str(), report.timing.users,
                  report.timing.median_ms, report.timing.p95_ms);
    out << buf;
  }
}

}  // namespace vrf
