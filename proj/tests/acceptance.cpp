// Acceptance harness: one pass/fail line per criterion, exit 1 on any
// failure. Criteria 5-8 share a single five-seed benchmark run so the whole
// binary stays inside its wall-clock budget.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "vrf/checks.hpp"
#include "vrf/data.hpp"
#include "vrf/evaluate.hpp"
#include "vrf/pipeline.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Criterion {
  int id = 0;
  std::string label;
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buf, sizeof buf, pattern, args);
  va_end(args);
  return buf;
}

// ---------------------------------------------------------------------------
// Criteria 1-4 and 9: the oracle/property checks, with their runtime gates.

Criterion oracle_suite() {
  const auto start = Clock::now();
  const std::vector<vrf::CheckResult> checks{
      vrf::check_mackay_grid(), vrf::check_pog_identities(),
      vrf::check_w2_values(), vrf::check_kl_mc()};
  const double elapsed = seconds_since(start);

  Criterion c{1, "closed-form oracle suite", true, ""};
  std::string failures;
  for (const vrf::CheckResult& r : checks)
    if (!r.pass) {
      c.pass = false;
      failures += (failures.empty() ? "" : "; ") + r.name + ": " + r.detail;
    }
  if (elapsed >= 30.0) c.pass = false;
  c.detail = c.pass ? fmt("grid, fusion, distance, and kl sub-checks pass; %.1fs < 30s",
                          elapsed)
                    : failures + fmt(" (%.1fs)", elapsed);
  return c;
}

Criterion gradient_check() {
  const auto start = Clock::now();
  const vrf::CheckResult r = vrf::check_fd_objective();
  const double elapsed = seconds_since(start);
  Criterion c{2, "finite-difference check of the full objective",
              r.pass && elapsed < 60.0, ""};
  c.detail = r.detail + fmt("; %.1fs < 60s", elapsed);
  return c;
}

Criterion concavity() {
  const vrf::CheckResult r = vrf::check_concavity();
  return {3, "delta-variance concavity in the mixture weights", r.pass,
          r.detail};
}

Criterion attenuation() {
  const vrf::CheckResult r = vrf::check_attenuation();
  return {4, "variance attenuation of the preference gradient", r.pass,
          r.detail};
}

Criterion reduction_identities() {
  const vrf::CheckResult r = vrf::check_reduction_identities();
  return {9, "objective reduction identities", r.pass, r.detail};
}

// ---------------------------------------------------------------------------
// Criteria 5-8: the five-seed synthetic benchmark.

struct SeedOutcome {
  vrf::SplitAccuracy vrf_acc, bt_acc, rf_acc;
  vrf::FewshotResult fewshot;                 // sizes {1,3,5,7,9}
  std::vector<vrf::UncertaintyBin> mixed_bins;  // half m=1, half m=9
  std::size_t m1_users = 0, m1_in_high = 0;
  std::size_t unseen_users = 0;
};

struct BenchResult {
  std::vector<SeedOutcome> seeds;
  vrf::TimingStats vrf_timing, rf_timing, vrf_timing_small;
  double elapsed_s = 0.0;
};

BenchResult run_benchmark() {
  const std::vector<std::size_t> fewshot_sizes{1, 3, 5, 7, 9};
  const auto start = Clock::now();
  BenchResult out;

  for (std::uint64_t seed = 101; seed <= 105; ++seed) {
    vrf::SyntheticConfig gen;  // 200 users, alpha 0.001: the defaults
    gen.seed = seed;
    const vrf::Dataset ds = vrf::generate_population(gen);

    vrf::TrainConfig tc;  // calibrated benchmark rate, shared by all models
    tc.learning_rate = 5e-3;
    tc.seed = seed;
    const vrf::TrainResult m_vrf = vrf::train(ds, tc, vrf::ModelKind::vrf);
    const vrf::TrainResult m_bt = vrf::train(ds, tc, vrf::ModelKind::bt);
    const vrf::TrainResult m_rf = vrf::train(ds, tc, vrf::ModelKind::rf);

    const vrf::Scorer s_vrf =
        vrf::make_scorer(m_vrf.params, vrf::read_model_info(m_vrf.params));
    const vrf::Scorer s_bt =
        vrf::make_scorer(m_bt.params, vrf::read_model_info(m_bt.params));
    const vrf::Scorer s_rf =
        vrf::make_scorer(m_rf.params, vrf::read_model_info(m_rf.params));

    SeedOutcome o;
    o.vrf_acc = vrf::accuracy_report(s_vrf, ds, 4);
    o.bt_acc = vrf::accuracy_report(s_bt, ds, 4);
    o.rf_acc = vrf::accuracy_report(s_rf, ds, 4);
    o.fewshot = vrf::fewshot_curve(s_vrf, ds, fewshot_sizes, seed, 4);

    // Mixed-size conditioning: unseen users alternate between one-shot and
    // nine-shot reference sets, then the terciles must separate them.
    std::vector<vrf::UserEval> mixed;
    std::size_t parity = 0;
    for (const vrf::UserRecord& u : ds.users) {
      if (u.split != vrf::Split::unseen) continue;
      const std::size_t m = (parity++ % 2 == 0) ? 1 : 9;
      const std::vector<std::size_t> perm = vrf::fewshot_permutation(u, seed);
      std::vector<vrf::Triplet> ref;
      for (std::size_t i = 0; i < std::min(m, perm.size()); ++i)
        ref.push_back(u.reference_set[perm[i]]);
      vrf::UserEval e = vrf::evaluate_user(s_vrf, u, ref);
      if (m == 1) e.user_id += "#m1";  // tag, keeps ids unique in the pool
      mixed.push_back(std::move(e));
      ++o.unseen_users;
    }
    o.mixed_bins = vrf::uncertainty_bins(mixed);
    const double high_cut = o.mixed_bins[2].min_uncertainty;
    for (const vrf::UserEval& e : mixed) {
      if (e.user_id.find("#m1") == std::string::npos) continue;
      ++o.m1_users;
      if (e.mean_uncertainty >= high_cut) ++o.m1_in_high;
    }

    if (seed == 101) {
      out.vrf_timing = vrf::time_adaptation(s_vrf, ds, 20, 3);
      out.rf_timing = vrf::time_adaptation(s_rf, ds, 20, 3);
      vrf::SyntheticConfig half = gen;
      half.num_users = 100;
      const vrf::Dataset small = vrf::generate_population(half);
      out.vrf_timing_small = vrf::time_adaptation(s_vrf, small, 20, 3);
    }
    out.seeds.push_back(std::move(o));
  }
  out.elapsed_s = seconds_since(start);
  return out;
}

Criterion benchmark_margins(const BenchResult& b) {
  double vrf_overall = 0, bt_overall = 0, vrf_unseen = 0, rf_unseen = 0;
  for (const SeedOutcome& o : b.seeds) {
    vrf_overall += o.vrf_acc.overall;
    bt_overall += o.bt_acc.overall;
    vrf_unseen += o.vrf_acc.unseen;
    rf_unseen += o.rf_acc.unseen;
  }
  const double n = double(b.seeds.size());
  vrf_overall /= n;
  bt_overall /= n;
  vrf_unseen /= n;
  rf_unseen /= n;

  const double bt_margin = 100.0 * (vrf_overall - bt_overall);
  const double rf_margin = 100.0 * (vrf_unseen - rf_unseen);
  Criterion c{5, "benchmark accuracy margins over both baselines", false, ""};
  c.pass = bt_margin >= 5.0 && rf_margin >= 2.0 && b.elapsed_s < 900.0;
  c.detail = fmt(
      "overall %.2f%% vs bt %.2f%% (+%.2f >= 5); unseen %.2f%% vs rf %.2f%% "
      "(+%.2f >= 2); 5 seeds in %.0fs < 900s",
      100 * vrf_overall, 100 * bt_overall, bt_margin, 100 * vrf_unseen,
      100 * rf_unseen, rf_margin, b.elapsed_s);
  return c;
}

Criterion fewshot_monotonicity(const BenchResult& b) {
  double acc1 = 0, acc9 = 0;
  std::size_t violations = 0, users_checked = 0;
  for (const SeedOutcome& o : b.seeds) {
    acc1 += o.fewshot.curve.front().accuracy;
    acc9 += o.fewshot.curve.back().accuracy;
    const auto& per_user = o.fewshot.per_user;
    for (std::size_t u = 0; u < per_user.front().size(); ++u) {
      ++users_checked;
      for (std::size_t i = 1; i < per_user.size(); ++i)
        if (per_user[i][u].mean_uncertainty >
            per_user[i - 1][u].mean_uncertainty)
          ++violations;
    }
  }
  const double n = double(b.seeds.size());
  acc1 /= n;
  acc9 /= n;
  Criterion c{6, "few-shot accuracy gain and exact uncertainty monotonicity",
              acc9 >= acc1 && violations == 0, ""};
  c.detail = fmt(
      "unseen accuracy %.2f%% at m=9 >= %.2f%% at m=1 (5-seed mean); "
      "0 uncertainty increases over %zu users x 5 sizes (%zu violations)",
      100 * acc9, 100 * acc1, users_checked, violations);
  return c;
}

Criterion uncertainty_calibration(const BenchResult& b) {
  std::size_t m1 = 0, m1_high = 0;
  bool partition_ok = true;
  for (const SeedOutcome& o : b.seeds) {
    std::size_t binned = 0;
    for (const vrf::UncertaintyBin& bin : o.mixed_bins) binned += bin.users;
    if (o.mixed_bins.size() != 3 || binned != o.unseen_users)
      partition_ok = false;
    m1 += o.m1_users;
    m1_high += o.m1_in_high;
  }
  const double rate = m1 ? double(m1_high) / double(m1) : 0.0;
  Criterion c{7, "one-shot users concentrate in the high-uncertainty tercile",
              partition_ok && rate > 0.5, ""};
  c.detail = fmt(
      "terciles partition every unseen split%s; %zu/%zu one-shot users in "
      "the high bin (%.0f%% > 50%%)",
      partition_ok ? "" : " FAILED", m1_high, m1, 100 * rate);
  return c;
}

Criterion adaptation_timing(const BenchResult& b) {
  const double v = b.vrf_timing.median_ms;
  const double r = b.rf_timing.median_ms;
  const double v_small = b.vrf_timing_small.median_ms;
  const double ratio =
      std::max(v, v_small) / std::max(1e-9, std::min(v, v_small));
  Criterion c{8, "adaptation latency ordering and population independence",
              v < r && ratio <= 2.0, ""};
  c.detail = fmt(
      "median %.3fms (forward) < %.3fms (gradient baseline) over %zu users; "
      "200-user vs 100-user population ratio %.2fx <= 2x",
      v, r, b.vrf_timing.users, ratio);
  return c;
}

// ---------------------------------------------------------------------------
// Criterion 10: byte determinism of a full generate/train/evaluate run.

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<char>(std::istreambuf_iterator<char>(in),
                           std::istreambuf_iterator<char>());
}

Criterion determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "vrf_acceptance_det";
  fs::remove_all(dir);
  fs::create_directories(dir);

  auto run = [&](int tag) {
    vrf::SyntheticConfig gen;  // the default benchmark population
    gen.seed = 7;
    const vrf::Dataset ds = vrf::generate_population(gen);
    const std::string ds_path =
        (dir / ("data" + std::to_string(tag) + ".vrfd")).string();
    vrf::save_dataset(ds, ds_path);

    vrf::TrainConfig tc;
    tc.epochs = 2;
    tc.learning_rate = 5e-3;
    tc.seed = 7;
    std::ostringstream metrics;
    const vrf::TrainResult r = vrf::train(ds, tc, vrf::ModelKind::vrf, &metrics);
    const std::string ckpt_path =
        (dir / ("model" + std::to_string(tag) + ".ckpt")).string();
    vrf::save_checkpoint(r.params, ckpt_path);

    std::vector<vrf::ParamStore> stores;
    stores.push_back(r.params);
    vrf::EvalOptions opts;
    opts.fewshot_sizes = {1, 9};
    opts.timing = false;  // wall-clock numbers are the one permitted variance
    const std::string report =
        vrf::report_to_json(vrf::evaluate_checkpoints(ds, stores, opts));
    return std::tuple(slurp(ds_path), slurp(ckpt_path), metrics.str(), report);
  };

  const auto [ds1, ck1, log1, rep1] = run(1);
  const auto [ds2, ck2, log2, rep2] = run(2);
  fs::remove_all(dir);

  const bool ds_ok = !ds1.empty() && ds1 == ds2;
  const bool ck_ok = !ck1.empty() && ck1 == ck2;
  const bool log_ok = !log1.empty() && log1 == log2;
  const bool rep_ok = !rep1.empty() && rep1 == rep2;
  Criterion c{10, "end-to-end byte determinism", ds_ok && ck_ok && log_ok && rep_ok, ""};
  c.detail = fmt(
      "repeated generate/train(2 epochs)/evaluate: dataset %s, checkpoint %s "
      "(%zu bytes), metrics log %s (%zu lines), report json %s",
      ds_ok ? "identical" : "DIFFERS", ck_ok ? "identical" : "DIFFERS",
      ck1.size(), log_ok ? "identical" : "DIFFERS",
      std::count(log1.begin(), log1.end(), '\n'),
      rep_ok ? "identical" : "DIFFERS");
  return c;
}

}  // namespace

int main() {
  std::vector<Criterion> results;
  results.push_back(oracle_suite());
  results.push_back(gradient_check());
  results.push_back(concavity());
  results.push_back(attenuation());

  const BenchResult bench = run_benchmark();
  results.push_back(benchmark_margins(bench));
  results.push_back(fewshot_monotonicity(bench));
  results.push_back(uncertainty_calibration(bench));
  results.push_back(adaptation_timing(bench));

  results.push_back(reduction_identities());
  results.push_back(determinism());

  std::sort(results.begin(), results.end(),
            [](const Criterion& a, const Criterion& b) { return a.id < b.id; });
  bool all_pass = true;
  for (const Criterion& c : results) {
    all_pass = all_pass && c.pass;
    std::printf("%s criterion %2d: %s — %s\n", c.pass ? "PASS" : "FAIL", c.id,
                c.label.c_str(), c.detail.c_str());
  }
  std::printf("%s\n", all_pass ? "acceptance: all criteria pass"
                               : "acceptance: CRITERIA FAILURES PRESENT");
  return all_pass ? 0 : 1;
}
