#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vrf/data.hpp"
#include "vrf/evaluate.hpp"
#include "vrf/pipeline.hpp"

using namespace vrf;

namespace {

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

const Dataset& eval_ds() {
  static const Dataset ds = [] {
    SyntheticConfig cfg;
    cfg.num_users = 16;
    cfg.alpha = 0.001;
    cfg.num_traits = 3;
    cfg.embedding_dim = 16;
    cfg.prompts_per_user = 12;
    cfg.candidates_per_prompt = 4;
    cfg.seed = 3;
    return generate_population(cfg);
  }();
  return ds;
}

TrainConfig eval_train_config(std::uint64_t seed = 5) {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.learning_rate = 3e-3;
  cfg.basis_count = 3;
  cfg.latent_dim = 8;
  cfg.encoder_hidden = 4;
  cfg.mc_samples = 2;
  cfg.epoch_reference_size = 2;
  cfg.seed = seed;
  return cfg;
}

const TrainResult& vrf_result() {
  static const TrainResult r = train(eval_ds(), eval_train_config(), ModelKind::vrf);
  return r;
}

const TrainResult& bt_result() {
  static const TrainResult r = train(eval_ds(), eval_train_config(), ModelKind::bt);
  return r;
}

const TrainResult& rf_result() {
  static const TrainResult r = train(eval_ds(), eval_train_config(), ModelKind::rf);
  return r;
}

Scorer scorer_of(const TrainResult& r) {
  return make_scorer(r.params, read_model_info(r.params));
}

}  // namespace

TEST_CASE("scorers expose each model through one interface") {
  const Dataset& ds = eval_ds();
  const UserRecord& unseen = ds.users[10];

  SUBCASE("bt has no per-user state and a constant weight") {
    const Scorer s = scorer_of(bt_result());
    CHECK(s.model == "bt");
    const UserWeights w = s.adapt(unseen, unseen.reference_set);
    CHECK(w.w == std::vector<double>{1.0});
    CHECK(w.mean_uncertainty == 0.0);
    const UserWeights empty = s.adapt(unseen, {});
    CHECK(empty.w == w.w);
  }
  SUBCASE("vrf adapts through the encoder") {
    const Scorer s = scorer_of(vrf_result());
    CHECK(s.model == "vrf");
    const UserWeights w = s.adapt(unseen, unseen.reference_set);
    REQUIRE(w.w.size() == 3);
    double sum = 0.0;
    for (double x : w.w) sum += x;
    CHECK(near(sum, 1.0, 1e-12));
    CHECK(w.mean_uncertainty > 0.0);
    // Prior fallback: unit average uncertainty.
    CHECK(s.adapt(unseen, {}).mean_uncertainty == 1.0);
  }
  SUBCASE("rf fits logits per call") {
    const Scorer s = scorer_of(rf_result());
    CHECK(s.model == "rf");
    const UserWeights w = s.adapt(unseen, unseen.reference_set);
    REQUIRE(w.w.size() == 3);
    const UserWeights empty = s.adapt(unseen, {});
    for (double x : empty.w) CHECK(near(x, 1.0 / 3, 1e-15));
  }
  SUBCASE("reward matches the personalized reward contract") {
    const Scorer s = scorer_of(vrf_result());
    const ModelInfo info = read_model_info(vrf_result().params);
    const UserWeights w = s.adapt(unseen, unseen.reference_set);
    const std::vector<double>& emb = unseen.target_set[0].chosen_embedding;
    CHECK(s.reward(w.w, emb) ==
          personalized_reward(w.w, emb, vrf_result().params, info));
  }
}

TEST_CASE("per-user evaluation pools the target pairs") {
  const Dataset& ds = eval_ds();
  const Scorer s = scorer_of(vrf_result());
  const UserRecord& unseen = ds.users[10];

  const UserEval e = evaluate_user(s, unseen, unseen.reference_set);
  CHECK(e.user_id == unseen.user_id);
  CHECK(e.total == unseen.target_set.size());
  CHECK(e.correct <= e.total);
  CHECK(e.mean_uncertainty > 0.0);

  SUBCASE("a user without targets is a caller error") {
    UserRecord bare = unseen;
    bare.target_set.clear();
    CHECK_THROWS_AS(evaluate_user(s, bare, bare.reference_set),
                    std::invalid_argument);
  }
}

TEST_CASE("split accuracy report") {
  const Dataset& ds = eval_ds();
  const Scorer s = scorer_of(vrf_result());
  const SplitAccuracy acc = accuracy_report(s, ds);
  CHECK(acc.seen >= 0.0);
  CHECK(acc.seen <= 1.0);
  CHECK(acc.unseen >= 0.0);
  CHECK(acc.unseen <= 1.0);
  CHECK(acc.overall == 0.5 * (acc.seen + acc.unseen));

  SUBCASE("worker count never changes the numbers") {
    const SplitAccuracy par = accuracy_report(s, ds, 4);
    CHECK(par.seen == acc.seen);
    CHECK(par.unseen == acc.unseen);
    const SplitAccuracy bt = accuracy_report(scorer_of(bt_result()), ds, 1);
    const SplitAccuracy bt4 = accuracy_report(scorer_of(bt_result()), ds, 4);
    CHECK(bt.seen == bt4.seen);
    CHECK(bt.unseen == bt4.unseen);
  }
}

TEST_CASE("few-shot curves condition on nested prefixes") {
  const Dataset& ds = eval_ds();
  const Scorer s = scorer_of(vrf_result());
  const std::vector<std::size_t> sizes{1, 3, 6};
  const FewshotResult r = fewshot_curve(s, ds, sizes, 7);

  REQUIRE(r.curve.size() == 3);
  REQUIRE(r.per_user.size() == 3);
  const std::size_t unseen_users = 8;
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(r.curve[i].m == sizes[i]);
    CHECK(r.curve[i].accuracy >= 0.0);
    CHECK(r.curve[i].accuracy <= 1.0);
    CHECK(r.per_user[i].size() == unseen_users);
  }
  SUBCASE("per-user uncertainty never grows with more evidence") {
    for (std::size_t u = 0; u < unseen_users; ++u) {
      CHECK(r.per_user[1][u].mean_uncertainty <=
            r.per_user[0][u].mean_uncertainty);
      CHECK(r.per_user[2][u].mean_uncertainty <=
            r.per_user[1][u].mean_uncertainty);
    }
  }
  SUBCASE("permutations are seeded per user") {
    const UserRecord& u = ds.users[12];
    const std::vector<std::size_t> p1 = fewshot_permutation(u, 7);
    CHECK(p1 == fewshot_permutation(u, 7));
    CHECK(p1 != fewshot_permutation(u, 8));
    CHECK(p1.size() == u.reference_set.size());
    CHECK(fewshot_permutation(ds.users[13], 7) != p1);
  }
  SUBCASE("curves are reproducible and respond to the seed") {
    const FewshotResult again = fewshot_curve(s, ds, sizes, 7);
    for (std::size_t i = 0; i < 3; ++i)
      CHECK(again.curve[i].mean_uncertainty == r.curve[i].mean_uncertainty);
    const FewshotResult other = fewshot_curve(s, ds, sizes, 8);
    CHECK(other.curve[0].mean_uncertainty != r.curve[0].mean_uncertainty);
  }
  SUBCASE("threading changes nothing") {
    const FewshotResult par = fewshot_curve(s, ds, sizes, 7, 4);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(par.curve[i].accuracy == r.curve[i].accuracy);
      CHECK(par.curve[i].mean_uncertainty == r.curve[i].mean_uncertainty);
    }
  }
  SUBCASE("a dataset without unseen users is a caller error") {
    Dataset seen_only = ds;
    for (UserRecord& u : seen_only.users) u.split = Split::seen;
    CHECK_THROWS_AS(fewshot_curve(s, seen_only, sizes, 7),
                    std::invalid_argument);
  }
}

TEST_CASE("uncertainty terciles partition users deterministically") {
  std::vector<UserEval> users;
  for (int i = 0; i < 10; ++i) {
    UserEval e;
    e.user_id = "user_" + std::to_string(i);
    e.mean_uncertainty = 0.1 * i;
    e.correct = i < 5 ? 1 : 0;
    e.total = 1;
    users.push_back(e);
  }
  const std::vector<UncertaintyBin> bins = uncertainty_bins(users);
  REQUIRE(bins.size() == 3);
  CHECK(bins[0].users == 4);
  CHECK(bins[1].users == 3);
  CHECK(bins[2].users == 3);
  CHECK(bins[0].users + bins[1].users + bins[2].users == 10);
  CHECK(near(bins[0].min_uncertainty, 0.0, 1e-15));
  CHECK(near(bins[0].max_uncertainty, 0.3, 1e-15));
  CHECK(near(bins[2].min_uncertainty, 0.7, 1e-15));
  CHECK(bins[0].accuracy == 1.0);
  CHECK(near(bins[1].accuracy, 1.0 / 3, 1e-15));
  CHECK(bins[2].accuracy == 0.0);
  // The bins order low to high uncertainty.
  CHECK(bins[0].max_uncertainty <= bins[1].min_uncertainty);
  CHECK(bins[1].max_uncertainty <= bins[2].min_uncertainty);

  SUBCASE("three users split one each") {
    users.resize(3);
    const std::vector<UncertaintyBin> tiny = uncertainty_bins(users);
    CHECK(tiny[0].users == 1);
    CHECK(tiny[1].users == 1);
    CHECK(tiny[2].users == 1);
  }
  SUBCASE("fewer than three users cannot form terciles") {
    users.resize(2);
    CHECK_THROWS_AS(uncertainty_bins(users), std::invalid_argument);
  }
  SUBCASE("ties break by user id") {
    std::vector<UserEval> tied;
    for (char c : {'b', 'a', 'd', 'c'}) {
      UserEval e;
      e.user_id = std::string(1, c);
      e.mean_uncertainty = 1.0;
      e.correct = c == 'a' || c == 'b';
      e.total = 1;
      tied.push_back(e);
    }
    const std::vector<UncertaintyBin> tb = uncertainty_bins(tied);
    // Sorted order a, b, c, d with sizes 2/1/1.
    CHECK(tb[0].users == 2);
    CHECK(tb[0].correct == 2);
    CHECK(tb[1].correct == 0);
  }
}

TEST_CASE("best-of-n regret needs ground truth and shrinks with training") {
  const Dataset& ds = eval_ds();
  const std::vector<std::size_t> sizes{1, 6};

  SUBCASE("regret is nonnegative and reported per size") {
    const std::vector<RegretPoint> pts =
        best_of_n_regret(scorer_of(vrf_result()), ds, sizes, 7);
    REQUIRE(pts.size() == 2);
    CHECK(pts[0].m == 1);
    CHECK(pts[1].m == 6);
    for (const RegretPoint& p : pts) CHECK(p.regret >= 0.0);
  }
  SUBCASE("a trained model beats its own initialization") {
    TrainConfig strong = eval_train_config();
    strong.epochs = 5;
    strong.learning_rate = 5e-3;
    TrainConfig frozen = strong;
    frozen.epochs = 0;
    const TrainResult fitted = train(ds, strong, ModelKind::vrf);
    const TrainResult init = train(ds, frozen, ModelKind::vrf);
    const std::vector<RegretPoint> untrained =
        best_of_n_regret(scorer_of(init), ds, sizes, 7);
    const std::vector<RegretPoint> trained =
        best_of_n_regret(scorer_of(fitted), ds, sizes, 7);
    CHECK(trained[1].regret < untrained[1].regret);
  }
  SUBCASE("stripped ground truth is an error") {
    Dataset bare = ds;
    bare.trait_directions.clear();
    for (UserRecord& u : bare.users) {
      u.ground_truth_weights.clear();
      for (CandidateSet& p : u.prompts) p.trait_scores.clear();
    }
    try {
      best_of_n_regret(scorer_of(vrf_result()), bare, sizes, 7);
      FAIL("missing ground truth did not throw");
    } catch (const DataError& e) {
      CHECK(e.code == DataErrorCode::ground_truth);
    }
  }
}

TEST_CASE("adaptation timing") {
  const Dataset& ds = eval_ds();
  const TimingStats t = time_adaptation(scorer_of(vrf_result()), ds, 5, 1);
  CHECK(t.users == 5);
  CHECK(t.median_ms > 0.0);
  CHECK(t.p95_ms >= t.median_ms);
  const TimingStats all = time_adaptation(scorer_of(vrf_result()), ds, 100, 1);
  CHECK(all.users == 8);  // capped by the unseen population
}

TEST_CASE("seed statistics") {
  const SeedStats s = seed_stats(std::vector<double>{1.0, 2.0, 3.0});
  CHECK(s.mean == 2.0);
  CHECK(s.stddev == 1.0);
  CHECK(s.values == std::vector<double>{1.0, 2.0, 3.0});
  const SeedStats one = seed_stats(std::vector<double>{4.2});
  CHECK(one.mean == 4.2);
  CHECK(one.stddev == 0.0);
}

TEST_CASE("multi-checkpoint aggregation and serialization") {
  const Dataset& ds = eval_ds();
  std::vector<ParamStore> stores;
  stores.push_back(vrf_result().params);
  stores.push_back(train(ds, eval_train_config(11), ModelKind::vrf).params);

  EvalOptions opts;
  opts.fewshot_sizes = {1, 6};
  opts.timing = false;  // keep the report clock-free
  const EvalReport rep = evaluate_checkpoints(ds, stores, opts);

  CHECK(rep.model == "vrf");
  CHECK(rep.checkpoint_count == 2);
  CHECK(rep.seen_acc.values.size() == 2);
  CHECK(rep.unseen_acc.values.size() == 2);
  REQUIRE(rep.fewshot_acc.size() == 2);
  CHECK(rep.fewshot_acc[0].values.size() == 2);
  CHECK(rep.regret.size() == 2);
  REQUIRE(rep.bins.size() == 3);
  CHECK(rep.bins[0].users + rep.bins[1].users + rep.bins[2].users == 16);

  SUBCASE("json round trips through a parser") {
    const std::string text = report_to_json(rep);
    const nlohmann::json j = nlohmann::json::parse(text);
    CHECK(j["model"] == "vrf");
    CHECK(j["checkpoints"] == 2);
    CHECK(j["accuracy"]["unseen"]["values"].size() == 2);
    CHECK(j["fewshot"].size() == 2);
    CHECK(j["uncertainty_bins"].size() == 3);
    SUBCASE("and is deterministic for a fixed input") {
      const EvalReport again = evaluate_checkpoints(ds, stores, opts);
      CHECK(report_to_json(again) == text);
    }
  }
  SUBCASE("csv files land under the directory") {
    const std::string dir =
        (std::filesystem::temp_directory_path() / "vrf_csv_test").string();
    std::filesystem::remove_all(dir);
    write_report_csvs(rep, dir);
    for (const char* name : {"fewshot.csv", "bins.csv", "timing.csv"}) {
      std::ifstream in(dir + "/" + name);
      REQUIRE(in.good());
      std::string header;
      std::getline(in, header);
      CHECK(header.find(',') != std::string::npos);
    }
    std::filesystem::remove_all(dir);
  }
  SUBCASE("mixed model kinds cannot aggregate") {
    std::vector<ParamStore> mixed;
    mixed.push_back(vrf_result().params);
    mixed.push_back(bt_result().params);
    CHECK_THROWS_AS(evaluate_checkpoints(ds, mixed, opts),
                    std::invalid_argument);
  }
}
