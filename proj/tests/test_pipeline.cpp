#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "vrf/data.hpp"
#include "vrf/mathutil.hpp"
#include "vrf/objective.hpp"
#include "vrf/pipeline.hpp"

using namespace vrf;

namespace {

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

Dataset tiny_dataset(std::uint64_t seed = 3) {
  SyntheticConfig cfg;
  cfg.num_users = 8;
  cfg.alpha = 0.001;
  cfg.num_traits = 3;
  cfg.embedding_dim = 16;
  cfg.prompts_per_user = 12;  // seen users keep a 3-prompt training pool
  cfg.candidates_per_prompt = 4;
  cfg.seed = seed;
  return generate_population(cfg);
}

TrainConfig tiny_train() {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-3;
  cfg.basis_count = 3;
  cfg.latent_dim = 8;
  cfg.encoder_hidden = 4;
  cfg.mc_samples = 2;
  cfg.epoch_reference_size = 2;
  cfg.seed = 5;
  return cfg;
}

bool stores_equal(const ParamStore& a, const ParamStore& b) {
  if (a.entry_count() != b.entry_count()) return false;
  auto ia = a.begin();
  auto ib = b.begin();
  for (; ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first) return false;
    if (ia->second.shape != ib->second.shape) return false;
    if (ia->second.value != ib->second.value) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("model kinds round trip through their names") {
  CHECK(model_name(ModelKind::vrf) == "vrf");
  CHECK(model_name(ModelKind::bt) == "bt");
  CHECK(model_name(ModelKind::rf) == "rf");
  CHECK(model_from_name("vrf") == ModelKind::vrf);
  CHECK(model_from_name("rf") == ModelKind::rf);
  CHECK_THROWS(model_from_name("gpt"));
}

TEST_CASE("zero-epoch training returns the untouched initialization") {
  const Dataset ds = tiny_dataset();
  TrainConfig cfg = tiny_train();
  cfg.epochs = 0;
  const TrainResult a = train(ds, cfg, ModelKind::vrf);
  const TrainResult b = train(ds, cfg, ModelKind::vrf);
  CHECK(stores_equal(a.params, b.params));
  CHECK(a.params.step_count == 0);
  CHECK(a.epochs.empty());
  CHECK(a.params.has("enc.w1"));
  CHECK(a.params.has("bases.mean.0"));
  CHECK(a.params.has("head.w1"));
  CHECK(a.params.scalar("cfg.model") == 0.0);
}

TEST_CASE("training is deterministic end to end") {
  const Dataset ds = tiny_dataset();
  const TrainConfig cfg = tiny_train();
  std::ostringstream log_a, log_b;
  const TrainResult a = train(ds, cfg, ModelKind::vrf, &log_a);
  const TrainResult b = train(ds, cfg, ModelKind::vrf, &log_b);
  CHECK(stores_equal(a.params, b.params));
  CHECK(log_a.str() == log_b.str());
  CHECK(!log_a.str().empty());

  SUBCASE("the seed matters") {
    TrainConfig other = cfg;
    other.seed = cfg.seed + 1;
    const TrainResult c = train(ds, other, ModelKind::vrf);
    CHECK_FALSE(stores_equal(a.params, c.params));
  }
  SUBCASE("parameters actually move") {
    TrainConfig frozen = cfg;
    frozen.epochs = 0;
    const TrainResult init = train(ds, frozen, ModelKind::vrf);
    CHECK_FALSE(stores_equal(a.params, init.params));
    CHECK(a.params.step_count > 0);
  }
}

TEST_CASE("metrics stream carries one line per step and epoch") {
  const Dataset ds = tiny_dataset();
  TrainConfig cfg = tiny_train();
  cfg.epochs = 2;
  std::ostringstream log;
  const TrainResult r = train(ds, cfg, ModelKind::vrf, &log);

  // 4 seen users x (3-prompt pool - 2 conditioning) = 4 pairs; batch 4.
  std::size_t steps = 0, epochs = 0;
  std::istringstream in(log.str());
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("step ", 0) == 0) {
      ++steps;
      CHECK(line.find("loss=") != std::string::npos);
      CHECK(line.find("vbt=") != std::string::npos);
      CHECK(line.find("sep=") != std::string::npos);
      CHECK(line.find("reg=") != std::string::npos);
      CHECK(line.find("lr=") != std::string::npos);
    } else if (line.rfind("epoch ", 0) == 0) {
      ++epochs;
      CHECK(line.find("seen_acc=") != std::string::npos);
      CHECK(line.find("unseen_acc=") != std::string::npos);
    } else {
      FAIL("unexpected metrics line: ", line);
    }
  }
  CHECK(steps == 2);
  CHECK(epochs == 2);
  REQUIRE(r.epochs.size() == 2);
  for (const EpochRow& row : r.epochs) {
    CHECK(std::isfinite(row.loss));
    CHECK(row.seen_acc >= 0.0);
    CHECK(row.seen_acc <= 1.0);
    CHECK(row.unseen_acc >= 0.0);
    CHECK(row.unseen_acc <= 1.0);
  }
}

TEST_CASE("a conditioning size that consumes the pool is rejected") {
  const Dataset ds = tiny_dataset();
  TrainConfig cfg = tiny_train();
  cfg.epoch_reference_size = 3;  // equals the seen-user pool: nothing to train
  try {
    train(ds, cfg, ModelKind::vrf);
    FAIL("degenerate split did not throw");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("no training pairs") != std::string::npos);
  }
}

TEST_CASE("baseline training populates kind-specific parameters") {
  const Dataset ds = tiny_dataset();
  const TrainConfig cfg = tiny_train();

  SUBCASE("bt trains a single scalar head and no bases") {
    const TrainResult r = train(ds, cfg, ModelKind::bt);
    CHECK(r.params.at("head.w2").shape[0] == 1);
    CHECK_FALSE(r.params.has("bases.mean.0"));
    CHECK_FALSE(r.params.has("enc.w1"));
    CHECK(read_model_info(r.params).kind == ModelKind::bt);
  }
  SUBCASE("rf trains K heads plus per-seen-user logits") {
    const TrainResult r = train(ds, cfg, ModelKind::rf);
    CHECK(r.params.at("head.w2").shape[0] == 3);
    for (int i = 0; i < 4; ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "rf.logits.user_%04d", i);
      CHECK(r.params.has(id));
    }
    CHECK_FALSE(r.params.has("rf.logits.user_0004"));  // unseen
    CHECK_FALSE(r.params.has("enc.w1"));
  }
}

TEST_CASE("model info survives the checkpoint metadata") {
  const Dataset ds = tiny_dataset();
  const TrainConfig cfg = tiny_train();
  const TrainResult r = train(ds, cfg, ModelKind::vrf);
  const ModelInfo info = read_model_info(r.params);
  CHECK(info.kind == ModelKind::vrf);
  CHECK(info.enc.embed_dim == 16);
  CHECK(info.enc.hidden == 4);
  CHECK(info.enc.latent == 8);
  CHECK(info.bases.count == 3);
  CHECK(info.bases.tau_d == cfg.tau_d);
  CHECK(info.bases.tau_m == cfg.tau_m);
  CHECK(info.head.count == 3);
  CHECK(info.beta == cfg.beta);
  CHECK(info.mc_samples == cfg.mc_samples);
  CHECK(info.seed == cfg.seed);

  SUBCASE("a store without metadata is rejected") {
    ParamStore bare;
    CHECK_THROWS(read_model_info(bare));
  }
  SUBCASE("write/read is an identity on the fields") {
    ParamStore store;
    ModelInfo again = info;
    again.kind = ModelKind::rf;
    again.beta = 0.25;
    write_model_info(store, again);
    const ModelInfo back = read_model_info(store);
    CHECK(back.kind == ModelKind::rf);
    CHECK(back.beta == 0.25);
    CHECK(back.enc.latent == info.enc.latent);
  }
}

TEST_CASE("user inference") {
  const Dataset ds = tiny_dataset();
  const TrainConfig cfg = tiny_train();
  const TrainResult r = train(ds, cfg, ModelKind::vrf);
  const ModelInfo info = read_model_info(r.params);
  const UserRecord& unseen = ds.users[5];

  SUBCASE("weights live on the simplex and respond to evidence") {
    const InferResult full = infer_user(unseen.reference_set, r.params, info);
    CHECK_FALSE(full.fallback);
    REQUIRE(full.weights.w.size() == 3);
    double sum = 0.0;
    for (double w : full.weights.w) sum += w;
    CHECK(near(sum, 1.0, 1e-12));
    CHECK(full.user.dim() == 8);

    const InferResult empty = infer_user({}, r.params, info);
    CHECK(empty.fallback);
    CHECK(empty.weights.mean_uncertainty == 1.0);  // N(0, I)
    CHECK(full.weights.mean_uncertainty < empty.weights.mean_uncertainty);
  }
  SUBCASE("inference is read-only") {
    const std::vector<double> before = r.params.at("enc.w1").value;
    (void)infer_user(unseen.reference_set, r.params, info);
    CHECK(r.params.at("enc.w1").value == before);
  }
  SUBCASE("baseline checkpoints are refused") {
    const TrainResult bt = train(ds, cfg, ModelKind::bt);
    const ModelInfo bt_info = read_model_info(bt.params);
    try {
      infer_user(unseen.reference_set, bt.params, bt_info);
      FAIL("bt checkpoint did not throw");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("expected 'vrf'") != std::string::npos);
    }
  }
}

TEST_CASE("personalized reward is the weighted basis score") {
  const Dataset ds = tiny_dataset();
  const TrainResult r = train(ds, tiny_train(), ModelKind::vrf);
  const ModelInfo info = read_model_info(r.params);
  const std::vector<double>& emb =
      ds.users[5].target_set[0].chosen_embedding;
  const std::vector<double> w{0.2, 0.5, 0.3};
  const std::vector<double> scores = basis_rewards(emb, r.params, info.head);
  const double expect = 0.2 * scores[0] + 0.5 * scores[1] + 0.3 * scores[2];
  CHECK(near(personalized_reward(w, emb, r.params, info), expect, 1e-15));
}

TEST_CASE("factorized-baseline adaptation fits fresh logits") {
  const Dataset ds = tiny_dataset();
  const TrainResult r = train(ds, tiny_train(), ModelKind::rf);
  const ModelInfo info = read_model_info(r.params);
  const UserRecord& unseen = ds.users[6];

  SUBCASE("no evidence keeps the uniform mixture") {
    const UserWeights w = rf_adapt_weights({}, r.params, info);
    REQUIRE(w.w.size() == 3);
    for (double x : w.w) CHECK(x == doctest::Approx(1.0 / 3).epsilon(1e-15));
  }
  SUBCASE("evidence moves the weights and stays on the simplex") {
    const UserWeights w = rf_adapt_weights(unseen.reference_set, r.params, info);
    double sum = 0.0, spread = 0.0;
    for (double x : w.w) {
      sum += x;
      spread += std::abs(x - 1.0 / 3);
    }
    CHECK(near(sum, 1.0, 1e-12));
    CHECK(spread > 1e-6);
    SUBCASE("deterministically") {
      const UserWeights again =
          rf_adapt_weights(unseen.reference_set, r.params, info);
      CHECK(w.w == again.w);
    }
  }
  SUBCASE("adaptation reduces the user's preference loss") {
    ParamStore scratch;
    for (const auto& [name, entry] : r.params) {
      ParamEntry& e = scratch.add(name, entry.shape);
      e.value = entry.value;
    }
    const UserWeights fitted =
        rf_adapt_weights(unseen.reference_set, r.params, info, 100, 0.05);
    // Loss of a fixed weight vector over the reference set.
    const auto loss_of = [&](const std::vector<double>& w) {
      double acc = 0.0;
      for (const Triplet& t : unseen.reference_set) {
        const std::vector<double> rp =
            basis_rewards(t.chosen_embedding, scratch, info.head);
        const std::vector<double> rm =
            basis_rewards(t.rejected_embedding, scratch, info.head);
        double gap = 0.0;
        for (std::size_t k = 0; k < w.size(); ++k)
          gap += w[k] * (rp[k] - rm[k]);
        acc += softplus(-gap);
      }
      return acc / double(unseen.reference_set.size());
    };
    const std::vector<double> uniform(3, 1.0 / 3);
    CHECK(loss_of(fitted.w) < loss_of(uniform));
  }
  SUBCASE("the shared store is never mutated") {
    const std::vector<double> before = r.params.at("head.w1").value;
    (void)rf_adapt_weights(unseen.reference_set, r.params, info);
    CHECK(r.params.at("head.w1").value == before);
    CHECK_FALSE(r.params.has("rf.logits.user_0006"));
  }
}

TEST_CASE("the learning-rate schedule shows up in the metrics") {
  const Dataset ds = tiny_dataset();
  TrainConfig cfg = tiny_train();
  cfg.epochs = 4;
  std::ostringstream log;
  (void)train(ds, cfg, ModelKind::bt, &log);

  std::vector<double> lrs;
  std::istringstream in(log.str());
  std::string line;
  while (std::getline(in, line)) {
    const auto pos = line.find("lr=");
    if (line.rfind("step ", 0) == 0 && pos != std::string::npos)
      lrs.push_back(std::stod(line.substr(pos + 3)));
  }
  REQUIRE(lrs.size() == 4);
  CHECK(lrs[0] == cfg.learning_rate);  // cosine starts at the base rate
  for (std::size_t i = 1; i < lrs.size(); ++i) CHECK(lrs[i] < lrs[i - 1]);
}
