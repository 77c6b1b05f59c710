#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "vrf/encoder.hpp"
#include "vrf/mathutil.hpp"

using namespace vrf;

namespace {

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

Triplet make_triplet(std::string id, std::vector<double> plus,
                     std::vector<double> minus) {
  Triplet t;
  t.query_id = std::move(id);
  t.chosen_embedding = std::move(plus);
  t.rejected_embedding = std::move(minus);
  return t;
}

std::vector<Triplet> random_triplets(std::size_t n, std::size_t h,
                                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Triplet> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> plus(h), minus(h);
    for (auto& v : plus) v = normal(rng);
    for (auto& v : minus) v = normal(rng);
    out.push_back(make_triplet("q" + std::to_string(i), plus, minus));
  }
  return out;
}

}  // namespace

TEST_CASE("pairwise feature splits content and direction") {
  const Triplet t = make_triplet("q", {2.0, 0.0}, {0.0, 2.0});
  const PairwiseFeature f = build_pairwise_feature(t);
  REQUIRE(f.v.size() == 4);
  CHECK(f.v[0] == 1.0);
  CHECK(f.v[1] == 1.0);
  CHECK(f.v[2] == 2.0);
  CHECK(f.v[3] == -2.0);

  SUBCASE("swapping the pair flips only the direction half") {
    const Triplet s = make_triplet("q", {0.0, 2.0}, {2.0, 0.0});
    const PairwiseFeature g = build_pairwise_feature(s);
    CHECK(g.v[0] == f.v[0]);
    CHECK(g.v[1] == f.v[1]);
    CHECK(g.v[2] == -f.v[2]);
    CHECK(g.v[3] == -f.v[3]);
  }
  SUBCASE("length mismatch names the query") {
    const Triplet bad = make_triplet("query_7", {1.0, 2.0}, {1.0});
    try {
      (void)build_pairwise_feature(bad);
      FAIL("mismatch did not throw");
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find("query_7") != std::string::npos);
    }
  }
}

TEST_CASE("encoder initialization is seeded and shaped") {
  const EncoderShape shape{.embed_dim = 4, .hidden = 3, .latent = 5};
  ParamStore a, b, c;
  init_encoder(a, shape, 11);
  init_encoder(b, shape, 11);
  init_encoder(c, shape, 12);

  CHECK(a.at("enc.w1").shape == std::vector<std::size_t>{3, 8});
  CHECK(a.at("enc.w2").shape == std::vector<std::size_t>{10, 3});
  CHECK(a.at("enc.w1").value == b.at("enc.w1").value);
  CHECK(a.at("enc.w2").value == b.at("enc.w2").value);
  CHECK(a.at("enc.w1").value != c.at("enc.w1").value);
  for (double v : a.at("enc.b1").value) CHECK(v == 0.0);
  for (double v : a.at("enc.b2").value) CHECK(v == 0.0);

  SUBCASE("view rejects a store built for another shape") {
    const EncoderShape other{.embed_dim = 4, .hidden = 2, .latent = 5};
    CHECK_THROWS_AS(EncoderParams::view(a, other), std::invalid_argument);
  }
}

TEST_CASE("observation encoding matches the hand-evaluated MLP") {
  const EncoderShape shape{.embed_dim = 1, .hidden = 1, .latent = 1};
  ParamStore store;
  init_encoder(store, shape, 1);
  store.at("enc.w1").value = {0.3, -0.2};
  store.at("enc.b1").value = {0.1};
  store.at("enc.w2").value = {0.5, -0.4};
  store.at("enc.b2").value = {0.2, 0.05};

  const Triplet t = make_triplet("q", {1.0}, {-1.0});
  const PairwiseFeature f = build_pairwise_feature(t);
  const DiagonalGaussian g =
      encode_observation(f, EncoderParams::view(store, shape));

  const double h = gelu(0.3 * 0.0 + (-0.2) * 2.0 + 0.1);
  CHECK(g.mean[0] == doctest::Approx(0.5 * h + 0.2).epsilon(1e-15));
  CHECK(g.std[0] ==
        doctest::Approx(softplus(-0.4 * h + 0.05) + 1e-4).epsilon(1e-15));

  SUBCASE("std saturates at its floor, never below") {
    store.at("enc.w2").value = {0.5, 0.0};
    store.at("enc.b2").value = {0.2, -1000.0};
    const DiagonalGaussian floor =
        encode_observation(f, EncoderParams::view(store, shape));
    CHECK(floor.std[0] == 1e-4);
  }
}

TEST_CASE("product aggregation and the empty-reference fallback") {
  SUBCASE("empty reference yields the standard normal prior") {
    const AggregateResult r = aggregate_user({}, 4);
    CHECK(r.fallback);
    CHECK(r.user.mean == std::vector<double>{0.0, 0.0, 0.0, 0.0});
    CHECK(r.user.std == std::vector<double>{1.0, 1.0, 1.0, 1.0});
  }
  SUBCASE("non-empty aggregation never raises the flag") {
    std::vector<DiagonalGaussian> obs{DiagonalGaussian({0.5}, {2.0})};
    const AggregateResult r = aggregate_user(obs, 1);
    CHECK_FALSE(r.fallback);
    CHECK(r.user.mean == obs[0].mean);
    CHECK(r.user.std == obs[0].std);
  }
}

TEST_CASE("user encoding composes feature, MLP, and aggregation") {
  const EncoderShape shape{.embed_dim = 3, .hidden = 2, .latent = 4};
  ParamStore store;
  init_encoder(store, shape, 5);
  const std::vector<Triplet> ref = random_triplets(4, 3, 99);

  const AggregateResult whole = encode_user(ref, store, shape);
  CHECK_FALSE(whole.fallback);

  const EncoderParams params = EncoderParams::view(store, shape);
  std::vector<DiagonalGaussian> obs;
  for (const Triplet& t : ref)
    obs.push_back(encode_observation(build_pairwise_feature(t), params));
  const AggregateResult manual = aggregate_user(obs, shape.latent);
  CHECK(whole.user.mean == manual.user.mean);
  CHECK(whole.user.std == manual.user.std);

  SUBCASE("each added observation can only tighten the posterior") {
    for (std::size_t k = 1; k <= ref.size(); ++k) {
      const AggregateResult prefix =
          encode_user(std::span(ref).first(k), store, shape);
      const AggregateResult shorter =
          encode_user(std::span(ref).first(k - 1), store, shape);
      for (std::size_t d = 0; d < shape.latent; ++d)
        CHECK(prefix.user.std[d] <= shorter.user.std[d]);
    }
  }
}

TEST_CASE("graph encoder agrees with the plain path") {
  const EncoderShape shape{.embed_dim = 4, .hidden = 3, .latent = 5};
  ParamStore store;
  init_encoder(store, shape, 21);
  const std::vector<Triplet> ref = random_triplets(5, 4, 77);

  ad::Tape tape;
  const BoundParams bound = BoundParams::bind(tape, store);
  const graph::GaussNodes nodes = graph::encode_user(tape, ref, bound, shape);
  const AggregateResult plain = encode_user(ref, store, shape);

  REQUIRE(nodes.mean.size() == shape.latent);
  for (std::size_t d = 0; d < shape.latent; ++d) {
    CHECK(near(tape.val(nodes.mean[d]), plain.user.mean[d], 1e-12));
    CHECK(near(tape.val(nodes.std[d]), plain.user.std[d], 1e-12));
  }

  SUBCASE("empty reference builds the prior as constants") {
    ad::Tape t2;
    const BoundParams b2 = BoundParams::bind(t2, store);
    const graph::GaussNodes prior = graph::encode_user(t2, {}, b2, shape);
    for (std::size_t d = 0; d < shape.latent; ++d) {
      CHECK(t2.val(prior.mean[d]) == 0.0);
      CHECK(t2.val(prior.std[d]) == 1.0);
    }
  }
}
