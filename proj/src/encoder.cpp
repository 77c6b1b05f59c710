#include "vrf/encoder.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "vrf/mathutil.hpp"
#include "vrf/numerics.hpp"

namespace vrf {

namespace {

void xavier_fill(std::span<double> w, std::size_t fan_in, std::size_t fan_out,
                 std::mt19937_64& rng) {
  std::normal_distribution<double> normal(
      0.0, std::sqrt(2.0 / static_cast<double>(fan_in + fan_out)));
  for (double& x : w) x = normal(rng);
}

}  // namespace

EncoderParams EncoderParams::view(const ParamStore& store,
                                  const EncoderShape& shape) {
  EncoderParams p;
  p.w1 = store.at("enc.w1").value;
  p.b1 = store.at("enc.b1").value;
  p.w2 = store.at("enc.w2").value;
  p.b2 = store.at("enc.b2").value;
  p.shape = shape;
  if (p.w1.size() != shape.hidden * shape.in_dim() ||
      p.b1.size() != shape.hidden ||
      p.w2.size() != shape.out_dim() * shape.hidden ||
      p.b2.size() != shape.out_dim())
    throw std::invalid_argument("EncoderParams: store shapes do not match");
  return p;
}

void init_encoder(ParamStore& store, const EncoderShape& shape,
                  std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, fnv1a("enc")));
  ParamEntry& w1 = store.add("enc.w1", {shape.hidden, shape.in_dim()});
  xavier_fill(w1.value, shape.in_dim(), shape.hidden, rng);
  store.add("enc.b1", {shape.hidden});
  ParamEntry& w2 = store.add("enc.w2", {shape.out_dim(), shape.hidden});
  xavier_fill(w2.value, shape.hidden, shape.out_dim(), rng);
  store.add("enc.b2", {shape.out_dim()});
}

PairwiseFeature build_pairwise_feature(const Triplet& t) {
  const std::size_t h = t.chosen_embedding.size();
  if (t.rejected_embedding.size() != h)
    throw std::invalid_argument("build_pairwise_feature: length mismatch in " +
                                t.query_id);
  PairwiseFeature f;
  f.v.resize(2 * h);
  for (std::size_t i = 0; i < h; ++i) {
    f.v[i] = 0.5 * (t.chosen_embedding[i] + t.rejected_embedding[i]);
    f.v[h + i] = t.chosen_embedding[i] - t.rejected_embedding[i];
  }
  return f;
}

DiagonalGaussian encode_observation(const PairwiseFeature& v,
                                    const EncoderParams& params) {
  const EncoderShape& s = params.shape;
  if (v.v.size() != s.in_dim())
    throw std::invalid_argument("encode_observation: feature length mismatch");
  std::vector<double> hidden(s.hidden);
  for (std::size_t j = 0; j < s.hidden; ++j) {
    double a = dot(params.w1.subspan(j * s.in_dim(), s.in_dim()), v.v);
    hidden[j] = gelu(a + params.b1[j]);
  }
  std::vector<double> mean(s.latent), std_out(s.latent);
  for (std::size_t i = 0; i < s.out_dim(); ++i) {
    double o = dot(params.w2.subspan(i * s.hidden, s.hidden), hidden) +
               params.b2[i];
    if (!std::isfinite(o))
      throw std::runtime_error("encode_observation: non-finite output");
    if (i < s.latent)
      mean[i] = o;
    else
      std_out[i - s.latent] = softplus(o) + 1e-4;
  }
  return DiagonalGaussian(std::move(mean), std::move(std_out));
}

AggregateResult aggregate_user(std::span<const DiagonalGaussian> observations,
                               std::size_t latent) {
  if (observations.empty()) {
    return {DiagonalGaussian(std::vector<double>(latent, 0.0),
                             std::vector<double>(latent, 1.0)),
            /*fallback=*/true};
  }
  return {pog_aggregate(observations), /*fallback=*/false};
}

AggregateResult encode_user(std::span<const Triplet> reference,
                            const ParamStore& store,
                            const EncoderShape& shape) {
  const EncoderParams params = EncoderParams::view(store, shape);
  std::vector<DiagonalGaussian> obs;
  obs.reserve(reference.size());
  for (const Triplet& t : reference)
    obs.push_back(encode_observation(build_pairwise_feature(t), params));
  return aggregate_user(obs, shape.latent);
}

namespace graph {

GaussNodes encode_observation(ad::Tape& tape, const PairwiseFeature& v,
                              const BoundParams& params,
                              const EncoderShape& shape) {
  if (v.v.size() != shape.in_dim())
    throw std::invalid_argument("encode_observation: feature length mismatch");
  std::vector<ad::Id> feat(v.v.size());
  for (std::size_t i = 0; i < v.v.size(); ++i) feat[i] = tape.constant(v.v[i]);

  const auto w1 = params.at("enc.w1");
  const auto b1 = params.at("enc.b1");
  const auto w2 = params.at("enc.w2");
  const auto b2 = params.at("enc.b2");

  std::vector<ad::Id> hidden(shape.hidden);
  for (std::size_t j = 0; j < shape.hidden; ++j) {
    const ad::Id a =
        tape.dot(w1.subspan(j * shape.in_dim(), shape.in_dim()), feat);
    hidden[j] = tape.gelu(tape.add(a, b1[j]));
  }
  GaussNodes out;
  out.mean.resize(shape.latent);
  out.std.resize(shape.latent);
  for (std::size_t i = 0; i < shape.out_dim(); ++i) {
    const ad::Id o = tape.add(
        tape.dot(w2.subspan(i * shape.hidden, shape.hidden), hidden), b2[i]);
    if (i < shape.latent)
      out.mean[i] = o;
    else
      out.std[i - shape.latent] = tape.add_const(tape.softplus(o), 1e-4);
  }
  return out;
}

GaussNodes aggregate_user(ad::Tape& tape,
                          std::span<const GaussNodes> observations,
                          std::size_t latent) {
  GaussNodes out;
  out.mean.resize(latent);
  out.std.resize(latent);
  if (observations.empty()) {
    for (std::size_t d = 0; d < latent; ++d) {
      out.mean[d] = tape.constant(0.0);
      out.std[d] = tape.constant(1.0);
    }
    return out;
  }
  const ad::Id one = tape.constant(1.0);
  std::vector<ad::Id> precisions(observations.size());
  std::vector<ad::Id> weighted(observations.size());
  for (std::size_t d = 0; d < latent; ++d) {
    for (std::size_t i = 0; i < observations.size(); ++i) {
      const GaussNodes& g = observations[i];
      precisions[i] = tape.div(one, tape.mul(g.std[d], g.std[d]));
      weighted[i] = tape.mul(g.mean[d], precisions[i]);
    }
    const ad::Id precision = tape.sum(precisions);
    out.mean[d] = tape.div(tape.sum(weighted), precision);
    out.std[d] = tape.sqrt(tape.div(one, precision));
  }
  return out;
}

GaussNodes encode_user(ad::Tape& tape, std::span<const Triplet> reference,
                       const BoundParams& params, const EncoderShape& shape) {
  std::vector<GaussNodes> obs;
  obs.reserve(reference.size());
  for (const Triplet& t : reference)
    obs.push_back(
        encode_observation(tape, build_pairwise_feature(t), params, shape));
  return aggregate_user(tape, obs, shape.latent);
}

}  // namespace graph
}  // namespace vrf
