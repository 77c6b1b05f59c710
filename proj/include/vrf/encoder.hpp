#pragma once
// Pairwise features from preference triplets, the two-layer variational
// encoder mapping each feature to an observation Gaussian, and the
// product-of-Gaussians aggregation into a user distribution (with the
// N(0, I) fallback for empty reference sets).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vrf/gaussian.hpp"
#include "vrf/param_store.hpp"

namespace vrf {

// One pairwise preference observation: a query and the embeddings of its
// chosen and rejected responses.
struct Triplet {
  std::string query_id;
  std::vector<double> chosen_embedding;
  std::vector<double> rejected_embedding;
};

// v = [(h+ + h-)/2 || h+ - h-], length 2H: shared content in the first half,
// preference direction in the second.
struct PairwiseFeature {
  std::vector<double> v;
};

struct EncoderShape {
  std::size_t embed_dim = 64;  // H
  std::size_t hidden = 32;     // H_enc (H/2 by default)
  std::size_t latent = 64;     // D
  std::size_t in_dim() const { return 2 * embed_dim; }
  std::size_t out_dim() const { return 2 * latent; }  // D means + D raw stds
};

// Views into the four encoder entries of a store: "enc.w1" (hidden x 2H,
// row-major), "enc.b1", "enc.w2" (2D x hidden), "enc.b2".
struct EncoderParams {
  std::span<const double> w1, b1, w2, b2;
  EncoderShape shape;
  static EncoderParams view(const ParamStore& store, const EncoderShape& shape);
};

// Xavier-normal weights, zero biases; deterministic given the seed.
void init_encoder(ParamStore& store, const EncoderShape& shape,
                  std::uint64_t seed);

PairwiseFeature build_pairwise_feature(const Triplet& t);

// MLP forward with a GELU hidden layer; the first D outputs are the mean,
// the last D pass through softplus(raw) + 1e-4 to become the std.
DiagonalGaussian encode_observation(const PairwiseFeature& v,
                                    const EncoderParams& params);

struct AggregateResult {
  DiagonalGaussian user;
  bool fallback = false;  // the observation list was empty
};

// Product-of-Gaussians fusion; an empty list yields N(0, I) with the
// fallback flag raised.
AggregateResult aggregate_user(std::span<const DiagonalGaussian> observations,
                               std::size_t latent);

// build features -> encode each -> aggregate, over a reference set.
AggregateResult encode_user(std::span<const Triplet> reference,
                            const ParamStore& store, const EncoderShape& shape);

namespace graph {

// A Gaussian whose mean/std live on the tape.
struct GaussNodes {
  std::vector<ad::Id> mean, std;
};

GaussNodes encode_observation(ad::Tape& tape, const PairwiseFeature& v,
                              const BoundParams& params,
                              const EncoderShape& shape);
GaussNodes aggregate_user(ad::Tape& tape,
                          std::span<const GaussNodes> observations,
                          std::size_t latent);
GaussNodes encode_user(ad::Tape& tape, std::span<const Triplet> reference,
                       const BoundParams& params, const EncoderShape& shape);

}  // namespace graph
}  // namespace vrf
