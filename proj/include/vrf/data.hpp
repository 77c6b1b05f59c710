#pragma once
// Synthetic preference benchmark generation, the dataset container format
// (text header + binary embedding block), and epoch-wise reference sampling.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "vrf/encoder.hpp"

namespace vrf {

enum class Split : std::uint8_t { seen = 0, unseen = 1 };

struct SyntheticConfig {
  std::size_t num_users = 200;
  double alpha = 0.001;            // Dirichlet concentration
  std::size_t num_traits = 5;      // ground-truth scorer count
  std::size_t embedding_dim = 64;  // H
  std::size_t prompts_per_user = 45;
  std::size_t candidates_per_prompt = 8;
  double noise_std = 0.05;
  std::uint64_t seed = 1;
};

// One prompt's candidate pool. role 0 = reference pool, role 1 = held-out
// target. chosen/rejected index the highest-/lowest-scoring candidates under
// the user's ground-truth weights.
struct CandidateSet {
  std::uint32_t prompt_id = 0;
  std::uint8_t role = 0;
  std::uint32_t chosen = 0;
  std::uint32_t rejected = 0;
  std::vector<float> embeddings;    // candidates x H, row-major
  std::vector<float> trait_scores;  // candidates x num_traits; empty if no
                                    // ground truth
  std::size_t candidates(std::size_t h) const { return embeddings.size() / h; }
};

struct UserRecord {
  std::string user_id;
  Split split = Split::seen;
  std::vector<double> ground_truth_weights;  // empty for ingested datasets
  std::vector<CandidateSet> prompts;
  // Materialized triplet views of `prompts` (embeddings widened to double):
  // role-0 prompts land in reference_set, role-1 in target_set. Disjoint by
  // construction; validated on load.
  std::vector<Triplet> reference_set;
  std::vector<Triplet> target_set;
};

struct Dataset {
  SyntheticConfig meta;
  std::vector<float> trait_directions;  // num_traits x H; empty if ingested
  std::vector<UserRecord> users;
  bool has_ground_truth() const { return !trait_directions.empty(); }
};

// Generator split sizes: seen users hold out this many prompts as evaluation
// targets; unseen users keep this many as their reference set.
inline constexpr std::size_t kSeenTargetCount = 9;
inline constexpr std::size_t kUnseenReferenceCount = 9;

enum class DataErrorCode { io, header, dimension, overlap, ground_truth };

struct DataError : std::runtime_error {
  DataErrorCode code;
  DataError(DataErrorCode c, const std::string& msg)
      : std::runtime_error(msg), code(c) {}
};

// Samples trait directions, per-prompt candidate pools with noisy trait
// scores, and per-user Dirichlet weights; labels chosen/rejected by the
// composite score. Users split evenly seen/unseen.
Dataset generate_population(const SyntheticConfig& cfg);

void save_dataset(const Dataset& ds, const std::string& path);

// Loads a dataset container, widening embeddings into triplets and checking
// header sanity, dimension consistency, and reference/target disjointness.
// Throws DataError with a code naming which of those failed.
Dataset load_embeddings(const std::string& path);

// Seeded epoch subsample of the user's reference pool: deterministic given
// (user_id, epoch_seed); size min(m, pool). Empty pool yields an empty list.
std::vector<std::size_t> sample_epoch_reference_indices(const UserRecord& user,
                                                        std::size_t m,
                                                        std::uint64_t epoch_seed);
std::vector<Triplet> sample_epoch_reference(const UserRecord& user,
                                            std::size_t m,
                                            std::uint64_t epoch_seed);

// Ground-truth composite score of one candidate (the generator's oracle).
double true_composite_score(const UserRecord& user, const CandidateSet& prompt,
                            std::size_t candidate);

}  // namespace vrf
