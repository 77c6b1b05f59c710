#include "vrf/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "vrf/mathutil.hpp"

namespace vrf {

namespace {

std::string padded_user_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "user_%04zu", i);
  return buf;
}

Triplet make_triplet(const UserRecord& user, const CandidateSet& p,
                     std::size_t h) {
  Triplet t;
  t.query_id = user.user_id + "#" + std::to_string(p.prompt_id);
  t.chosen_embedding.resize(h);
  t.rejected_embedding.resize(h);
  for (std::size_t i = 0; i < h; ++i) {
    t.chosen_embedding[i] = p.embeddings[p.chosen * h + i];
    t.rejected_embedding[i] = p.embeddings[p.rejected * h + i];
  }
  return t;
}

// Builds reference_set / target_set from prompts and validates disjointness.
void materialize_triplets(UserRecord& user, std::size_t h) {
  user.reference_set.clear();
  user.target_set.clear();
  for (const CandidateSet& p : user.prompts) {
    Triplet t = make_triplet(user, p, h);
    if (p.role == 0)
      user.reference_set.push_back(std::move(t));
    else
      user.target_set.push_back(std::move(t));
  }
  std::set<std::string> seen_ids;
  for (const Triplet& t : user.reference_set) seen_ids.insert(t.query_id);
  for (const Triplet& t : user.target_set)
    if (seen_ids.count(t.query_id))
      throw DataError(DataErrorCode::overlap,
                      "dataset: triplet " + t.query_id +
                          " appears in both reference and target sets");
}

}  // namespace

Dataset generate_population(const SyntheticConfig& cfg) {
  if (cfg.candidates_per_prompt < 2)
    throw DataError(DataErrorCode::header,
                    "generate_population: need at least 2 candidates");
  if (!(cfg.alpha > 0.0))
    throw DataError(DataErrorCode::header,
                    "generate_population: alpha must be positive");
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Dataset ds;
  ds.meta = cfg;

  // Unit-norm ground-truth trait directions.
  const std::size_t h = cfg.embedding_dim;
  ds.trait_directions.resize(cfg.num_traits * h);
  for (std::size_t k = 0; k < cfg.num_traits; ++k) {
    double norm_sq = 0.0;
    std::vector<double> row(h);
    for (std::size_t i = 0; i < h; ++i) {
      row[i] = normal(rng);
      norm_sq += row[i] * row[i];
    }
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (std::size_t i = 0; i < h; ++i)
      ds.trait_directions[k * h + i] = static_cast<float>(row[i] * inv);
  }

  ds.users.resize(cfg.num_users);
  for (std::size_t u = 0; u < cfg.num_users; ++u) {
    UserRecord& user = ds.users[u];
    user.user_id = padded_user_id(u);
    user.split = u < cfg.num_users / 2 ? Split::seen : Split::unseen;
    user.ground_truth_weights = sample_dirichlet(cfg.num_traits, cfg.alpha, rng);

    const std::size_t p_count = cfg.prompts_per_user;
    // Seen users hold out the last prompts as targets; unseen users keep the
    // first few as their reference set. At least one prompt stays on each
    // side when p_count allows it.
    const std::size_t boundary =
        user.split == Split::seen
            ? p_count - std::min(kSeenTargetCount, p_count > 1 ? p_count - 1 : 0)
            : std::min(kUnseenReferenceCount, p_count > 1 ? p_count - 1 : p_count);

    user.prompts.resize(p_count);
    std::vector<double> emb(h), scores(cfg.candidates_per_prompt);
    for (std::size_t p = 0; p < p_count; ++p) {
      CandidateSet& cs = user.prompts[p];
      cs.prompt_id = static_cast<std::uint32_t>(p);
      cs.role = p < boundary ? 0 : 1;
      cs.embeddings.resize(cfg.candidates_per_prompt * h);
      cs.trait_scores.resize(cfg.candidates_per_prompt * cfg.num_traits);

      std::vector<double> offset(h);
      for (double& x : offset) x = normal(rng);
      for (std::size_t c = 0; c < cfg.candidates_per_prompt; ++c) {
        for (std::size_t i = 0; i < h; ++i) {
          emb[i] = offset[i] + normal(rng);
          cs.embeddings[c * h + i] = static_cast<float>(emb[i]);
        }
        for (std::size_t k = 0; k < cfg.num_traits; ++k) {
          double r = 0.0;
          for (std::size_t i = 0; i < h; ++i)
            r += static_cast<double>(ds.trait_directions[k * h + i]) * emb[i];
          r += cfg.noise_std * normal(rng);
          cs.trait_scores[c * cfg.num_traits + k] = static_cast<float>(r);
        }
      }
      // Composite scores under the user's true weights pick the labels.
      for (std::size_t c = 0; c < cfg.candidates_per_prompt; ++c) {
        double s = 0.0;
        for (std::size_t k = 0; k < cfg.num_traits; ++k)
          s += user.ground_truth_weights[k] *
               static_cast<double>(cs.trait_scores[c * cfg.num_traits + k]);
        scores[c] = s;
      }
      cs.chosen = 0;
      cs.rejected = 0;
      for (std::uint32_t c = 1; c < cfg.candidates_per_prompt; ++c) {
        if (scores[c] > scores[cs.chosen]) cs.chosen = c;
        if (scores[c] <= scores[cs.rejected]) cs.rejected = c;
      }
    }
    materialize_triplets(user, h);
  }
  return ds;
}

double true_composite_score(const UserRecord& user, const CandidateSet& prompt,
                            std::size_t candidate) {
  if (user.ground_truth_weights.empty() || prompt.trait_scores.empty())
    throw DataError(DataErrorCode::ground_truth,
                    "true_composite_score: dataset lacks ground truth for " +
                        user.user_id);
  const std::size_t k_count = user.ground_truth_weights.size();
  double s = 0.0;
  for (std::size_t k = 0; k < k_count; ++k)
    s += user.ground_truth_weights[k] *
         static_cast<double>(prompt.trait_scores[candidate * k_count + k]);
  return s;
}

namespace {

constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in)
    throw DataError(DataErrorCode::header, "dataset: truncated file");
  return v;
}

void read_block(std::ifstream& in, void* dst, std::size_t bytes) {
  in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(bytes));
  if (!in)
    throw DataError(DataErrorCode::header, "dataset: truncated file");
}

std::size_t header_count(const std::string& line, const std::string& key) {
  std::istringstream is(line);
  std::string k;
  long long v = -1;
  is >> k >> v;
  if (k != key || v < 0)
    throw DataError(DataErrorCode::header,
                    "dataset: bad header line, expected '" + key + "'");
  return static_cast<std::size_t>(v);
}

double header_real(const std::string& line, const std::string& key) {
  std::istringstream is(line);
  std::string k;
  double v = 0.0;
  is >> k >> v;
  if (k != key || !is)
    throw DataError(DataErrorCode::header,
                    "dataset: bad header line, expected '" + key + "'");
  return v;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw DataError(DataErrorCode::io,
                    "dataset: cannot open " + path + " for writing");
  char buf[64];
  out << "VRFDATA " << kFormatVersion << "\n";
  out << "num_users " << ds.users.size() << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", ds.meta.alpha);
  out << "alpha " << buf << "\n";
  out << "num_traits " << ds.meta.num_traits << "\n";
  out << "embedding_dim " << ds.meta.embedding_dim << "\n";
  out << "prompts_per_user " << ds.meta.prompts_per_user << "\n";
  out << "candidates_per_prompt " << ds.meta.candidates_per_prompt << "\n";
  std::snprintf(buf, sizeof(buf), "%.17g", ds.meta.noise_std);
  out << "noise_std " << buf << "\n";
  out << "seed " << ds.meta.seed << "\n";
  out << "has_ground_truth " << (ds.has_ground_truth() ? 1 : 0) << "\n";
  out << "end_header\n";

  if (ds.has_ground_truth())
    out.write(reinterpret_cast<const char*>(ds.trait_directions.data()),
              static_cast<std::streamsize>(ds.trait_directions.size() *
                                           sizeof(float)));
  for (const UserRecord& user : ds.users) {
    write_pod(out, static_cast<std::uint32_t>(user.user_id.size()));
    out.write(user.user_id.data(),
              static_cast<std::streamsize>(user.user_id.size()));
    write_pod(out, static_cast<std::uint8_t>(user.split));
    if (ds.has_ground_truth())
      out.write(
          reinterpret_cast<const char*>(user.ground_truth_weights.data()),
          static_cast<std::streamsize>(user.ground_truth_weights.size() *
                                       sizeof(double)));
    write_pod(out, static_cast<std::uint32_t>(user.prompts.size()));
    for (const CandidateSet& p : user.prompts) {
      write_pod(out, p.prompt_id);
      write_pod(out, p.role);
      write_pod(out, static_cast<std::uint32_t>(
                         p.candidates(ds.meta.embedding_dim)));
      write_pod(out, p.chosen);
      write_pod(out, p.rejected);
      out.write(reinterpret_cast<const char*>(p.embeddings.data()),
                static_cast<std::streamsize>(p.embeddings.size() *
                                             sizeof(float)));
      if (ds.has_ground_truth())
        out.write(reinterpret_cast<const char*>(p.trait_scores.data()),
                  static_cast<std::streamsize>(p.trait_scores.size() *
                                               sizeof(float)));
    }
  }
  if (!out)
    throw DataError(DataErrorCode::io, "dataset: write failed for " + path);
}

Dataset load_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrorCode::io, "dataset: cannot open " + path);

  std::string line;
  if (!std::getline(in, line) || line.rfind("VRFDATA ", 0) != 0)
    throw DataError(DataErrorCode::header, "dataset: bad magic in " + path);
  const auto version = std::stoul(line.substr(8));
  if (version != kFormatVersion)
    throw DataError(DataErrorCode::header,
                    "dataset: unsupported version " + std::to_string(version));

  Dataset ds;
  auto next = [&]() -> std::string {
    if (!std::getline(in, line))
      throw DataError(DataErrorCode::header, "dataset: truncated header");
    return line;
  };
  const std::size_t num_users = header_count(next(), "num_users");
  ds.meta.num_users = num_users;
  ds.meta.alpha = header_real(next(), "alpha");
  ds.meta.num_traits = header_count(next(), "num_traits");
  ds.meta.embedding_dim = header_count(next(), "embedding_dim");
  ds.meta.prompts_per_user = header_count(next(), "prompts_per_user");
  ds.meta.candidates_per_prompt =
      header_count(next(), "candidates_per_prompt");
  ds.meta.noise_std = header_real(next(), "noise_std");
  ds.meta.seed = header_count(next(), "seed");
  const bool has_gt = header_count(next(), "has_ground_truth") != 0;
  if (next() != "end_header")
    throw DataError(DataErrorCode::header, "dataset: missing end_header");

  const std::size_t h = ds.meta.embedding_dim;
  if (h == 0)
    throw DataError(DataErrorCode::header, "dataset: embedding_dim is zero");
  if (has_gt) {
    ds.trait_directions.resize(ds.meta.num_traits * h);
    read_block(in, ds.trait_directions.data(),
               ds.trait_directions.size() * sizeof(float));
  }

  ds.users.resize(num_users);
  for (std::size_t u = 0; u < num_users; ++u) {
    UserRecord& user = ds.users[u];
    const auto id_len = read_pod<std::uint32_t>(in);
    user.user_id.resize(id_len);
    read_block(in, user.user_id.data(), id_len);
    user.split = static_cast<Split>(read_pod<std::uint8_t>(in));
    if (has_gt) {
      user.ground_truth_weights.resize(ds.meta.num_traits);
      read_block(in, user.ground_truth_weights.data(),
                 ds.meta.num_traits * sizeof(double));
    }
    const auto prompt_count = read_pod<std::uint32_t>(in);
    user.prompts.resize(prompt_count);
    for (CandidateSet& p : user.prompts) {
      p.prompt_id = read_pod<std::uint32_t>(in);
      p.role = read_pod<std::uint8_t>(in);
      const auto cand_count = read_pod<std::uint32_t>(in);
      p.chosen = read_pod<std::uint32_t>(in);
      p.rejected = read_pod<std::uint32_t>(in);
      if (cand_count < 2 || p.chosen >= cand_count || p.rejected >= cand_count)
        throw DataError(DataErrorCode::header,
                        "dataset: invalid candidate indices in " +
                            user.user_id + " prompt " +
                            std::to_string(p.prompt_id));
      p.embeddings.resize(static_cast<std::size_t>(cand_count) * h);
      read_block(in, p.embeddings.data(), p.embeddings.size() * sizeof(float));
      if (p.embeddings.size() % h != 0 || p.candidates(h) != cand_count)
        throw DataError(DataErrorCode::dimension,
                        "dataset: embedding dimension mismatch in record " +
                            user.user_id + " prompt " +
                            std::to_string(p.prompt_id));
      if (has_gt) {
        p.trait_scores.resize(static_cast<std::size_t>(cand_count) *
                              ds.meta.num_traits);
        read_block(in, p.trait_scores.data(),
                   p.trait_scores.size() * sizeof(float));
      }
    }
    materialize_triplets(user, h);  // throws DataError(overlap) on violation
  }
  return ds;
}

std::vector<std::size_t> sample_epoch_reference_indices(
    const UserRecord& user, std::size_t m, std::uint64_t epoch_seed) {
  std::vector<std::size_t> idx(user.reference_set.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::mt19937_64 rng(mix_seed(fnv1a(user.user_id), epoch_seed));
  deterministic_shuffle(idx, rng);
  idx.resize(std::min(m, idx.size()));
  return idx;
}

std::vector<Triplet> sample_epoch_reference(const UserRecord& user,
                                            std::size_t m,
                                            std::uint64_t epoch_seed) {
  std::vector<Triplet> out;
  for (std::size_t i : sample_epoch_reference_indices(user, m, epoch_seed))
    out.push_back(user.reference_set[i]);
  return out;
}

}  // namespace vrf
