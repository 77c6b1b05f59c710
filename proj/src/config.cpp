#include "vrf/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <ostream>

namespace vrf {

std::string data_dir() {
  const char* dir = std::getenv("VRF_DATA_DIR");
  if (dir != nullptr && dir[0] != '\0') return dir;
  return ".";
}

std::string resolve_path(const std::string& path) {
  if (path.empty() || std::filesystem::path(path).is_absolute()) return path;
  return (std::filesystem::path(data_dir()) / path).string();
}

std::vector<std::string> validate(const SyntheticConfig& cfg) {
  std::vector<std::string> problems;
  if (cfg.num_users < 2)
    problems.push_back("num_users must be at least 2 (both splits need users)");
  if (!(cfg.alpha > 0.0))
    problems.push_back("alpha must be positive");
  if (cfg.num_traits < 1) problems.push_back("num_traits must be positive");
  if (cfg.embedding_dim < 1)
    problems.push_back("embedding_dim must be positive");
  if (cfg.prompts_per_user < 2)
    problems.push_back("prompts_per_user must be at least 2");
  if (cfg.candidates_per_prompt < 2)
    problems.push_back("candidates_per_prompt must be at least 2");
  if (cfg.noise_std < 0.0) problems.push_back("noise_std must be nonnegative");
  return problems;
}

std::vector<std::string> validate(const TrainConfig& cfg) {
  std::vector<std::string> problems;
  if (cfg.batch_size < 1) problems.push_back("batch_size must be positive");
  if (!(cfg.learning_rate > 0.0))
    problems.push_back("learning_rate must be positive");
  if (cfg.weight_decay < 0.0)
    problems.push_back("weight_decay must be nonnegative");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0)
    problems.push_back("dropout must lie in [0, 1)");
  if (cfg.basis_count < 2)
    problems.push_back("basis_count must be at least 2");
  if (cfg.latent_dim < 1) problems.push_back("latent_dim must be positive");
  if (!(cfg.tau_d > 0.0)) problems.push_back("tau_d must be positive");
  if (cfg.tau_m < 0.0) problems.push_back("tau_m must be nonnegative");
  if (cfg.beta < 0.0) problems.push_back("beta must be nonnegative");
  if (cfg.mc_samples < 1) problems.push_back("mc_samples must be positive");
  if (cfg.epoch_reference_size < 1)
    problems.push_back("epoch_reference_size must be positive");
  return problems;
}

namespace {

void kv(std::ostream& out, const char* key, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out << key << "=" << buf << "\n";
}

void kv(std::ostream& out, const char* key, std::size_t v) {
  out << key << "=" << v << "\n";
}

}  // namespace

void dump_config(const SyntheticConfig& cfg, std::ostream& out) {
  kv(out, "users", cfg.num_users);
  kv(out, "alpha", cfg.alpha);
  kv(out, "traits", cfg.num_traits);
  kv(out, "embedding-dim", cfg.embedding_dim);
  kv(out, "prompts", cfg.prompts_per_user);
  kv(out, "candidates", cfg.candidates_per_prompt);
  kv(out, "noise-std", cfg.noise_std);
  kv(out, "seed", static_cast<std::size_t>(cfg.seed));
}

void dump_config(const TrainConfig& cfg, std::ostream& out) {
  kv(out, "epochs", cfg.epochs);
  kv(out, "batch-size", cfg.batch_size);
  kv(out, "lr", cfg.learning_rate);
  kv(out, "weight-decay", cfg.weight_decay);
  kv(out, "dropout", cfg.dropout);
  kv(out, "bases", cfg.basis_count);
  kv(out, "latent-dim", cfg.latent_dim);
  kv(out, "encoder-hidden", cfg.encoder_hidden);
  kv(out, "tau-d", cfg.tau_d);
  kv(out, "tau-m", cfg.tau_m);
  kv(out, "beta", cfg.beta);
  kv(out, "mc-samples", cfg.mc_samples);
  kv(out, "epoch-reference", cfg.epoch_reference_size);
  kv(out, "warmup-steps", cfg.warmup_steps);
  kv(out, "seed", static_cast<std::size_t>(cfg.seed));
}

}  // namespace vrf
