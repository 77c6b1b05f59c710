// Command-line front end: gen / train / eval / infer / fewshot / check.
// Exit codes: 0 success, 1 failed property checks, 2 usage or input errors.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vrf/checks.hpp"
#include "vrf/config.hpp"
#include "vrf/data.hpp"
#include "vrf/evaluate.hpp"
#include "vrf/param_store.hpp"
#include "vrf/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailure = 1;
constexpr int kExitUsage = 2;

void add_config_file(CLI::App* cmd) {
  cmd->add_option("--config",
                  "Read options from a key=value file (one per line)");
}

// CLI11 only processes config files for the top-level command, so each
// subcommand's --config is applied by hand after parsing. Explicit
// command-line values win, unknown keys are errors, and the accepted keys
// are exactly what --dump-config prints.
int apply_config_file(CLI::App* cmd) {
  const CLI::Option* copt = cmd->get_option_no_throw("--config");
  if (copt == nullptr || copt->count() == 0) return kExitOk;
  const std::string path = vrf::resolve_path(copt->as<std::string>());
  std::ifstream in(path);
  if (!in) {
    std::cerr << cmd->get_name() << ": cannot read config file " << path
              << "\n";
    return kExitUsage;
  }
  const auto strip = [](const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
  };
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string entry = strip(line);
    if (entry.empty() || entry[0] == '#') continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::cerr << cmd->get_name() << ": " << path << ":" << lineno
                << ": expected key=value\n";
      return kExitUsage;
    }
    const std::string key = strip(entry.substr(0, eq));
    CLI::Option* opt =
        key == "config" ? nullptr : cmd->get_option_no_throw("--" + key);
    if (opt == nullptr) {
      std::cerr << cmd->get_name() << ": " << path << ":" << lineno
                << ": unknown config key '" << key << "'\n";
      return kExitUsage;
    }
    if (opt->count() > 0) continue;  // explicit command-line values win
    opt->add_result(strip(entry.substr(eq + 1)));
    opt->run_callback();
  }
  return kExitOk;
}

int cmd_gen(const vrf::SyntheticConfig& cfg, const std::string& out,
            bool dump) {
  if (dump) {
    vrf::dump_config(cfg, std::cout);
    return kExitOk;
  }
  const std::vector<std::string> problems = vrf::validate(cfg);
  if (!problems.empty()) {
    for (const std::string& p : problems) std::cerr << "gen: " << p << "\n";
    return kExitUsage;
  }
  const vrf::Dataset ds = vrf::generate_population(cfg);
  const std::string path = vrf::resolve_path(out);
  vrf::save_dataset(ds, path);
  std::size_t seen = 0;
  for (const vrf::UserRecord& u : ds.users)
    seen += u.split == vrf::Split::seen ? 1 : 0;
  std::printf("wrote %s: %zu users (%zu seen, %zu unseen), %zu prompts/user\n",
              path.c_str(), ds.users.size(), seen, ds.users.size() - seen,
              cfg.prompts_per_user);
  return kExitOk;
}

int cmd_train(const vrf::TrainConfig& cfg, const std::string& model,
              const std::string& data_path, const std::string& out,
              const std::string& metrics_path, bool dump) {
  if (dump) {
    std::cout << "model=" << model << "\n";
    vrf::dump_config(cfg, std::cout);
    return kExitOk;
  }
  const std::vector<std::string> problems = vrf::validate(cfg);
  if (!problems.empty()) {
    for (const std::string& p : problems) std::cerr << "train: " << p << "\n";
    return kExitUsage;
  }
  const vrf::ModelKind kind = vrf::model_from_name(model);
  const vrf::Dataset ds = vrf::load_embeddings(vrf::resolve_path(data_path));

  std::ofstream metrics;
  std::ostream* metrics_out = nullptr;
  if (!metrics_path.empty()) {
    metrics.open(vrf::resolve_path(metrics_path), std::ios::trunc);
    if (!metrics) {
      std::cerr << "train: cannot open metrics file " << metrics_path << "\n";
      return kExitUsage;
    }
    metrics_out = &metrics;
  }

  const vrf::TrainResult result = vrf::train(ds, cfg, kind, metrics_out);
  const std::string ckpt = vrf::resolve_path(out);
  vrf::save_checkpoint(result.params, ckpt);
  for (const vrf::EpochRow& row : result.epochs)
    std::printf(
        "epoch %zu: loss %.6f (vbt %.6f sep %.6f reg %.6f) "
        "seen_acc %.4f unseen_acc %.4f\n",
        row.epoch, row.loss, row.vbt, row.sep, row.reg, row.seen_acc,
        row.unseen_acc);
  std::printf("wrote %s (%zu trainable scalars)\n", ckpt.c_str(),
              result.params.trainable_size());
  return kExitOk;
}

struct EvalArgs {
  std::string data_path;
  std::vector<std::string> ckpts;
  std::string report_dir = ".";
  std::vector<std::size_t> sizes = {1, 3, 5, 7, 9};
  std::size_t jobs = 1;
  std::size_t timing_users = 20;
  std::uint64_t seed = 1;
  std::size_t expect_bases = 0;  // 0 = no cross-check
  bool no_timing = false;
  bool no_regret = false;
  bool no_fewshot = false;
};

int cmd_eval(const EvalArgs& args) {
  const vrf::Dataset ds =
      vrf::load_embeddings(vrf::resolve_path(args.data_path));
  std::vector<vrf::ParamStore> stores;
  for (const std::string& p : args.ckpts) {
    stores.push_back(vrf::load_checkpoint(vrf::resolve_path(p)));
    const vrf::ModelInfo info = vrf::read_model_info(stores.back());
    if (args.expect_bases != 0 && info.bases.count != args.expect_bases) {
      std::cerr << "eval: checkpoint " << p << " has " << info.bases.count
                << " bases, --bases expected " << args.expect_bases << "\n";
      return kExitUsage;
    }
    if (info.enc.embed_dim != ds.meta.embedding_dim) {
      std::cerr << "eval: checkpoint " << p << " embeds dimension "
                << info.enc.embed_dim << ", dataset has "
                << ds.meta.embedding_dim << "\n";
      return kExitUsage;
    }
  }

  vrf::EvalOptions opts;
  opts.fewshot_sizes = args.sizes;
  opts.seed = args.seed;
  opts.jobs = args.jobs;
  opts.timing_users = args.timing_users;
  opts.timing = !args.no_timing;
  opts.regret = !args.no_regret;
  opts.fewshot = !args.no_fewshot;

  const vrf::EvalReport report =
      vrf::evaluate_checkpoints(ds, stores, opts);

  std::printf("model=%s checkpoints=%zu\n", report.model.c_str(),
              report.checkpoint_count);
  std::printf("%-8s %10s %10s\n", "split", "accuracy", "stddev");
  std::printf("%-8s %10.4f %10.4f\n", "seen", report.seen_acc.mean,
              report.seen_acc.stddev);
  std::printf("%-8s %10.4f %10.4f\n", "unseen", report.unseen_acc.mean,
              report.unseen_acc.stddev);
  std::printf("%-8s %10.4f %10.4f\n", "overall", report.overall_acc.mean,
              report.overall_acc.stddev);
  for (std::size_t i = 0; i < report.fewshot_acc.size(); ++i)
    std::printf("fewshot m=%zu accuracy %.4f mean_uncertainty %.4f\n",
                report.fewshot_sizes[i], report.fewshot_acc[i].mean,
                report.fewshot_uncertainty[i].mean);
  if (!report.regret.empty())
    for (std::size_t i = 0; i < report.regret.size(); ++i)
      std::printf("regret m=%zu %.6f\n", report.fewshot_sizes[i],
                  report.regret[i].mean);
  if (report.timing.users > 0)
    std::printf("adaptation: median %.3f ms, p95 %.3f ms over %zu users\n",
                report.timing.median_ms, report.timing.p95_ms,
                report.timing.users);

  const std::string dir = vrf::resolve_path(args.report_dir);
  vrf::write_report_csvs(report, dir);
  std::ofstream json(dir + "/report.json", std::ios::trunc);
  json << vrf::report_to_json(report);
  std::printf("wrote %s/report.json and CSV tables\n", dir.c_str());
  return kExitOk;
}

int cmd_infer(const std::string& ckpt_path, const std::string& data_path,
              const std::string& user_id, std::size_t m) {
  const vrf::ParamStore store =
      vrf::load_checkpoint(vrf::resolve_path(ckpt_path));
  const vrf::ModelInfo info = vrf::read_model_info(store);
  const vrf::Dataset ds =
      vrf::load_embeddings(vrf::resolve_path(data_path));
  const vrf::UserRecord* user = nullptr;
  for (const vrf::UserRecord& u : ds.users)
    if (u.user_id == user_id) user = &u;
  if (user == nullptr) {
    std::cerr << "infer: no user '" << user_id << "' in the dataset\n";
    return kExitUsage;
  }
  const std::size_t take = std::min(m, user->reference_set.size());
  const std::span<const vrf::Triplet> reference(user->reference_set.data(),
                                                take);
  const vrf::InferResult result = vrf::infer_user(reference, store, info);
  nlohmann::json j;
  j["user"] = user->user_id;
  j["reference_count"] = take;
  j["fallback"] = result.fallback;
  j["mean_uncertainty"] = result.weights.mean_uncertainty;
  j["weights"] = result.weights.w;
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_fewshot(const std::string& ckpt_path, const std::string& data_path,
                const std::vector<std::size_t>& sizes, std::uint64_t seed,
                std::size_t jobs, const std::string& csv) {
  const vrf::ParamStore store =
      vrf::load_checkpoint(vrf::resolve_path(ckpt_path));
  const vrf::ModelInfo info = vrf::read_model_info(store);
  const vrf::Dataset ds =
      vrf::load_embeddings(vrf::resolve_path(data_path));
  const vrf::Scorer scorer = vrf::make_scorer(store, info);
  const vrf::FewshotResult result =
      vrf::fewshot_curve(scorer, ds, sizes, seed, jobs);
  std::printf("%-4s %10s %18s\n", "m", "accuracy", "mean_uncertainty");
  for (const vrf::FewshotPoint& p : result.curve)
    std::printf("%-4zu %10.4f %18.6f\n", p.m, p.accuracy, p.mean_uncertainty);
  if (!csv.empty()) {
    std::ofstream out(vrf::resolve_path(csv), std::ios::trunc);
    out << "m,accuracy,mean_uncertainty\n";
    char buf[96];
    for (const vrf::FewshotPoint& p : result.curve) {
      std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", p.m, p.accuracy,
                    p.mean_uncertainty);
      out << buf;
    }
  }
  return kExitOk;
}

int cmd_check() {
  const std::vector<vrf::CheckResult> results = vrf::run_all_checks();
  const bool all = vrf::print_check_table(results, std::cout);
  return all ? kExitOk : kExitCheckFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Variational preference factorization: synthetic benchmark, training, "
      "and evaluation"};
  app.require_subcommand(1);

  // gen ----------------------------------------------------------------
  vrf::SyntheticConfig gen_cfg;
  std::string gen_out = "population.vrfd";
  bool gen_dump = false;
  CLI::App* gen = app.add_subcommand("gen", "Generate a synthetic population");
  gen->add_option("--out", gen_out, "Output dataset path");
  gen->add_option("--users", gen_cfg.num_users, "Population size");
  gen->add_option("--alpha", gen_cfg.alpha, "Dirichlet concentration");
  gen->add_option("--traits", gen_cfg.num_traits, "Ground-truth trait count");
  gen->add_option("--embedding-dim", gen_cfg.embedding_dim,
                  "Embedding dimension H");
  gen->add_option("--prompts", gen_cfg.prompts_per_user, "Prompts per user");
  gen->add_option("--candidates", gen_cfg.candidates_per_prompt,
                  "Candidates per prompt");
  gen->add_option("--noise-std", gen_cfg.noise_std, "Trait score noise");
  gen->add_option("--seed", gen_cfg.seed, "Generation seed")
      ->envname("VRF_SEED");
  gen->add_flag("--dump-config", gen_dump,
                "Print the effective config and exit");
  add_config_file(gen);

  // train --------------------------------------------------------------
  vrf::TrainConfig train_cfg;
  std::string train_model = "vrf";
  std::string train_data = "population.vrfd";
  std::string train_out = "model.ckpt";
  std::string train_metrics;
  bool train_dump = false;
  CLI::App* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--data", train_data, "Dataset path");
  tr->add_option("--model", train_model, "vrf | bt | rf")
      ->check(CLI::IsMember({"vrf", "bt", "rf"}));
  tr->add_option("--out", train_out, "Checkpoint path");
  tr->add_option("--metrics", train_metrics,
                 "Metrics log path (step and epoch lines)");
  tr->add_option("--epochs", train_cfg.epochs, "Training epochs");
  tr->add_option("--batch-size", train_cfg.batch_size, "Pairs per step");
  tr->add_option("--lr", train_cfg.learning_rate, "Base learning rate");
  tr->add_option("--weight-decay", train_cfg.weight_decay,
                 "Decoupled weight decay");
  tr->add_option("--dropout", train_cfg.dropout, "Head hidden dropout");
  tr->add_option("--bases", train_cfg.basis_count, "Basis count K");
  tr->add_option("--latent-dim", train_cfg.latent_dim, "Latent dimension D");
  tr->add_option("--encoder-hidden", train_cfg.encoder_hidden,
                 "Encoder hidden width (0 = H/2)");
  tr->add_option("--tau-d", train_cfg.tau_d, "Assignment temperature");
  tr->add_option("--tau-m", train_cfg.tau_m, "Separation margin");
  tr->add_option("--beta", train_cfg.beta, "Regularizer weight");
  tr->add_option("--mc-samples", train_cfg.mc_samples,
                 "MC samples for the regularizer");
  tr->add_option("--epoch-reference", train_cfg.epoch_reference_size,
                 "Conditioning observations resampled per epoch");
  tr->add_option("--warmup-steps", train_cfg.warmup_steps,
                 "Linear warmup steps");
  tr->add_option("--seed", train_cfg.seed, "Training seed")
      ->envname("VRF_SEED");
  tr->add_flag("--dump-config", train_dump,
               "Print the effective config and exit");
  add_config_file(tr);

  // eval ---------------------------------------------------------------
  EvalArgs eval_args;
  CLI::App* ev = app.add_subcommand("eval", "Evaluate checkpoints");
  ev->add_option("--data", eval_args.data_path, "Dataset path")->required();
  ev->add_option("--ckpt", eval_args.ckpts,
                 "Checkpoint path (repeat for multi-seed aggregation)")
      ->required();
  ev->add_option("--report-dir", eval_args.report_dir,
                 "Directory for report.json and CSV tables");
  ev->add_option("--sizes", eval_args.sizes, "Few-shot reference sizes")
      ->delimiter(',');
  ev->add_option("--jobs", eval_args.jobs, "Worker threads");
  ev->add_option("--timing-users", eval_args.timing_users,
                 "Users in the adaptation timing probe");
  ev->add_option("--seed", eval_args.seed, "Protocol seed")
      ->envname("VRF_SEED");
  ev->add_option("--bases", eval_args.expect_bases,
                 "Expected basis count (errors on checkpoint mismatch)");
  ev->add_flag("--no-timing", eval_args.no_timing, "Skip the timing probe");
  ev->add_flag("--no-regret", eval_args.no_regret, "Skip best-of-n regret");
  ev->add_flag("--no-fewshot", eval_args.no_fewshot, "Skip few-shot curves");
  add_config_file(ev);

  // infer --------------------------------------------------------------
  std::string infer_ckpt, infer_data, infer_user_id;
  std::size_t infer_m = std::numeric_limits<std::size_t>::max();
  CLI::App* in = app.add_subcommand(
      "infer", "Print one user's inferred basis weights");
  in->add_option("--ckpt", infer_ckpt, "Checkpoint path")->required();
  in->add_option("--data", infer_data, "Dataset path")->required();
  in->add_option("--user", infer_user_id, "User id")->required();
  in->add_option("--m", infer_m, "Reference observations to use (default all)");
  add_config_file(in);

  // fewshot ------------------------------------------------------------
  std::string fs_ckpt, fs_data, fs_csv;
  std::vector<std::size_t> fs_sizes = {1, 3, 5, 7, 9};
  std::uint64_t fs_seed = 1;
  std::size_t fs_jobs = 1;
  CLI::App* fs = app.add_subcommand("fewshot",
                                    "Few-shot adaptation curve on unseen users");
  fs->add_option("--ckpt", fs_ckpt, "Checkpoint path")->required();
  fs->add_option("--data", fs_data, "Dataset path")->required();
  fs->add_option("--sizes", fs_sizes, "Reference sizes")->delimiter(',');
  fs->add_option("--seed", fs_seed, "Protocol seed")->envname("VRF_SEED");
  fs->add_option("--jobs", fs_jobs, "Worker threads");
  fs->add_option("--csv", fs_csv, "Optional CSV output path");
  add_config_file(fs);

  // check --------------------------------------------------------------
  app.add_subcommand("check", "Run the oracle and property-check suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    for (CLI::App* sub : {gen, tr, ev, in, fs})
      if (app.got_subcommand(sub))
        if (const int rc = apply_config_file(sub); rc != kExitOk) return rc;
    if (app.got_subcommand("gen")) return cmd_gen(gen_cfg, gen_out, gen_dump);
    if (app.got_subcommand("train"))
      return cmd_train(train_cfg, train_model, train_data, train_out,
                       train_metrics, train_dump);
    if (app.got_subcommand("eval")) return cmd_eval(eval_args);
    if (app.got_subcommand("infer"))
      return cmd_infer(infer_ckpt, infer_data, infer_user_id, infer_m);
    if (app.got_subcommand("fewshot"))
      return cmd_fewshot(fs_ckpt, fs_data, fs_sizes, fs_seed, fs_jobs, fs_csv);
    if (app.got_subcommand("check")) return cmd_check();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
