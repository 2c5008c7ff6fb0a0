#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gpaudit/harness.hpp"

namespace fs = std::filesystem;
using namespace gpaudit;

namespace {

struct Cli {
  std::string config_path;
  std::string out_dir = "out";
  uint64_t seed = 0;
  bool seed_set = false;
  int threads = 1;
};

ExperimentConfig load_config(const Cli& cli, bool required = true) {
  if (cli.config_path.empty()) {
    if (required) fail("--config is required for this subcommand");
    ExperimentConfig cfg;
    if (cli.seed_set) cfg.seed = cli.seed;
    return cfg;
  }
  ExperimentConfig cfg = load_experiment_config(cli.config_path);
  if (cli.seed_set) cfg.seed = cli.seed;
  return cfg;
}

// Rebuilds the repetition-0 pipeline; used by the subcommands that operate on
// a single trained state instead of the aggregated experiment.
struct Rep0 {
  Graph g;
  Split split;
  EncoderParams enc;
  PretrainResult pre;
  std::vector<int> shots;
};

Rep0 build_rep0(const ExperimentConfig& cfg, bool tune_inputs) {
  Rep0 r;
  r.g = cfg.dataset_path.empty() ? generate_sbm(cfg.sbm, derive_seed(cfg.seed, "data"))
                                 : load_graph(cfg.dataset_path);
  r.split = split_target_shadow(r.g, cfg.split, derive_seed(cfg.seed, "split"));
  PretrainConfig pc = cfg.pretrain;
  pc.seed = derive_seed(cfg.seed, "pretrain");
  r.pre = pretrain_run(r.g, pc, cfg.encoder);
  r.enc = r.pre.encoder;
  if (tune_inputs) r.shots = sample_k_shot(r.g, r.split, cfg.shots, derive_seed(cfg.seed, "kshot"));
  return r;
}

void print_records(const std::vector<ExperimentRecord>& records) {
  std::printf("%-10s %-6s %-9s %-16s %6s  %-18s %-18s %s\n", "capability", "attack", "attacker",
              "method", "beta", "auc", "acc", "utility");
  for (const ExperimentRecord& r : records)
    std::printf("%-10s %-6s %-9s %-16s %6s  %.4f \xC2\xB1 %.4f    %.4f \xC2\xB1 %.4f    %.4f\n",
                r.capability.c_str(), r.attack.c_str(), r.attacker.c_str(), r.prompt.c_str(),
                detail::fmt_beta(r.beta).c_str(), r.auc_mean, r.auc_hw, r.acc_mean, r.acc_hw,
                r.utility_mean);
}

void write_trace(const std::string& path, const std::string& method,
                 const std::vector<double>& loss) {
  nlohmann::json j = {{"method", method}, {"loss", loss}};
  std::ofstream f(path, std::ios::trunc);
  check(f.good(), "cannot write '" + path + "'");
  f << j.dump(2) << '\n';
}

int cmd_synth(const Cli& cli) {
  ExperimentConfig cfg = load_config(cli, false);
  Graph g = generate_sbm(cfg.sbm, derive_seed(cfg.seed, "data"));
  save_graph(g, cli.out_dir);
  std::printf("wrote bundle %s: n=%d d=%d classes=%d edges=%zu\n", cli.out_dir.c_str(), g.n, g.d,
              g.num_classes, g.edges.size());
  return 0;
}

int cmd_pretrain(const Cli& cli) {
  ExperimentConfig cfg = load_config(cli);
  Rep0 r = build_rep0(cfg, false);
  fs::create_directories(cli.out_dir);
  std::string ckpt = (fs::path(cli.out_dir) / "encoder.ckpt").string();
  save_encoder(ckpt, r.enc, pretrain_method_name(cfg.pretrain.method),
               experiment_config_hash(cfg));
  write_trace((fs::path(cli.out_dir) / "pretrain_trace.json").string(),
              pretrain_method_name(cfg.pretrain.method), r.pre.loss_trace);
  std::printf("pretrained %s for %d epochs: loss %.6f -> %.6f, saved %s\n",
              pretrain_method_name(cfg.pretrain.method), cfg.pretrain.epochs,
              r.pre.loss_trace.empty() ? 0.0 : r.pre.loss_trace.front(),
              r.pre.loss_trace.empty() ? 0.0 : r.pre.loss_trace.back(), ckpt.c_str());
  return 0;
}

int cmd_tune(const Cli& cli) {
  ExperimentConfig cfg = load_config(cli);
  Rep0 r = build_rep0(cfg, true);
  PromptState st = prompt_tune(r.g, r.enc, r.shots, cfg.prompt_method, cfg.prompt,
                               derive_seed(cfg.seed, "tune"));
  fs::create_directories(cli.out_dir);
  std::string ckpt = (fs::path(cli.out_dir) / "prompt_state.ckpt").string();
  save_prompt_state(ckpt, st, experiment_config_hash(cfg));
  write_trace((fs::path(cli.out_dir) / "tune_trace.json").string(),
              prompt_method_name(cfg.prompt_method), st.loss_trace);
  CapabilityMatrix post = posteriors(st, r.g);
  double util = utility_accuracy(st, r.g, post);
  std::printf("tuned %s on %zu shots: loss %.6f -> %.6f, accuracy %.4f, saved %s\n",
              prompt_method_name(cfg.prompt_method), r.shots.size(),
              st.loss_trace.empty() ? 0.0 : st.loss_trace.front(),
              st.loss_trace.empty() ? 0.0 : st.loss_trace.back(), util, ckpt.c_str());
  return 0;
}

int cmd_attack(const Cli& cli) {
  ExperimentConfig cfg = load_config(cli);
  cfg.betas.clear();  // undefended evaluation
  auto records = run_experiment(cfg, cli.out_dir, cli.threads);
  print_records(records);
  std::printf("appended %zu records to %s/results.csv\n", records.size(), cli.out_dir.c_str());
  return 0;
}

int cmd_defend(const Cli& cli) {
  ExperimentConfig cfg = load_config(cli);
  if (cfg.betas.empty()) cfg.betas = {0.0, 0.5, 1.0, 2.0, 4.0, 8.0};
  auto records = run_experiment(cfg, cli.out_dir, cli.threads);
  print_records(records);
  std::printf("appended %zu records to %s/results.csv\n", records.size(), cli.out_dir.c_str());
  return 0;
}

int cmd_report(const Cli& cli, const std::vector<std::string>& layouts) {
  std::vector<std::string> want =
      layouts.empty() ? std::vector<std::string>{"aia-table", "lia-table", "beta-curves"}
                      : layouts;
  std::string report_dir = (fs::path(cli.out_dir) / "report").string();
  std::vector<ExperimentRecord> records;
  bool need_records = false;
  for (const std::string& l : want)
    need_records = need_records || l == "aia-table" || l == "lia-table" || l == "beta-curves";
  if (need_records)
    records = load_results_csv((fs::path(cli.out_dir) / "results.csv").string());
  for (const std::string& layout : want) {
    std::vector<std::string> files;
    if (layout == "connectivity") {
      ExperimentConfig cfg = load_config(cli);
      Graph g = cfg.dataset_path.empty() ? generate_sbm(cfg.sbm, derive_seed(cfg.seed, "data"))
                                         : load_graph(cfg.dataset_path);
      files = emit_report(g, report_dir);
    } else if (layout == "projection-2d") {
      ExperimentConfig cfg = load_config(cli);
      Rep0 r = build_rep0(cfg, true);
      PromptState st = prompt_tune(r.g, r.enc, r.shots, cfg.prompt_method, cfg.prompt,
                                   derive_seed(cfg.seed, "tune"));
      Capability kind = cfg.capabilities.empty() ? Capability::kEmbedding : cfg.capabilities[0];
      CapabilityMatrix cap = capability_extract(st, r.g, kind);
      LiaPairSet pairs = build_lia_pairs(
          r.g, cap, r.split, derive_seed(cfg.seed, std::string("cap/") + capability_name(kind)));
      files = emit_report(pairs, report_dir);
    } else {
      files = emit_report(records, layout, report_dir);
    }
    for (const std::string& f : files) std::printf("wrote %s\n", f.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"privacy audit for graph prompt learning"};
  app.require_subcommand(1);
  app.fallthrough();

  Cli cli;
  app.add_option("--config", cli.config_path, "JSON experiment config file");
  auto* seed_opt = app.add_option("--seed", cli.seed, "override the config seed");
  app.add_option("--out", cli.out_dir, "output directory")->capture_default_str();
  app.add_option("--threads", cli.threads, "worker threads across repetitions")
      ->capture_default_str();

  app.add_subcommand("synth", "generate a synthetic dataset bundle");
  app.add_subcommand("pretrain", "pretrain an encoder and save its checkpoint");
  app.add_subcommand("tune", "pretrain + prompt-tune, save the prompt state");
  app.add_subcommand("attack", "run the undefended attack experiment");
  app.add_subcommand("defend", "run the attack experiment across noise levels");
  auto* report = app.add_subcommand("report", "emit tables and curve files");
  std::vector<std::string> layouts;
  report->add_option("--layout", layouts,
                     "aia-table|lia-table|beta-curves|connectivity|projection-2d (repeatable)");

  CLI11_PARSE(app, argc, argv);
  cli.seed_set = seed_opt->count() > 0;

  try {
    const std::string sub = app.get_subcommands().front()->get_name();
    if (sub == "synth") return cmd_synth(cli);
    if (sub == "pretrain") return cmd_pretrain(cli);
    if (sub == "tune") return cmd_tune(cli);
    if (sub == "attack") return cmd_attack(cli);
    if (sub == "defend") return cmd_defend(cli);
    if (sub == "report") return cmd_report(cli, layouts);
    fail("unknown subcommand '" + sub + "'");
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
