#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gpaudit/attacks.hpp"
#include "gpaudit/checkpoint.hpp"
#include "gpaudit/defense.hpp"
#include "gpaudit/encoder.hpp"
#include "gpaudit/error.hpp"
#include "gpaudit/graphdata.hpp"
#include "gpaudit/metrics.hpp"
#include "gpaudit/pretrain.hpp"
#include "gpaudit/prompt.hpp"

namespace gpaudit {

// --- Experiment configuration ------------------------------------------------------

struct ExperimentConfig {
  std::string name = "experiment";
  std::string dataset_path;  // bundle directory; empty = synthesize from sbm
  SbmSpec sbm;
  EncoderConfig encoder;
  PretrainConfig pretrain;
  PromptMethod prompt_method = PromptMethod::kGpf;
  PromptConfig prompt;
  KShot shots;
  SplitSpec split;
  std::vector<Capability> capabilities{Capability::kPosterior, Capability::kEmbedding};
  std::vector<SweepAttack> attacks{{AttackTask::kAia, {}}, {AttackTask::kLia, {}}};
  std::vector<double> betas;  // empty = undefended only
  int repetitions = 10;
  uint64_t seed = 0;
};

inline void validate(const ExperimentConfig& cfg) {
  check(!cfg.name.empty() && cfg.name.find_first_of(",\"\n") == std::string::npos,
        "ExperimentConfig: name must be nonempty and free of CSV delimiters");
  check(cfg.repetitions >= 1, "ExperimentConfig: repetitions must be >= 1");
  check(!cfg.capabilities.empty(), "ExperimentConfig: no capabilities configured");
  check(!cfg.attacks.empty(), "ExperimentConfig: no attacks configured");
  for (double b : cfg.betas)
    check(std::isfinite(b) && b >= 0.0, "ExperimentConfig: betas must be >= 0");
  for (Capability c : cfg.capabilities)
    if (c == Capability::kPrompt)
      check(cfg.prompt_method == PromptMethod::kGpfPlus,
            "ExperimentConfig: capability 'Prompt' requires the GPFplus method");
  validate(cfg.encoder);
  validate(cfg.pretrain);
  validate(cfg.prompt);
  for (const SweepAttack& a : cfg.attacks) {
    validate(a.model);
    if (a.task == AttackTask::kAia)
      check(a.model.kind != AttackerKind::kCosine,
            "ExperimentConfig: CosineThreshold only applies to LIA");
  }
  if (!cfg.shots.full) check(cfg.shots.k >= 1, "ExperimentConfig: k must be >= 1 or \"Full\"");
}

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const char* where,
                                const std::set<std::string>& allowed) {
  for (auto it = j.begin(); it != j.end(); ++it)
    check(allowed.count(it.key()),
          std::string("config: unknown key '") + it.key() + "' in " + where);
}

template <typename T>
inline T get_or(const nlohmann::json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

}  // namespace detail

inline AttackerModelSpec parse_attacker_spec(const nlohmann::json& j) {
  detail::reject_unknown_keys(j, "attack entry",
                              {"type", "attacker", "mlp_hidden", "mlp_epochs", "mlp_lr",
                               "mlp_batch", "rf_trees", "rf_max_depth", "rf_bootstrap",
                               "gnn_hidden", "cosine_threshold"});
  AttackerModelSpec m;
  m.kind = parse_attacker_kind(j.at("attacker").get<std::string>());
  m.mlp_hidden = detail::get_or(j, "mlp_hidden", m.mlp_hidden);
  m.mlp_epochs = detail::get_or(j, "mlp_epochs", m.mlp_epochs);
  m.mlp_lr = detail::get_or(j, "mlp_lr", m.mlp_lr);
  m.mlp_batch = detail::get_or(j, "mlp_batch", m.mlp_batch);
  m.rf_trees = detail::get_or(j, "rf_trees", m.rf_trees);
  m.rf_max_depth = detail::get_or(j, "rf_max_depth", m.rf_max_depth);
  m.rf_bootstrap = detail::get_or(j, "rf_bootstrap", m.rf_bootstrap);
  m.gnn_hidden = detail::get_or(j, "gnn_hidden", m.gnn_hidden);
  m.cosine_threshold = detail::get_or(j, "cosine_threshold", m.cosine_threshold);
  validate(m);
  return m;
}

inline SbmSpec parse_sbm_spec(const nlohmann::json& j) {
  detail::reject_unknown_keys(j, "dataset",
                              {"n", "num_classes", "p_in", "p_out", "d", "feature_signal",
                               "sensitive_corr", "sensitive_col"});
  SbmSpec s;
  s.n = detail::get_or(j, "n", s.n);
  s.num_classes = detail::get_or(j, "num_classes", s.num_classes);
  s.p_in = detail::get_or(j, "p_in", s.p_in);
  s.p_out = detail::get_or(j, "p_out", s.p_out);
  s.d = detail::get_or(j, "d", s.d);
  s.feature_signal = detail::get_or(j, "feature_signal", s.feature_signal);
  s.sensitive_corr = detail::get_or(j, "sensitive_corr", s.sensitive_corr);
  s.sensitive_col = detail::get_or(j, "sensitive_col", s.sensitive_col);
  return s;
}

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  detail::reject_unknown_keys(j, "config",
                              {"name", "dataset", "encoder", "pretrain", "prompt", "k", "split",
                               "capabilities", "attacks", "betas", "repetitions", "seed"});
  ExperimentConfig cfg;
  cfg.name = detail::get_or<std::string>(j, "name", cfg.name);
  if (j.contains("dataset")) {
    if (j["dataset"].is_string())
      cfg.dataset_path = j["dataset"].get<std::string>();
    else
      cfg.sbm = parse_sbm_spec(j["dataset"]);
  }
  if (j.contains("encoder")) {
    const nlohmann::json& e = j["encoder"];
    detail::reject_unknown_keys(e, "encoder", {"layers", "hidden", "aggregator"});
    cfg.encoder.layers = detail::get_or(e, "layers", cfg.encoder.layers);
    cfg.encoder.hidden = detail::get_or(e, "hidden", cfg.encoder.hidden);
    if (e.contains("aggregator"))
      cfg.encoder.aggregator = parse_aggregator(e["aggregator"].get<std::string>());
  }
  if (j.contains("pretrain")) {
    const nlohmann::json& p = j["pretrain"];
    detail::reject_unknown_keys(p, "pretrain",
                                {"method", "epochs", "lr", "temperature", "sce_gamma",
                                 "mask_rate", "perturb_scale", "neg_multiplier", "augment"});
    if (p.contains("method"))
      cfg.pretrain.method = parse_pretrain_method(p["method"].get<std::string>());
    cfg.pretrain.epochs = detail::get_or(p, "epochs", cfg.pretrain.epochs);
    cfg.pretrain.lr = detail::get_or(p, "lr", cfg.pretrain.lr);
    cfg.pretrain.temperature = detail::get_or(p, "temperature", cfg.pretrain.temperature);
    cfg.pretrain.sce_gamma = detail::get_or(p, "sce_gamma", cfg.pretrain.sce_gamma);
    cfg.pretrain.mask_rate = detail::get_or(p, "mask_rate", cfg.pretrain.mask_rate);
    cfg.pretrain.perturb_scale = detail::get_or(p, "perturb_scale", cfg.pretrain.perturb_scale);
    cfg.pretrain.neg_multiplier = detail::get_or(p, "neg_multiplier", cfg.pretrain.neg_multiplier);
    if (p.contains("augment")) {
      const nlohmann::json& a = p["augment"];
      detail::reject_unknown_keys(a, "augment", {"edge_drop", "feature_mask", "node_drop"});
      cfg.pretrain.augment.edge_drop = detail::get_or(a, "edge_drop", cfg.pretrain.augment.edge_drop);
      cfg.pretrain.augment.feature_mask =
          detail::get_or(a, "feature_mask", cfg.pretrain.augment.feature_mask);
      cfg.pretrain.augment.node_drop = detail::get_or(a, "node_drop", cfg.pretrain.augment.node_drop);
    }
  }
  if (j.contains("prompt")) {
    const nlohmann::json& p = j["prompt"];
    detail::reject_unknown_keys(p, "prompt",
                                {"method", "epochs", "lr", "num_tokens", "cross_threshold"});
    if (p.contains("method"))
      cfg.prompt_method = parse_prompt_method(p["method"].get<std::string>());
    cfg.prompt.epochs = detail::get_or(p, "epochs", cfg.prompt.epochs);
    cfg.prompt.lr = detail::get_or(p, "lr", cfg.prompt.lr);
    cfg.prompt.num_tokens = detail::get_or(p, "num_tokens", cfg.prompt.num_tokens);
    cfg.prompt.cross_threshold = detail::get_or(p, "cross_threshold", cfg.prompt.cross_threshold);
  }
  if (j.contains("k")) {
    if (j["k"].is_string()) {
      check(j["k"].get<std::string>() == "Full", "config: k must be an integer or \"Full\"");
      cfg.shots = KShot::full_supervision();
    } else {
      cfg.shots.k = j["k"].get<int>();
      cfg.shots.full = false;
    }
  }
  if (j.contains("split")) {
    const nlohmann::json& s = j["split"];
    detail::reject_unknown_keys(s, "split", {"target_frac", "attack_train_frac", "min_per_class"});
    cfg.split.target_frac = detail::get_or(s, "target_frac", cfg.split.target_frac);
    cfg.split.attack_train_frac =
        detail::get_or(s, "attack_train_frac", cfg.split.attack_train_frac);
    cfg.split.min_per_class = detail::get_or(s, "min_per_class", cfg.split.min_per_class);
  }
  if (j.contains("capabilities")) {
    cfg.capabilities.clear();
    for (const auto& c : j["capabilities"])
      cfg.capabilities.push_back(parse_capability(c.get<std::string>()));
  }
  if (j.contains("attacks")) {
    cfg.attacks.clear();
    for (const auto& a : j["attacks"])
      cfg.attacks.push_back(
          {parse_attack_task(a.at("type").get<std::string>()), parse_attacker_spec(a)});
  }
  if (j.contains("betas")) cfg.betas = j["betas"].get<std::vector<double>>();
  cfg.repetitions = detail::get_or(j, "repetitions", cfg.repetitions);
  cfg.seed = detail::get_or(j, "seed", cfg.seed);
  validate(cfg);
  return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  check(f.good(), "config: cannot open '" + path + "'");
  nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
  check(!j.is_discarded() && j.is_object(), "config: '" + path + "' is not a JSON object");
  return parse_experiment_config(j);
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["name"] = cfg.name;
  if (!cfg.dataset_path.empty()) {
    j["dataset"] = cfg.dataset_path;
  } else {
    j["dataset"] = {{"n", cfg.sbm.n},
                    {"num_classes", cfg.sbm.num_classes},
                    {"p_in", cfg.sbm.p_in},
                    {"p_out", cfg.sbm.p_out},
                    {"d", cfg.sbm.d},
                    {"feature_signal", cfg.sbm.feature_signal},
                    {"sensitive_corr", cfg.sbm.sensitive_corr},
                    {"sensitive_col", cfg.sbm.sensitive_col}};
  }
  j["encoder"] = {{"layers", cfg.encoder.layers},
                  {"hidden", cfg.encoder.hidden},
                  {"aggregator", aggregator_name(cfg.encoder.aggregator)}};
  j["pretrain"] = {{"method", pretrain_method_name(cfg.pretrain.method)},
                   {"epochs", cfg.pretrain.epochs},
                   {"lr", cfg.pretrain.lr},
                   {"temperature", cfg.pretrain.temperature},
                   {"sce_gamma", cfg.pretrain.sce_gamma},
                   {"mask_rate", cfg.pretrain.mask_rate},
                   {"perturb_scale", cfg.pretrain.perturb_scale},
                   {"neg_multiplier", cfg.pretrain.neg_multiplier},
                   {"augment",
                    {{"edge_drop", cfg.pretrain.augment.edge_drop},
                     {"feature_mask", cfg.pretrain.augment.feature_mask},
                     {"node_drop", cfg.pretrain.augment.node_drop}}}};
  j["prompt"] = {{"method", prompt_method_name(cfg.prompt_method)},
                 {"epochs", cfg.prompt.epochs},
                 {"lr", cfg.prompt.lr},
                 {"num_tokens", cfg.prompt.num_tokens},
                 {"cross_threshold", cfg.prompt.cross_threshold}};
  if (cfg.shots.full)
    j["k"] = "Full";
  else
    j["k"] = cfg.shots.k;
  j["split"] = {{"target_frac", cfg.split.target_frac},
                {"attack_train_frac", cfg.split.attack_train_frac},
                {"min_per_class", cfg.split.min_per_class}};
  j["capabilities"] = nlohmann::json::array();
  for (Capability c : cfg.capabilities) j["capabilities"].push_back(capability_name(c));
  j["attacks"] = nlohmann::json::array();
  for (const SweepAttack& a : cfg.attacks) {
    nlohmann::json e = {{"type", attack_task_name(a.task)},
                        {"attacker", attacker_kind_name(a.model.kind)}};
    if (!a.model.mlp_hidden.empty()) e["mlp_hidden"] = a.model.mlp_hidden;
    e["mlp_epochs"] = a.model.mlp_epochs;
    e["mlp_lr"] = a.model.mlp_lr;
    e["mlp_batch"] = a.model.mlp_batch;
    e["rf_trees"] = a.model.rf_trees;
    e["rf_max_depth"] = a.model.rf_max_depth;
    e["rf_bootstrap"] = a.model.rf_bootstrap;
    e["gnn_hidden"] = a.model.gnn_hidden;
    e["cosine_threshold"] = a.model.cosine_threshold;
    j["attacks"].push_back(std::move(e));
  }
  j["betas"] = cfg.betas;
  j["repetitions"] = cfg.repetitions;
  j["seed"] = cfg.seed;
  return j;
}

// Provenance hash over the canonical JSON form (keys sorted by the serializer).
inline uint64_t experiment_config_hash(const ExperimentConfig& cfg) {
  return fnv1a64(config_to_json(cfg).dump());
}

inline std::string dataset_label(const ExperimentConfig& cfg) {
  if (!cfg.dataset_path.empty())
    return std::filesystem::path(cfg.dataset_path).filename().string();
  return "sbm-n" + std::to_string(cfg.sbm.n) + "-c" + std::to_string(cfg.sbm.num_classes);
}

// --- Records -----------------------------------------------------------------------

struct ExperimentRecord {
  std::string experiment, dataset, pretrain, prompt, k, capability, attack, attacker;
  double beta = 0.0;
  int repetitions = 0;  // successful repetitions aggregated
  uint64_t seed = 0;
  uint64_t config_hash = 0;
  double auc_mean = 0.0, auc_hw = 0.0;
  double acc_mean = 0.0, acc_hw = 0.0;
  double utility_mean = 0.0, utility_hw = 0.0;
  double wall_time_sec = 0.0;  // whole-experiment timing; manifest only
  std::vector<double> auc_raw, acc_raw, utility_raw;
};

inline void validate(const ExperimentRecord& r) {
  check(r.repetitions >= 1, "ExperimentRecord: no repetitions");
  for (double m : {r.auc_mean, r.acc_mean, r.utility_mean})
    check(m >= 0.0 && m <= 1.0, "ExperimentRecord: mean outside [0,1]");
  for (double h : {r.auc_hw, r.acc_hw, r.utility_hw})
    check(h >= 0.0, "ExperimentRecord: negative ci halfwidth");
}

// results.csv column order; wall time is deliberately absent so identical runs
// produce byte-identical files.
inline const char* kResultsHeader =
    "experiment,dataset,pretrain,prompt,k,capability,attack,attacker,beta,repetitions,"
    "seed,config_hash,auc_mean,auc_ci95,acc_mean,acc_ci95,utility_mean,utility_ci95";

namespace detail {

inline std::string fmt_beta(double b) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", b);
  return buf;
}

inline std::string fmt_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10f", v);
  return buf;
}

}  // namespace detail

inline std::string record_csv_row(const ExperimentRecord& r) {
  std::ostringstream os;
  os << r.experiment << ',' << r.dataset << ',' << r.pretrain << ',' << r.prompt << ',' << r.k
     << ',' << r.capability << ',' << r.attack << ',' << r.attacker << ','
     << detail::fmt_beta(r.beta) << ',' << r.repetitions << ',' << r.seed << ',' << r.config_hash
     << ',' << detail::fmt_metric(r.auc_mean) << ',' << detail::fmt_metric(r.auc_hw) << ','
     << detail::fmt_metric(r.acc_mean) << ',' << detail::fmt_metric(r.acc_hw) << ','
     << detail::fmt_metric(r.utility_mean) << ',' << detail::fmt_metric(r.utility_hw);
  return os.str();
}

inline void append_results_csv(const std::string& path,
                               const std::vector<ExperimentRecord>& records) {
  bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream f(path, std::ios::app);
  check(f.good(), "results: cannot open '" + path + "' for append");
  if (fresh) f << kResultsHeader << '\n';
  for (const ExperimentRecord& r : records) f << record_csv_row(r) << '\n';
  check(f.good(), "results: write to '" + path + "' failed");
}

inline std::vector<ExperimentRecord> load_results_csv(const std::string& path) {
  std::ifstream f(path);
  check(f.good(), "results: cannot open '" + path + "'");
  std::string line;
  check(static_cast<bool>(std::getline(f, line)), "results: '" + path + "' is empty");
  check(line == kResultsHeader, "results: '" + path + "' has an unexpected header");
  std::vector<ExperimentRecord> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    check(cols.size() == 18, "results: malformed row '" + line + "'");
    ExperimentRecord r;
    r.experiment = cols[0];
    r.dataset = cols[1];
    r.pretrain = cols[2];
    r.prompt = cols[3];
    r.k = cols[4];
    r.capability = cols[5];
    r.attack = cols[6];
    r.attacker = cols[7];
    r.beta = std::stod(cols[8]);
    r.repetitions = std::stoi(cols[9]);
    r.seed = std::stoull(cols[10]);
    r.config_hash = std::stoull(cols[11]);
    r.auc_mean = std::stod(cols[12]);
    r.auc_hw = std::stod(cols[13]);
    r.acc_mean = std::stod(cols[14]);
    r.acc_hw = std::stod(cols[15]);
    r.utility_mean = std::stod(cols[16]);
    r.utility_hw = std::stod(cols[17]);
    out.push_back(std::move(r));
  }
  return out;
}

// --- Orchestration -------------------------------------------------------------------

namespace detail {

struct RepOutcome {
  bool ok = false;
  std::string error;
  double seconds = 0.0;
  std::string ckpt;                // serialized encoder checkpoint
  std::vector<double> auc, acc;    // flattened (capability, beta, attack)
  std::vector<double> utility;     // flattened (capability, beta)
};

inline Ci95 aggregate(const std::vector<double>& raws) {
  if (raws.size() == 1) return {raws[0], 0.0};
  return ci95(raws);
}

}  // namespace detail

inline std::vector<ExperimentRecord> run_experiment(const ExperimentConfig& cfg,
                                                    const std::string& out_dir,
                                                    int threads = 1) {
  validate(cfg);
  check(threads >= 1, "run_experiment: threads must be >= 1");
  auto wall0 = std::chrono::steady_clock::now();

  Graph bundle;
  if (!cfg.dataset_path.empty()) bundle = load_graph(cfg.dataset_path);

  std::vector<double> betas = cfg.betas.empty() ? std::vector<double>{0.0} : cfg.betas;
  const int num_caps = static_cast<int>(cfg.capabilities.size());
  const int num_betas = static_cast<int>(betas.size());
  const int num_attacks = static_cast<int>(cfg.attacks.size());
  const uint64_t cfg_hash = experiment_config_hash(cfg);

  auto run_rep = [&](int r) -> detail::RepOutcome {
    detail::RepOutcome out;
    auto t0 = std::chrono::steady_clock::now();
    try {
      uint64_t seed_r = cfg.seed + static_cast<uint64_t>(r);
      Graph g = cfg.dataset_path.empty() ? generate_sbm(cfg.sbm, derive_seed(seed_r, "data"))
                                         : bundle;
      Split split = split_target_shadow(g, cfg.split, derive_seed(seed_r, "split"));
      PretrainConfig pc = cfg.pretrain;
      pc.seed = derive_seed(seed_r, "pretrain");
      EncoderParams enc = pretrain_run(g, pc, cfg.encoder).encoder;
      out.ckpt = checkpoint_bytes(
          enc.ps, encoder_checkpoint_meta(enc, pretrain_method_name(cfg.pretrain.method),
                                          cfg_hash));
      std::vector<int> shots = sample_k_shot(g, split, cfg.shots, derive_seed(seed_r, "kshot"));
      PromptState st = prompt_tune(g, enc, shots, cfg.prompt_method, cfg.prompt,
                                   derive_seed(seed_r, "tune"));
      out.auc.resize(static_cast<size_t>(num_caps) * num_betas * num_attacks);
      out.acc.resize(out.auc.size());
      out.utility.resize(static_cast<size_t>(num_caps) * num_betas);
      for (int c = 0; c < num_caps; ++c) {
        BetaSweepResult sw = beta_sweep(
            g, st, split, cfg.capabilities[c], cfg.attacks, betas,
            derive_seed(seed_r, std::string("cap/") + capability_name(cfg.capabilities[c])));
        for (int b = 0; b < num_betas; ++b) {
          for (int a = 0; a < num_attacks; ++a) {
            const AttackResult& ar = sw.attacks[static_cast<size_t>(b) * num_attacks + a].result;
            size_t idx = (static_cast<size_t>(c) * num_betas + b) * num_attacks + a;
            out.auc[idx] = ar.auc;
            out.acc[idx] = ar.acc;
          }
          out.utility[static_cast<size_t>(c) * num_betas + b] = sw.utility[b].accuracy;
        }
      }
      out.ok = true;
    } catch (const std::exception& e) {
      out.ok = false;
      out.error = e.what();
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
  };

  std::vector<detail::RepOutcome> reps(cfg.repetitions);
  if (threads == 1 || cfg.repetitions == 1) {
    for (int r = 0; r < cfg.repetitions; ++r) reps[r] = run_rep(r);
  } else {
    std::atomic<int> next{0};
    auto worker = [&] {
      for (;;) {
        int r = next.fetch_add(1);
        if (r >= cfg.repetitions) return;
        reps[r] = run_rep(r);
      }
    };
    std::vector<std::thread> pool;
    int width = std::min(threads, cfg.repetitions);
    pool.reserve(width);
    for (int t = 0; t < width; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  std::vector<int> ok_reps;
  for (int r = 0; r < cfg.repetitions; ++r)
    if (reps[r].ok) ok_reps.push_back(r);
  if (ok_reps.empty())
    fail("run_experiment: all " + std::to_string(cfg.repetitions) +
         " repetitions failed; first error: " + reps[0].error);

  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();

  std::vector<ExperimentRecord> records;
  for (int c = 0; c < num_caps; ++c) {
    for (int b = 0; b < num_betas; ++b) {
      std::vector<double> ut;
      for (int r : ok_reps) ut.push_back(reps[r].utility[static_cast<size_t>(c) * num_betas + b]);
      Ci95 u = detail::aggregate(ut);
      for (int a = 0; a < num_attacks; ++a) {
        ExperimentRecord rec;
        rec.experiment = cfg.name;
        rec.dataset = dataset_label(cfg);
        rec.pretrain = pretrain_method_name(cfg.pretrain.method);
        rec.prompt = prompt_method_name(cfg.prompt_method);
        rec.k = cfg.shots.full ? "Full" : std::to_string(cfg.shots.k);
        rec.capability = capability_name(cfg.capabilities[c]);
        rec.attack = attack_task_name(cfg.attacks[a].task);
        rec.attacker = attacker_kind_name(cfg.attacks[a].model.kind);
        rec.beta = betas[b];
        rec.repetitions = static_cast<int>(ok_reps.size());
        rec.seed = cfg.seed;
        rec.config_hash = cfg_hash;
        size_t idx = (static_cast<size_t>(c) * num_betas + b) * num_attacks + a;
        for (int r : ok_reps) {
          rec.auc_raw.push_back(reps[r].auc[idx]);
          rec.acc_raw.push_back(reps[r].acc[idx]);
          rec.utility_raw.push_back(reps[r].utility[static_cast<size_t>(c) * num_betas + b]);
        }
        Ci95 ca = detail::aggregate(rec.auc_raw);
        Ci95 cc = detail::aggregate(rec.acc_raw);
        rec.auc_mean = ca.mean;
        rec.auc_hw = ca.halfwidth;
        rec.acc_mean = cc.mean;
        rec.acc_hw = cc.halfwidth;
        rec.utility_mean = u.mean;
        rec.utility_hw = u.halfwidth;
        rec.wall_time_sec = wall;
        validate(rec);
        records.push_back(std::move(rec));
      }
    }
  }

  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "checkpoints");
  for (int r : ok_reps) {
    fs::path p = fs::path(out_dir) / "checkpoints" / ("encoder_rep" + std::to_string(r) + ".ckpt");
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    check(f.good(), "run_experiment: cannot write " + p.string());
    f.write(reps[r].ckpt.data(), static_cast<std::streamsize>(reps[r].ckpt.size()));
  }
  append_results_csv((fs::path(out_dir) / "results.csv").string(), records);

  nlohmann::json manifest;
  manifest["config"] = config_to_json(cfg);
  manifest["config_hash"] = std::to_string(cfg_hash);
  manifest["dataset"] = dataset_label(cfg);
  manifest["threads"] = threads;
  manifest["repetitions"] = {{"requested", cfg.repetitions},
                             {"succeeded", static_cast<int>(ok_reps.size())}};
  manifest["total_seconds"] = wall;
  manifest["reps"] = nlohmann::json::array();
  for (int r = 0; r < cfg.repetitions; ++r) {
    nlohmann::json e = {{"rep", r},
                        {"seed", cfg.seed + static_cast<uint64_t>(r)},
                        {"ok", reps[r].ok},
                        {"seconds", reps[r].seconds}};
    if (!reps[r].ok)
      e["error"] = reps[r].error;
    else
      e["checkpoint"] = "checkpoints/encoder_rep" + std::to_string(r) + ".ckpt";
    manifest["reps"].push_back(std::move(e));
  }
  manifest["records"] = nlohmann::json::array();
  for (const ExperimentRecord& rec : records) {
    manifest["records"].push_back({{"capability", rec.capability},
                                   {"beta", rec.beta},
                                   {"attack", rec.attack},
                                   {"attacker", rec.attacker},
                                   {"auc_mean", rec.auc_mean},
                                   {"auc_ci95", rec.auc_hw},
                                   {"acc_mean", rec.acc_mean},
                                   {"acc_ci95", rec.acc_hw},
                                   {"utility_mean", rec.utility_mean},
                                   {"utility_ci95", rec.utility_hw},
                                   {"auc_raw", rec.auc_raw},
                                   {"acc_raw", rec.acc_raw},
                                   {"utility_raw", rec.utility_raw}});
  }
  std::ofstream mf(fs::path(out_dir) / "manifest.json", std::ios::trunc);
  check(mf.good(), "run_experiment: cannot write manifest.json");
  mf << manifest.dump(2) << '\n';

  return records;
}

// --- Reports -----------------------------------------------------------------------

namespace detail {

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::trunc);
  check(f.good(), "report: cannot open '" + path + "'");
  f << content;
  check(f.good(), "report: write to '" + path + "' failed");
}

inline std::string table_cell(double mean, double hw) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2f\xC2\xB1%.2f", 100.0 * mean, 100.0 * hw);
  return buf;  // UTF-8 plus-minus sign
}

inline const std::vector<std::string>& method_columns() {
  static const std::vector<std::string> cols = {"AllInOne", "GPrompt", "GPF",
                                                "GPFplus",  "GPPT",    "NoPrompt"};
  return cols;
}

}  // namespace detail

// aia-table / lia-table: Markdown + CSV, one row per dataset x capability (x attacker
// when several attackers are present), columns the six prompting methods, cells
// "mean±halfwidth" of attack AUC x 100 at beta = 0.
// beta-curves: long-form CSV (beta, capability, attack, attacker, auc, utility).
inline std::vector<std::string> emit_report(const std::vector<ExperimentRecord>& records,
                                            const std::string& layout,
                                            const std::string& out_dir) {
  check(!records.empty(), "emit_report: no records");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<std::string> written;

  if (layout == "aia-table" || layout == "lia-table") {
    const std::string want = layout == "aia-table" ? "AIA" : "LIA";
    std::vector<const ExperimentRecord*> rows;
    std::set<std::string> attackers;
    for (const ExperimentRecord& r : records)
      if (r.attack == want && r.beta == 0.0) {
        rows.push_back(&r);
        attackers.insert(r.attacker);
      }
    check(!rows.empty(), "emit_report: no undefended (beta=0) " + want + " records");
    bool split_attacker = attackers.size() > 1;

    // (dataset, capability[, attacker]) -> method -> cell
    std::map<std::vector<std::string>, std::map<std::string, std::string>> table;
    for (const ExperimentRecord* r : rows) {
      std::vector<std::string> key = {r->dataset, r->capability};
      if (split_attacker) key.push_back(r->attacker);
      std::string cell = detail::table_cell(r->auc_mean, r->auc_hw);
      auto& slot = table[key][r->prompt];
      check(slot.empty() || slot == cell,
            "emit_report: conflicting records for one " + want + " table cell");
      slot = cell;
    }

    std::ostringstream md, csv;
    std::string label = want == "AIA" ? "attribute-inference" : "link-inference";
    md << "# " << want << " attack AUC (x100, mean \xC2\xB1 95% halfwidth)\n\n";
    md << "| dataset | capability |";
    csv << "dataset,capability";
    if (split_attacker) {
      md << " attacker |";
      csv << ",attacker";
    }
    for (const std::string& m : detail::method_columns()) {
      md << ' ' << m << " |";
      csv << ',' << m;
    }
    md << "\n|---|---|";
    if (split_attacker) md << "---|";
    for (size_t i = 0; i < detail::method_columns().size(); ++i) md << "---|";
    md << '\n';
    csv << '\n';
    for (const auto& [key, cells] : table) {
      md << "| ";
      for (size_t i = 0; i < key.size(); ++i) md << key[i] << " | ";
      csv << key[0] << ',' << key[1];
      if (split_attacker) csv << ',' << key[2];
      for (const std::string& m : detail::method_columns()) {
        auto it = cells.find(m);
        md << (it == cells.end() ? "-" : it->second) << " |";
        md << (m == detail::method_columns().back() ? "\n" : " ");
        csv << ',' << (it == cells.end() ? "-" : it->second);
      }
      csv << '\n';
    }
    md << "\nCells: " << label
       << " AUC x 100 at beta=0; halfwidth = 1.96 s/sqrt(n) (normal approximation).\n";
    std::string stem = want == "AIA" ? "aia_table" : "lia_table";
    detail::write_text((fs::path(out_dir) / (stem + ".md")).string(), md.str());
    detail::write_text((fs::path(out_dir) / (stem + ".csv")).string(), csv.str());
    written = {(fs::path(out_dir) / (stem + ".md")).string(),
               (fs::path(out_dir) / (stem + ".csv")).string()};
  } else if (layout == "beta-curves") {
    std::vector<const ExperimentRecord*> rows;
    for (const ExperimentRecord& r : records) rows.push_back(&r);
    std::sort(rows.begin(), rows.end(), [](const ExperimentRecord* a, const ExperimentRecord* b) {
      auto key = [](const ExperimentRecord* r) {
        return std::make_tuple(r->capability, r->attack, r->attacker, r->beta);
      };
      return key(a) < key(b);
    });
    std::ostringstream csv;
    csv << "beta,capability,attack,attacker,auc,utility\n";
    for (const ExperimentRecord* r : rows)
      csv << detail::fmt_beta(r->beta) << ',' << r->capability << ',' << r->attack << ','
          << r->attacker << ',' << detail::fmt_metric(r->auc_mean) << ','
          << detail::fmt_metric(r->utility_mean) << '\n';
    std::string path = (fs::path(out_dir) / "beta_curves.csv").string();
    detail::write_text(path, csv.str());
    written = {path};
  } else {
    fail("emit_report: unknown layout '" + layout +
         "' (expected aia-table|lia-table|beta-curves|connectivity|projection-2d)");
  }
  return written;
}

// connectivity: class-by-class edge-count matrix of a graph.
inline std::vector<std::string> emit_report(const Graph& g, const std::string& out_dir) {
  check(g.n > 0 && g.num_classes > 0, "emit_report: empty graph");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  std::vector<std::vector<int64_t>> counts(g.num_classes,
                                           std::vector<int64_t>(g.num_classes, 0));
  for (auto [u, v] : g.edges) {
    int a = g.labels[u], b = g.labels[v];
    counts[a][b] += 1;
    if (a != b) counts[b][a] += 1;
  }
  std::ostringstream csv, md;
  csv << "class";
  for (int c = 0; c < g.num_classes; ++c) csv << ",c" << c;
  csv << '\n';
  for (int a = 0; a < g.num_classes; ++a) {
    csv << 'c' << a;
    for (int b = 0; b < g.num_classes; ++b) csv << ',' << counts[a][b];
    csv << '\n';
  }
  md << "# Class connectivity (" << g.name << ")\n\nEdge counts between classes"
     << " (off-diagonal entries counted for both endpoints' rows):\n\n| |";
  for (int c = 0; c < g.num_classes; ++c) md << " c" << c << " |";
  md << "\n|---|";
  for (int c = 0; c < g.num_classes; ++c) md << "---|";
  md << '\n';
  int64_t total = static_cast<int64_t>(g.edges.size());
  for (int a = 0; a < g.num_classes; ++a) {
    md << "| c" << a << " |";
    for (int b = 0; b < g.num_classes; ++b) {
      char buf[64];
      std::snprintf(buf, sizeof buf, " %lld (%.3f) |", static_cast<long long>(counts[a][b]),
                    total ? static_cast<double>(counts[a][b]) / total : 0.0);
      md << buf;
    }
    md << '\n';
  }
  md << "\nParenthesized: fraction of all " << total << " edges.\n";
  std::string cpath = (fs::path(out_dir) / "connectivity.csv").string();
  std::string mpath = (fs::path(out_dir) / "connectivity.md").string();
  detail::write_text(cpath, csv.str());
  detail::write_text(mpath, md.str());
  return {cpath, mpath};
}

namespace detail {

// Leading principal components by power iteration with deflation; the start
// vector and sign convention are fixed so the projection is reproducible.
inline std::vector<std::vector<double>> principal_components(const Tensor2& x, int k) {
  int n = x.rows, q = x.cols;
  check(n >= 2 && q >= k, "principal_components: not enough data");
  std::vector<double> mean(q, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < q; ++j) mean[j] += x.at(i, j);
  for (double& m : mean) m /= n;
  Tensor2 c(q, q);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < q; ++a) {
      double da = x.at(i, a) - mean[a];
      for (int b = 0; b < q; ++b) c.at(a, b) += da * (x.at(i, b) - mean[b]);
    }
  for (double& v : c.v) v /= (n - 1);

  std::vector<std::vector<double>> comps;
  for (int t = 0; t < k; ++t) {
    std::vector<double> v(q, 1.0 / std::sqrt(static_cast<double>(q)));
    for (int it = 0; it < 200; ++it) {
      std::vector<double> w(q, 0.0);
      for (int a = 0; a < q; ++a)
        for (int b = 0; b < q; ++b) w[a] += c.at(a, b) * v[b];
      double norm = 0.0;
      for (double y : w) norm += y * y;
      norm = std::sqrt(norm);
      if (norm < 1e-300) break;  // degenerate direction; keep the last iterate
      for (int a = 0; a < q; ++a) v[a] = w[a] / norm;
    }
    for (int a = 0; a < q; ++a)
      if (std::fabs(v[a]) > 1e-12) {
        if (v[a] < 0.0)
          for (double& y : v) y = -y;
        break;
      }
    double lambda = 0.0;
    for (int a = 0; a < q; ++a) {
      double w = 0.0;
      for (int b = 0; b < q; ++b) w += c.at(a, b) * v[b];
      lambda += v[a] * w;
    }
    for (int a = 0; a < q; ++a)
      for (int b = 0; b < q; ++b) c.at(a, b) -= lambda * v[a] * v[b];
    comps.push_back(std::move(v));
  }
  // return centered-data projections, not the components themselves
  std::vector<std::vector<double>> coords(n, std::vector<double>(k, 0.0));
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < k; ++t)
      for (int j = 0; j < q; ++j) coords[i][t] += (x.at(i, j) - mean[j]) * comps[t][j];
  return coords;
}

}  // namespace detail

// projection-2d: principal-component coordinates of the held-out pair features,
// labeled edge / non-edge.
inline std::vector<std::string> emit_report(const LiaPairSet& pairs, const std::string& out_dir) {
  check(!pairs.test.empty(), "emit_report: no test pairs to project");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  Tensor2 feats = pairs.x_test;
  std::vector<std::vector<double>> coords = detail::principal_components(feats, 2);
  std::ostringstream csv;
  csv << "x,y,label\n";
  for (size_t i = 0; i < pairs.test.size(); ++i) {
    char buf[80];
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%d\n", coords[i][0], coords[i][1],
                  pairs.test[i].label);
    csv << buf;
  }
  std::string path = (fs::path(out_dir) / "projection_2d.csv").string();
  detail::write_text(path, csv.str());
  return {path};
}

}  // namespace gpaudit
