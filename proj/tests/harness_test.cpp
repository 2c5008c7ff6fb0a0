#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gpaudit/checkpoint.hpp"
#include "gpaudit/harness.hpp"
#include "test_util.hpp"

using namespace gpaudit;
using testutil::max_abs_diff;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("gpaudit_harness_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  EXPECT_TRUE(f.good()) << path;
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.name = "tiny";
  cfg.sbm.n = 120;
  cfg.sbm.num_classes = 2;
  cfg.sbm.p_in = 0.25;
  cfg.sbm.p_out = 0.05;
  cfg.sbm.d = 6;
  cfg.encoder.layers = 1;
  cfg.encoder.hidden = 8;
  cfg.pretrain.method = PretrainMethod::kEdgePred;
  cfg.pretrain.epochs = 5;
  cfg.prompt_method = PromptMethod::kGpf;
  cfg.prompt.epochs = 10;
  cfg.shots.k = 4;
  cfg.shots.full = false;
  AttackerModelSpec mlp;
  mlp.mlp_epochs = 15;
  cfg.attacks = {{AttackTask::kAia, mlp}, {AttackTask::kLia, mlp}};
  cfg.capabilities = {Capability::kPosterior, Capability::kEmbedding};
  cfg.betas = {0.0, 1.0};
  cfg.repetitions = 2;
  cfg.seed = 9;
  return cfg;
}

double mean_of(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

}  // namespace

// --- metrics -----------------------------------------------------------------------

TEST(Auc, HandComputedExamples) {
  EXPECT_DOUBLE_EQ(auc({0.9, 0.8, 0.7, 0.6}, {1, 1, 0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(auc({0.9, 0.1}, {0, 1}), 0.0);
  EXPECT_DOUBLE_EQ(auc({0.4, 0.4, 0.4}, {1, 0, 0}), 0.5);
  // One positive tied with one of two negatives: pairs are (win, tie) -> 0.75.
  EXPECT_DOUBLE_EQ(auc({0.5, 0.5, 0.3}, {1, 0, 0}), 0.75);
  EXPECT_DOUBLE_EQ(auc({0.2, 0.8, 0.5, 0.5}, {0, 1, 1, 0}), 0.875);
}

TEST(Auc, MatchesBruteForcePairCount) {
  Rng rng(4242);
  for (int t = 0; t < 300; ++t) {
    int n = 2 + static_cast<int>(rng.uniform_int(60));
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    bool grid = rng.bernoulli(0.5);  // coarse grid forces plenty of ties
    for (int i = 0; i < n; ++i) {
      scores[i] = grid ? static_cast<double>(rng.uniform_int(4)) * 0.25 : rng.uniform();
      labels[i] = rng.bernoulli(0.5) ? 1 : 0;
    }
    labels[0] = 1;
    labels[n - 1] = 0;
    double wins = 0.0;
    double np = 0.0, nn = 0.0;
    for (int i = 0; i < n; ++i) {
      if (labels[i] != 1) continue;
      np += 1.0;
      for (int j = 0; j < n; ++j) {
        if (labels[j] != 0) continue;
        if (scores[i] > scores[j])
          wins += 1.0;
        else if (scores[i] == scores[j])
          wins += 0.5;
      }
    }
    for (int j = 0; j < n; ++j) nn += labels[j] == 0;
    EXPECT_NEAR(auc(scores, labels), wins / (np * nn), 1e-12);
  }
}

TEST(Auc, InvariantUnderMonotoneTransforms) {
  Rng rng(7);
  std::vector<double> scores(50);
  std::vector<int> labels(50);
  for (int i = 0; i < 50; ++i) {
    scores[i] = static_cast<double>(rng.uniform_int(10)) / 10.0;
    labels[i] = i % 3 == 0;
  }
  double base = auc(scores, labels);
  std::vector<double> shifted = scores, expd = scores;
  for (double& s : shifted) s = 3.0 * s - 11.0;
  for (double& s : expd) s = std::exp(s);
  EXPECT_DOUBLE_EQ(auc(shifted, labels), base);
  EXPECT_DOUBLE_EQ(auc(expd, labels), base);
}

TEST(Auc, InputValidation) {
  EXPECT_THROW(auc({}, {}), Error);
  EXPECT_THROW(auc({0.5}, {1}), Error);             // one class only
  EXPECT_THROW(auc({0.5, 0.4}, {0, 0}), Error);     // no positives
  EXPECT_THROW(auc({0.5, 0.4}, {1, 2}), Error);     // bad label
  EXPECT_THROW(auc({0.5, 0.4, 0.3}, {1, 0}), Error);
  EXPECT_THROW(auc({std::nan(""), 0.4}, {1, 0}), Error);
}

TEST(Accuracy, CountsExactMatches) {
  EXPECT_DOUBLE_EQ(accuracy({1, 0, 2, 1}, {1, 1, 2, 0}), 0.5);
  EXPECT_DOUBLE_EQ(accuracy({3}, {3}), 1.0);
  EXPECT_THROW(accuracy({}, {}), Error);
  EXPECT_THROW(accuracy({1}, {1, 2}), Error);
}

TEST(Ci95, HandComputedInterval) {
  Ci95 c = ci95({0.0, 1.0});
  EXPECT_DOUBLE_EQ(c.mean, 0.5);
  EXPECT_DOUBLE_EQ(c.halfwidth, 0.98);  // 1.96 * sqrt(1/2) / sqrt(2)
  Ci95 flat = ci95({0.3, 0.3, 0.3});
  EXPECT_DOUBLE_EQ(flat.mean, 0.3);
  EXPECT_DOUBLE_EQ(flat.halfwidth, 0.0);
  EXPECT_THROW(ci95({1.0}), Error);
}

// --- configuration -----------------------------------------------------------------

TEST(ConfigParse, DefaultsFromEmptyObject) {
  ExperimentConfig cfg = parse_experiment_config(nlohmann::json::object());
  EXPECT_EQ(cfg.name, "experiment");
  EXPECT_TRUE(cfg.dataset_path.empty());
  EXPECT_EQ(cfg.repetitions, 10);
  EXPECT_EQ(cfg.capabilities.size(), 2u);
  EXPECT_EQ(cfg.attacks.size(), 2u);
  EXPECT_TRUE(cfg.betas.empty());
}

TEST(ConfigParse, ReadsEveryField) {
  nlohmann::json j = nlohmann::json::parse(R"({
    "name": "probe",
    "dataset": {"n": 300, "num_classes": 3, "p_in": 0.1, "p_out": 0.01, "d": 16,
                "feature_signal": 1.5, "sensitive_corr": 0.8, "sensitive_col": 2},
    "encoder": {"layers": 1, "hidden": 32, "aggregator": "mean"},
    "pretrain": {"method": "GraphCL", "epochs": 40, "lr": 0.005, "temperature": 0.4,
                 "augment": {"edge_drop": 0.3, "feature_mask": 0.1}},
    "prompt": {"method": "GPFplus", "epochs": 60, "lr": 0.002, "num_tokens": 3},
    "k": 5,
    "split": {"target_frac": 0.25, "attack_train_frac": 0.6, "min_per_class": 4},
    "capabilities": ["Posterior", "Embedding", "Prompt"],
    "attacks": [{"type": "AIA", "attacker": "MLP", "mlp_hidden": [32, 16], "mlp_epochs": 50},
                {"type": "LIA", "attacker": "CosineThreshold", "cosine_threshold": 0.1}],
    "betas": [0, 1, 2],
    "repetitions": 3,
    "seed": 42
  })");
  ExperimentConfig cfg = parse_experiment_config(j);
  EXPECT_EQ(cfg.name, "probe");
  EXPECT_EQ(cfg.sbm.n, 300);
  EXPECT_EQ(cfg.sbm.num_classes, 3);
  EXPECT_DOUBLE_EQ(cfg.sbm.feature_signal, 1.5);
  EXPECT_EQ(cfg.sbm.sensitive_col, 2);
  EXPECT_EQ(cfg.encoder.layers, 1);
  EXPECT_EQ(cfg.encoder.hidden, 32);
  EXPECT_EQ(cfg.pretrain.method, PretrainMethod::kGraphCl);
  EXPECT_EQ(cfg.pretrain.epochs, 40);
  EXPECT_DOUBLE_EQ(cfg.pretrain.temperature, 0.4);
  EXPECT_DOUBLE_EQ(cfg.pretrain.augment.edge_drop, 0.3);
  EXPECT_DOUBLE_EQ(cfg.pretrain.augment.feature_mask, 0.1);
  EXPECT_EQ(cfg.prompt_method, PromptMethod::kGpfPlus);
  EXPECT_EQ(cfg.prompt.epochs, 60);
  EXPECT_EQ(cfg.prompt.num_tokens, 3);
  EXPECT_FALSE(cfg.shots.full);
  EXPECT_EQ(cfg.shots.k, 5);
  EXPECT_DOUBLE_EQ(cfg.split.target_frac, 0.25);
  EXPECT_DOUBLE_EQ(cfg.split.attack_train_frac, 0.6);
  EXPECT_EQ(cfg.split.min_per_class, 4);
  ASSERT_EQ(cfg.capabilities.size(), 3u);
  EXPECT_EQ(cfg.capabilities[2], Capability::kPrompt);
  ASSERT_EQ(cfg.attacks.size(), 2u);
  EXPECT_EQ(cfg.attacks[0].task, AttackTask::kAia);
  EXPECT_EQ(cfg.attacks[0].model.kind, AttackerKind::kMlp);
  ASSERT_EQ(cfg.attacks[0].model.mlp_hidden.size(), 2u);
  EXPECT_EQ(cfg.attacks[0].model.mlp_hidden[0], 32);
  EXPECT_EQ(cfg.attacks[0].model.mlp_epochs, 50);
  EXPECT_EQ(cfg.attacks[1].model.kind, AttackerKind::kCosine);
  EXPECT_DOUBLE_EQ(cfg.attacks[1].model.cosine_threshold, 0.1);
  ASSERT_EQ(cfg.betas.size(), 3u);
  EXPECT_EQ(cfg.repetitions, 3);
  EXPECT_EQ(cfg.seed, 42u);
}

TEST(ConfigParse, FullSupervisionKeyword) {
  ExperimentConfig cfg = parse_experiment_config(nlohmann::json::parse(R"({"k": "Full"})"));
  EXPECT_TRUE(cfg.shots.full);
  EXPECT_THROW(parse_experiment_config(nlohmann::json::parse(R"({"k": "full"})")), Error);
}

TEST(ConfigParse, RejectsUnknownKeys) {
  EXPECT_THROW(parse_experiment_config(nlohmann::json::parse(R"({"naem": "x"})")), Error);
  EXPECT_THROW(parse_experiment_config(nlohmann::json::parse(R"({"encoder": {"depth": 2}})")),
               Error);
  EXPECT_THROW(parse_experiment_config(
                   nlohmann::json::parse(R"({"pretrain": {"augment": {"edge_drops": 0.1}}})")),
               Error);
  EXPECT_THROW(parse_experiment_config(nlohmann::json::parse(
                   R"({"attacks": [{"type": "AIA", "attacker": "MLP", "epochs": 3}]})")),
               Error);
  EXPECT_THROW(parse_experiment_config(nlohmann::json::parse(R"({"dataset": {"rho": 0.9}})")),
               Error);
}

TEST(ConfigParse, RejectsInvalidCombinations) {
  // Prompt capability is only defined for GPFplus.
  EXPECT_THROW(parse_experiment_config(nlohmann::json::parse(
                   R"({"capabilities": ["Prompt"], "prompt": {"method": "GPF"}})")),
               Error);
  EXPECT_NO_THROW(parse_experiment_config(nlohmann::json::parse(
      R"({"capabilities": ["Prompt"], "prompt": {"method": "GPFplus"}})")));
  // Cosine thresholding has no attribute-inference form.
  EXPECT_THROW(parse_experiment_config(nlohmann::json::parse(
                   R"({"attacks": [{"type": "AIA", "attacker": "CosineThreshold"}]})")),
               Error);
  EXPECT_THROW(
      parse_experiment_config(nlohmann::json::parse(R"({"betas": [1.0, -0.5]})")), Error);
  EXPECT_THROW(parse_experiment_config(nlohmann::json::parse(R"({"repetitions": 0})")), Error);
  EXPECT_THROW(parse_experiment_config(nlohmann::json::parse(R"({"name": "a,b"})")), Error);
}

TEST(ConfigParse, JsonRoundTripPreservesHash) {
  ExperimentConfig cfg = tiny_config();
  cfg.prompt_method = PromptMethod::kGpfPlus;
  cfg.capabilities.push_back(Capability::kPrompt);
  nlohmann::json j = config_to_json(cfg);
  ExperimentConfig back = parse_experiment_config(j);
  EXPECT_EQ(experiment_config_hash(back), experiment_config_hash(cfg));
  EXPECT_EQ(back.name, cfg.name);
  EXPECT_EQ(back.attacks.size(), cfg.attacks.size());
}

TEST(ConfigParse, HashTracksFieldChanges) {
  ExperimentConfig a = tiny_config();
  ExperimentConfig b = a;
  EXPECT_EQ(experiment_config_hash(a), experiment_config_hash(b));
  b.seed = 10;
  EXPECT_NE(experiment_config_hash(a), experiment_config_hash(b));
  b = a;
  b.sbm.feature_signal = 0.9;
  EXPECT_NE(experiment_config_hash(a), experiment_config_hash(b));
  b = a;
  b.attacks[0].model.mlp_epochs = 16;
  EXPECT_NE(experiment_config_hash(a), experiment_config_hash(b));
}

TEST(ConfigFile, LoadAndErrorPaths) {
  std::string dir = fresh_dir("cfgfile");
  std::string good = dir + "/good.json";
  {
    std::ofstream f(good);
    f << R"({"name": "fromfile", "repetitions": 2})";
  }
  ExperimentConfig cfg = load_experiment_config(good);
  EXPECT_EQ(cfg.name, "fromfile");
  EXPECT_EQ(cfg.repetitions, 2);
  EXPECT_THROW(load_experiment_config(dir + "/missing.json"), Error);
  std::string bad = dir + "/bad.json";
  {
    std::ofstream f(bad);
    f << "[1, 2, 3]";
  }
  EXPECT_THROW(load_experiment_config(bad), Error);
  std::string garbled = dir + "/garbled.json";
  {
    std::ofstream f(garbled);
    f << "{not json";
  }
  EXPECT_THROW(load_experiment_config(garbled), Error);
}

TEST(DatasetLabel, SbmAndBundleForms) {
  ExperimentConfig cfg = tiny_config();
  EXPECT_EQ(dataset_label(cfg), "sbm-n120-c2");
  cfg.dataset_path = "/data/bundles/cora";
  EXPECT_EQ(dataset_label(cfg), "cora");
}

// --- records and results.csv --------------------------------------------------------

TEST(Records, CsvRowFormat) {
  ExperimentRecord r;
  r.experiment = "e";
  r.dataset = "d";
  r.pretrain = "GraphCL";
  r.prompt = "GPF";
  r.k = "5";
  r.capability = "Embedding";
  r.attack = "AIA";
  r.attacker = "MLP";
  r.beta = 0.5;
  r.repetitions = 3;
  r.seed = 7;
  r.config_hash = 11;
  r.auc_mean = 0.5;
  r.auc_hw = 0.01;
  r.acc_mean = 0.75;
  r.acc_hw = 0.02;
  r.utility_mean = 1.0;
  r.utility_hw = 0.0;
  EXPECT_EQ(record_csv_row(r),
            "e,d,GraphCL,GPF,5,Embedding,AIA,MLP,0.5,3,7,11,0.5000000000,0.0100000000,"
            "0.7500000000,0.0200000000,1.0000000000,0.0000000000");
  validate(r);
  ExperimentRecord bad = r;
  bad.repetitions = 0;
  EXPECT_THROW(validate(bad), Error);
  bad = r;
  bad.auc_mean = 1.5;
  EXPECT_THROW(validate(bad), Error);
  bad = r;
  bad.acc_hw = -0.1;
  EXPECT_THROW(validate(bad), Error);
}

TEST(Records, AppendAndLoadRoundTrip) {
  std::string dir = fresh_dir("csv");
  std::string path = dir + "/results.csv";
  ExperimentRecord r;
  r.experiment = "exp";
  r.dataset = "sbm-n120-c2";
  r.pretrain = "EdgePred";
  r.prompt = "GPF";
  r.k = "4";
  r.capability = "Posterior";
  r.attack = "LIA";
  r.attacker = "CosineThreshold";
  r.beta = 2.0;
  r.repetitions = 5;
  r.seed = 123456789012345ull;
  r.config_hash = 987654321098765ull;
  r.auc_mean = 0.8123456789;
  r.auc_hw = 0.0123456789;
  r.acc_mean = 0.7;
  r.acc_hw = 0.01;
  r.utility_mean = 0.9;
  r.utility_hw = 0.002;
  append_results_csv(path, {r});
  append_results_csv(path, {r});  // second call must not repeat the header
  std::vector<ExperimentRecord> loaded = load_results_csv(path);
  ASSERT_EQ(loaded.size(), 2u);
  for (const ExperimentRecord& l : loaded) {
    EXPECT_EQ(l.experiment, r.experiment);
    EXPECT_EQ(l.dataset, r.dataset);
    EXPECT_EQ(l.pretrain, r.pretrain);
    EXPECT_EQ(l.prompt, r.prompt);
    EXPECT_EQ(l.k, r.k);
    EXPECT_EQ(l.capability, r.capability);
    EXPECT_EQ(l.attack, r.attack);
    EXPECT_EQ(l.attacker, r.attacker);
    EXPECT_DOUBLE_EQ(l.beta, r.beta);
    EXPECT_EQ(l.repetitions, r.repetitions);
    EXPECT_EQ(l.seed, r.seed);
    EXPECT_EQ(l.config_hash, r.config_hash);
    EXPECT_NEAR(l.auc_mean, r.auc_mean, 1e-9);
    EXPECT_NEAR(l.auc_hw, r.auc_hw, 1e-9);
    EXPECT_NEAR(l.utility_mean, r.utility_mean, 1e-9);
  }
  std::string text = slurp(path);
  EXPECT_EQ(text.find(kResultsHeader), 0u);
  EXPECT_EQ(text.find(kResultsHeader, 1), std::string::npos);
}

TEST(Records, LoadRejectsCorruptFiles) {
  std::string dir = fresh_dir("csvbad");
  std::string wrong_header = dir + "/wrong.csv";
  {
    std::ofstream f(wrong_header);
    f << "a,b,c\n1,2,3\n";
  }
  EXPECT_THROW(load_results_csv(wrong_header), Error);
  std::string short_row = dir + "/short.csv";
  {
    std::ofstream f(short_row);
    f << kResultsHeader << "\n1,2,3\n";
  }
  EXPECT_THROW(load_results_csv(short_row), Error);
  EXPECT_THROW(load_results_csv(dir + "/absent.csv"), Error);
}

// --- run_experiment -----------------------------------------------------------------

TEST(RunExperiment, RecordLayoutAndAggregates) {
  ExperimentConfig cfg = tiny_config();
  std::string dir = fresh_dir("runA");
  std::vector<ExperimentRecord> records = run_experiment(cfg, dir);
  // capabilities x betas x attacks, capability-major.
  ASSERT_EQ(records.size(), 8u);
  int i = 0;
  for (const char* cap : {"Posterior", "Posterior", "Posterior", "Posterior", "Embedding",
                          "Embedding", "Embedding", "Embedding"})
    EXPECT_EQ(records[i++].capability, cap);
  for (int k = 0; k < 8; k += 4) {
    EXPECT_DOUBLE_EQ(records[k].beta, 0.0);
    EXPECT_DOUBLE_EQ(records[k + 1].beta, 0.0);
    EXPECT_DOUBLE_EQ(records[k + 2].beta, 1.0);
    EXPECT_DOUBLE_EQ(records[k + 3].beta, 1.0);
    EXPECT_EQ(records[k].attack, "AIA");
    EXPECT_EQ(records[k + 1].attack, "LIA");
  }
  for (const ExperimentRecord& r : records) {
    EXPECT_EQ(r.experiment, "tiny");
    EXPECT_EQ(r.dataset, "sbm-n120-c2");
    EXPECT_EQ(r.pretrain, "EdgePred");
    EXPECT_EQ(r.prompt, "GPF");
    EXPECT_EQ(r.k, "4");
    EXPECT_EQ(r.repetitions, 2);
    EXPECT_EQ(r.config_hash, experiment_config_hash(cfg));
    ASSERT_EQ(r.auc_raw.size(), 2u);
    ASSERT_EQ(r.utility_raw.size(), 2u);
    EXPECT_NEAR(r.auc_mean, mean_of(r.auc_raw), 1e-12);
    EXPECT_NEAR(r.acc_mean, mean_of(r.acc_raw), 1e-12);
    EXPECT_NEAR(r.utility_mean, mean_of(r.utility_raw), 1e-12);
  }
  // Noise can only hurt the released matrix's classification utility.
  EXPECT_LE(records[2].utility_mean, records[0].utility_mean + 1e-12);
  EXPECT_TRUE(fs::exists(fs::path(dir) / "results.csv"));
  EXPECT_TRUE(fs::exists(fs::path(dir) / "manifest.json"));
  EXPECT_TRUE(fs::exists(fs::path(dir) / "checkpoints" / "encoder_rep0.ckpt"));
  EXPECT_TRUE(fs::exists(fs::path(dir) / "checkpoints" / "encoder_rep1.ckpt"));
}

TEST(RunExperiment, RerunsAreByteIdentical) {
  ExperimentConfig cfg = tiny_config();
  std::string a = fresh_dir("runB1");
  std::string b = fresh_dir("runB2");
  run_experiment(cfg, a);
  run_experiment(cfg, b);
  EXPECT_EQ(slurp(a + "/results.csv"), slurp(b + "/results.csv"));
  EXPECT_EQ(slurp(a + "/checkpoints/encoder_rep0.ckpt"),
            slurp(b + "/checkpoints/encoder_rep0.ckpt"));
  EXPECT_EQ(slurp(a + "/checkpoints/encoder_rep1.ckpt"),
            slurp(b + "/checkpoints/encoder_rep1.ckpt"));
}

TEST(RunExperiment, ThreadedRunMatchesSerial) {
  ExperimentConfig cfg = tiny_config();
  std::string a = fresh_dir("runC1");
  std::string b = fresh_dir("runC2");
  run_experiment(cfg, a, 1);
  run_experiment(cfg, b, 2);
  EXPECT_EQ(slurp(a + "/results.csv"), slurp(b + "/results.csv"));
}

TEST(RunExperiment, ManifestDescribesRun) {
  ExperimentConfig cfg = tiny_config();
  std::string dir = fresh_dir("runD");
  run_experiment(cfg, dir);
  nlohmann::json m = nlohmann::json::parse(slurp(dir + "/manifest.json"));
  EXPECT_EQ(m.at("config_hash").get<std::string>(),
            std::to_string(experiment_config_hash(cfg)));
  EXPECT_EQ(m.at("repetitions").at("requested").get<int>(), 2);
  EXPECT_EQ(m.at("repetitions").at("succeeded").get<int>(), 2);
  ASSERT_EQ(m.at("reps").size(), 2u);
  EXPECT_TRUE(m.at("reps")[0].at("ok").get<bool>());
  EXPECT_EQ(m.at("reps")[1].at("seed").get<uint64_t>(), cfg.seed + 1);
  EXPECT_EQ(m.at("records").size(), 8u);
  // The encoder checkpoints must load and carry the experiment provenance.
  auto [enc, meta] = load_encoder(dir + "/checkpoints/encoder_rep0.ckpt");
  EXPECT_EQ(meta.method, "EdgePred");
  EXPECT_EQ(meta.config_hash, experiment_config_hash(cfg));
  EXPECT_EQ(enc.cfg.hidden, cfg.encoder.hidden);
  EXPECT_EQ(enc.cfg.layers, cfg.encoder.layers);
  EXPECT_TRUE(enc.frozen);
}

TEST(RunExperiment, SingleRepetitionHasZeroHalfwidth) {
  ExperimentConfig cfg = tiny_config();
  cfg.repetitions = 1;
  cfg.betas = {0.0};
  std::string dir = fresh_dir("runE");
  std::vector<ExperimentRecord> records = run_experiment(cfg, dir);
  ASSERT_EQ(records.size(), 4u);
  for (const ExperimentRecord& r : records) {
    EXPECT_EQ(r.repetitions, 1);
    EXPECT_DOUBLE_EQ(r.auc_hw, 0.0);
    EXPECT_DOUBLE_EQ(r.acc_hw, 0.0);
    EXPECT_DOUBLE_EQ(r.utility_hw, 0.0);
  }
}

TEST(RunExperiment, ReportsWhenEveryRepetitionFails) {
  ExperimentConfig cfg = tiny_config();
  cfg.shots.k = 500;  // more shots than any class can provide
  std::string dir = fresh_dir("runF");
  try {
    run_experiment(cfg, dir);
    FAIL() << "expected run_experiment to throw";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("all 2 repetitions failed"), std::string::npos);
  }
  EXPECT_THROW(run_experiment(cfg, dir, 0), Error);
}

// --- reports -----------------------------------------------------------------------

namespace {

ExperimentRecord table_record(const std::string& dataset, const std::string& capability,
                              const std::string& prompt, const std::string& attack,
                              const std::string& attacker, double beta, double auc_mean,
                              double auc_hw) {
  ExperimentRecord r;
  r.experiment = "tbl";
  r.dataset = dataset;
  r.pretrain = "GraphCL";
  r.prompt = prompt;
  r.k = "5";
  r.capability = capability;
  r.attack = attack;
  r.attacker = attacker;
  r.beta = beta;
  r.repetitions = 5;
  r.auc_mean = auc_mean;
  r.auc_hw = auc_hw;
  r.acc_mean = 0.5;
  r.utility_mean = 0.8;
  return r;
}

}  // namespace

TEST(EmitReport, AiaTableCellsAndPlaceholders) {
  std::string dir = fresh_dir("repA");
  std::vector<ExperimentRecord> records = {
      table_record("dsA", "Embedding", "GPF", "AIA", "MLP", 0.0, 0.9958, 0.0014),
      table_record("dsA", "Embedding", "NoPrompt", "AIA", "MLP", 0.0, 0.8, 0.02),
      table_record("dsA", "Embedding", "GPF", "AIA", "MLP", 1.0, 0.6, 0.01),  // defended: skip
      table_record("dsA", "Embedding", "GPF", "LIA", "MLP", 0.0, 0.7, 0.01),  // other task: skip
  };
  std::vector<std::string> files = emit_report(records, "aia-table", dir);
  ASSERT_EQ(files.size(), 2u);
  std::string md = slurp(files[0]);
  std::string csv = slurp(files[1]);
  EXPECT_NE(md.find("| dsA | Embedding | - | - | 99.58\xC2\xB1"
                    "0.14 | - | - | 80.00\xC2\xB1"
                    "2.00 |"),
            std::string::npos);
  EXPECT_NE(csv.find("dataset,capability,AllInOne,GPrompt,GPF,GPFplus,GPPT,NoPrompt"),
            std::string::npos);
  EXPECT_NE(csv.find("dsA,Embedding,-,-,99.58\xC2\xB1"
                     "0.14,-,-,80.00\xC2\xB1"
                     "2.00"),
            std::string::npos);
  // No undefended rows for the other task -> that table cannot be built.
  std::vector<ExperimentRecord> only_beta1 = {
      table_record("dsA", "Embedding", "GPF", "AIA", "MLP", 1.0, 0.6, 0.01)};
  EXPECT_THROW(emit_report(only_beta1, "aia-table", dir), Error);
}

TEST(EmitReport, LiaTableSplitsByAttackerWhenSeveral) {
  std::string dir = fresh_dir("repB");
  std::vector<ExperimentRecord> records = {
      table_record("dsA", "Embedding", "GPF", "LIA", "MLP", 0.0, 0.9, 0.01),
      table_record("dsA", "Embedding", "GPF", "LIA", "CosineThreshold", 0.0, 0.85, 0.01),
  };
  std::vector<std::string> files = emit_report(records, "lia-table", dir);
  std::string csv = slurp(files[1]);
  EXPECT_NE(csv.find("dataset,capability,attacker,"), std::string::npos);
  EXPECT_NE(csv.find("dsA,Embedding,CosineThreshold,-,-,85.00"), std::string::npos);
  EXPECT_NE(csv.find("dsA,Embedding,MLP,-,-,90.00"), std::string::npos);
}

TEST(EmitReport, BetaCurvesSortedLongForm) {
  std::string dir = fresh_dir("repC");
  std::vector<ExperimentRecord> records = {
      table_record("d", "Embedding", "GPF", "AIA", "MLP", 1.0, 0.9, 0.0),
      table_record("d", "Embedding", "GPF", "AIA", "MLP", 0.0, 0.9958, 0.0),
  };
  records[0].utility_mean = 0.7;
  records[1].utility_mean = 0.8;
  std::vector<std::string> files = emit_report(records, "beta-curves", dir);
  ASSERT_EQ(files.size(), 1u);
  EXPECT_EQ(slurp(files[0]),
            "beta,capability,attack,attacker,auc,utility\n"
            "0,Embedding,AIA,MLP,0.9958000000,0.8000000000\n"
            "1,Embedding,AIA,MLP,0.9000000000,0.7000000000\n");
  EXPECT_THROW(emit_report(records, "pie-chart", dir), Error);
  EXPECT_THROW(emit_report({}, "beta-curves", dir), Error);
}

TEST(EmitReport, ConnectivityMatrixCountsEdges) {
  Graph g;
  g.name = "tri";
  g.n = 3;
  g.d = 2;
  g.num_classes = 2;
  g.edges = {{0, 1}, {1, 2}};
  g.labels = {0, 1, 1};
  g.features_raw = Tensor2(3, 2);
  g.features_raw.at(0, 0) = 1.0;
  g.features_raw.at(1, 1) = -1.0;
  g.features_raw.at(2, 0) = 0.5;
  detail::finalize_graph(g);
  std::string dir = fresh_dir("repD");
  std::vector<std::string> files = emit_report(g, dir);
  ASSERT_EQ(files.size(), 2u);
  EXPECT_EQ(slurp(files[0]), "class,c0,c1\nc0,0,1\nc1,1,1\n");
  std::string md = slurp(files[1]);
  EXPECT_NE(md.find("| c0 | 0 (0.000) | 1 (0.500) |"), std::string::npos);
}

TEST(EmitReport, ProjectionWritesOneRowPerTestPair) {
  LiaPairSet pairs;
  pairs.test = {{0, 1, 1}, {0, 2, 0}, {1, 2, 1}, {2, 3, 0}};
  Rng rng(3);
  pairs.x_test = testutil::random_tensor(4, 3, rng);
  std::string dir = fresh_dir("repE");
  std::vector<std::string> files = emit_report(pairs, dir);
  ASSERT_EQ(files.size(), 1u);
  std::string csv = slurp(files[0]);
  EXPECT_EQ(csv.find("x,y,label\n"), 0u);
  int lines = 0;
  for (char c : csv) lines += c == '\n';
  EXPECT_EQ(lines, 5);
  EXPECT_THROW(emit_report(LiaPairSet{}, dir), Error);
}

// --- checkpoints --------------------------------------------------------------------

TEST(Checkpoint, BytesRoundTripPreservesTensorsAndMeta) {
  ParamSet ps;
  Rng rng(8);
  ps.add("a/w", testutil::random_tensor(2, 3, rng));
  ps.add("b/bias", testutil::random_tensor(1, 4, rng));
  CheckpointMeta meta;
  meta.method = "GraphCL";
  meta.config_hash = 0xDEADBEEFCAFEBABEull;
  meta.extra["note"] = "x";
  std::string bytes = checkpoint_bytes(ps, meta);
  auto [ps2, meta2] = load_checkpoint_bytes(bytes);
  EXPECT_EQ(meta2.method, "GraphCL");
  EXPECT_EQ(meta2.config_hash, 0xDEADBEEFCAFEBABEull);
  EXPECT_EQ(meta2.extra.at("note").get<std::string>(), "x");
  ASSERT_TRUE(ps2.has("a/w"));
  ASSERT_TRUE(ps2.has("b/bias"));
  EXPECT_DOUBLE_EQ(max_abs_diff(ps.value("a/w"), ps2.value("a/w")), 0.0);
  EXPECT_DOUBLE_EQ(max_abs_diff(ps.value("b/bias"), ps2.value("b/bias")), 0.0);
}

TEST(Checkpoint, RejectsCorruptBuffers) {
  ParamSet ps;
  Rng rng(9);
  ps.add("t", testutil::random_tensor(2, 2, rng));
  CheckpointMeta meta;
  meta.method = "DGI";
  std::string bytes = checkpoint_bytes(ps, meta);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(load_checkpoint_bytes(bad_magic), Error);
  EXPECT_THROW(load_checkpoint_bytes(bytes.substr(0, 20)), Error);   // mid-tensor
  EXPECT_THROW(load_checkpoint_bytes(bytes.substr(0, 5)), Error);    // shorter than magic
  std::string no_trailer(kCheckpointMagic, 8);
  detail::put_u32(no_trailer, 0);
  EXPECT_THROW(load_checkpoint_bytes(no_trailer), Error);
}

TEST(Checkpoint, EncoderFileRoundTripReproducesForward) {
  SbmSpec spec;
  spec.n = 40;
  spec.num_classes = 2;
  spec.p_in = 0.3;
  spec.p_out = 0.05;
  spec.d = 5;
  Graph g = generate_sbm(spec, 12);
  EncoderConfig ec;
  ec.layers = 2;
  ec.hidden = 6;
  EncoderParams enc = init_encoder(g.d, ec, 31);
  std::string dir = fresh_dir("ckptA");
  std::string path = dir + "/encoder.ckpt";
  save_encoder(path, enc, "SimGRACE", 777);
  auto [enc2, meta] = load_encoder(path);
  EXPECT_EQ(meta.method, "SimGRACE");
  EXPECT_EQ(meta.config_hash, 777u);
  EXPECT_EQ(enc2.cfg.layers, 2);
  EXPECT_EQ(enc2.cfg.hidden, 6);
  EXPECT_EQ(enc2.in_dim, g.d);
  Tensor2 e1 = gnn_forward(g, enc);
  Tensor2 e2 = gnn_forward(g, enc2);
  EXPECT_DOUBLE_EQ(max_abs_diff(e1, e2), 0.0);
  // A plain checkpoint without the encoder trailer is rejected by load_encoder.
  ParamSet ps;
  Rng rng(4);
  ps.add("t", testutil::random_tensor(1, 1, rng));
  CheckpointMeta plain;
  plain.method = "DGI";
  save_checkpoint(dir + "/plain.ckpt", ps, plain);
  EXPECT_THROW(load_encoder(dir + "/plain.ckpt"), Error);
}

TEST(Checkpoint, PromptStateRoundTripReproducesCapabilities) {
  SbmSpec spec;
  spec.n = 60;
  spec.num_classes = 2;
  spec.p_in = 0.3;
  spec.p_out = 0.05;
  spec.d = 5;
  Graph g = generate_sbm(spec, 21);
  Split split = split_target_shadow(g, SplitSpec{}, 5);
  EncoderConfig ec;
  ec.layers = 1;
  ec.hidden = 6;
  EncoderParams enc = init_encoder(g.d, ec, 31);
  enc.frozen = true;
  KShot ks;
  ks.k = 3;
  std::vector<int> shots = sample_k_shot(g, split, ks, 11);
  PromptConfig pc;
  pc.epochs = 8;
  pc.lr = 1e-2;
  PromptState st = prompt_tune(g, enc, shots, PromptMethod::kGpfPlus, pc, 17);
  std::string dir = fresh_dir("ckptB");
  std::string path = dir + "/state.ckpt";
  save_prompt_state(path, st, 4242);
  auto [st2, meta] = load_prompt_state(path);
  EXPECT_EQ(meta.config_hash, 4242u);
  EXPECT_EQ(st2.method, PromptMethod::kGpfPlus);
  EXPECT_EQ(st2.num_classes, st.num_classes);
  EXPECT_EQ(st2.train_nodes, st.train_nodes);
  for (Capability kind : {Capability::kPosterior, Capability::kEmbedding, Capability::kPrompt}) {
    CapabilityMatrix a = capability_extract(st, g, kind);
    CapabilityMatrix b = capability_extract(st2, g, kind);
    EXPECT_DOUBLE_EQ(max_abs_diff(a.m, b.m), 0.0) << capability_name(kind);
  }
  EXPECT_THROW(load_prompt_state(dir + "/nope.ckpt"), Error);
}
