#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gpaudit/metrics.hpp"
#include "gpaudit/prompt.hpp"

namespace gpaudit {

enum class AttackerKind { kMlp, kRandomForest, kGnn, kCosine };

inline AttackerKind parse_attacker_kind(const std::string& s) {
  if (s == "MLP") return AttackerKind::kMlp;
  if (s == "RandomForest") return AttackerKind::kRandomForest;
  if (s == "GnnAttacker") return AttackerKind::kGnn;
  if (s == "CosineThreshold") return AttackerKind::kCosine;
  fail("unknown attacker '" + s +
       "' (expected MLP|RandomForest|GnnAttacker|CosineThreshold)");
}

inline const char* attacker_kind_name(AttackerKind k) {
  switch (k) {
    case AttackerKind::kMlp: return "MLP";
    case AttackerKind::kRandomForest: return "RandomForest";
    case AttackerKind::kGnn: return "GnnAttacker";
    case AttackerKind::kCosine: return "CosineThreshold";
  }
  fail("unreachable");
}

enum class AttackTask { kAia, kLia };

inline AttackTask parse_attack_task(const std::string& s) {
  if (s == "AIA") return AttackTask::kAia;
  if (s == "LIA") return AttackTask::kLia;
  fail("unknown attack type '" + s + "' (expected AIA|LIA)");
}

inline const char* attack_task_name(AttackTask t) {
  return t == AttackTask::kAia ? "AIA" : "LIA";
}

struct AttackerModelSpec {
  AttackerKind kind = AttackerKind::kMlp;
  std::vector<int> mlp_hidden;  // empty = task default: AIA (128,64), LIA (64,32)
  int mlp_epochs = 100;
  double mlp_lr = 1e-3;
  int mlp_batch = 64;
  int rf_trees = 100;
  int rf_max_depth = 8;
  bool rf_bootstrap = true;
  int gnn_hidden = 64;
  double cosine_threshold = 2.0;  // outside (-1,1) = choose on train pairs
};

inline void validate(const AttackerModelSpec& s) {
  for (int w : s.mlp_hidden) check(w >= 1, "AttackerModelSpec: MLP hidden width must be >= 1");
  check(s.mlp_epochs >= 0, "AttackerModelSpec: MLP epochs must be >= 0");
  check(std::isfinite(s.mlp_lr) && s.mlp_lr > 0.0, "AttackerModelSpec: MLP lr must be > 0");
  check(s.mlp_batch >= 1, "AttackerModelSpec: MLP batch must be >= 1");
  check(s.rf_trees >= 1, "AttackerModelSpec: forest needs at least one tree");
  check(s.rf_max_depth >= 1, "AttackerModelSpec: forest depth must be >= 1");
  check(s.gnn_hidden >= 1, "AttackerModelSpec: GNN hidden width must be >= 1");
  check(std::isfinite(s.cosine_threshold), "AttackerModelSpec: non-finite cosine threshold");
}

struct AttackResult {
  double auc = 0.0;
  double acc = 0.0;
  std::string capability;
  std::string attacker;
  uint64_t seed = 0;
  double runtime_sec = 0.0;
};

inline void validate(const AttackResult& r) {
  check(r.auc >= 0.0 && r.auc <= 1.0, "AttackResult: AUC out of [0,1]");
  check(r.acc >= 0.0 && r.acc <= 1.0, "AttackResult: ACC out of [0,1]");
}

// --- Datasets ---------------------------------------------------------------

namespace detail {

inline bool sorted_contains(const std::vector<int>& xs, int v) {
  return std::binary_search(xs.begin(), xs.end(), v);
}

// Induced subgraph on the (sorted) shadow set, with capability rows as node
// features. The attacker's entire world: target-set rows and edges never
// enter it.
inline Graph induce_shadow_graph(const Graph& g, const std::vector<int>& shadow,
                                 const Tensor2& cap_rows) {
  check(cap_rows.rows == g.n, "shadow graph: capability row count != node count");
  Graph s;
  s.name = g.name + "#shadow";
  s.n = static_cast<int>(shadow.size());
  s.d = cap_rows.cols;
  s.num_classes = g.num_classes;
  s.features = Tensor2(s.n, s.d);
  s.labels.resize(s.n);
  if (!g.sensitive.empty()) s.sensitive.resize(s.n);
  std::vector<int> local(g.n, -1);
  for (int i = 0; i < s.n; ++i) {
    int v = shadow[i];
    check(v >= 0 && v < g.n, "shadow graph: node id out of range");
    check(i == 0 || shadow[i - 1] < v, "shadow graph: shadow set must be sorted unique");
    local[v] = i;
    for (int j = 0; j < s.d; ++j) s.features.at(i, j) = cap_rows.at(v, j);
    s.labels[i] = g.labels[v];
    if (!g.sensitive.empty()) s.sensitive[i] = g.sensitive[v];
  }
  s.features_raw = s.features;
  for (const auto& [u, v] : g.edges)
    if (local[u] >= 0 && local[v] >= 0) s.edges.emplace_back(local[u], local[v]);
  s.adj.assign(s.n, {});
  for (const auto& [u, v] : s.edges) {
    s.adj[u].push_back(v);
    s.adj[v].push_back(u);
  }
  for (auto& nb : s.adj) std::sort(nb.begin(), nb.end());
  return s;
}

}  // namespace detail

struct AiaDataset {
  Tensor2 x_train, x_test;
  std::vector<int> y_train, y_test;
  Graph shadow;                   // induced shadow subgraph, features = capability rows
  std::vector<int> shadow_nodes;  // original node ids, row i of shadow = shadow_nodes[i]
  std::vector<int> train_rows, test_rows;  // shadow-local indices
  std::string capability;
};

inline AiaDataset build_aia_dataset(const CapabilityMatrix& cap, const Graph& g,
                                    const Split& split) {
  check(!g.sensitive.empty(), "build_aia_dataset: graph has no sensitive attribute");
  check(cap.m.rows == g.n, "build_aia_dataset: capability rows != node count");
  AiaDataset d;
  d.capability = capability_name(cap.kind);
  d.shadow_nodes = split.shadow;
  d.shadow = detail::induce_shadow_graph(g, split.shadow, cap.m);

  std::vector<int> local(g.n, -1);
  for (size_t i = 0; i < split.shadow.size(); ++i) local[split.shadow[i]] = static_cast<int>(i);
  auto fill = [&](const std::vector<int>& nodes, Tensor2& x, std::vector<int>& y,
                  std::vector<int>& rows) {
    check(!nodes.empty(), "build_aia_dataset: empty attack split");
    x = Tensor2(static_cast<int>(nodes.size()), cap.m.cols);
    for (size_t i = 0; i < nodes.size(); ++i) {
      int v = nodes[i];
      check(detail::sorted_contains(split.shadow, v),
            "build_aia_dataset: node " + std::to_string(v) + " is outside the shadow set");
      check(!detail::sorted_contains(split.target, v),
            "build_aia_dataset: target-set row leaked into the attack data");
      for (int j = 0; j < cap.m.cols; ++j) x.at(static_cast<int>(i), j) = cap.m.at(v, j);
      y.push_back(g.sensitive[v]);
      rows.push_back(local[v]);
    }
  };
  fill(split.attack_train, d.x_train, d.y_train, d.train_rows);
  fill(split.attack_test, d.x_test, d.y_test, d.test_rows);
  auto both_values = [](const std::vector<int>& y) {
    bool z = false, o = false;
    for (int b : y) (b ? o : z) = true;
    return z && o;
  };
  check(both_values(d.y_train), "build_aia_dataset: sensitive attribute single-valued in train split");
  check(both_values(d.y_test), "build_aia_dataset: sensitive attribute single-valued in test split");
  return d;
}

inline std::vector<double> pair_features(const std::vector<double>& fu,
                                         const std::vector<double>& fv) {
  check(fu.size() == fv.size(), "pair_features: length mismatch");
  std::vector<double> out;
  out.reserve(2 * fu.size());
  for (size_t i = 0; i < fu.size(); ++i) out.push_back(fu[i] * fv[i]);
  for (size_t i = 0; i < fu.size(); ++i) out.push_back(std::fabs(fu[i] - fv[i]));
  return out;
}

struct LiaPair {
  int u = 0, v = 0;  // shadow-local endpoints
  int label = 0;
};

struct LiaPairSet {
  std::vector<LiaPair> train, test;
  Tensor2 x_train, x_test;  // pair_features rows
  Graph shadow;
  std::vector<int> shadow_nodes;
  std::string capability;
};

inline LiaPairSet build_lia_pairs(const Graph& g, const CapabilityMatrix& cap,
                                  const Split& split, uint64_t seed,
                                  double train_frac = 0.7) {
  check(cap.m.rows == g.n, "build_lia_pairs: capability rows != node count");
  check(train_frac > 0.0 && train_frac < 1.0, "build_lia_pairs: train fraction out of (0,1)");
  LiaPairSet ps;
  ps.capability = capability_name(cap.kind);
  ps.shadow_nodes = split.shadow;
  ps.shadow = detail::induce_shadow_graph(g, split.shadow, cap.m);
  const Graph& s = ps.shadow;

  std::vector<LiaPair> pos;
  for (const auto& [u, v] : s.edges) pos.push_back({u, v, 1});
  check(!pos.empty(), "build_lia_pairs: shadow subgraph has no edges");
  long long all_pairs = static_cast<long long>(s.n) * (s.n - 1) / 2;
  check(static_cast<long long>(pos.size()) <= all_pairs - static_cast<long long>(pos.size()),
        "build_lia_pairs: not enough shadow non-edges to balance the edge set");

  Rng rng(derive_seed(seed, "lia/pairs"));
  std::set<std::pair<int, int>> seen;
  std::vector<LiaPair> neg;
  while (neg.size() < pos.size()) {
    int u = rng.uniform_int(s.n);
    int v = rng.uniform_int(s.n);
    if (u == v) continue;
    if (u > v) std::swap(u, v);
    if (s.has_edge(u, v)) continue;
    if (!seen.insert({u, v}).second) continue;
    neg.push_back({u, v, 0});
  }

  // Per-class 70/30 split keeps both halves exactly balanced.
  rng.shuffle(pos);
  rng.shuffle(neg);
  size_t n_train = static_cast<size_t>(train_frac * static_cast<double>(pos.size()));
  check(n_train >= 1 && n_train < pos.size(),
        "build_lia_pairs: degenerate pair split (need train and test pairs)");
  for (size_t i = 0; i < pos.size(); ++i) {
    (i < n_train ? ps.train : ps.test).push_back(pos[i]);
    (i < n_train ? ps.train : ps.test).push_back(neg[i]);
  }
  rng.shuffle(ps.train);
  rng.shuffle(ps.test);

  auto featurize = [&](const std::vector<LiaPair>& pairs) {
    Tensor2 x(static_cast<int>(pairs.size()), 2 * s.d);
    for (size_t i = 0; i < pairs.size(); ++i) {
      const double* fu = s.features.row(pairs[i].u);
      const double* fv = s.features.row(pairs[i].v);
      auto f = pair_features(std::vector<double>(fu, fu + s.d),
                             std::vector<double>(fv, fv + s.d));
      for (int j = 0; j < 2 * s.d; ++j) x.at(static_cast<int>(i), j) = f[j];
    }
    return x;
  };
  ps.x_train = featurize(ps.train);
  ps.x_test = featurize(ps.test);
  return ps;
}

// --- Attacker models ----------------------------------------------------------

// Binary scorer: fully connected ReLU stack ending in one sigmoid output.
// Inputs are standardized per feature with training-set statistics so the
// attacker behaves the same regardless of capability scaling.
struct MlpModel {
  std::vector<int> widths;  // in, hidden..., 1
  std::vector<double> f_mean, f_scale;
  ParamSet ps;

  static std::string wname(int l) { return "mlp/w" + std::to_string(l); }
  static std::string bname(int l) { return "mlp/b" + std::to_string(l); }

  Tensor2 standardize(const Tensor2& x) const {
    check(x.cols == static_cast<int>(f_mean.size()), "mlp: feature width mismatch");
    Tensor2 out = x;
    for (int i = 0; i < out.rows; ++i) {
      double* r = out.row(i);
      for (int j = 0; j < out.cols; ++j) r[j] = (r[j] - f_mean[j]) / f_scale[j];
    }
    return out;
  }

  void fit(const Tensor2& x_raw, const std::vector<int>& y, const std::vector<int>& hidden,
           int epochs, double lr, int batch, uint64_t seed) {
    check(x_raw.rows > 0, "mlp: empty training set");
    check(static_cast<int>(y.size()) == x_raw.rows, "mlp: label count mismatch");
    f_mean.assign(x_raw.cols, 0.0);
    f_scale.assign(x_raw.cols, 1.0);
    for (int i = 0; i < x_raw.rows; ++i)
      for (int j = 0; j < x_raw.cols; ++j) f_mean[j] += x_raw.at(i, j);
    for (double& m : f_mean) m /= x_raw.rows;
    for (int j = 0; j < x_raw.cols; ++j) {
      double ss = 0.0;
      for (int i = 0; i < x_raw.rows; ++i) {
        double d = x_raw.at(i, j) - f_mean[j];
        ss += d * d;
      }
      double sd = std::sqrt(ss / x_raw.rows);
      f_scale[j] = sd > 1e-12 ? sd : 1.0;
    }
    Tensor2 x = standardize(x_raw);
    widths.assign(1, x.cols);
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(1);
    ps = ParamSet();
    Rng init(derive_seed(seed, "mlp/init"));
    for (size_t l = 0; l + 1 < widths.size(); ++l) {
      ps.add(wname(static_cast<int>(l)), glorot_uniform(widths[l], widths[l + 1], init));
      ps.add(bname(static_cast<int>(l)), Tensor2(1, widths[l + 1]));
    }
    std::vector<int> order(x.rows);
    for (int i = 0; i < x.rows; ++i) order[i] = i;
    for (int epoch = 0; epoch < epochs; ++epoch) {
      Rng shuf(derive_seed(seed, "mlp/epoch/" + std::to_string(epoch)));
      shuf.shuffle(order);
      for (int start = 0; start < x.rows; start += batch) {
        int stop = std::min(x.rows, start + batch);
        Tensor2 xb(stop - start, x.cols);
        std::vector<int> yb(stop - start);
        for (int i = start; i < stop; ++i) {
          for (int j = 0; j < x.cols; ++j) xb.at(i - start, j) = x.at(order[i], j);
          yb[i - start] = y[order[i]];
        }
        NodePtr loss = batch_loss(xb, yb);
        double value = evaluate(loss).at(0, 0);
        check(std::isfinite(value),
              "mlp: non-finite loss at epoch " + std::to_string(epoch));
        backward(loss, ps);
        optimize_step(ps, lr);
      }
    }
  }

  NodePtr logits_graph(const Tensor2& x) const {
    NodePtr h = constant(x);
    for (size_t l = 0; l + 1 < widths.size(); ++l) {
      h = broadcast_add_row(matmul(std::move(h), param(ps, wname(static_cast<int>(l)))),
                            param(ps, bname(static_cast<int>(l))));
      if (l + 2 < widths.size()) h = relu(std::move(h));
    }
    return h;
  }

  NodePtr batch_loss(const Tensor2& xb, const std::vector<int>& yb) const {
    // softmax([s, 0]) columns are [sigmoid(s), sigmoid(-s)]; class index 0
    // therefore encodes label 1.
    NodePtr s = logits_graph(xb);
    NodePtr probs = row_softmax(concat_cols(std::move(s), detail::zeros_node(xb.rows, 1)));
    std::vector<int> cls(yb.size());
    for (size_t i = 0; i < yb.size(); ++i) cls[i] = yb[i] ? 0 : 1;
    return detail::cross_entropy_from_probs(std::move(probs), cls);
  }

  std::vector<double> score(const Tensor2& x_raw) const {
    Tensor2 x = standardize(x_raw);
    Tensor2 s = evaluate(logits_graph(x));
    std::vector<double> out(x.rows);
    for (int i = 0; i < x.rows; ++i) out[i] = 1.0 / (1.0 + std::exp(-s.at(i, 0)));
    return out;
  }
};

// CART-style axis splits, Gini impurity, optional bootstrap; probability =
// mean of per-tree leaf frequencies for class 1.
struct ForestModel {
  struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1, right = -1;
    double p1 = 0.0;
  };
  struct Tree {
    std::vector<TreeNode> nodes;
  };
  std::vector<Tree> trees;

  static double gini(int c1, int n) {
    if (n == 0) return 0.0;
    double p = static_cast<double>(c1) / n;
    return 2.0 * p * (1.0 - p);
  }

  int grow(Tree& t, const Tensor2& x, const std::vector<int>& y, std::vector<int>& idx,
           int depth, int max_depth) {
    int node_id = static_cast<int>(t.nodes.size());
    t.nodes.push_back({});
    int n = static_cast<int>(idx.size());
    int c1 = 0;
    for (int i : idx) c1 += y[i];
    t.nodes[node_id].p1 = static_cast<double>(c1) / n;
    if (depth >= max_depth || c1 == 0 || c1 == n || n < 2) return node_id;

    double parent = gini(c1, n);
    double best_gain = 0.0;
    int best_f = -1;
    double best_thr = 0.0;
    std::vector<std::pair<double, int>> vals(n);
    for (int f = 0; f < x.cols; ++f) {
      for (int i = 0; i < n; ++i) vals[i] = {x.at(idx[i], f), y[idx[i]]};
      std::sort(vals.begin(), vals.end());
      int left1 = 0;
      for (int i = 0; i + 1 < n; ++i) {
        left1 += vals[i].second;
        if (vals[i].first == vals[i + 1].first) continue;
        int nl = i + 1, nr = n - nl;
        double child = (nl * gini(left1, nl) + nr * gini(c1 - left1, nr)) / n;
        double gain = parent - child;
        if (gain > best_gain + 1e-15) {
          best_gain = gain;
          best_f = f;
          best_thr = 0.5 * (vals[i].first + vals[i + 1].first);
        }
      }
    }
    if (best_f < 0) return node_id;

    std::vector<int> li, ri;
    for (int i : idx) (x.at(i, best_f) <= best_thr ? li : ri).push_back(i);
    t.nodes[node_id].feature = best_f;
    t.nodes[node_id].threshold = best_thr;
    int l = grow(t, x, y, li, depth + 1, max_depth);
    int r = grow(t, x, y, ri, depth + 1, max_depth);
    t.nodes[node_id].left = l;
    t.nodes[node_id].right = r;
    return node_id;
  }

  void fit(const Tensor2& x, const std::vector<int>& y, int num_trees, int max_depth,
           bool bootstrap, uint64_t seed) {
    check(x.rows > 0, "forest: empty training set");
    check(static_cast<int>(y.size()) == x.rows, "forest: label count mismatch");
    trees.assign(num_trees, {});
    for (int t = 0; t < num_trees; ++t) {
      Rng rng(derive_seed(seed, "forest/tree/" + std::to_string(t)));
      std::vector<int> idx(x.rows);
      if (bootstrap)
        for (int i = 0; i < x.rows; ++i) idx[i] = rng.uniform_int(x.rows);
      else
        for (int i = 0; i < x.rows; ++i) idx[i] = i;
      grow(trees[t], x, y, idx, 0, max_depth);
    }
  }

  double score_row(const Tree& t, const double* row) const {
    int cur = 0;
    while (t.nodes[cur].feature >= 0)
      cur = row[t.nodes[cur].feature] <= t.nodes[cur].threshold ? t.nodes[cur].left
                                                                : t.nodes[cur].right;
    return t.nodes[cur].p1;
  }

  std::vector<double> score(const Tensor2& x) const {
    check(!trees.empty(), "forest: not fitted");
    std::vector<double> out(x.rows, 0.0);
    for (int i = 0; i < x.rows; ++i) {
      double s = 0.0;
      for (const auto& t : trees) s += score_row(t, x.row(i));
      out[i] = s / static_cast<double>(trees.size());
    }
    return out;
  }
};

// Two-layer mean-aggregation GNN over the shadow-induced subgraph. For AIA it
// ends in a per-node sigmoid score; for LIA pair scores are sigmoids of
// endpoint-embedding dot products.
struct GnnAttackerModel {
  EncoderConfig cfg;
  ParamSet ps;
  Tensor2 agg;     // shadow aggregation matrix
  Tensor2 feats;   // shadow capability rows
  bool node_head = false;

  void init(const Graph& shadow, int hidden, bool with_head, uint64_t seed) {
    cfg.layers = 2;
    cfg.hidden = hidden;
    cfg.aggregator = Aggregator::kMean;
    node_head = with_head;
    agg = aggregation_matrix(shadow, cfg.aggregator);
    feats = shadow.features;
    Rng init_rng(derive_seed(seed, "gnn-attack/init"));
    int in = shadow.d;
    for (int l = 0; l < cfg.layers; ++l) {
      ps.add(enc_pname(l, "w_self"), glorot_uniform(in, hidden, init_rng));
      ps.add(enc_pname(l, "w_neigh"), glorot_uniform(in, hidden, init_rng));
      ps.add(enc_pname(l, "bias"), Tensor2(1, hidden));
      in = hidden;
    }
    if (with_head) {
      ps.add("out/w", glorot_uniform(hidden, 1, init_rng));
      ps.add("out/b", Tensor2(1, 1));
    }
  }

  NodePtr embeddings_graph() const {
    return encoder_graph(constant(feats), constant(agg),
                         encoder_weights_as_params(ps, cfg.layers));
  }

  NodePtr node_logits_graph() const {
    return broadcast_add_row(matmul(embeddings_graph(), param(ps, "out/w")),
                             param(ps, "out/b"));
  }

  void fit_nodes(const std::vector<int>& rows, const std::vector<int>& y, int epochs,
                 double lr) {
    for (int epoch = 0; epoch < epochs; ++epoch) {
      NodePtr s = select_rows(node_logits_graph(), rows);
      NodePtr probs = row_softmax(
          concat_cols(std::move(s), detail::zeros_node(static_cast<int>(rows.size()), 1)));
      std::vector<int> cls(y.size());
      for (size_t i = 0; i < y.size(); ++i) cls[i] = y[i] ? 0 : 1;
      NodePtr loss = detail::cross_entropy_from_probs(std::move(probs), cls);
      double value = evaluate(loss).at(0, 0);
      check(std::isfinite(value),
            "gnn attacker: non-finite loss at epoch " + std::to_string(epoch));
      backward(loss, ps);
      optimize_step(ps, lr);
    }
  }

  void fit_pairs(const std::vector<LiaPair>& pairs, int epochs, double lr) {
    std::vector<int> us, vs;
    for (const auto& p : pairs) {
      us.push_back(p.u);
      vs.push_back(p.v);
    }
    for (int epoch = 0; epoch < epochs; ++epoch) {
      NodePtr z = embeddings_graph();
      NodePtr dots = detail::row_dots(select_rows(z, us), select_rows(z, vs));
      NodePtr probs = row_softmax(
          concat_cols(std::move(dots), detail::zeros_node(static_cast<int>(pairs.size()), 1)));
      std::vector<int> cls(pairs.size());
      for (size_t i = 0; i < pairs.size(); ++i) cls[i] = pairs[i].label ? 0 : 1;
      NodePtr loss = detail::cross_entropy_from_probs(std::move(probs), cls);
      double value = evaluate(loss).at(0, 0);
      check(std::isfinite(value),
            "gnn attacker: non-finite loss at epoch " + std::to_string(epoch));
      backward(loss, ps);
      optimize_step(ps, lr);
    }
  }

  std::vector<double> score_nodes(const std::vector<int>& rows) const {
    Tensor2 s = evaluate(node_logits_graph());
    std::vector<double> out(rows.size());
    for (size_t i = 0; i < rows.size(); ++i)
      out[i] = 1.0 / (1.0 + std::exp(-s.at(rows[i], 0)));
    return out;
  }

  std::vector<double> score_pairs(const std::vector<LiaPair>& pairs) const {
    Tensor2 z = evaluate(embeddings_graph());
    std::vector<double> out(pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) {
      double dot = 0.0;
      for (int j = 0; j < z.cols; ++j) dot += z.at(pairs[i].u, j) * z.at(pairs[i].v, j);
      out[i] = 1.0 / (1.0 + std::exp(-dot));
    }
    return out;
  }
};

// --- Fitted attacker + drivers -------------------------------------------------

struct Attacker {
  AttackerKind kind = AttackerKind::kMlp;
  MlpModel mlp;
  ForestModel forest;
  GnnAttackerModel gnn;
  double threshold = 0.5;  // decision threshold for ACC
  uint64_t seed = 0;
  double fit_seconds = 0.0;
};

namespace detail {

inline double pair_cosine_score(const Tensor2& rows, int u, int v) {
  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (int j = 0; j < rows.cols; ++j) {
    uu += rows.at(u, j) * rows.at(u, j);
    vv += rows.at(v, j) * rows.at(v, j);
    uv += rows.at(u, j) * rows.at(v, j);
  }
  if (uu == 0.0 || vv == 0.0) return 0.5;  // zero row: similarity treated as 0
  return (uv / (std::sqrt(uu) * std::sqrt(vv)) + 1.0) / 2.0;
}

// Threshold maximizing train accuracy; scanned over score midpoints, lowest
// winner kept for determinism.
inline double choose_threshold(const std::vector<double>& scores,
                               const std::vector<int>& labels) {
  std::vector<double> s = scores;
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  std::vector<double> cands;
  cands.push_back(s.front() - 1e-9);
  for (size_t i = 0; i + 1 < s.size(); ++i) cands.push_back(0.5 * (s[i] + s[i + 1]));
  cands.push_back(s.back() + 1e-9);
  double best_thr = cands.front();
  int best_hits = -1;
  for (double thr : cands) {
    int hits = 0;
    for (size_t i = 0; i < scores.size(); ++i)
      if ((scores[i] > thr ? 1 : 0) == labels[i]) ++hits;
    if (hits > best_hits) {
      best_hits = hits;
      best_thr = thr;
    }
  }
  return best_thr;
}

inline double accuracy_at(const std::vector<double>& scores, const std::vector<int>& labels,
                          double thr) {
  int hits = 0;
  for (size_t i = 0; i < scores.size(); ++i)
    if ((scores[i] > thr ? 1 : 0) == labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

inline std::vector<int> labels_of(const std::vector<LiaPair>& pairs) {
  std::vector<int> y;
  y.reserve(pairs.size());
  for (const auto& p : pairs) y.push_back(p.label);
  return y;
}

}  // namespace detail

inline Attacker train_attacker(const AttackerModelSpec& spec, const AiaDataset& data,
                               uint64_t seed) {
  validate(spec);
  check(!data.y_train.empty(), "train_attacker: empty train split");
  Attacker a;
  a.kind = spec.kind;
  a.seed = seed;
  auto t0 = std::chrono::steady_clock::now();
  switch (spec.kind) {
    case AttackerKind::kMlp: {
      std::vector<int> hidden = spec.mlp_hidden.empty() ? std::vector<int>{128, 64}
                                                        : spec.mlp_hidden;
      a.mlp.fit(data.x_train, data.y_train, hidden, spec.mlp_epochs, spec.mlp_lr,
                spec.mlp_batch, seed);
      break;
    }
    case AttackerKind::kRandomForest:
      a.forest.fit(data.x_train, data.y_train, spec.rf_trees, spec.rf_max_depth,
                   spec.rf_bootstrap, seed);
      break;
    case AttackerKind::kGnn:
      a.gnn.init(data.shadow, spec.gnn_hidden, true, seed);
      a.gnn.fit_nodes(data.train_rows, data.y_train, spec.mlp_epochs, spec.mlp_lr);
      break;
    case AttackerKind::kCosine:
      fail("train_attacker: CosineThreshold applies to link inference only");
  }
  a.fit_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return a;
}

inline Attacker train_attacker(const AttackerModelSpec& spec, const LiaPairSet& pairs,
                               uint64_t seed) {
  validate(spec);
  check(!pairs.train.empty(), "train_attacker: empty train split");
  Attacker a;
  a.kind = spec.kind;
  a.seed = seed;
  auto t0 = std::chrono::steady_clock::now();
  switch (spec.kind) {
    case AttackerKind::kMlp: {
      std::vector<int> hidden = spec.mlp_hidden.empty() ? std::vector<int>{64, 32}
                                                        : spec.mlp_hidden;
      a.mlp.fit(pairs.x_train, detail::labels_of(pairs.train), hidden, spec.mlp_epochs,
                spec.mlp_lr, spec.mlp_batch, seed);
      break;
    }
    case AttackerKind::kRandomForest:
      a.forest.fit(pairs.x_train, detail::labels_of(pairs.train), spec.rf_trees,
                   spec.rf_max_depth, spec.rf_bootstrap, seed);
      break;
    case AttackerKind::kGnn:
      a.gnn.init(pairs.shadow, spec.gnn_hidden, false, seed);
      a.gnn.fit_pairs(pairs.train, spec.mlp_epochs, spec.mlp_lr);
      break;
    case AttackerKind::kCosine: {
      if (spec.cosine_threshold > -1.0 && spec.cosine_threshold < 1.0) {
        a.threshold = (spec.cosine_threshold + 1.0) / 2.0;
      } else {
        std::vector<double> scores(pairs.train.size());
        for (size_t i = 0; i < pairs.train.size(); ++i)
          scores[i] = detail::pair_cosine_score(pairs.shadow.features, pairs.train[i].u,
                                                pairs.train[i].v);
        a.threshold = detail::choose_threshold(scores, detail::labels_of(pairs.train));
      }
      break;
    }
  }
  a.fit_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return a;
}

inline AttackResult run_aia(const Attacker& attacker, const AiaDataset& data) {
  auto t0 = std::chrono::steady_clock::now();
  std::vector<double> scores;
  switch (attacker.kind) {
    case AttackerKind::kMlp: scores = attacker.mlp.score(data.x_test); break;
    case AttackerKind::kRandomForest: scores = attacker.forest.score(data.x_test); break;
    case AttackerKind::kGnn: scores = attacker.gnn.score_nodes(data.test_rows); break;
    case AttackerKind::kCosine: fail("run_aia: CosineThreshold applies to link inference only");
  }
  AttackResult r;
  r.auc = auc(scores, data.y_test);
  r.acc = detail::accuracy_at(scores, data.y_test, attacker.threshold);
  r.capability = data.capability;
  r.attacker = attacker_kind_name(attacker.kind);
  r.seed = attacker.seed;
  r.runtime_sec = attacker.fit_seconds +
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  validate(r);
  return r;
}

inline AttackResult run_lia(const Attacker& attacker, const LiaPairSet& pairs) {
  auto t0 = std::chrono::steady_clock::now();
  std::vector<double> scores;
  switch (attacker.kind) {
    case AttackerKind::kMlp: scores = attacker.mlp.score(pairs.x_test); break;
    case AttackerKind::kRandomForest: scores = attacker.forest.score(pairs.x_test); break;
    case AttackerKind::kGnn: scores = attacker.gnn.score_pairs(pairs.test); break;
    case AttackerKind::kCosine: {
      scores.resize(pairs.test.size());
      for (size_t i = 0; i < pairs.test.size(); ++i)
        scores[i] = detail::pair_cosine_score(pairs.shadow.features, pairs.test[i].u,
                                              pairs.test[i].v);
      break;
    }
  }
  AttackResult r;
  r.auc = auc(scores, detail::labels_of(pairs.test));
  r.acc = detail::accuracy_at(scores, detail::labels_of(pairs.test), attacker.threshold);
  r.capability = pairs.capability;
  r.attacker = attacker_kind_name(attacker.kind);
  r.seed = attacker.seed;
  r.runtime_sec = attacker.fit_seconds +
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  validate(r);
  return r;
}

// Cosine link attack as a single step: threshold from the train pairs, metrics
// from the test pairs.
inline AttackResult lia_cosine(const LiaPairSet& pairs, uint64_t seed = 0) {
  AttackerModelSpec spec;
  spec.kind = AttackerKind::kCosine;
  return run_lia(train_attacker(spec, pairs, seed), pairs);
}

// End-to-end conveniences used by the harness.
inline AttackResult attack_aia(const AttackerModelSpec& spec, const CapabilityMatrix& cap,
                               const Graph& g, const Split& split, uint64_t seed) {
  AiaDataset data = build_aia_dataset(cap, g, split);
  return run_aia(train_attacker(spec, data, seed), data);
}

inline AttackResult attack_lia(const AttackerModelSpec& spec, const CapabilityMatrix& cap,
                               const Graph& g, const Split& split, uint64_t seed) {
  LiaPairSet pairs = build_lia_pairs(g, cap, split, seed);
  return run_lia(train_attacker(spec, pairs, seed), pairs);
}

}  // namespace gpaudit
