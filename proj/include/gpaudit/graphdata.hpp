#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gpaudit/error.hpp"
#include "gpaudit/numcore.hpp"
#include "gpaudit/rng.hpp"

namespace gpaudit {

// Undirected attributed graph. Features are kept twice: raw as loaded or
// generated (sensitive-attribute definitions refer to raw columns) and
// per-column standardized (what every model consumes).
struct Graph {
  std::string name;
  int n = 0;
  int d = 0;
  int num_classes = 0;
  std::vector<std::pair<int, int>> edges;  // u < v, sorted, unique
  std::vector<std::vector<int>> adj;       // sorted neighbor lists
  Tensor2 features_raw;
  Tensor2 features;  // standardized
  std::vector<int> labels;
  std::vector<int> sensitive;  // empty when absent

  bool has_sensitive() const { return !sensitive.empty(); }

  bool has_edge(int u, int v) const {
    if (u == v) return false;
    const auto& a = adj[u];
    return std::binary_search(a.begin(), a.end(), v);
  }

  int degree(int v) const { return static_cast<int>(adj[v].size()); }
};

namespace detail {

inline void standardize_columns(const Tensor2& raw, Tensor2& out) {
  out = Tensor2(raw.rows, raw.cols);
  for (int c = 0; c < raw.cols; ++c) {
    double mean = 0.0;
    for (int r = 0; r < raw.rows; ++r) mean += raw.at(r, c);
    mean /= raw.rows;
    double ss = 0.0;
    for (int r = 0; r < raw.rows; ++r) {
      double dx = raw.at(r, c) - mean;
      ss += dx * dx;
    }
    double sd = std::sqrt(ss / raw.rows);
    if (sd == 0.0) continue;  // constant column stays zero
    for (int r = 0; r < raw.rows; ++r) out.at(r, c) = (raw.at(r, c) - mean) / sd;
  }
}

inline void finalize_graph(Graph& g) {
  check(g.n >= 1, g.name + ": graph needs at least one node");
  check(g.d >= 1, g.name + ": graph needs at least one feature");
  check(g.num_classes >= 1, g.name + ": graph needs at least one class");
  check(g.features_raw.rows == g.n && g.features_raw.cols == g.d,
        g.name + ": feature matrix shape mismatch");
  check(static_cast<int>(g.labels.size()) == g.n, g.name + ": label count mismatch");
  check(all_finite(g.features_raw), g.name + ": non-finite feature");
  for (int y : g.labels)
    check(y >= 0 && y < g.num_classes, g.name + ": label out of range");
  if (!g.sensitive.empty()) {
    check(static_cast<int>(g.sensitive.size()) == g.n, g.name + ": sensitive count mismatch");
    for (int s : g.sensitive) check(s == 0 || s == 1, g.name + ": sensitive bits must be 0/1");
  }

  std::set<std::pair<int, int>> seen;
  for (auto [u, v] : g.edges) {
    check(u >= 0 && u < g.n && v >= 0 && v < g.n, g.name + ": edge endpoint out of range");
    check(u != v, g.name + ": self-loop rejected");
    check(u < v, g.name + ": edges must satisfy u < v (undirected, one row per edge)");
    check(seen.insert({u, v}).second, g.name + ": duplicate edge rejected");
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.adj.assign(g.n, {});
  for (auto [u, v] : g.edges) {
    g.adj[u].push_back(v);
    g.adj[v].push_back(u);
  }
  for (auto& a : g.adj) std::sort(a.begin(), a.end());
  standardize_columns(g.features_raw, g.features);
}

inline std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream f(p);
  check(f.good(), "cannot open " + p.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

inline double parse_double(const std::string& s, const std::string& where) {
  check(!s.empty(), where + ": empty number");
  size_t pos = 0;
  double x = 0;
  try {
    x = std::stod(s, &pos);
  } catch (const std::exception&) {
    fail(where + ": bad number '" + s + "'");
  }
  check(pos == s.size(), where + ": trailing characters in '" + s + "'");
  return x;
}

inline long parse_int(const std::string& s, const std::string& where) {
  check(!s.empty(), where + ": empty integer");
  size_t pos = 0;
  long x = 0;
  try {
    x = std::stol(s, &pos);
  } catch (const std::exception&) {
    fail(where + ": bad integer '" + s + "'");
  }
  check(pos == s.size(), where + ": trailing characters in '" + s + "'");
  return x;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

// Directory bundle: meta.json, edges.csv, features.csv, labels.csv and an
// optional sensitive.csv. Loading validates everything it can.
inline Graph load_graph(const std::string& dir) {
  namespace fs = std::filesystem;
  fs::path root(dir);
  check(fs::exists(root / "meta.json"), "load_graph: missing meta.json in " + dir);
  std::ifstream mf(root / "meta.json");
  nlohmann::json meta;
  try {
    mf >> meta;
  } catch (const std::exception& e) {
    fail("load_graph: bad meta.json: " + std::string(e.what()));
  }
  for (const char* key : {"name", "n", "d", "num_classes", "has_sensitive"})
    check(meta.contains(key), std::string("load_graph: meta.json missing '") + key + "'");

  Graph g;
  g.name = meta["name"].get<std::string>();
  g.n = meta["n"].get<int>();
  g.d = meta["d"].get<int>();
  g.num_classes = meta["num_classes"].get<int>();
  bool has_sensitive = meta["has_sensitive"].get<bool>();

  auto edge_lines = detail::read_lines(root / "edges.csv");
  for (size_t i = 0; i < edge_lines.size(); ++i) {
    auto parts = detail::split_csv(edge_lines[i]);
    check(parts.size() == 2, "edges.csv line " + std::to_string(i + 1) + ": want 'u,v'");
    int u = static_cast<int>(detail::parse_int(parts[0], "edges.csv"));
    int v = static_cast<int>(detail::parse_int(parts[1], "edges.csv"));
    g.edges.push_back({u, v});
  }

  auto feat_lines = detail::read_lines(root / "features.csv");
  check(static_cast<int>(feat_lines.size()) == g.n,
        "features.csv: got " + std::to_string(feat_lines.size()) + " rows, meta says " +
            std::to_string(g.n));
  g.features_raw = Tensor2(g.n, g.d);
  for (int r = 0; r < g.n; ++r) {
    auto parts = detail::split_csv(feat_lines[r]);
    check(static_cast<int>(parts.size()) == g.d,
          "features.csv row " + std::to_string(r + 1) + ": got " +
              std::to_string(parts.size()) + " columns, meta says " + std::to_string(g.d));
    for (int c = 0; c < g.d; ++c)
      g.features_raw.at(r, c) = detail::parse_double(parts[c], "features.csv");
  }

  auto label_lines = detail::read_lines(root / "labels.csv");
  check(static_cast<int>(label_lines.size()) == g.n, "labels.csv: row count mismatch");
  for (const auto& l : label_lines)
    g.labels.push_back(static_cast<int>(detail::parse_int(l, "labels.csv")));

  if (has_sensitive) {
    auto s_lines = detail::read_lines(root / "sensitive.csv");
    check(static_cast<int>(s_lines.size()) == g.n, "sensitive.csv: row count mismatch");
    for (const auto& l : s_lines)
      g.sensitive.push_back(static_cast<int>(detail::parse_int(l, "sensitive.csv")));
  }

  detail::finalize_graph(g);
  return g;
}

inline void save_graph(const Graph& g, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json meta{{"name", g.name},
                      {"n", g.n},
                      {"d", g.d},
                      {"num_classes", g.num_classes},
                      {"has_sensitive", g.has_sensitive()}};
  std::ofstream(fs::path(dir) / "meta.json") << meta.dump(2) << "\n";

  std::ofstream ef(fs::path(dir) / "edges.csv");
  for (auto [u, v] : g.edges) ef << u << "," << v << "\n";

  std::ofstream ff(fs::path(dir) / "features.csv");
  char buf[32];
  for (int r = 0; r < g.n; ++r) {
    for (int c = 0; c < g.d; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", g.features_raw.at(r, c));
      ff << (c ? "," : "") << buf;
    }
    ff << "\n";
  }

  std::ofstream lf(fs::path(dir) / "labels.csv");
  for (int y : g.labels) lf << y << "\n";

  if (g.has_sensitive()) {
    std::ofstream sf(fs::path(dir) / "sensitive.csv");
    for (int s : g.sensitive) sf << s << "\n";
  }
}

// Binarize a raw feature column at its median (strictly-above gets 1).
inline std::vector<int> derive_sensitive(const Graph& g, int column) {
  check(column >= 0 && column < g.d, "derive_sensitive: column out of range");
  std::vector<double> col(g.n);
  for (int r = 0; r < g.n; ++r) col[r] = g.features_raw.at(r, column);
  std::vector<double> sorted = col;
  std::sort(sorted.begin(), sorted.end());
  double median = g.n % 2 ? sorted[g.n / 2]
                          : 0.5 * (sorted[g.n / 2 - 1] + sorted[g.n / 2]);
  std::vector<int> bits(g.n);
  for (int r = 0; r < g.n; ++r) bits[r] = col[r] > median ? 1 : 0;
  return bits;
}

// ---------------------------------------------------------------------------
// Stochastic block model

struct SbmSpec {
  int n = 1200;
  int num_classes = 4;
  double p_in = 0.04;
  double p_out = 0.002;
  int d = 32;
  double feature_signal = 1.0;   // per-coordinate mean magnitude
  double sensitive_corr = 0.9;   // probability the sensitive bit keeps the derived bit
  int sensitive_col = 0;         // raw column the sensitive bit derives from; the
                                 // sign pattern gives column 0 the same mean in every
                                 // class, so the default bit carries no label signal
};

namespace detail {

// Walsh-style sign pattern, orthogonal-ish rows across classes.
inline double class_sign(int cls, int col) {
  return __builtin_popcount(static_cast<unsigned>(cls) & static_cast<unsigned>(col)) % 2 == 0
             ? 1.0
             : -1.0;
}

}  // namespace detail

// Block-probability edges, class-patterned Gaussian features, and a sensitive
// bit that follows a feature-derived bit with probability sensitive_corr.
inline Graph generate_sbm(const SbmSpec& spec, uint64_t seed) {
  check(spec.n >= 1, "generate_sbm: n must be positive");
  check(spec.num_classes >= 1 && spec.num_classes <= spec.n,
        "generate_sbm: class count out of range");
  check(spec.p_in >= 0.0 && spec.p_in <= 1.0, "generate_sbm: p_in outside [0,1]");
  check(spec.p_out >= 0.0 && spec.p_out <= 1.0, "generate_sbm: p_out outside [0,1]");
  check(spec.d >= 1, "generate_sbm: d must be positive");
  check(spec.feature_signal >= 0.0, "generate_sbm: feature_signal must be >= 0");
  check(spec.sensitive_corr >= 0.0 && spec.sensitive_corr <= 1.0,
        "generate_sbm: sensitive_corr outside [0,1]");
  check(spec.sensitive_col >= 0 && spec.sensitive_col < spec.d,
        "generate_sbm: sensitive_col out of range");

  Graph g;
  {
    char buf[96];
    std::snprintf(buf, sizeof buf, "sbm_n%d_c%d_pin%g_pout%g", spec.n, spec.num_classes,
                  spec.p_in, spec.p_out);
    g.name = buf;
  }
  g.n = spec.n;
  g.d = spec.d;
  g.num_classes = spec.num_classes;
  g.labels.resize(g.n);
  for (int v = 0; v < g.n; ++v) g.labels[v] = v % spec.num_classes;

  Rng edge_rng(derive_seed(seed, "sbm/edges"));
  for (int u = 0; u < g.n; ++u)
    for (int v = u + 1; v < g.n; ++v) {
      double p = g.labels[u] == g.labels[v] ? spec.p_in : spec.p_out;
      if (edge_rng.bernoulli(p)) g.edges.push_back({u, v});
    }

  Rng feat_rng(derive_seed(seed, "sbm/features"));
  g.features_raw = Tensor2(g.n, g.d);
  for (int v = 0; v < g.n; ++v)
    for (int c = 0; c < g.d; ++c)
      g.features_raw.at(v, c) =
          spec.feature_signal * detail::class_sign(g.labels[v], c) + feat_rng.gaussian();

  detail::finalize_graph(g);

  Rng sens_rng(derive_seed(seed, "sbm/sensitive"));
  std::vector<int> derived = derive_sensitive(g, spec.sensitive_col);
  g.sensitive.resize(g.n);
  for (int v = 0; v < g.n; ++v)
    g.sensitive[v] = sens_rng.bernoulli(spec.sensitive_corr) ? derived[v] : 1 - derived[v];
  return g;
}

// ---------------------------------------------------------------------------
// Structure statistics

inline double edge_homophily(const Graph& g) {
  check(!g.edges.empty(), "edge_homophily: graph has no edges");
  size_t same = 0;
  for (auto [u, v] : g.edges) same += g.labels[u] == g.labels[v];
  return static_cast<double>(same) / static_cast<double>(g.edges.size());
}

// Row a holds the fraction of class-a edge endpoints whose opposite endpoint
// lies in class b. Rows of classes with no incident edges stay zero.
inline Tensor2 class_connectivity(const Graph& g) {
  Tensor2 counts(g.num_classes, g.num_classes);
  std::vector<double> totals(g.num_classes, 0.0);
  for (auto [u, v] : g.edges) {
    int a = g.labels[u], b = g.labels[v];
    counts.at(a, b) += 1.0;
    counts.at(b, a) += 1.0;
    totals[a] += 1.0;
    totals[b] += 1.0;
  }
  for (int a = 0; a < g.num_classes; ++a)
    if (totals[a] > 0.0)
      for (int b = 0; b < g.num_classes; ++b) counts.at(a, b) /= totals[a];
  return counts;
}

// ---------------------------------------------------------------------------
// Splits

struct SplitSpec {
  double target_frac = 0.2;
  double attack_train_frac = 0.7;  // within the shadow set
  int min_per_class = 5;           // inside the target set
};

struct Split {
  std::vector<int> target;
  std::vector<int> shadow;
  std::vector<int> attack_train;  // subset of shadow
  std::vector<int> attack_test;   // subset of shadow
};

// Target gets floor(target_frac * n) nodes with at least min_per_class of
// every class; the shadow remainder is split attack_train_frac / rest.
inline Split split_target_shadow(const Graph& g, const SplitSpec& spec, uint64_t seed) {
  check(spec.target_frac > 0.0 && spec.target_frac < 1.0,
        "split_target_shadow: target_frac outside (0,1)");
  check(spec.attack_train_frac > 0.0 && spec.attack_train_frac < 1.0,
        "split_target_shadow: attack_train_frac outside (0,1)");
  check(spec.min_per_class >= 0, "split_target_shadow: negative min_per_class");

  int target_size = static_cast<int>(spec.target_frac * g.n);
  check(target_size >= spec.min_per_class * g.num_classes,
        "split_target_shadow: target too small for min_per_class in every class");
  check(target_size < g.n, "split_target_shadow: empty shadow set");

  Rng rng(derive_seed(seed, "split"));
  std::vector<std::vector<int>> by_class(g.num_classes);
  for (int v = 0; v < g.n; ++v) by_class[g.labels[v]].push_back(v);

  Split out;
  std::vector<int> rest;
  for (int c = 0; c < g.num_classes; ++c) {
    auto& nodes = by_class[c];
    check(static_cast<int>(nodes.size()) >= spec.min_per_class,
          "split_target_shadow: class " + std::to_string(c) + " has " +
              std::to_string(nodes.size()) + " nodes, needs " +
              std::to_string(spec.min_per_class));
    rng.shuffle(nodes);
    for (int i = 0; i < spec.min_per_class; ++i) out.target.push_back(nodes[i]);
    for (size_t i = spec.min_per_class; i < nodes.size(); ++i) rest.push_back(nodes[i]);
  }
  rng.shuffle(rest);
  int fill = target_size - static_cast<int>(out.target.size());
  for (int i = 0; i < fill; ++i) out.target.push_back(rest[i]);
  for (size_t i = fill; i < rest.size(); ++i) out.shadow.push_back(rest[i]);

  std::sort(out.target.begin(), out.target.end());
  std::sort(out.shadow.begin(), out.shadow.end());

  std::vector<int> pool = out.shadow;
  rng.shuffle(pool);
  int train_size = static_cast<int>(spec.attack_train_frac * pool.size());
  check(train_size >= 1 && train_size < static_cast<int>(pool.size()),
        "split_target_shadow: shadow too small to split for the attacker");
  out.attack_train.assign(pool.begin(), pool.begin() + train_size);
  out.attack_test.assign(pool.begin() + train_size, pool.end());
  std::sort(out.attack_train.begin(), out.attack_train.end());
  std::sort(out.attack_test.begin(), out.attack_test.end());
  return out;
}

struct KShot {
  int k = 5;
  bool full = false;

  static KShot full_supervision() { return {0, true}; }
};

// k labeled nodes per class drawn from the target set (all of it when full).
inline std::vector<int> sample_k_shot(const Graph& g, const Split& split, const KShot& shot,
                                      uint64_t seed) {
  if (shot.full) return split.target;
  check(shot.k >= 1, "sample_k_shot: k must be positive");
  Rng rng(derive_seed(seed, "kshot"));
  std::vector<std::vector<int>> by_class(g.num_classes);
  for (int v : split.target) by_class[g.labels[v]].push_back(v);
  std::vector<int> out;
  for (int c = 0; c < g.num_classes; ++c) {
    auto& nodes = by_class[c];
    check(static_cast<int>(nodes.size()) >= shot.k,
          "sample_k_shot: class " + std::to_string(c) + " has " +
              std::to_string(nodes.size()) + " target nodes, needs " + std::to_string(shot.k));
    rng.shuffle(nodes);
    for (int i = 0; i < shot.k; ++i) out.push_back(nodes[i]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace gpaudit
