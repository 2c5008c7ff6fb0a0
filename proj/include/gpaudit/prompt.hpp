#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gpaudit/pretrain.hpp"

namespace gpaudit {

enum class PromptMethod { kAllInOne, kGPrompt, kGpf, kGpfPlus, kGppt, kNoPrompt };

inline PromptMethod parse_prompt_method(const std::string& s) {
  if (s == "AllInOne") return PromptMethod::kAllInOne;
  if (s == "GPrompt") return PromptMethod::kGPrompt;
  if (s == "GPF") return PromptMethod::kGpf;
  if (s == "GPFplus") return PromptMethod::kGpfPlus;
  if (s == "GPPT") return PromptMethod::kGppt;
  if (s == "NoPrompt") return PromptMethod::kNoPrompt;
  fail("unknown prompt method '" + s +
       "' (expected AllInOne|GPrompt|GPF|GPFplus|GPPT|NoPrompt)");
}

inline const char* prompt_method_name(PromptMethod m) {
  switch (m) {
    case PromptMethod::kAllInOne: return "AllInOne";
    case PromptMethod::kGPrompt: return "GPrompt";
    case PromptMethod::kGpf: return "GPF";
    case PromptMethod::kGpfPlus: return "GPFplus";
    case PromptMethod::kGppt: return "GPPT";
    case PromptMethod::kNoPrompt: return "NoPrompt";
  }
  fail("unreachable");
}

struct PromptConfig {
  int epochs = 100;
  double lr = 1e-3;
  int num_tokens = 4;           // K for GPFplus / AllInOne
  double cross_threshold = 0.3;  // AllInOne token-node link rule
};

inline void validate(const PromptConfig& cfg) {
  check(cfg.epochs >= 0, "PromptConfig: epochs must be >= 0");
  check(std::isfinite(cfg.lr) && cfg.lr > 0.0, "PromptConfig: lr must be > 0");
  check(cfg.num_tokens >= 1, "PromptConfig: token count must be >= 1");
  check(std::isfinite(cfg.cross_threshold), "PromptConfig: non-finite cross threshold");
}

enum class Capability { kPosterior, kEmbedding, kPrompt };

inline Capability parse_capability(const std::string& s) {
  if (s == "Posterior") return Capability::kPosterior;
  if (s == "Embedding") return Capability::kEmbedding;
  if (s == "Prompt") return Capability::kPrompt;
  fail("unknown capability '" + s + "' (expected Posterior|Embedding|Prompt)");
}

inline const char* capability_name(Capability c) {
  switch (c) {
    case Capability::kPosterior: return "Posterior";
    case Capability::kEmbedding: return "Embedding";
    case Capability::kPrompt: return "Prompt";
  }
  fail("unreachable");
}

struct CapabilityMatrix {
  Capability kind = Capability::kPosterior;
  Tensor2 m;
  std::string method;
  uint64_t seed = 0;
  uint64_t config_hash = 0;
  double noise_beta = 0.0;  // 0 = clean release
};

struct PromptState {
  PromptMethod method = PromptMethod::kNoPrompt;
  PromptConfig cfg;
  EncoderParams enc;  // frozen copy
  ParamSet params;    // prompt parameters + downstream head
  int num_classes = 0;
  uint64_t seed = 0;
  std::vector<int> train_nodes;
  std::vector<double> loss_trace;
};

inline uint64_t prompt_config_hash(PromptMethod method, const PromptConfig& cfg) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s|%d|%.17g|%d|%.17g", prompt_method_name(method),
                cfg.epochs, cfg.lr, cfg.num_tokens, cfg.cross_threshold);
  return fnv1a64(buf);
}

// --- Pure prompt maps -------------------------------------------------------

inline Tensor2 apply_gpf(const Tensor2& x, const std::vector<double>& p) {
  check(static_cast<int>(p.size()) == x.cols, "apply_gpf: prompt length != feature dim");
  Tensor2 out = x;
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out.at(i, j) += p[j];
  return out;
}

struct GpfPlusOut {
  Tensor2 prompted;  // x_i + p_i
  Tensor2 prompts;   // per-node p_i rows
};

inline GpfPlusOut apply_gpf_plus(const Tensor2& x, const Tensor2& tokens, const Tensor2& proj) {
  int k = tokens.rows;
  check(k >= 1, "apply_gpf_plus: need at least one token");
  check(tokens.cols == x.cols && proj.rows == k && proj.cols == x.cols,
        "apply_gpf_plus: shape mismatch");
  GpfPlusOut out;
  out.prompted = x;
  out.prompts = Tensor2(x.rows, x.cols);
  std::vector<double> score(k);
  for (int i = 0; i < x.rows; ++i) {
    double mx = -1e300;
    for (int a = 0; a < k; ++a) {
      double s = 0.0;
      for (int j = 0; j < x.cols; ++j) s += x.at(i, j) * proj.at(a, j);
      score[a] = s;
      mx = std::max(mx, s);
    }
    double z = 0.0;
    for (int a = 0; a < k; ++a) {
      score[a] = std::exp(score[a] - mx);
      z += score[a];
    }
    for (int a = 0; a < k; ++a) {
      double alpha = score[a] / z;
      for (int j = 0; j < x.cols; ++j) out.prompts.at(i, j) += alpha * tokens.at(a, j);
    }
    for (int j = 0; j < x.cols; ++j) out.prompted.at(i, j) += out.prompts.at(i, j);
  }
  return out;
}

inline Tensor2 apply_gprompt(const Tensor2& e, const std::vector<double>& q) {
  check(static_cast<int>(q.size()) == e.cols, "apply_gprompt: vector length != embedding dim");
  Tensor2 out = e;
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out.at(i, j) *= q[j];
  return out;
}

inline Tensor2 gppt_predict(const Tensor2& e, const Tensor2& tokens,
                            const std::vector<double>& s) {
  check(static_cast<int>(s.size()) == e.cols, "gppt_predict: structure token length mismatch");
  check(tokens.cols == e.cols, "gppt_predict: task token dim mismatch");
  int c = tokens.rows;
  Tensor2 out(e.rows, c);
  for (int v = 0; v < e.rows; ++v) {
    double mx = -1e300;
    for (int t = 0; t < c; ++t) {
      double logit = 0.0;
      for (int j = 0; j < e.cols; ++j) logit += (e.at(v, j) + s[j]) * tokens.at(t, j);
      out.at(v, t) = logit;
      mx = std::max(mx, logit);
    }
    double z = 0.0;
    for (int t = 0; t < c; ++t) {
      out.at(v, t) = std::exp(out.at(v, t) - mx);
      z += out.at(v, t);
    }
    for (int t = 0; t < c; ++t) out.at(v, t) /= z;
  }
  return out;
}

// --- AllInOne subgraph template ---------------------------------------------

// 1-hop ego network of `center` (induced), plus the K prompt-token nodes in
// the last rows; token-token edges gated by sigmoid(inner) > 0.5, token-node
// edges by cosine similarity above the cross threshold.
struct EgoPrompt {
  Graph graph;
  std::vector<int> ego;  // original ids of the node rows
  int center_row = 0;
  int k = 0;
};

inline EgoPrompt allinone_insert(const Graph& g, const PromptState& st, int center) {
  check(center >= 0 && center < g.n, "allinone_insert: center out of range");
  check(st.method == PromptMethod::kAllInOne, "allinone_insert: state is not AllInOne");
  const Tensor2& tokens = st.params.value("aio/tokens");
  const Tensor2& inner = st.params.value("aio/inner");
  int k = tokens.rows;

  EgoPrompt ep;
  ep.k = k;
  ep.ego.push_back(center);
  for (int u : g.adj[center]) ep.ego.push_back(u);
  std::sort(ep.ego.begin(), ep.ego.end());
  int m = static_cast<int>(ep.ego.size());
  ep.center_row = static_cast<int>(
      std::lower_bound(ep.ego.begin(), ep.ego.end(), center) - ep.ego.begin());

  Graph& a = ep.graph;
  a.name = g.name + "#ego";
  a.n = m + k;
  a.d = g.d;
  a.num_classes = g.num_classes;
  a.features = Tensor2(a.n, a.d);
  a.labels.assign(a.n, 0);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < a.d; ++j) a.features.at(i, j) = g.features.at(ep.ego[i], j);
    a.labels[i] = g.labels[ep.ego[i]];
  }
  for (int t = 0; t < k; ++t)
    for (int j = 0; j < a.d; ++j) a.features.at(m + t, j) = tokens.at(t, j);
  a.features_raw = a.features;

  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      if (g.has_edge(ep.ego[i], ep.ego[j])) a.edges.emplace_back(i, j);
  for (int s = 0; s < k; ++s)
    for (int t = s + 1; t < k; ++t) {
      double gate = 1.0 / (1.0 + std::exp(-inner.at(s, t)));
      if (gate > 0.5) a.edges.emplace_back(m + s, m + t);
    }
  auto row_norm = [](const Tensor2& t, int r) {
    double n2 = 0.0;
    for (int j = 0; j < t.cols; ++j) n2 += t.at(r, j) * t.at(r, j);
    return std::sqrt(n2);
  };
  for (int t = 0; t < k; ++t) {
    double tn = row_norm(tokens, t);
    if (tn == 0.0) continue;
    for (int i = 0; i < m; ++i) {
      double fn = row_norm(g.features, ep.ego[i]);
      if (fn == 0.0) continue;
      double dot = 0.0;
      for (int j = 0; j < g.d; ++j) dot += tokens.at(t, j) * g.features.at(ep.ego[i], j);
      if (dot / (tn * fn) > st.cfg.cross_threshold) a.edges.emplace_back(i, m + t);
    }
  }
  std::sort(a.edges.begin(), a.edges.end());
  a.adj.assign(a.n, {});
  for (const auto& [u, v] : a.edges) {
    a.adj[u].push_back(v);
    a.adj[v].push_back(u);
  }
  for (auto& nb : a.adj) std::sort(nb.begin(), nb.end());
  return ep;
}

// --- State construction and tuning --------------------------------------------

inline PromptState init_prompt_state(const Graph& g, const EncoderParams& enc,
                                     PromptMethod method, const PromptConfig& cfg,
                                     uint64_t seed) {
  validate(cfg);
  check(enc.frozen, "prompt: encoder must be frozen");
  check(g.d == enc.in_dim, "prompt: graph feature dim does not match encoder input dim");
  PromptState st;
  st.method = method;
  st.cfg = cfg;
  st.enc = enc;
  st.num_classes = g.num_classes;
  st.seed = seed;
  int h = enc.cfg.hidden, d = enc.in_dim, c = g.num_classes, k = cfg.num_tokens;

  // Every tensor gets its own seed stream so adding or removing one prompt
  // parameter never shifts the initialization of another.
  auto add_random = [&](const std::string& name, int r, int cc) {
    Rng rng(derive_seed(seed, "prompt/" + name));
    st.params.add(name, glorot_uniform(r, cc, rng));
  };
  auto add_const = [&](const std::string& name, int r, int cc, double v) {
    Tensor2 t(r, cc);
    std::fill(t.v.begin(), t.v.end(), v);
    st.params.add(name, t);
  };

  switch (method) {
    case PromptMethod::kGpf:
      add_const("gpf/p", 1, d, 0.0);
      break;
    case PromptMethod::kGpfPlus:
      add_const("gpfp/tokens", k, d, 0.0);
      add_random("gpfp/proj", k, d);
      break;
    case PromptMethod::kGPrompt:
      add_const("gprompt/q", 1, h, 1.0);
      break;
    case PromptMethod::kGppt:
      add_random("gppt/tokens", c, h);
      add_const("gppt/struct", 1, h, 0.0);
      break;
    case PromptMethod::kAllInOne:
      add_random("aio/tokens", k, d);
      add_random("aio/inner", k, k);
      break;
    case PromptMethod::kNoPrompt:
      break;
  }
  if (method != PromptMethod::kGppt) {
    add_random("head/w", h, c);
    add_const("head/b", 1, c, 0.0);
  }
  return st;
}

namespace detail {

inline NodePtr head_probs(const ParamSet& ps, NodePtr feats) {
  return row_softmax(
      broadcast_add_row(matmul(std::move(feats), param(ps, "head/w")), param(ps, "head/b")));
}

inline Tensor2 take_rows(const Tensor2& t, const std::vector<int>& rows) {
  Tensor2 out(static_cast<int>(rows.size()), t.cols);
  for (size_t i = 0; i < rows.size(); ++i)
    for (int j = 0; j < t.cols; ++j) out.at(static_cast<int>(i), j) = t.at(rows[i], j);
  return out;
}

// Embeddings of the prompted input for the input-side methods (GPF, GPFplus).
inline NodePtr prompted_embedding_graph(const PromptState& st, const Graph& g) {
  NodePtr x = constant(g.features);
  NodePtr xp;
  if (st.method == PromptMethod::kGpf) {
    xp = broadcast_add_row(std::move(x), param(st.params, "gpf/p"));
  } else {
    NodePtr alpha = row_softmax(matmul(x, param(st.params, "gpfp/proj"), false, true));
    xp = add(std::move(x), matmul(std::move(alpha), param(st.params, "gpfp/tokens")));
  }
  return encoder_graph(std::move(xp),
                       constant(aggregation_matrix(g, st.enc.cfg.aggregator)),
                       encoder_weights_as_constants(st.enc.ps, st.enc.cfg.layers));
}

// Class probabilities for the given rows (all rows when rows == nullptr).
// base_emb carries the frozen-encoder output for the methods that prompt
// after encoding; it is unused for GPF / GPFplus.
inline NodePtr probs_graph(const PromptState& st, const Graph& g, const Tensor2* base_emb,
                           const std::vector<int>* rows) {
  switch (st.method) {
    case PromptMethod::kNoPrompt: {
      Tensor2 e = rows ? take_rows(*base_emb, *rows) : *base_emb;
      return head_probs(st.params, constant(std::move(e)));
    }
    case PromptMethod::kGPrompt: {
      Tensor2 e = rows ? take_rows(*base_emb, *rows) : *base_emb;
      NodePtr q = matmul(ones_node(e.rows, 1), param(st.params, "gprompt/q"));
      return head_probs(st.params, mul(constant(std::move(e)), std::move(q)));
    }
    case PromptMethod::kGppt: {
      Tensor2 e = rows ? take_rows(*base_emb, *rows) : *base_emb;
      NodePtr shifted = broadcast_add_row(constant(std::move(e)), param(st.params, "gppt/struct"));
      return row_softmax(matmul(std::move(shifted), param(st.params, "gppt/tokens"), false, true));
    }
    case PromptMethod::kGpf:
    case PromptMethod::kGpfPlus: {
      NodePtr e = prompted_embedding_graph(st, g);
      if (rows) e = select_rows(std::move(e), *rows);
      return head_probs(st.params, std::move(e));
    }
    case PromptMethod::kAllInOne:
      fail("probs_graph: AllInOne posteriors go through the per-center path");
  }
  fail("unreachable");
}

// Mean readout over the center's augmented ego subgraph, differentiable in
// the prompt tokens (structure is rebuilt from their current values).
inline NodePtr allinone_center_pooled(const PromptState& st, const Graph& g, int center) {
  EgoPrompt ep = allinone_insert(g, st, center);
  int m = static_cast<int>(ep.ego.size()), k = ep.k;
  Tensor2 sel_nodes(m + k, m), sel_tok(m + k, k);
  for (int i = 0; i < m; ++i) sel_nodes.at(i, i) = 1.0;
  for (int t = 0; t < k; ++t) sel_tok.at(m + t, t) = 1.0;
  NodePtr x_aug = add(matmul(constant(sel_nodes), constant(take_rows(g.features, ep.ego))),
                      matmul(constant(sel_tok), param(st.params, "aio/tokens")));
  NodePtr e = encoder_graph(std::move(x_aug),
                            constant(aggregation_matrix(ep.graph, st.enc.cfg.aggregator)),
                            encoder_weights_as_constants(st.enc.ps, st.enc.cfg.layers));
  return mean_rows(std::move(e));
}

inline NodePtr cross_entropy_from_probs(NodePtr probs, const std::vector<int>& labels) {
  int m = probs->val.rows, c = probs->val.cols;
  check(static_cast<int>(labels.size()) == m, "cross_entropy: label count mismatch");
  Tensor2 onehot(m, c);
  for (int i = 0; i < m; ++i) {
    check(labels[i] >= 0 && labels[i] < c, "cross_entropy: label out of range");
    onehot.at(i, labels[i]) = 1.0;
  }
  NodePtr picked = matmul(mul(std::move(probs), constant(onehot)), ones_node(c, 1));
  return scalar_scale(sum_all(log_elem(std::move(picked))), -1.0 / m);
}

}  // namespace detail

inline PromptState prompt_tune(const Graph& g, const EncoderParams& enc,
                               const std::vector<int>& shots, PromptMethod method,
                               const PromptConfig& cfg, uint64_t seed) {
  check(!shots.empty(), "prompt_tune: empty training node set");
  for (int v : shots)
    check(v >= 0 && v < g.n, "prompt_tune: training node out of range");
  PromptState st = init_prompt_state(g, enc, method, cfg, seed);
  st.train_nodes = shots;
  uint64_t frozen_before = params_bytes_hash(st.enc.ps);

  bool post_hoc = method == PromptMethod::kNoPrompt || method == PromptMethod::kGPrompt ||
                  method == PromptMethod::kGppt;
  Tensor2 base_emb;
  if (post_hoc) base_emb = gnn_forward(g, st.enc);

  std::vector<int> labels;
  labels.reserve(shots.size());
  for (int v : shots) labels.push_back(g.labels[v]);

  st.loss_trace.reserve(cfg.epochs);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    try {
      NodePtr loss;
      if (method == PromptMethod::kAllInOne) {
        NodePtr total;
        for (size_t i = 0; i < shots.size(); ++i) {
          NodePtr probs = detail::head_probs(
              st.params, detail::allinone_center_pooled(st, g, shots[i]));
          NodePtr ce = detail::cross_entropy_from_probs(std::move(probs), {labels[i]});
          total = total ? add(std::move(total), std::move(ce)) : std::move(ce);
        }
        loss = scalar_scale(std::move(total), 1.0 / static_cast<double>(shots.size()));
      } else {
        loss = detail::cross_entropy_from_probs(
            detail::probs_graph(st, g, post_hoc ? &base_emb : nullptr, &shots), labels);
      }
      double value = evaluate(loss).at(0, 0);
      check(std::isfinite(value), "non-finite loss");
      st.loss_trace.push_back(value);
      backward(loss, st.params);
      optimize_step(st.params, cfg.lr);
    } catch (const Error& e) {
      fail("prompt_tune epoch " + std::to_string(epoch) + " (" + prompt_method_name(method) +
           "): " + e.what());
    }
  }

  check(params_bytes_hash(st.enc.ps) == frozen_before,
        "prompt_tune: frozen encoder was modified");
  return st;
}

// --- Capability extraction ----------------------------------------------------

inline CapabilityMatrix posteriors(const PromptState& st, const Graph& g) {
  Tensor2 pm(g.n, st.num_classes);
  if (st.method == PromptMethod::kAllInOne) {
    for (int v = 0; v < g.n; ++v) {
      Tensor2 row = evaluate(
          detail::head_probs(st.params, detail::allinone_center_pooled(st, g, v)));
      for (int c = 0; c < st.num_classes; ++c) pm.at(v, c) = row.at(0, c);
    }
  } else {
    bool post_hoc = st.method == PromptMethod::kNoPrompt ||
                    st.method == PromptMethod::kGPrompt || st.method == PromptMethod::kGppt;
    Tensor2 base;
    if (post_hoc) base = gnn_forward(g, st.enc);
    pm = evaluate(detail::probs_graph(st, g, post_hoc ? &base : nullptr, nullptr));
  }
  for (int v = 0; v < g.n; ++v) {
    double s = 0.0;
    for (int c = 0; c < st.num_classes; ++c) {
      check(pm.at(v, c) >= 0.0, "posteriors: negative probability");
      s += pm.at(v, c);
    }
    check(std::fabs(s - 1.0) <= 1e-6, "posteriors: row " + std::to_string(v) +
                                          " sums to " + std::to_string(s));
  }
  return {Capability::kPosterior, std::move(pm), prompt_method_name(st.method), st.seed,
          prompt_config_hash(st.method, st.cfg)};
}

inline CapabilityMatrix capability_extract(const PromptState& st, const Graph& g,
                                           Capability kind) {
  if (kind == Capability::kPosterior) return posteriors(st, g);

  if (kind == Capability::kPrompt) {
    check(st.method == PromptMethod::kGpfPlus,
          std::string("unsupported capability 'Prompt' for method ") +
              prompt_method_name(st.method));
    GpfPlusOut out = apply_gpf_plus(g.features, st.params.value("gpfp/tokens"),
                                    st.params.value("gpfp/proj"));
    return {Capability::kPrompt, std::move(out.prompts), prompt_method_name(st.method),
            st.seed, prompt_config_hash(st.method, st.cfg)};
  }

  // Embedding: the matrix the downstream classifier actually consumes.
  Tensor2 e;
  switch (st.method) {
    case PromptMethod::kNoPrompt:
    case PromptMethod::kGppt:
      e = gnn_forward(g, st.enc);
      break;
    case PromptMethod::kGpf: {
      const Tensor2& p = st.params.value("gpf/p");
      Tensor2 prompted = apply_gpf(g.features, std::vector<double>(p.v.begin(), p.v.end()));
      e = gnn_forward(g, st.enc, &prompted);
      break;
    }
    case PromptMethod::kGpfPlus: {
      GpfPlusOut out = apply_gpf_plus(g.features, st.params.value("gpfp/tokens"),
                                      st.params.value("gpfp/proj"));
      e = gnn_forward(g, st.enc, &out.prompted);
      break;
    }
    case PromptMethod::kGPrompt: {
      const Tensor2& q = st.params.value("gprompt/q");
      e = apply_gprompt(gnn_forward(g, st.enc), std::vector<double>(q.v.begin(), q.v.end()));
      break;
    }
    case PromptMethod::kAllInOne: {
      e = Tensor2(g.n, st.enc.cfg.hidden);
      for (int v = 0; v < g.n; ++v) {
        Tensor2 row = evaluate(detail::allinone_center_pooled(st, g, v));
        for (int j = 0; j < e.cols; ++j) e.at(v, j) = row.at(0, j);
      }
      break;
    }
  }
  check(all_finite(e), "capability_extract: non-finite embedding");
  return {Capability::kEmbedding, std::move(e), prompt_method_name(st.method), st.seed,
          prompt_config_hash(st.method, st.cfg)};
}

// Class probabilities as the downstream consumer derives them from a released
// capability matrix. Posterior rows are consumed as-is (they may be noisy and
// need not sum to one); embeddings run through the classification head (the
// token scorer for GPPT); prompt vectors re-enter the frozen encoder added to
// the node features.
inline Tensor2 posteriors_from_capability(const PromptState& st, const Graph& g,
                                          const CapabilityMatrix& cap) {
  check(cap.m.rows == g.n, "posteriors_from_capability: row count != node count");
  switch (cap.kind) {
    case Capability::kPosterior:
      return cap.m;
    case Capability::kEmbedding: {
      if (st.method == PromptMethod::kGppt) {
        NodePtr shifted =
            broadcast_add_row(constant(cap.m), param(st.params, "gppt/struct"));
        return evaluate(
            row_softmax(matmul(std::move(shifted), param(st.params, "gppt/tokens"), false, true)));
      }
      return evaluate(detail::head_probs(st.params, constant(cap.m)));
    }
    case Capability::kPrompt: {
      check(st.method == PromptMethod::kGpfPlus,
            "posteriors_from_capability: prompt matrix requires GPFplus");
      check(cap.m.cols == g.features.cols,
            "posteriors_from_capability: prompt width != feature width");
      Tensor2 xp = g.features;
      for (size_t i = 0; i < xp.v.size(); ++i) xp.v[i] += cap.m.v[i];
      Tensor2 e = gnn_forward(g, st.enc, &xp);
      return evaluate(detail::head_probs(st.params, constant(std::move(e))));
    }
  }
  fail("unreachable");
}

}  // namespace gpaudit
