#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gpaudit/encoder.hpp"
#include "gpaudit/graphdata.hpp"
#include "gpaudit/numcore.hpp"
#include "gpaudit/rng.hpp"

namespace gpaudit {

enum class PretrainMethod { kDgi, kEdgePred, kGraphMae, kGraphCl, kSimGrace };

inline PretrainMethod parse_pretrain_method(const std::string& s) {
  if (s == "DGI") return PretrainMethod::kDgi;
  if (s == "EdgePred") return PretrainMethod::kEdgePred;
  if (s == "GraphMAE") return PretrainMethod::kGraphMae;
  if (s == "GraphCL") return PretrainMethod::kGraphCl;
  if (s == "SimGRACE") return PretrainMethod::kSimGrace;
  fail("unknown pretrain method '" + s +
       "' (expected DGI|EdgePred|GraphMAE|GraphCL|SimGRACE)");
}

inline const char* pretrain_method_name(PretrainMethod m) {
  switch (m) {
    case PretrainMethod::kDgi: return "DGI";
    case PretrainMethod::kEdgePred: return "EdgePred";
    case PretrainMethod::kGraphMae: return "GraphMAE";
    case PretrainMethod::kGraphCl: return "GraphCL";
    case PretrainMethod::kSimGrace: return "SimGRACE";
  }
  fail("unreachable");
}

struct AugmentSpec {
  double edge_drop = 0.0;
  double feature_mask = 0.0;
  double node_drop = 0.0;
};

inline void validate(const AugmentSpec& spec) {
  auto rate_ok = [](double r) { return std::isfinite(r) && r >= 0.0 && r <= 1.0; };
  check(rate_ok(spec.edge_drop), "AugmentSpec: edge-drop rate out of [0,1]");
  check(rate_ok(spec.feature_mask), "AugmentSpec: feature-mask rate out of [0,1]");
  check(rate_ok(spec.node_drop), "AugmentSpec: node-drop rate out of [0,1]");
}

inline bool any_rate_positive(const AugmentSpec& spec) {
  return spec.edge_drop > 0.0 || spec.feature_mask > 0.0 || spec.node_drop > 0.0;
}

// Augmented view plus the surviving original node ids (kept[new_id] = old_id),
// so two views of the same graph can be aligned after node drops.
struct Augmented {
  Graph graph;
  std::vector<int> kept;
};

inline Augmented augment(const Graph& g, const AugmentSpec& spec, uint64_t seed) {
  validate(spec);
  Rng rng(derive_seed(seed, "augment"));

  std::vector<std::pair<int, int>> surviving;
  surviving.reserve(g.edges.size());
  for (const auto& e : g.edges)
    if (!(rng.uniform() < spec.edge_drop)) surviving.push_back(e);

  Tensor2 raw = g.features_raw;
  Tensor2 feat = g.features;
  for (int v = 0; v < g.n; ++v)
    for (int c = 0; c < g.d; ++c)
      if (rng.uniform() < spec.feature_mask) {
        raw.at(v, c) = 0.0;
        feat.at(v, c) = 0.0;
      }

  Augmented out;
  std::vector<int> remap(g.n, -1);
  for (int v = 0; v < g.n; ++v)
    if (!(rng.uniform() < spec.node_drop)) {
      remap[v] = static_cast<int>(out.kept.size());
      out.kept.push_back(v);
    }
  check(!out.kept.empty(), "augment: all nodes dropped");

  Graph& a = out.graph;
  a.name = g.name;
  a.n = static_cast<int>(out.kept.size());
  a.d = g.d;
  a.num_classes = g.num_classes;
  a.features_raw = Tensor2(a.n, a.d);
  a.features = Tensor2(a.n, a.d);
  a.labels.resize(a.n);
  if (!g.sensitive.empty()) a.sensitive.resize(a.n);
  for (int i = 0; i < a.n; ++i) {
    int v = out.kept[i];
    for (int c = 0; c < a.d; ++c) {
      a.features_raw.at(i, c) = raw.at(v, c);
      a.features.at(i, c) = feat.at(v, c);
    }
    a.labels[i] = g.labels[v];
    if (!g.sensitive.empty()) a.sensitive[i] = g.sensitive[v];
  }
  // remap is increasing over survivors, so u<v order and edge sorting survive.
  for (const auto& [u, v] : surviving)
    if (remap[u] >= 0 && remap[v] >= 0) a.edges.emplace_back(remap[u], remap[v]);
  a.adj.assign(a.n, {});
  for (const auto& [u, v] : a.edges) {
    a.adj[u].push_back(v);
    a.adj[v].push_back(u);
  }
  for (auto& nb : a.adj) std::sort(nb.begin(), nb.end());
  return out;
}

struct PretrainConfig {
  PretrainMethod method = PretrainMethod::kGraphCl;
  int epochs = 100;
  double lr = 1e-3;
  double temperature = 0.5;
  int sce_gamma = 2;
  double mask_rate = 0.5;
  double perturb_scale = 0.1;
  int neg_multiplier = 1;
  AugmentSpec augment{0.2, 0.2, 0.0};
  uint64_t seed = 0;
};

inline void validate(const PretrainConfig& cfg) {
  check(cfg.epochs >= 0, "PretrainConfig: epochs must be >= 0");
  check(std::isfinite(cfg.lr) && cfg.lr > 0.0, "PretrainConfig: lr must be > 0");
  check(std::isfinite(cfg.temperature) && cfg.temperature > 0.0,
        "PretrainConfig: temperature must be > 0");
  check(cfg.sce_gamma >= 1, "PretrainConfig: SCE exponent must be >= 1");
  check(cfg.mask_rate > 0.0 && cfg.mask_rate < 1.0,
        "PretrainConfig: mask rate must be in (0,1)");
  check(std::isfinite(cfg.perturb_scale) && cfg.perturb_scale >= 0.0,
        "PretrainConfig: perturbation scale must be >= 0");
  check(cfg.neg_multiplier >= 1, "PretrainConfig: negative-edge multiplier must be >= 1");
  validate(cfg.augment);
  if (cfg.method == PretrainMethod::kGraphCl)
    check(any_rate_positive(cfg.augment),
          "PretrainConfig: GraphCL needs at least one augmentation rate > 0");
}

namespace detail {

inline NodePtr zeros_node(int r, int c) { return constant(Tensor2(r, c)); }

inline NodePtr ones_node(int r, int c) {
  Tensor2 t(r, c);
  std::fill(t.v.begin(), t.v.end(), 1.0);
  return constant(t);
}

// log sigmoid(s) for an m-by-1 score column via row-softmax([s, 0]), whose
// columns are [sigmoid(s), sigmoid(-s)]; the unused column is never logged.
inline NodePtr log_sigmoid(NodePtr s, bool negate) {
  check(s->val.cols == 1, "log_sigmoid: expected a column of scores");
  int m = s->val.rows;
  NodePtr sm = row_softmax(concat_cols(std::move(s), zeros_node(m, 1)));
  Tensor2 sel(2, 1);
  sel.at(negate ? 1 : 0, 0) = 1.0;
  return log_elem(matmul(std::move(sm), constant(sel)));
}

// Row-wise dot products of two m-by-h nodes -> m-by-1.
inline NodePtr row_dots(NodePtr a, NodePtr b) {
  int h = a->val.cols;
  return matmul(mul(std::move(a), std::move(b)), ones_node(h, 1));
}

}  // namespace detail

// --- DGI ----------------------------------------------------------------

inline NodePtr dgi_loss_graph(NodePtr e, NodePtr e_corrupt, NodePtr summary, NodePtr disc) {
  check(e->val.rows == e_corrupt->val.rows && e->val.cols == e_corrupt->val.cols,
        "dgi_loss: embedding shapes differ");
  int n = e->val.rows, h = e->val.cols;
  check(summary->val.rows == 1 && summary->val.cols == h,
        "dgi_loss: summary must be 1x" + std::to_string(h));
  check(disc->val.rows == h && disc->val.cols == h,
        "dgi_loss: discriminator must be " + std::to_string(h) + "x" + std::to_string(h));
  NodePtr dg = matmul(std::move(disc), std::move(summary), false, true);  // h x 1
  NodePtr pos = detail::log_sigmoid(matmul(std::move(e), dg), false);
  NodePtr neg = detail::log_sigmoid(matmul(std::move(e_corrupt), std::move(dg)), true);
  NodePtr total = add(sum_all(std::move(pos)), sum_all(std::move(neg)));
  return scalar_scale(std::move(total), -1.0 / (2.0 * n));
}

inline double dgi_loss(const Tensor2& e, const Tensor2& e_corrupt,
                       const std::vector<double>& summary, const Tensor2& disc) {
  Tensor2 s(1, static_cast<int>(summary.size()));
  for (size_t i = 0; i < summary.size(); ++i) s.at(0, static_cast<int>(i)) = summary[i];
  NodePtr root = dgi_loss_graph(constant(e), constant(e_corrupt), constant(s), constant(disc));
  return evaluate(root).at(0, 0);
}

// --- EdgePred -------------------------------------------------------------

inline NodePtr edgepred_loss_graph(NodePtr e, const std::vector<std::pair<int, int>>& pos,
                                   const std::vector<std::pair<int, int>>& neg) {
  check(!pos.empty(), "edgepred_loss: empty positive edge set");
  auto dots = [&](const std::vector<std::pair<int, int>>& pairs) {
    std::vector<int> us, vs;
    us.reserve(pairs.size());
    vs.reserve(pairs.size());
    for (const auto& [u, v] : pairs) {
      us.push_back(u);
      vs.push_back(v);
    }
    return detail::row_dots(select_rows(e, us), select_rows(e, vs));
  };
  NodePtr total = sum_all(detail::log_sigmoid(dots(pos), false));
  if (!neg.empty())
    total = add(std::move(total), sum_all(detail::log_sigmoid(dots(neg), true)));
  double m = static_cast<double>(pos.size() + neg.size());
  return scalar_scale(std::move(total), -1.0 / m);
}

inline double edgepred_loss(const Tensor2& e, const std::vector<std::pair<int, int>>& pos,
                            const std::vector<std::pair<int, int>>& neg) {
  NodePtr root = edgepred_loss_graph(constant(e), pos, neg);
  return evaluate(root).at(0, 0);
}

// Distinct non-edges (u < v, not in g), uniform via rejection.
inline std::vector<std::pair<int, int>> sample_negative_edges(const Graph& g, int count,
                                                              Rng& rng) {
  check(count >= 0, "sample_negative_edges: negative count");
  long long total = static_cast<long long>(g.n) * (g.n - 1) / 2;
  long long free_pairs = total - static_cast<long long>(g.edges.size());
  check(count <= free_pairs, "sample_negative_edges: not enough non-edges");
  std::set<std::pair<int, int>> seen;
  std::vector<std::pair<int, int>> out;
  out.reserve(count);
  while (static_cast<int>(out.size()) < count) {
    int u = rng.uniform_int(g.n);
    int v = rng.uniform_int(g.n);
    if (u == v) continue;
    if (u > v) std::swap(u, v);
    if (g.has_edge(u, v)) continue;
    if (!seen.insert({u, v}).second) continue;
    out.push_back({u, v});
  }
  return out;
}

// --- GraphMAE -------------------------------------------------------------

// Replaces the rows of `base` listed in `masked` with the single learnable
// `token` row; differentiable in both inputs.
inline NodePtr replace_rows(NodePtr base, const std::vector<int>& masked, NodePtr token) {
  int n = base->val.rows, c = base->val.cols;
  check(token->val.rows == 1 && token->val.cols == c, "replace_rows: token shape mismatch");
  Tensor2 keep(n, c);
  std::fill(keep.v.begin(), keep.v.end(), 1.0);
  Tensor2 hit(n, 1);
  for (int v : masked) {
    check(v >= 0 && v < n, "replace_rows: row index out of range");
    hit.at(v, 0) = 1.0;
    for (int j = 0; j < c; ++j) keep.at(v, j) = 0.0;
  }
  return add(mul(std::move(base), constant(keep)), matmul(constant(hit), std::move(token)));
}

// (1 - cos(x_i, z_i))^gamma averaged over the masked rows.
inline NodePtr sce_loss_graph(NodePtr x, NodePtr z, const std::vector<int>& masked, int gamma) {
  check(gamma >= 1, "sce_loss: exponent must be >= 1");
  check(!masked.empty(), "sce_loss: empty mask set");
  check(x->val.cols == z->val.cols, "sce_loss: feature dims differ");
  NodePtr xs = row_l2_normalize(select_rows(std::move(x), masked));
  NodePtr zs = row_l2_normalize(select_rows(std::move(z), masked));
  NodePtr cosines = detail::row_dots(std::move(xs), std::move(zs));
  int m = static_cast<int>(masked.size());
  NodePtr term = add(detail::ones_node(m, 1), scalar_scale(std::move(cosines), -1.0));
  NodePtr powed = term;
  for (int k = 1; k < gamma; ++k) powed = mul(powed, term);
  return scalar_scale(sum_all(std::move(powed)), 1.0 / m);
}

struct GraphMaeParts {
  NodePtr loss;
  std::vector<int> masked;
};

// Mask in input space, encode, re-mask the code rows, decode with one linear
// layer, and score reconstruction of the standardized features.
inline GraphMaeParts graphmae_loss_graph(const Graph& g, const ParamSet& ps,
                                         const EncoderConfig& cfg, double mask_rate,
                                         int gamma, uint64_t seed) {
  check(mask_rate > 0.0 && mask_rate < 1.0, "graphmae_loss: mask rate must be in (0,1)");
  int m = static_cast<int>(mask_rate * g.n);
  check(m >= 1, "graphmae_loss: empty mask set");
  Rng rng(derive_seed(seed, "graphmae/mask"));
  GraphMaeParts parts;
  parts.masked = rng.sample_without_replacement(g.n, m);
  std::sort(parts.masked.begin(), parts.masked.end());

  NodePtr x = constant(g.features);
  NodePtr x_masked = replace_rows(x, parts.masked, param(ps, "mae/mask_token"));
  NodePtr agg = constant(aggregation_matrix(g, cfg.aggregator));
  NodePtr h = encoder_graph(std::move(x_masked), std::move(agg),
                            encoder_weights_as_params(ps, cfg.layers));
  NodePtr h_remasked = replace_rows(std::move(h), parts.masked, param(ps, "mae/dmask_token"));
  NodePtr z = broadcast_add_row(matmul(std::move(h_remasked), param(ps, "mae/dec_w")),
                                param(ps, "mae/dec_b"));
  parts.loss = sce_loss_graph(std::move(x), std::move(z), parts.masked, gamma);
  return parts;
}

inline double graphmae_loss(const Graph& g, const EncoderParams& enc, const ParamSet& decoder,
                            double mask_rate, int gamma, uint64_t seed) {
  ParamSet merged = enc.ps;
  for (const auto& name : decoder.names()) merged.add(name, decoder.value(name));
  GraphMaeParts parts = graphmae_loss_graph(g, merged, enc.cfg, mask_rate, gamma, seed);
  return evaluate(parts.loss).at(0, 0);
}

// --- GraphCL / SimGRACE ---------------------------------------------------

// NT-Xent over the 2N stacked views; matched rows are positive pairs. The
// 2N-by-2N similarity matrix lives as two row blocks [S11 S12] and [S21 S22]
// so no vertical concatenation is needed; self-similarities are pushed to
// -inf (additive -600 after temperature scaling) before the softmax.
inline NodePtr graphcl_loss_graph(NodePtr z1, NodePtr z2, double tau) {
  check(tau > 0.0, "graphcl_loss: temperature must be > 0");
  int n = z1->val.rows;
  check(n >= 2, "graphcl_loss: need at least 2 anchors");
  check(z2->val.rows == n && z2->val.cols == z1->val.cols,
        "graphcl_loss: view shapes differ");

  NodePtr a = row_l2_normalize(std::move(z1));
  NodePtr b = row_l2_normalize(std::move(z2));
  NodePtr s11 = matmul(a, a, false, true);
  NodePtr s12 = matmul(a, b, false, true);
  NodePtr s21 = matmul(b, a, false, true);
  NodePtr s22 = matmul(b, b, false, true);

  Tensor2 self_mask(n, 2 * n);     // -600 at the self column, left block
  Tensor2 partner_left(n, 2 * n);  // indicator of the partner column
  Tensor2 self_mask_r(n, 2 * n);   // same, for the bottom row block
  Tensor2 partner_right(n, 2 * n);
  for (int i = 0; i < n; ++i) {
    self_mask.at(i, i) = -600.0;
    partner_left.at(i, n + i) = 1.0;
    self_mask_r.at(i, n + i) = -600.0;
    partner_right.at(i, i) = 1.0;
  }

  auto block_loss = [&](NodePtr left, NodePtr right, const Tensor2& mask,
                        const Tensor2& partner) {
    NodePtr row = concat_cols(std::move(left), std::move(right));
    row = add(scalar_scale(std::move(row), 1.0 / tau), constant(mask));
    NodePtr probs = row_softmax(std::move(row));
    NodePtr picked = matmul(mul(std::move(probs), constant(partner)),
                            detail::ones_node(2 * n, 1));
    return sum_all(log_elem(std::move(picked)));
  };

  NodePtr top = block_loss(std::move(s11), std::move(s12), self_mask, partner_left);
  NodePtr bottom = block_loss(std::move(s21), std::move(s22), self_mask_r, partner_right);
  return scalar_scale(add(std::move(top), std::move(bottom)), -1.0 / (2.0 * n));
}

inline double graphcl_loss(const Tensor2& z1, const Tensor2& z2, double tau) {
  NodePtr root = graphcl_loss_graph(constant(z1), constant(z2), tau);
  return evaluate(root).at(0, 0);
}

// Additive Gaussian noise, per-tensor std = eta * std(W).
inline EncoderParams simgrace_views(const EncoderParams& enc, double eta, uint64_t seed) {
  check(std::isfinite(eta) && eta >= 0.0, "simgrace_views: eta must be >= 0");
  EncoderParams out = enc;
  if (eta == 0.0) return out;
  Rng rng(derive_seed(seed, "simgrace/perturb"));
  for (const auto& name : out.ps.names()) {
    Tensor2& w = out.ps.value(name);
    double mean = 0.0;
    for (double x : w.v) mean += x;
    mean /= static_cast<double>(w.v.size());
    double var = 0.0;
    for (double x : w.v) var += (x - mean) * (x - mean);
    double sd = std::sqrt(var / static_cast<double>(w.v.size()));
    if (sd == 0.0) continue;
    for (double& x : w.v) x += eta * sd * rng.gaussian();
  }
  return out;
}

// --- Training loop ----------------------------------------------------------

struct PretrainResult {
  EncoderParams encoder;
  std::vector<double> loss_trace;
};

namespace detail {

inline NodePtr encode_view(const Graph& g, const ParamSet& ps, const EncoderConfig& cfg) {
  return encoder_graph(constant(g.features), constant(aggregation_matrix(g, cfg.aggregator)),
                       encoder_weights_as_params(ps, cfg.layers));
}

// Restrict two augmented views to the anchors that survive in both, row order
// aligned by original node id.
inline std::pair<NodePtr, NodePtr> align_views(const Augmented& v1, NodePtr e1,
                                               const Augmented& v2, NodePtr e2, int n_orig) {
  std::vector<int> pos1(n_orig, -1), pos2(n_orig, -1);
  for (size_t i = 0; i < v1.kept.size(); ++i) pos1[v1.kept[i]] = static_cast<int>(i);
  for (size_t i = 0; i < v2.kept.size(); ++i) pos2[v2.kept[i]] = static_cast<int>(i);
  std::vector<int> r1, r2;
  for (int v = 0; v < n_orig; ++v)
    if (pos1[v] >= 0 && pos2[v] >= 0) {
      r1.push_back(pos1[v]);
      r2.push_back(pos2[v]);
    }
  check(r1.size() >= 2, "graphcl: fewer than 2 anchors survive both views");
  if (static_cast<int>(r1.size()) == e1->val.rows &&
      static_cast<int>(r2.size()) == e2->val.rows)
    return {std::move(e1), std::move(e2)};
  return {select_rows(std::move(e1), r1), select_rows(std::move(e2), r2)};
}

}  // namespace detail

inline PretrainResult pretrain_run(const Graph& g, const PretrainConfig& cfg,
                                   const EncoderConfig& enc_cfg) {
  validate(cfg);
  validate(enc_cfg);
  check(g.n >= 2, "pretrain_run: need at least 2 nodes");

  EncoderParams enc = init_encoder(g.d, enc_cfg, cfg.seed);
  ParamSet ps = enc.ps;
  Rng aux_rng(derive_seed(cfg.seed, "pretrain/aux"));
  int h = enc_cfg.hidden;
  switch (cfg.method) {
    case PretrainMethod::kDgi:
      ps.add("dgi/disc", glorot_uniform(h, h, aux_rng));
      break;
    case PretrainMethod::kGraphMae:
      // Random tokens: a zero [DMASK] row would decode to an exactly-zero
      // reconstruction, where the cosine error is undefined.
      ps.add("mae/mask_token", glorot_uniform(1, g.d, aux_rng));
      ps.add("mae/dmask_token", glorot_uniform(1, h, aux_rng));
      ps.add("mae/dec_w", glorot_uniform(h, g.d, aux_rng));
      ps.add("mae/dec_b", Tensor2(1, g.d));
      break;
    default:
      break;
  }
  if (cfg.method == PretrainMethod::kEdgePred)
    check(!g.edges.empty(), "pretrain_run: EdgePred needs at least one edge");

  PretrainResult res;
  res.loss_trace.reserve(cfg.epochs);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    uint64_t ep_seed = derive_seed(cfg.seed, "epoch/" + std::to_string(epoch));
    NodePtr loss;
    try {
      switch (cfg.method) {
        case PretrainMethod::kDgi: {
          Graph neg = corrupt_graph(g, ep_seed);
          NodePtr e = detail::encode_view(g, ps, enc_cfg);
          NodePtr ec = detail::encode_view(neg, ps, enc_cfg);
          NodePtr summary = sigmoid(mean_rows(e));
          loss = dgi_loss_graph(std::move(e), std::move(ec), std::move(summary),
                                param(ps, "dgi/disc"));
          break;
        }
        case PretrainMethod::kEdgePred: {
          Rng neg_rng(derive_seed(ep_seed, "edgepred/neg"));
          auto neg = sample_negative_edges(
              g, cfg.neg_multiplier * static_cast<int>(g.edges.size()), neg_rng);
          loss = edgepred_loss_graph(detail::encode_view(g, ps, enc_cfg), g.edges, neg);
          break;
        }
        case PretrainMethod::kGraphMae: {
          loss = graphmae_loss_graph(g, ps, enc_cfg, cfg.mask_rate, cfg.sce_gamma, ep_seed)
                     .loss;
          break;
        }
        case PretrainMethod::kGraphCl: {
          Augmented v1 = augment(g, cfg.augment, derive_seed(ep_seed, "view1"));
          Augmented v2 = augment(g, cfg.augment, derive_seed(ep_seed, "view2"));
          NodePtr e1 = detail::encode_view(v1.graph, ps, enc_cfg);
          NodePtr e2 = detail::encode_view(v2.graph, ps, enc_cfg);
          auto [z1, z2] = detail::align_views(v1, std::move(e1), v2, std::move(e2), g.n);
          loss = graphcl_loss_graph(std::move(z1), std::move(z2), cfg.temperature);
          break;
        }
        case PretrainMethod::kSimGrace: {
          EncoderParams cur = enc;
          cur.ps = ps;  // carry current weights, encoder names only are read
          EncoderParams pert = simgrace_views(cur, cfg.perturb_scale, ep_seed);
          NodePtr z1 = detail::encode_view(g, ps, enc_cfg);
          // Perturbed view enters as constants: no gradient flows through it.
          NodePtr z2 = encoder_graph(
              constant(g.features), constant(aggregation_matrix(g, enc_cfg.aggregator)),
              encoder_weights_as_constants(pert.ps, enc_cfg.layers));
          loss = graphcl_loss_graph(std::move(z1), std::move(z2), cfg.temperature);
          break;
        }
      }
      double value = evaluate(loss).at(0, 0);
      check(std::isfinite(value), "non-finite loss");
      res.loss_trace.push_back(value);
      backward(loss, ps);
      optimize_step(ps, cfg.lr);
    } catch (const Error& e) {
      fail("pretrain epoch " + std::to_string(epoch) + " (" +
           pretrain_method_name(cfg.method) + "): " + e.what());
    }
  }

  res.encoder = enc;
  for (const auto& name : res.encoder.ps.names())
    res.encoder.ps.value(name) = ps.value(name);
  res.encoder.frozen = true;
  return res;
}

inline PretrainResult pretrain_run(const Graph& g, const PretrainConfig& cfg) {
  return pretrain_run(g, cfg, EncoderConfig{});
}

}  // namespace gpaudit
