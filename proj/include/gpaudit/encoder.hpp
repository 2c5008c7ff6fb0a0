#pragma once

#include <string>
#include <vector>

#include "gpaudit/graphdata.hpp"
#include "gpaudit/numcore.hpp"
#include "gpaudit/rng.hpp"

namespace gpaudit {

enum class Aggregator { kMean, kSum };

inline Aggregator parse_aggregator(const std::string& s) {
  if (s == "mean") return Aggregator::kMean;
  if (s == "sum") return Aggregator::kSum;
  if (s == "max")
    fail("EncoderConfig: aggregator 'max' is not supported (no max-reduce computation node); "
         "use 'mean' or 'sum'");
  fail("EncoderConfig: unknown aggregator '" + s + "'");
}

inline const char* aggregator_name(Aggregator a) {
  return a == Aggregator::kMean ? "mean" : "sum";
}

struct EncoderConfig {
  int layers = 2;
  int hidden = 128;
  Aggregator aggregator = Aggregator::kMean;
};

inline void validate(const EncoderConfig& cfg) {
  check(cfg.layers >= 1, "EncoderConfig: layers must be >= 1");
  check(cfg.hidden >= 1, "EncoderConfig: hidden dim must be >= 1");
}

// Per-layer W_self / W_neigh / bias, all inside one ParamSet. The frozen flag
// is honored by the tuning code, which only ever reads frozen params.
struct EncoderParams {
  EncoderConfig cfg;
  int in_dim = 0;
  ParamSet ps;
  bool frozen = false;
};

inline std::string enc_pname(int layer, const char* which) {
  return "l" + std::to_string(layer) + "/" + which;
}

inline EncoderParams init_encoder(int in_dim, const EncoderConfig& cfg, uint64_t seed) {
  validate(cfg);
  check(in_dim >= 1, "init_encoder: input dim must be >= 1");
  EncoderParams enc;
  enc.cfg = cfg;
  enc.in_dim = in_dim;
  Rng rng(derive_seed(seed, "encoder/init"));
  int in = in_dim;
  for (int l = 0; l < cfg.layers; ++l) {
    enc.ps.add(enc_pname(l, "w_self"), glorot_uniform(in, cfg.hidden, rng));
    enc.ps.add(enc_pname(l, "w_neigh"), glorot_uniform(in, cfg.hidden, rng));
    enc.ps.add(enc_pname(l, "bias"), Tensor2(1, cfg.hidden));
    in = cfg.hidden;
  }
  return enc;
}

// Row-normalized (mean) or raw (sum) adjacency as a dense constant; the gemm
// kernel skips its zeros, so the dense form stays cheap.
inline Tensor2 aggregation_matrix(const Graph& g, Aggregator agg) {
  Tensor2 a(g.n, g.n);
  for (int v = 0; v < g.n; ++v) {
    const auto& nb = g.adj[v];
    if (nb.empty()) continue;  // isolated node keeps a zero neighbor term
    double w = agg == Aggregator::kMean ? 1.0 / static_cast<double>(nb.size()) : 1.0;
    for (int u : nb) a.at(v, u) = w;
  }
  return a;
}

// Weight handles for graph building: parameter leaves while pre-training,
// constants once the encoder is frozen.
struct EncoderWeights {
  std::vector<NodePtr> w_self, w_neigh, bias;
};

inline EncoderWeights encoder_weights_as_params(const ParamSet& ps, int layers) {
  EncoderWeights w;
  for (int l = 0; l < layers; ++l) {
    w.w_self.push_back(param(ps, enc_pname(l, "w_self")));
    w.w_neigh.push_back(param(ps, enc_pname(l, "w_neigh")));
    w.bias.push_back(param(ps, enc_pname(l, "bias")));
  }
  return w;
}

inline EncoderWeights encoder_weights_as_params(const EncoderParams& enc) {
  return encoder_weights_as_params(enc.ps, enc.cfg.layers);
}

inline EncoderWeights encoder_weights_as_constants(const ParamSet& ps, int layers) {
  EncoderWeights w;
  for (int l = 0; l < layers; ++l) {
    w.w_self.push_back(constant(ps.value(enc_pname(l, "w_self"))));
    w.w_neigh.push_back(constant(ps.value(enc_pname(l, "w_neigh"))));
    w.bias.push_back(constant(ps.value(enc_pname(l, "bias"))));
  }
  return w;
}

inline EncoderWeights encoder_weights_as_constants(const EncoderParams& enc) {
  return encoder_weights_as_constants(enc.ps, enc.cfg.layers);
}

// h^l = ReLU(h^{l-1} W_self + (A h^{l-1}) W_neigh + bias), last layer linear.
inline NodePtr encoder_graph(NodePtr x, NodePtr agg, const EncoderWeights& w) {
  int layers = static_cast<int>(w.w_self.size());
  NodePtr h = std::move(x);
  for (int l = 0; l < layers; ++l) {
    NodePtr self = matmul(h, w.w_self[l]);
    NodePtr neigh = matmul(matmul(agg, h), w.w_neigh[l]);
    h = broadcast_add_row(add(self, neigh), w.bias[l]);
    if (l + 1 < layers) h = relu(h);
  }
  return h;
}

// Plain forward pass with frozen weights; optional feature override for
// prompted inputs.
inline Tensor2 gnn_forward(const Graph& g, const EncoderParams& enc,
                           const Tensor2* features_override = nullptr) {
  const Tensor2& x = features_override ? *features_override : g.features;
  check(x.rows == g.n && x.cols == enc.in_dim,
        "gnn_forward: features are " + std::to_string(x.rows) + "x" + std::to_string(x.cols) +
            ", encoder expects " + std::to_string(g.n) + "x" + std::to_string(enc.in_dim));
  NodePtr out = encoder_graph(constant(x), constant(aggregation_matrix(g, enc.cfg.aggregator)),
                              encoder_weights_as_constants(enc));
  return evaluate(out);
}

inline std::vector<double> readout_mean(const Tensor2& e,
                                        const std::vector<int>* subset = nullptr) {
  check(e.rows > 0, "readout_mean: empty embedding matrix");
  std::vector<int> all;
  if (!subset) {
    all.resize(e.rows);
    for (int i = 0; i < e.rows; ++i) all[i] = i;
    subset = &all;
  }
  check(!subset->empty(), "readout_mean: empty subset");
  std::vector<double> out(e.cols, 0.0);
  for (int r : *subset) {
    check(r >= 0 && r < e.rows, "readout_mean: row index out of range");
    const double* x = e.row(r);
    for (int c = 0; c < e.cols; ++c) out[c] += x[c];
  }
  for (double& x : out) x /= static_cast<double>(subset->size());
  return out;
}

// DGI negative: same topology, feature rows shuffled by a uniform permutation.
inline Graph corrupt_graph(const Graph& g, uint64_t seed) {
  check(g.n >= 2, "corrupt_graph: need at least 2 nodes");
  Rng rng(derive_seed(seed, "corrupt"));
  std::vector<int> perm(g.n);
  for (int i = 0; i < g.n; ++i) perm[i] = i;
  rng.shuffle(perm);
  Graph out = g;
  for (int v = 0; v < g.n; ++v) {
    for (int c = 0; c < g.d; ++c) {
      out.features_raw.at(v, c) = g.features_raw.at(perm[v], c);
      out.features.at(v, c) = g.features.at(perm[v], c);
    }
  }
  return out;
}

}  // namespace gpaudit
