#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "gpaudit/error.hpp"
#include "gpaudit/rng.hpp"

// Minimal reverse-mode engine on dense 2-D double tensors. Computation graphs
// are built fresh per training step; parameters live in a ParamSet and enter a
// graph as leaf copies, so a step is: build, evaluate, backward, optimize_step.

namespace gpaudit {

// ---------------------------------------------------------------------------
// Tensor2

struct Tensor2 {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Tensor2() = default;
  Tensor2(int r, int c, double fill = 0.0)
      : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {
    check(r >= 0 && c >= 0, "Tensor2: negative dimension");
  }

  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  double* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }
  size_t size() const { return v.size(); }
  bool same_shape(const Tensor2& o) const { return rows == o.rows && cols == o.cols; }
};

inline Tensor2 tensor_from(std::initializer_list<std::initializer_list<double>> r) {
  int nr = static_cast<int>(r.size());
  int nc = nr ? static_cast<int>(r.begin()->size()) : 0;
  Tensor2 t(nr, nc);
  int i = 0;
  for (const auto& row : r) {
    check(static_cast<int>(row.size()) == nc, "tensor_from: ragged rows");
    int j = 0;
    for (double x : row) t.at(i, j++) = x;
    ++i;
  }
  return t;
}

inline Tensor2 identity_matrix(int n) {
  Tensor2 t(n, n);
  for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

inline Tensor2 transposed(const Tensor2& a) {
  Tensor2 t(a.cols, a.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
  return t;
}

inline bool all_finite(const Tensor2& a) {
  double acc = 0.0;
  for (double x : a.v) acc += std::fabs(x);
  return std::isfinite(acc);
}

// C += op(A) * op(B). The non-transposed inner kernel skips zero entries of A,
// which keeps products against row-normalized adjacency matrices cheap without
// a dedicated sparse type.
inline void gemm_acc(const Tensor2& a, bool ta, const Tensor2& b, bool tb, Tensor2& c) {
  const Tensor2 atmp = ta ? transposed(a) : Tensor2();
  const Tensor2 btmp = tb ? transposed(b) : Tensor2();
  const Tensor2& A = ta ? atmp : a;
  const Tensor2& B = tb ? btmp : b;
  check(A.cols == B.rows, "gemm: inner dimensions differ");
  check(c.rows == A.rows && c.cols == B.cols, "gemm: output shape mismatch");
  const int m = A.rows, kk = A.cols, n = B.cols;
  for (int i = 0; i < m; ++i) {
    double* __restrict__ cr = c.row(i);
    const double* __restrict__ ar = A.row(i);
    for (int k = 0; k < kk; ++k) {
      double av = ar[k];
      if (av == 0.0) continue;
      const double* __restrict__ br = B.row(k);
      for (int j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
}

inline Tensor2 matmul_value(const Tensor2& a, bool ta, const Tensor2& b, bool tb) {
  Tensor2 c(ta ? a.cols : a.rows, tb ? b.rows : b.cols);
  gemm_acc(a, ta, b, tb, c);
  return c;
}

// ---------------------------------------------------------------------------
// Computation graph

enum class Op {
  kConstant,
  kParam,
  kMatMul,
  kAdd,
  kBroadcastAddRow,
  kMul,
  kRelu,
  kSigmoid,
  kTanh,
  kRowSoftmax,
  kRowL2Normalize,
  kMeanRows,
  kConcatCols,
  kScalarScale,
  kLog,
  kSum,
  kSelectRows,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kConstant: return "constant";
    case Op::kParam: return "param";
    case Op::kMatMul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kBroadcastAddRow: return "broadcast-add-row";
    case Op::kMul: return "elementwise-mul";
    case Op::kRelu: return "relu";
    case Op::kSigmoid: return "sigmoid";
    case Op::kTanh: return "tanh";
    case Op::kRowSoftmax: return "row-softmax";
    case Op::kRowL2Normalize: return "row-l2-normalize";
    case Op::kMeanRows: return "mean-rows";
    case Op::kConcatCols: return "concat-cols";
    case Op::kScalarScale: return "scalar-scale";
    case Op::kLog: return "log";
    case Op::kSum: return "sum";
    case Op::kSelectRows: return "masked-select-rows";
  }
  return "?";
}

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Op op;
  std::vector<NodePtr> in;
  Tensor2 val;   // shape fixed at build time, data filled by evaluate
  Tensor2 grad;  // allocated by backward
  bool requires_grad = false;
  bool evaluated = false;
  double scalar = 1.0;                   // scalar-scale payload
  bool trans_a = false, trans_b = false; // matmul layout flags
  std::vector<int> row_sel;              // masked-select-rows payload
  std::string param_name;                // param payload
  int id = 0;
};

inline int next_node_id() {
  static std::atomic<int> counter{0};
  return ++counter;
}

inline std::string node_tag(const Node& n) {
  return std::string(op_name(n.op)) + " node #" + std::to_string(n.id);
}

inline NodePtr make_node(Op op, std::vector<NodePtr> in) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->in = std::move(in);
  n->id = next_node_id();
  for (const auto& i : n->in) {
    check(i != nullptr, std::string(op_name(op)) + ": null input node");
    n->requires_grad = n->requires_grad || i->requires_grad;
  }
  return n;
}

inline NodePtr constant(Tensor2 value) {
  check(all_finite(value), "constant: non-finite entries");
  auto n = make_node(Op::kConstant, {});
  n->val = std::move(value);
  n->evaluated = true;
  return n;
}

// ---------------------------------------------------------------------------
// ParamSet with Adam state

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class ParamSet {
 public:
  Tensor2& add(const std::string& name, Tensor2 init) {
    check(!name.empty(), "ParamSet: empty parameter name");
    check(!entries_.count(name), "ParamSet: duplicate parameter '" + name + "'");
    check(all_finite(init), "ParamSet: non-finite init for '" + name + "'");
    Entry e;
    e.grad = Tensor2(init.rows, init.cols);
    e.m = Tensor2(init.rows, init.cols);
    e.v = Tensor2(init.rows, init.cols);
    e.value = std::move(init);
    return entries_.emplace(name, std::move(e)).first->second.value;
  }

  bool has(const std::string& name) const { return entries_.count(name) > 0; }

  Tensor2& value(const std::string& name) { return entry(name).value; }
  const Tensor2& value(const std::string& name) const { return entry(name).value; }
  Tensor2& grad(const std::string& name) { return entry(name).grad; }
  const Tensor2& grad(const std::string& name) const { return entry(name).grad; }

  void zero_grad() {
    for (auto& [_, e] : entries_) std::fill(e.grad.v.begin(), e.grad.v.end(), 0.0);
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& [k, _] : entries_) out.push_back(k);
    return out;
  }

  size_t count() const { return entries_.size(); }
  int64_t steps_taken() const { return step_; }

  friend inline void optimize_step(ParamSet& ps, double lr, const AdamConfig& cfg);

 private:
  struct Entry {
    Tensor2 value, grad, m, v;
  };

  Entry& entry(const std::string& name) {
    auto it = entries_.find(name);
    check(it != entries_.end(), "ParamSet: unknown parameter '" + name + "'");
    return it->second;
  }
  const Entry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    check(it != entries_.end(), "ParamSet: unknown parameter '" + name + "'");
    return it->second;
  }

  std::map<std::string, Entry> entries_;
  int64_t step_ = 0;
};

// One bias-corrected Adam update on every parameter, then gradients are cleared.
inline void optimize_step(ParamSet& ps, double lr, const AdamConfig& cfg = {}) {
  check(lr > 0.0, "optimize_step: lr must be positive");
  ps.step_ += 1;
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(ps.step_));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(ps.step_));
  for (auto& [name, e] : ps.entries_) {
    for (size_t i = 0; i < e.value.v.size(); ++i) {
      double g = e.grad.v[i];
      e.m.v[i] = cfg.beta1 * e.m.v[i] + (1.0 - cfg.beta1) * g;
      e.v.v[i] = cfg.beta2 * e.v.v[i] + (1.0 - cfg.beta2) * g * g;
      double mhat = e.m.v[i] / bc1;
      double vhat = e.v.v[i] / bc2;
      e.value.v[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
    check(all_finite(e.value), "optimize_step: non-finite values in '" + name + "'");
    std::fill(e.grad.v.begin(), e.grad.v.end(), 0.0);
  }
}

inline NodePtr param(const ParamSet& ps, const std::string& name) {
  auto n = make_node(Op::kParam, {});
  n->val = ps.value(name);
  n->param_name = name;
  n->requires_grad = true;
  n->evaluated = true;
  return n;
}

// ---------------------------------------------------------------------------
// Builders (shapes validated eagerly)

inline NodePtr matmul(NodePtr a, NodePtr b, bool trans_a = false, bool trans_b = false) {
  check(a != nullptr && b != nullptr, "matmul: null input node");
  int am = trans_a ? a->val.cols : a->val.rows;
  int ak = trans_a ? a->val.rows : a->val.cols;
  int bk = trans_b ? b->val.cols : b->val.rows;
  int bn = trans_b ? b->val.rows : b->val.cols;
  auto n = make_node(Op::kMatMul, {std::move(a), std::move(b)});
  n->trans_a = trans_a;
  n->trans_b = trans_b;
  check(ak == bk, "matmul: inner dimensions differ at " + node_tag(*n));
  n->val = Tensor2(am, bn);
  return n;
}

inline NodePtr add(NodePtr a, NodePtr b) {
  auto n = make_node(Op::kAdd, {std::move(a), std::move(b)});
  check(n->in[0]->val.same_shape(n->in[1]->val), "add: shape mismatch at " + node_tag(*n));
  n->val = Tensor2(n->in[0]->val.rows, n->in[0]->val.cols);
  return n;
}

inline NodePtr broadcast_add_row(NodePtr a, NodePtr row) {
  auto n = make_node(Op::kBroadcastAddRow, {std::move(a), std::move(row)});
  check(n->in[1]->val.rows == 1 && n->in[1]->val.cols == n->in[0]->val.cols,
        "broadcast-add-row: row operand must be 1 x cols at " + node_tag(*n));
  n->val = Tensor2(n->in[0]->val.rows, n->in[0]->val.cols);
  return n;
}

inline NodePtr mul(NodePtr a, NodePtr b) {
  auto n = make_node(Op::kMul, {std::move(a), std::move(b)});
  check(n->in[0]->val.same_shape(n->in[1]->val),
        "elementwise-mul: shape mismatch at " + node_tag(*n));
  n->val = Tensor2(n->in[0]->val.rows, n->in[0]->val.cols);
  return n;
}

inline NodePtr unary_node(Op op, NodePtr a) {
  auto n = make_node(op, {std::move(a)});
  n->val = Tensor2(n->in[0]->val.rows, n->in[0]->val.cols);
  return n;
}

inline NodePtr relu(NodePtr a) { return unary_node(Op::kRelu, std::move(a)); }
inline NodePtr sigmoid(NodePtr a) { return unary_node(Op::kSigmoid, std::move(a)); }
inline NodePtr tanh_elem(NodePtr a) { return unary_node(Op::kTanh, std::move(a)); }
inline NodePtr log_elem(NodePtr a) { return unary_node(Op::kLog, std::move(a)); }
inline NodePtr row_softmax(NodePtr a) { return unary_node(Op::kRowSoftmax, std::move(a)); }
inline NodePtr row_l2_normalize(NodePtr a) {
  return unary_node(Op::kRowL2Normalize, std::move(a));
}

inline NodePtr mean_rows(NodePtr a) {
  auto n = make_node(Op::kMeanRows, {std::move(a)});
  check(n->in[0]->val.rows > 0, "mean-rows: empty input at " + node_tag(*n));
  n->val = Tensor2(1, n->in[0]->val.cols);
  return n;
}

inline NodePtr concat_cols(NodePtr a, NodePtr b) {
  auto n = make_node(Op::kConcatCols, {std::move(a), std::move(b)});
  check(n->in[0]->val.rows == n->in[1]->val.rows,
        "concat-cols: row counts differ at " + node_tag(*n));
  n->val = Tensor2(n->in[0]->val.rows, n->in[0]->val.cols + n->in[1]->val.cols);
  return n;
}

inline NodePtr scalar_scale(NodePtr a, double s) {
  check(std::isfinite(s), "scalar-scale: non-finite scalar");
  auto n = unary_node(Op::kScalarScale, std::move(a));
  n->scalar = s;
  return n;
}

inline NodePtr sum_all(NodePtr a) {
  auto n = make_node(Op::kSum, {std::move(a)});
  n->val = Tensor2(1, 1);
  return n;
}

inline NodePtr select_rows(NodePtr a, std::vector<int> rows) {
  auto n = make_node(Op::kSelectRows, {std::move(a)});
  check(!rows.empty(), "masked-select-rows: empty selection at " + node_tag(*n));
  for (int r : rows)
    check(r >= 0 && r < n->in[0]->val.rows,
          "masked-select-rows: row index out of range at " + node_tag(*n));
  n->row_sel = std::move(rows);
  n->val = Tensor2(static_cast<int>(n->row_sel.size()), n->in[0]->val.cols);
  return n;
}

// ---------------------------------------------------------------------------
// Forward

namespace detail {

inline std::vector<Node*> topo_order(const NodePtr& root) {
  std::vector<Node*> order;
  std::vector<std::pair<Node*, size_t>> stack{{root.get(), 0}};
  std::map<Node*, bool> done;
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (done.count(n)) {
      stack.pop_back();
      continue;
    }
    if (next < n->in.size()) {
      Node* child = n->in[next++].get();
      if (!done.count(child)) stack.push_back({child, 0});
    } else {
      done[n] = true;
      order.push_back(n);
      stack.pop_back();
    }
  }
  return order;
}

inline void eval_node(Node& n) {
  const Tensor2* a = n.in.empty() ? nullptr : &n.in[0]->val;
  const Tensor2* b = n.in.size() > 1 ? &n.in[1]->val : nullptr;
  switch (n.op) {
    case Op::kConstant:
    case Op::kParam:
      return;
    case Op::kMatMul: {
      std::fill(n.val.v.begin(), n.val.v.end(), 0.0);
      gemm_acc(*a, n.trans_a, *b, n.trans_b, n.val);
      break;
    }
    case Op::kAdd:
      for (size_t i = 0; i < n.val.v.size(); ++i) n.val.v[i] = a->v[i] + b->v[i];
      break;
    case Op::kBroadcastAddRow:
      for (int r = 0; r < n.val.rows; ++r) {
        const double* ar = a->row(r);
        double* out = n.val.row(r);
        for (int c = 0; c < n.val.cols; ++c) out[c] = ar[c] + b->v[c];
      }
      break;
    case Op::kMul:
      for (size_t i = 0; i < n.val.v.size(); ++i) n.val.v[i] = a->v[i] * b->v[i];
      break;
    case Op::kRelu:
      for (size_t i = 0; i < n.val.v.size(); ++i) n.val.v[i] = a->v[i] > 0.0 ? a->v[i] : 0.0;
      break;
    case Op::kSigmoid:
      for (size_t i = 0; i < n.val.v.size(); ++i) n.val.v[i] = 1.0 / (1.0 + std::exp(-a->v[i]));
      break;
    case Op::kTanh:
      for (size_t i = 0; i < n.val.v.size(); ++i) n.val.v[i] = std::tanh(a->v[i]);
      break;
    case Op::kRowSoftmax:
      for (int r = 0; r < n.val.rows; ++r) {
        const double* x = a->row(r);
        double* y = n.val.row(r);
        double mx = x[0];
        for (int c = 1; c < n.val.cols; ++c) mx = std::max(mx, x[c]);
        double s = 0.0;
        for (int c = 0; c < n.val.cols; ++c) {
          y[c] = std::exp(x[c] - mx);
          s += y[c];
        }
        for (int c = 0; c < n.val.cols; ++c) y[c] /= s;
      }
      break;
    case Op::kRowL2Normalize:
      for (int r = 0; r < n.val.rows; ++r) {
        const double* x = a->row(r);
        double* y = n.val.row(r);
        double s = 0.0;
        for (int c = 0; c < n.val.cols; ++c) s += x[c] * x[c];
        double nrm = std::sqrt(s);
        check(nrm > 0.0, "row-l2-normalize: zero row " + std::to_string(r) + " at " + node_tag(n));
        for (int c = 0; c < n.val.cols; ++c) y[c] = x[c] / nrm;
      }
      break;
    case Op::kMeanRows: {
      std::fill(n.val.v.begin(), n.val.v.end(), 0.0);
      for (int r = 0; r < a->rows; ++r) {
        const double* x = a->row(r);
        for (int c = 0; c < a->cols; ++c) n.val.v[c] += x[c];
      }
      for (int c = 0; c < a->cols; ++c) n.val.v[c] /= a->rows;
      break;
    }
    case Op::kConcatCols:
      for (int r = 0; r < n.val.rows; ++r) {
        double* out = n.val.row(r);
        const double* x = a->row(r);
        const double* y = b->row(r);
        std::copy(x, x + a->cols, out);
        std::copy(y, y + b->cols, out + a->cols);
      }
      break;
    case Op::kScalarScale:
      for (size_t i = 0; i < n.val.v.size(); ++i) n.val.v[i] = n.scalar * a->v[i];
      break;
    case Op::kLog:
      for (size_t i = 0; i < n.val.v.size(); ++i) n.val.v[i] = std::log(a->v[i]);
      break;
    case Op::kSum: {
      double s = 0.0;
      for (double x : a->v) s += x;
      n.val.v[0] = s;
      break;
    }
    case Op::kSelectRows:
      for (size_t i = 0; i < n.row_sel.size(); ++i) {
        const double* x = a->row(n.row_sel[i]);
        std::copy(x, x + a->cols, n.val.row(static_cast<int>(i)));
      }
      break;
  }
  check(all_finite(n.val), "evaluate: non-finite values in " + node_tag(n));
}

}  // namespace detail

// Deterministic forward pass; results are cached on the nodes for backward.
inline const Tensor2& evaluate(const NodePtr& root) {
  check(root != nullptr, "evaluate: null root");
  if (root->evaluated) return root->val;
  for (Node* n : detail::topo_order(root)) {
    if (!n->evaluated) {
      detail::eval_node(*n);
      n->evaluated = true;
    }
  }
  return root->val;
}

// ---------------------------------------------------------------------------
// Backward

namespace detail {

inline void ensure_grad(Node& n) {
  if (n.grad.rows != n.val.rows || n.grad.cols != n.val.cols)
    n.grad = Tensor2(n.val.rows, n.val.cols);
}

inline void backprop_node(Node& n) {
  Node* a = n.in.empty() ? nullptr : n.in[0].get();
  Node* b = n.in.size() > 1 ? n.in[1].get() : nullptr;
  auto want = [](Node* x) { return x && x->requires_grad; };
  switch (n.op) {
    case Op::kConstant:
    case Op::kParam:
      return;
    case Op::kMatMul: {
      const Tensor2& dc = n.grad;
      if (!n.trans_a && !n.trans_b) {
        if (want(a)) gemm_acc(dc, false, b->val, true, a->grad);
        if (want(b)) gemm_acc(a->val, true, dc, false, b->grad);
      } else if (!n.trans_a && n.trans_b) {
        if (want(a)) gemm_acc(dc, false, b->val, false, a->grad);
        if (want(b)) gemm_acc(dc, true, a->val, false, b->grad);
      } else if (n.trans_a && !n.trans_b) {
        if (want(a)) gemm_acc(b->val, false, dc, true, a->grad);
        if (want(b)) gemm_acc(a->val, false, dc, false, b->grad);
      } else {
        if (want(a)) gemm_acc(b->val, true, dc, true, a->grad);
        if (want(b)) gemm_acc(dc, true, a->val, true, b->grad);
      }
      break;
    }
    case Op::kAdd:
      if (want(a))
        for (size_t i = 0; i < n.grad.v.size(); ++i) a->grad.v[i] += n.grad.v[i];
      if (want(b))
        for (size_t i = 0; i < n.grad.v.size(); ++i) b->grad.v[i] += n.grad.v[i];
      break;
    case Op::kBroadcastAddRow:
      if (want(a))
        for (size_t i = 0; i < n.grad.v.size(); ++i) a->grad.v[i] += n.grad.v[i];
      if (want(b))
        for (int r = 0; r < n.grad.rows; ++r) {
          const double* g = n.grad.row(r);
          for (int c = 0; c < n.grad.cols; ++c) b->grad.v[c] += g[c];
        }
      break;
    case Op::kMul:
      if (want(a))
        for (size_t i = 0; i < n.grad.v.size(); ++i) a->grad.v[i] += n.grad.v[i] * b->val.v[i];
      if (want(b))
        for (size_t i = 0; i < n.grad.v.size(); ++i) b->grad.v[i] += n.grad.v[i] * a->val.v[i];
      break;
    case Op::kRelu:
      if (want(a))
        for (size_t i = 0; i < n.grad.v.size(); ++i)
          if (a->val.v[i] > 0.0) a->grad.v[i] += n.grad.v[i];
      break;
    case Op::kSigmoid:
      if (want(a))
        for (size_t i = 0; i < n.grad.v.size(); ++i) {
          double y = n.val.v[i];
          a->grad.v[i] += n.grad.v[i] * y * (1.0 - y);
        }
      break;
    case Op::kTanh:
      if (want(a))
        for (size_t i = 0; i < n.grad.v.size(); ++i) {
          double y = n.val.v[i];
          a->grad.v[i] += n.grad.v[i] * (1.0 - y * y);
        }
      break;
    case Op::kRowSoftmax:
      if (want(a))
        for (int r = 0; r < n.val.rows; ++r) {
          const double* y = n.val.row(r);
          const double* g = n.grad.row(r);
          double dot = 0.0;
          for (int c = 0; c < n.val.cols; ++c) dot += y[c] * g[c];
          double* ga = a->grad.row(r);
          for (int c = 0; c < n.val.cols; ++c) ga[c] += y[c] * (g[c] - dot);
        }
      break;
    case Op::kRowL2Normalize:
      if (want(a))
        for (int r = 0; r < n.val.rows; ++r) {
          const double* x = a->val.row(r);
          const double* y = n.val.row(r);
          const double* g = n.grad.row(r);
          double s = 0.0;
          for (int c = 0; c < n.val.cols; ++c) s += x[c] * x[c];
          double nrm = std::sqrt(s);
          double dot = 0.0;
          for (int c = 0; c < n.val.cols; ++c) dot += y[c] * g[c];
          double* ga = a->grad.row(r);
          for (int c = 0; c < n.val.cols; ++c) ga[c] += (g[c] - y[c] * dot) / nrm;
        }
      break;
    case Op::kMeanRows:
      if (want(a)) {
        double inv = 1.0 / a->val.rows;
        for (int r = 0; r < a->val.rows; ++r) {
          double* ga = a->grad.row(r);
          for (int c = 0; c < a->val.cols; ++c) ga[c] += n.grad.v[c] * inv;
        }
      }
      break;
    case Op::kConcatCols:
      for (int r = 0; r < n.grad.rows; ++r) {
        const double* g = n.grad.row(r);
        if (want(a)) {
          double* ga = a->grad.row(r);
          for (int c = 0; c < a->val.cols; ++c) ga[c] += g[c];
        }
        if (want(b)) {
          double* gb = b->grad.row(r);
          for (int c = 0; c < b->val.cols; ++c) gb[c] += g[a->val.cols + c];
        }
      }
      break;
    case Op::kScalarScale:
      if (want(a))
        for (size_t i = 0; i < n.grad.v.size(); ++i) a->grad.v[i] += n.scalar * n.grad.v[i];
      break;
    case Op::kLog:
      if (want(a))
        for (size_t i = 0; i < n.grad.v.size(); ++i) a->grad.v[i] += n.grad.v[i] / a->val.v[i];
      break;
    case Op::kSum:
      if (want(a)) {
        double g = n.grad.v[0];
        for (size_t i = 0; i < a->grad.v.size(); ++i) a->grad.v[i] += g;
      }
      break;
    case Op::kSelectRows:
      if (want(a))
        for (size_t i = 0; i < n.row_sel.size(); ++i) {
          const double* g = n.grad.row(static_cast<int>(i));
          double* ga = a->grad.row(n.row_sel[i]);
          for (int c = 0; c < n.val.cols; ++c) ga[c] += g[c];
        }
      break;
  }
}

}  // namespace detail

// Reverse pass from a scalar root. Parameter gradients accumulate into the
// ParamSet, so calling twice without optimize_step or zero_grad sums them.
inline void backward(const NodePtr& root, ParamSet& ps) {
  check(root != nullptr, "backward: null root");
  check(root->evaluated, "backward: evaluate the root first");
  check(root->val.rows == 1 && root->val.cols == 1,
        "backward: root must be scalar, got " + std::to_string(root->val.rows) + "x" +
            std::to_string(root->val.cols) + " at " + node_tag(*root));
  check(root->requires_grad, "backward: root does not depend on any parameter");
  auto order = detail::topo_order(root);
  for (Node* n : order)
    if (n->requires_grad) {
      detail::ensure_grad(*n);
      std::fill(n->grad.v.begin(), n->grad.v.end(), 0.0);
    }
  root->grad.v[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->requires_grad) detail::backprop_node(**it);
  for (Node* n : order)
    if (n->op == Op::kParam) {
      check(ps.has(n->param_name),
            "backward: parameter '" + n->param_name + "' missing from ParamSet");
      Tensor2& g = ps.grad(n->param_name);
      check(g.same_shape(n->grad), "backward: gradient shape mismatch for '" + n->param_name + "'");
      for (size_t i = 0; i < g.v.size(); ++i) g.v[i] += n->grad.v[i];
    }
}

// ---------------------------------------------------------------------------
// Small numeric utilities

inline double cosine_sim(const double* a, const double* b, int n) {
  double aa = 0.0, bb = 0.0, ab = 0.0;
  for (int i = 0; i < n; ++i) {
    aa += a[i] * a[i];
    bb += b[i] * b[i];
    ab += a[i] * b[i];
  }
  check(aa > 0.0 && bb > 0.0, "cosine_sim: zero vector");
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

inline double cosine_sim(const std::vector<double>& a, const std::vector<double>& b) {
  check(a.size() == b.size(), "cosine_sim: length mismatch");
  check(!a.empty(), "cosine_sim: empty vectors");
  return cosine_sim(a.data(), b.data(), static_cast<int>(a.size()));
}

inline Tensor2 glorot_uniform(int rows, int cols, Rng& rng) {
  double limit = std::sqrt(6.0 / (rows + cols));
  Tensor2 t(rows, cols);
  for (double& x : t.v) x = rng.uniform(-limit, limit);
  return t;
}

// FNV-1a over names, shapes, and raw tensor bytes; used to assert that a
// parameter set was not touched (frozen-encoder contract).
inline uint64_t params_bytes_hash(const ParamSet& ps) {
  uint64_t h = 0xcbf29ce484222325ull;
  auto fold = [&h](const void* p, size_t n) {
    const unsigned char* b = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& name : ps.names()) {
    fold(name.data(), name.size());
    const Tensor2& t = ps.value(name);
    uint32_t shape[2] = {static_cast<uint32_t>(t.rows), static_cast<uint32_t>(t.cols)};
    fold(shape, sizeof shape);
    fold(t.v.data(), t.v.size() * sizeof(double));
  }
  return h;
}

}  // namespace gpaudit
