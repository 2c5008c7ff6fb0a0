#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "gpaudit/numcore.hpp"
#include "test_util.hpp"

using namespace gpaudit;
using testutil::grad_check;
using testutil::max_abs_diff;
using testutil::random_tensor;

TEST(Tensor2, ConstructionAndIndexing) {
  Tensor2 t = tensor_from({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(t.rows, 2);
  EXPECT_EQ(t.cols, 3);
  EXPECT_DOUBLE_EQ(t.at(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(t.at(1, 2), 6.0);
  t.at(1, 0) = -7.0;
  EXPECT_DOUBLE_EQ(t.row(1)[0], -7.0);
  EXPECT_THROW(tensor_from({{1, 2}, {3}}), Error);
}

TEST(Tensor2, IdentityAndTranspose) {
  Tensor2 id = identity_matrix(3);
  EXPECT_DOUBLE_EQ(id.at(1, 1), 1.0);
  EXPECT_DOUBLE_EQ(id.at(0, 2), 0.0);
  Tensor2 t = transposed(tensor_from({{1, 2, 3}, {4, 5, 6}}));
  EXPECT_EQ(t.rows, 3);
  EXPECT_EQ(t.cols, 2);
  EXPECT_DOUBLE_EQ(t.at(2, 0), 3.0);
  EXPECT_DOUBLE_EQ(t.at(0, 1), 4.0);
}

TEST(Tensor2, AllFinite) {
  Tensor2 t = tensor_from({{1, 2}});
  EXPECT_TRUE(all_finite(t));
  t.at(0, 1) = std::nan("");
  EXPECT_FALSE(all_finite(t));
  t.at(0, 1) = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(all_finite(t));
}

TEST(Gemm, MatchesNaiveTripleLoop) {
  Rng rng(7);
  Tensor2 a = random_tensor(5, 4, rng);
  // plant exact zeros to exercise the skip branch
  a.at(0, 1) = 0.0;
  a.at(3, 2) = 0.0;
  Tensor2 b = random_tensor(4, 6, rng);
  Tensor2 got = matmul_value(a, false, b, false);
  Tensor2 want(5, 6);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 6; ++j) {
      double s = 0.0;
      for (int k = 0; k < 4; ++k) s += a.at(i, k) * b.at(k, j);
      want.at(i, j) = s;
    }
  // identical accumulation order, so equality is exact
  EXPECT_EQ(got.v, want.v);
}

TEST(Gemm, TransposeFlagsAgreeWithExplicitTranspose) {
  Rng rng(11);
  Tensor2 a = random_tensor(3, 5, rng);
  Tensor2 b = random_tensor(3, 4, rng);
  Tensor2 ref = matmul_value(transposed(a), false, b, false);
  EXPECT_EQ(matmul_value(a, true, b, false).v, ref.v);
  Tensor2 c = random_tensor(4, 5, rng);
  Tensor2 ref2 = matmul_value(a, false, transposed(c), false);
  EXPECT_EQ(matmul_value(a, false, c, true).v, ref2.v);
}

TEST(Evaluate, MatmulHandValues) {
  NodePtr r = matmul(constant(tensor_from({{1, 2}, {3, 4}})),
                     constant(tensor_from({{5}, {6}})));
  const Tensor2& v = evaluate(r);
  EXPECT_DOUBLE_EQ(v.at(0, 0), 17.0);
  EXPECT_DOUBLE_EQ(v.at(1, 0), 39.0);
  EXPECT_THROW(matmul(constant(Tensor2(2, 3)), constant(Tensor2(2, 3))), Error);
}

TEST(Evaluate, ElementwiseOps) {
  Tensor2 x = tensor_from({{-1.0, 0.0, 2.0}});
  EXPECT_EQ(evaluate(relu(constant(x))).v, (std::vector<double>{0.0, 0.0, 2.0}));
  EXPECT_NEAR(evaluate(sigmoid(constant(tensor_from({{0.0}})))).at(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(evaluate(tanh_elem(constant(tensor_from({{0.5}})))).at(0, 0), std::tanh(0.5),
              1e-15);
  EXPECT_NEAR(evaluate(log_elem(constant(tensor_from({{std::exp(2.0)}})))).at(0, 0), 2.0, 1e-12);
  Tensor2 a = tensor_from({{1, 2}, {3, 4}});
  Tensor2 b = tensor_from({{10, 20}, {30, 40}});
  EXPECT_EQ(evaluate(add(constant(a), constant(b))).v, (std::vector<double>{11, 22, 33, 44}));
  EXPECT_EQ(evaluate(mul(constant(a), constant(b))).v, (std::vector<double>{10, 40, 90, 160}));
  EXPECT_EQ(evaluate(scalar_scale(constant(a), -2.0)).v, (std::vector<double>{-2, -4, -6, -8}));
}

TEST(Evaluate, ShapeAndStructureOps) {
  Tensor2 a = tensor_from({{1, 2}, {3, 4}, {5, 6}});
  EXPECT_EQ(evaluate(broadcast_add_row(constant(a), constant(tensor_from({{10, 20}})))).v,
            (std::vector<double>{11, 22, 13, 24, 15, 26}));
  EXPECT_EQ(evaluate(mean_rows(constant(a))).v, (std::vector<double>{3, 4}));
  EXPECT_EQ(evaluate(sum_all(constant(a))).at(0, 0), 21.0);
  EXPECT_EQ(evaluate(concat_cols(constant(a), constant(tensor_from({{7}, {8}, {9}})))).v,
            (std::vector<double>{1, 2, 7, 3, 4, 8, 5, 6, 9}));
  EXPECT_EQ(evaluate(select_rows(constant(a), {2, 0, 2})).v,
            (std::vector<double>{5, 6, 1, 2, 5, 6}));
  EXPECT_THROW(select_rows(constant(a), {3}), Error);
}

TEST(Evaluate, RowSoftmax) {
  Tensor2 s = evaluate(row_softmax(constant(tensor_from({{0.0, std::log(2.0)}}))));
  EXPECT_NEAR(s.at(0, 0), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(s.at(0, 1), 2.0 / 3.0, 1e-12);
  // invariance to a per-row shift and row-stochastic output
  Rng rng(3);
  Tensor2 x = random_tensor(4, 5, rng, -3.0, 3.0);
  Tensor2 shifted = x;
  for (int i = 0; i < x.rows; ++i)
    for (int j = 0; j < x.cols; ++j) shifted.at(i, j) += 100.0;
  Tensor2 p = evaluate(row_softmax(constant(x)));
  Tensor2 q = evaluate(row_softmax(constant(shifted)));
  EXPECT_LT(max_abs_diff(p, q), 1e-12);
  for (int i = 0; i < p.rows; ++i) {
    double s1 = 0.0;
    for (int j = 0; j < p.cols; ++j) {
      EXPECT_GT(p.at(i, j), 0.0);
      s1 += p.at(i, j);
    }
    EXPECT_NEAR(s1, 1.0, 1e-12);
  }
}

TEST(Evaluate, RowL2Normalize) {
  Tensor2 y = evaluate(row_l2_normalize(constant(tensor_from({{3.0, 4.0}}))));
  EXPECT_NEAR(y.at(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(y.at(0, 1), 0.8, 1e-15);
  EXPECT_THROW(evaluate(row_l2_normalize(constant(tensor_from({{0.0, 0.0}})))), Error);
}

TEST(Evaluate, RejectsNonFinite) {
  EXPECT_THROW(evaluate(log_elem(constant(tensor_from({{-1.0}})))), Error);
}

TEST(Backward, ParamUsedTwiceAccumulates) {
  ParamSet ps;
  ps.add("p", tensor_from({{1.5}}));
  NodePtr loss = sum_all(add(param(ps, "p"), param(ps, "p")));
  evaluate(loss);
  backward(loss, ps);
  EXPECT_DOUBLE_EQ(ps.grad("p").at(0, 0), 2.0);
}

TEST(Backward, RootMustBeEvaluatedScalar) {
  ParamSet ps;
  ps.add("p", tensor_from({{1.0, 2.0}}));
  NodePtr vec = add(param(ps, "p"), param(ps, "p"));
  evaluate(vec);
  EXPECT_THROW(backward(vec, ps), Error);  // non-scalar root
  NodePtr s = sum_all(add(param(ps, "p"), param(ps, "p")));
  EXPECT_THROW(backward(s, ps), Error);  // not evaluated yet
  NodePtr c = sum_all(constant(tensor_from({{1.0}})));
  evaluate(c);
  EXPECT_THROW(backward(c, ps), Error);  // no parameter dependence
}

namespace {

// Runs grad_check on a builder over the given parameter set and asserts the
// 1e-4 relative tolerance used throughout the project.
void expect_grads_ok(ParamSet& ps, const std::function<NodePtr()>& build) {
  auto res = grad_check(ps, build);
  EXPECT_GT(res.checked, 0);
  EXPECT_LE(res.max_rel, 1e-4) << "worst entry " << res.where;
}

}  // namespace

TEST(GradCheck, MatmulAllTransposeCombos) {
  for (int ta = 0; ta < 2; ++ta)
    for (int tb = 0; tb < 2; ++tb) {
      ParamSet ps;
      Rng rng(100 + ta * 2 + tb);
      ps.add("a", random_tensor(ta ? 4 : 3, ta ? 3 : 4, rng));
      ps.add("b", random_tensor(tb ? 5 : 4, tb ? 4 : 5, rng));
      expect_grads_ok(ps, [&] {
        return sum_all(matmul(param(ps, "a"), param(ps, "b"), ta != 0, tb != 0));
      });
    }
}

TEST(GradCheck, ElementwiseChain) {
  ParamSet ps;
  Rng rng(5);
  ps.add("x", random_tensor(3, 4, rng, 0.2, 1.5));  // keep relu inputs off the kink
  ps.add("y", random_tensor(3, 4, rng, 0.2, 1.5));
  expect_grads_ok(ps, [&] {
    NodePtr x = param(ps, "x");
    NodePtr y = param(ps, "y");
    return sum_all(mul(relu(x), tanh_elem(y)));
  });
  expect_grads_ok(ps, [&] {
    return sum_all(log_elem(add(sigmoid(param(ps, "x")), constant(Tensor2(3, 4, 0.1)))));
  });
}

TEST(GradCheck, SoftmaxCrossEntropyStyle) {
  ParamSet ps;
  Rng rng(9);
  ps.add("logits", random_tensor(4, 3, rng, -2.0, 2.0));
  Tensor2 mask(4, 3);  // one-hot rows: classes 2,0,1,2
  mask.at(0, 2) = mask.at(1, 0) = mask.at(2, 1) = mask.at(3, 2) = 1.0;
  expect_grads_ok(ps, [&] {
    NodePtr lp = log_elem(row_softmax(param(ps, "logits")));
    return scalar_scale(sum_all(mul(lp, constant(mask))), -0.25);
  });
}

TEST(GradCheck, StructureOps) {
  ParamSet ps;
  Rng rng(13);
  ps.add("a", random_tensor(4, 3, rng));
  ps.add("b", random_tensor(4, 2, rng));
  ps.add("row", random_tensor(1, 3, rng));
  expect_grads_ok(ps, [&] {
    NodePtr cat = concat_cols(broadcast_add_row(param(ps, "a"), param(ps, "row")),
                              param(ps, "b"));
    NodePtr sel = select_rows(cat, {0, 2, 2, 3});
    return sum_all(mul(mean_rows(sel), mean_rows(sel)));
  });
}

TEST(GradCheck, RowNormalizeAndCosineStyle) {
  ParamSet ps;
  Rng rng(17);
  ps.add("u", random_tensor(3, 4, rng, 0.5, 1.5));
  ps.add("v", random_tensor(3, 4, rng, 0.5, 1.5));
  expect_grads_ok(ps, [&] {
    NodePtr nu = row_l2_normalize(param(ps, "u"));
    NodePtr nv = row_l2_normalize(param(ps, "v"));
    return sum_all(mul(nu, nv));
  });
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamSet ps;
  ps.add("p", tensor_from({{1.0}}));
  NodePtr loss = sum_all(param(ps, "p"));  // gradient exactly 1
  evaluate(loss);
  backward(loss, ps);
  optimize_step(ps, 0.1);
  // bias-corrected first step is lr * g / (|g| + eps)
  EXPECT_NEAR(ps.value("p").at(0, 0), 0.9, 1e-8);
  EXPECT_EQ(ps.steps_taken(), 1);
  // gradients cleared after the step
  EXPECT_DOUBLE_EQ(ps.grad("p").at(0, 0), 0.0);
}

TEST(Adam, ConvergesOnQuadratic) {
  ParamSet ps;
  ps.add("p", tensor_from({{-4.0}}));
  for (int step = 0; step < 200; ++step) {
    NodePtr d = add(param(ps, "p"), constant(tensor_from({{-3.0}})));
    NodePtr loss = sum_all(mul(d, d));
    evaluate(loss);
    backward(loss, ps);
    optimize_step(ps, 0.1);
  }
  EXPECT_NEAR(ps.value("p").at(0, 0), 3.0, 1e-2);
}

TEST(ParamSet, BasicInvariants) {
  ParamSet ps;
  ps.add("b", Tensor2(1, 2, 0.5));
  ps.add("a", Tensor2(2, 2, 1.0));
  EXPECT_THROW(ps.add("a", Tensor2(1, 1)), Error);  // duplicates rejected
  EXPECT_THROW(ps.value("missing"), Error);
  EXPECT_EQ(ps.names(), (std::vector<std::string>{"a", "b"}));  // sorted
  EXPECT_EQ(ps.count(), 2u);
}

TEST(ParamSet, BytesHashTracksContent) {
  ParamSet a, b;
  a.add("w", tensor_from({{1.0, 2.0}}));
  b.add("w", tensor_from({{1.0, 2.0}}));
  EXPECT_EQ(params_bytes_hash(a), params_bytes_hash(b));
  b.value("w").at(0, 1) = 2.0000000001;
  EXPECT_NE(params_bytes_hash(a), params_bytes_hash(b));
  ParamSet c;
  c.add("w2", tensor_from({{1.0, 2.0}}));
  EXPECT_NE(params_bytes_hash(a), params_bytes_hash(c));  // name participates
}

TEST(CosineSim, HandValues) {
  EXPECT_NEAR(cosine_sim({1, 0}, {0, 1}), 0.0, 1e-15);
  EXPECT_NEAR(cosine_sim({2, 2, 2}, {5, 5, 5}), 1.0, 1e-15);
  EXPECT_NEAR(cosine_sim({1, 0}, {1, 1}), 0.70710678118654752, 1e-12);
  EXPECT_NEAR(cosine_sim({1, 2}, {-1, -2}), -1.0, 1e-15);
  EXPECT_THROW(cosine_sim({0, 0}, {1, 1}), Error);
  EXPECT_THROW(cosine_sim({1}, {1, 2}), Error);
}

TEST(Glorot, BoundsAndDeterminism) {
  Rng r1(21), r2(21);
  Tensor2 a = glorot_uniform(6, 4, r1);
  Tensor2 b = glorot_uniform(6, 4, r2);
  EXPECT_EQ(a.v, b.v);
  double limit = std::sqrt(6.0 / 10.0);
  for (double x : a.v) {
    EXPECT_GE(x, -limit);
    EXPECT_LE(x, limit);
  }
}

TEST(Rng, DeterministicStreams) {
  Rng a(99), b(99), c(100);
  for (int i = 0; i < 64; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  bool differs = false;
  Rng a2(99);
  for (int i = 0; i < 64; ++i) differs |= a2.next_u64() != c.next_u64();
  EXPECT_TRUE(differs);
}

TEST(Rng, UniformRangeAndMoments) {
  Rng rng(5);
  double sum = 0.0;
  for (int i = 0; i < 50000; ++i) {
    double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 50000, 0.5, 0.01);
}

TEST(Rng, GaussianMoments) {
  Rng rng(6);
  double s = 0.0, ss = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    double x = rng.gaussian();
    s += x;
    ss += x * x;
  }
  double mean = s / n;
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(ss / n - mean * mean, 1.0, 0.03);
}

TEST(Rng, LaplaceMomentsAndZeroScale) {
  Rng rng(7);
  EXPECT_EQ(rng.laplace(0.0), 0.0);
  EXPECT_THROW(rng.laplace(-1.0), Error);
  double s = 0.0, ss = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    double x = rng.laplace(0.5);
    s += x;
    ss += x * x;
  }
  double mean = s / n;
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(ss / n - mean * mean, 0.5, 0.05);  // variance 2 beta^2
}

TEST(Rng, BernoulliFrequency) {
  Rng rng(8);
  int hits = 0;
  for (int i = 0; i < 50000; ++i) hits += rng.bernoulli(0.3);
  EXPECT_NEAR(hits / 50000.0, 0.3, 0.01);
}

TEST(Rng, IntegerSamplers) {
  Rng rng(9);
  std::set<uint64_t> seen;
  for (int i = 0; i < 200; ++i) {
    uint64_t x = rng.uniform_int(7);
    ASSERT_LT(x, 7u);
    seen.insert(x);
  }
  EXPECT_EQ(seen.size(), 7u);  // all residues reached
  EXPECT_THROW(rng.uniform_int(0), Error);

  std::vector<int> k = rng.sample_without_replacement(10, 4);
  EXPECT_EQ(k.size(), 4u);
  EXPECT_EQ(std::set<int>(k.begin(), k.end()).size(), 4u);
  for (int x : k) {
    EXPECT_GE(x, 0);
    EXPECT_LT(x, 10);
  }
  EXPECT_TRUE(rng.sample_without_replacement(3, 0).empty());
  auto all = rng.sample_without_replacement(5, 5);
  EXPECT_EQ(std::set<int>(all.begin(), all.end()).size(), 5u);
  EXPECT_THROW(rng.sample_without_replacement(3, 4), Error);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng rng(10);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  auto orig = v;
  rng.shuffle(v);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(sorted, orig);
}

TEST(Seeds, DeriveSeedSeparatesRoles) {
  EXPECT_EQ(derive_seed(1, "data"), derive_seed(1, "data"));
  EXPECT_NE(derive_seed(1, "data"), derive_seed(1, "split"));
  EXPECT_NE(derive_seed(1, "data"), derive_seed(2, "data"));
  EXPECT_NE(fnv1a64("a"), fnv1a64("b"));
}
