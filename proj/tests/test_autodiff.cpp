#include <gtest/gtest.h>

#include <functional>
#include <random>

#include <jsgnn/autodiff.hpp>

using namespace jsgnn;
using namespace jsgnn::ad;

namespace {

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

// Analytic gradients of `build` at `params` against central differences.
GradCheck check(const Builder& build, const std::vector<Tensor>& params, double h = 1e-5) {
  Tape tape;
  std::vector<Var> leaves;
  for (const auto& p : params) leaves.push_back(tape.leaf(p));
  const Var loss = build(tape, leaves);
  tape.backward(loss);
  std::vector<Tensor> grads;
  for (const auto& l : leaves) grads.push_back(l.grad());
  auto eval = [&build](const std::vector<Tensor>& ps) {
    Tape t;
    std::vector<Var> ls;
    for (const auto& p : ps) ls.push_back(t.constant(p));
    return build(t, ls).scalar();
  };
  return finite_diff_check(eval, params, grads, h);
}

Tensor rnd(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(r, c);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = u(rng);
  return t;
}

}  // namespace

TEST(Tape, SquaredNormGradientIsExact) {
  Tape t;
  Tensor w(2, 3);
  w << 1, -2, 3, 0.5, 0, -4;
  const Var W = t.leaf(w);
  t.backward(sum(square(W)));
  EXPECT_EQ(W.grad(), Tensor(2.0 * w));
}

TEST(Tape, NonScalarLossRejected) {
  Tape t;
  const Var a = t.leaf(Tensor::Ones(2, 2));
  EXPECT_THROW(t.backward(a), ValidationError);
}

TEST(Tape, BackwardRunsOnce) {
  Tape t;
  const Var a = t.leaf(Tensor::Ones(1, 1));
  const Var l = square(a);
  t.backward(l);
  EXPECT_THROW(t.backward(l), ValidationError);
}

TEST(Tape, GradShapeMatchesValueAndUnusedLeafIsZero) {
  Tape t;
  const Var a = t.leaf(Tensor::Ones(3, 2));
  const Var unused = t.leaf(Tensor::Ones(4, 1));
  t.backward(sum(a));
  EXPECT_EQ(a.grad().rows(), 3);
  EXPECT_EQ(a.grad().cols(), 2);
  EXPECT_EQ(unused.grad(), Tensor::Zero(4, 1));
}

TEST(Tape, ShapeMismatchRejected) {
  Tape t;
  const Var a = t.leaf(Tensor::Ones(2, 3));
  const Var b = t.leaf(Tensor::Ones(3, 2));
  EXPECT_THROW(add(a, b), ValidationError);
  EXPECT_THROW(matmul(a, a), ValidationError);
}

TEST(Primitives, TanhSlopeAtZero) {
  Tape t;
  const Var x = t.leaf(Tensor::Zero(1, 1));
  t.backward(sum(ad::tanh(x)));
  EXPECT_EQ(x.grad()(0, 0), 1.0);
}

TEST(Primitives, SingletonSoftmax) {
  Tape t;
  const Var e = t.leaf(Tensor::Constant(1, 1, 3.7));
  const Var a = segment_softmax(e, {0}, 1);
  EXPECT_EQ(a.value()(0, 0), 1.0);
  t.backward(sum(scale(a, 5.0)));
  EXPECT_EQ(e.grad()(0, 0), 0.0);
}

TEST(Primitives, SegmentSoftmaxSumsToOne) {
  std::mt19937_64 rng(1);
  Tape t;
  const std::vector<std::size_t> seg{0, 0, 1, 2, 2, 2, 1};
  const Var a = segment_softmax(t.constant(rnd(7, 1, rng, -20, 20)), seg, 3);
  double s[3] = {0, 0, 0};
  for (std::size_t i = 0; i < seg.size(); ++i) s[seg[i]] += a.value()(static_cast<Eigen::Index>(i), 0);
  for (double v : s) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Primitives, SubgradientsAtZero) {
  Tape t;
  const Var x = t.leaf(Tensor::Zero(1, 3));
  t.backward(add(add(sum(ad::sqrt(x)), sum(ad::abs(x))), sum(ad::pow(x, 0.5))));
  EXPECT_EQ(x.grad(), Tensor::Zero(1, 3));
}

TEST(Primitives, SqrtRatiosAreSmoothAtZero) {
  Tape t;
  const Var s = t.leaf(Tensor::Zero(2, 1));
  const Var f = tanh_sqrt_ratio(s);
  const Var g = atanh_sqrt_ratio(s);
  EXPECT_EQ(f.value()(0, 0), 1.0);
  EXPECT_EQ(g.value()(0, 0), 1.0);
  t.backward(add(sum(f), sum(g)));
  EXPECT_NEAR(s.grad()(0, 0), -1.0 / 3.0 + 1.0 / 3.0, 1e-15);
}

TEST(Primitives, AtanhClampsAtOne) {
  Tape t;
  const Var x = t.leaf(Tensor::Constant(1, 1, 1.5));
  const Var y = ad::atanh(x);
  EXPECT_TRUE(std::isfinite(y.scalar()));
  t.backward(y);
  EXPECT_EQ(x.grad()(0, 0), 0.0);
}

TEST(FiniteDifferences, StepBoundsEnforced) {
  auto f = [](const std::vector<Tensor>&) { return 0.0; };
  EXPECT_THROW(finite_diff_check(f, {Tensor::Zero(1, 1)}, {Tensor::Zero(1, 1)}, 1e-3), ValidationError);
  EXPECT_THROW(finite_diff_check(f, {Tensor::Zero(1, 1)}, {Tensor::Zero(1, 1)}, 1e-7), ValidationError);
}

// Each composite below is checked against central differences on random inputs.
struct CompositeCase {
  const char* name;
  Builder build;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
  double lo = -1.0, hi = 1.0;
};

class Composite : public ::testing::TestWithParam<int> {};

std::vector<CompositeCase> composite_cases() {
  return {
      {"elementwise", [](Tape&, const std::vector<Var>& v) {
         return sum(mul(ad::tanh(v[0]), ad::exp(scale(v[1], 0.5))));
       }, {{3, 2}, {3, 2}}},
      {"broadcast_row", [](Tape&, const std::vector<Var>& v) {
         return mean(square(add(v[0], v[1])));
       }, {{4, 3}, {1, 3}}},
      {"broadcast_col_div", [](Tape&, const std::vector<Var>& v) {
         return sum(div(v[0], shift(square(v[1]), 1.0)));
       }, {{4, 3}, {4, 1}}},
      {"matmul_transpose", [](Tape&, const std::vector<Var>& v) {
         return sum(ad::tanh(matmul(v[0], transpose(v[1]))));
       }, {{3, 4}, {2, 4}}},
      {"log_sigmoid_elu_leaky", [](Tape&, const std::vector<Var>& v) {
         return sum(add(log_sigmoid(scale(v[0], 3.0)), add(elu(v[0]), leaky_relu(v[1], 0.2))));
       }, {{2, 5}, {2, 5}}},
      {"sigmoid_pow_log", [](Tape&, const std::vector<Var>& v) {
         return sum(ad::log(shift(ad::pow(sigmoid(v[0]), 1.7), 0.1)));
       }, {{3, 3}}},
      {"rows_and_concat", [](Tape&, const std::vector<Var>& v) {
         const Var c = concat_cols(v[0], v[1]);
         return sum(mul(row_sq_norm(c), row_dot(v[0], v[0])));
       }, {{3, 2}, {3, 4}}},
      {"gather_segment", [](Tape&, const std::vector<Var>& v) {
         const Var g = gather_rows(v[0], {2, 0, 0, 1, 2});
         return sum(square(segment_sum(g, {1, 1, 0, 0, 1}, 2)));
       }, {{3, 2}}},
      {"segment_softmax", [](Tape&, const std::vector<Var>& v) {
         const Var a = segment_softmax(v[0], {0, 0, 1, 1, 1, 2}, 3);
         return sum(mul(a, v[1]));
       }, {{6, 1}, {6, 1}}},
      {"log_softmax_pick", [](Tape&, const std::vector<Var>& v) {
         return mean(pick(log_softmax_rows(v[0]), {0, 1, 2}, {1, 0, 3}));
       }, {{3, 4}}},
      {"sqrt_ratios", [](Tape&, const std::vector<Var>& v) {
         const Var s = scale(row_sq_norm(v[0]), 0.2);
         return sum(add(tanh_sqrt_ratio(s), atanh_sqrt_ratio(s)));
       }, {{4, 3}}},
      {"atanh_abs_clamp_slice", [](Tape&, const std::vector<Var>& v) {
         return sum(add(ad::atanh(scale(v[0], 0.5)), ad::abs(clamp(slice_rows(v[1], 1, 2), -0.5, 0.5))));
       }, {{2, 2}, {4, 2}}},
  };
}

TEST_P(Composite, MatchesCentralDifferences) {
  const auto cases = composite_cases();
  const auto& cc = cases[static_cast<std::size_t>(GetParam())];
  std::mt19937_64 rng(100 + GetParam());
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Tensor> params;
    for (auto [r, c] : cc.shapes) params.push_back(rnd(r, c, rng, cc.lo, cc.hi));
    const auto res = check(cc.build, params);
    EXPECT_LT(res.max_rel_error, 1e-6) << cc.name << " trial " << trial;
  }
}

INSTANTIATE_TEST_SUITE_P(Autodiff, Composite, ::testing::Range(0, 12));
