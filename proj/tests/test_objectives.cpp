#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "support.hpp"

using namespace jsgnn;
using namespace testing_support;

namespace {

// Optimal transport between equal-size uniform empirical measures, by trying
// every permutation (the optimum over couplings is attained at a vertex).
double brute_force_ot(const std::vector<double>& a, const std::vector<double>& b, double p) {
  std::vector<std::size_t> perm(b.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::pow(std::abs(a[i] - b[perm[i]]), p);
    best = std::min(best, acc / static_cast<double>(a.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::pow(best, 1.0 / p);
}

std::vector<double> random_samples(std::size_t n, std::mt19937_64& rng, double lo = -3.0, double hi = 3.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

Var column(Tape& t, const std::vector<double>& v) {
  return t.leaf(Eigen::Map<const Tensor>(v.data(), static_cast<Eigen::Index>(v.size()), 1));
}

}  // namespace

TEST(Wasserstein, WorkedValues) {
  EXPECT_EQ(wasserstein_1d({0.3, -1.0, 2.0}, {2.0, 0.3, -1.0}), 0.0);
  for (double p : {1.0, 2.0, 3.5}) EXPECT_NEAR(wasserstein_1d({0.0}, {3.0}, p), 3.0, 1e-12);
  EXPECT_NEAR(wasserstein_1d({0.0, 1.0}, {1.0, 2.0}, 1.0), 1.0, 1e-15);
  EXPECT_NEAR(wasserstein_1d({0.0, 1.0}, {1.0, 2.0}, 2.0), 1.0, 1e-15);
}

TEST(Wasserstein, InvalidInputs) {
  EXPECT_THROW(wasserstein_1d(std::vector<double>{}, {1.0}), ValidationError);
  EXPECT_THROW(wasserstein_1d({1.0}, std::vector<double>{}), ValidationError);
  EXPECT_THROW(wasserstein_1d({1.0}, {1.0}, 0.5), ValidationError);
  Tape t;
  EXPECT_THROW(wasserstein_1d(column(t, {1.0, 2.0}), {1.0}), ValidationError);
}

TEST(Wasserstein, MatchesExhaustiveCouplingSearch) {
  std::mt19937_64 rng(1);
  for (std::size_t n = 1; n <= 6; ++n)
    for (double p : {1.0, 2.0, 3.0})
      for (int trial = 0; trial < 10; ++trial) {
        const auto a = random_samples(n, rng), b = random_samples(n, rng);
        EXPECT_NEAR(wasserstein_1d(a, b, p), brute_force_ot(a, b, p), 1e-9) << n << " " << p;
        Tape t;
        EXPECT_NEAR(wasserstein_1d(column(t, a), b, p).scalar(), brute_force_ot(a, b, p), 1e-9);
      }
}

TEST(Wasserstein, SymmetryTranslationAndZeroIffEqual) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = random_samples(7, rng), b = random_samples(7, rng);
    const double w = wasserstein_1d(a, b);
    EXPECT_NEAR(w, wasserstein_1d(b, a), 1e-14);
    EXPECT_GT(w, 0.0);
    auto a2 = a, b2 = b;
    for (auto& x : a2) x += 4.25;
    for (auto& x : b2) x += 4.25;
    EXPECT_NEAR(wasserstein_1d(a2, b2), w, 1e-12);
    auto shuffled = a;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_EQ(wasserstein_1d(a, shuffled), 0.0);
  }
}

TEST(Wasserstein, UnequalSizesUseMidpointQuantiles) {
  // {0, 1} has midpoint quantile function 0 below 1/4, 1 above 3/4, linear between.
  // Against {0.5} both are compared at u = 1/4, 3/4: values 0 and 1 vs 0.5 and 0.5.
  EXPECT_NEAR(wasserstein_1d({0.0, 1.0}, {0.5}, 1.0), 0.5, 1e-15);
  // Six midpoint quantiles of {0, 1, 4} are 0, 1/4, 3/4, 7/4, 13/4, 4, so the
  // gaps to {0, 0, 1, 1, 4, 4} are 0, 1/4, 1/4, 3/4, 3/4, 0.
  EXPECT_NEAR(wasserstein_1d({0.0, 1.0, 4.0}, {0.0, 0.0, 1.0, 1.0, 4.0, 4.0}), std::sqrt(1.25 / 6.0), 1e-15);
}

TEST(Wasserstein, UniformReference) {
  EXPECT_EQ(uniform_reference(4), (std::vector<double>{0.125, 0.375, 0.625, 0.875}));
  // A constant 1/2 sample is sqrt(1/12) away from Unif[0,1] in the continuum limit.
  EXPECT_NEAR(wasserstein_1d(std::vector<double>(2000, 0.5), uniform_reference(2000)), std::sqrt(1.0 / 12.0), 1e-6);
}

TEST(Wasserstein, GradientFlowsThroughTheSort) {
  std::mt19937_64 rng(3);
  for (double p : {1.5, 2.0, 3.0})
    for (int trial = 0; trial < 5; ++trial) {
      const auto b = random_samples(6, rng);
      const auto build = [&](Tape&, const std::vector<Var>& v) { return wasserstein_1d(v[0], b, p); };
      const auto a = random_samples(6, rng);
      EXPECT_LT(gradient_check(build, {Eigen::Map<const Tensor>(a.data(), 6, 1)}).max_rel_error, 1e-6);
    }
}

TEST(NormalizeDelta, Contract) {
  EXPECT_EQ(normalize_delta(std::vector<double>{0, 0, 0}), (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(normalize_delta(std::vector<double>{0, 1, 2}), (std::vector<double>{0, 0.5, 1}));
  EXPECT_THROW(normalize_delta(std::vector<double>{}), ValidationError);
}

TEST(NormalizeDelta, ReferenceGraphTakesThreeValues) {
  const auto g = reference_combined_graph();
  const auto mu = normalize_delta(local_profile(g, 2, DeltaMode::inf));
  const auto prof = local_profile(g, 2, DeltaMode::inf);
  const double mx = *std::max_element(prof.delta.begin(), prof.delta.end());
  ASSERT_GT(mx, 0.0);
  for (std::size_t v = 0; v < mu.size(); ++v) {
    EXPECT_TRUE(mu[v] == 0.0 || mu[v] == 0.5 || mu[v] == 1.0) << v << " " << mu[v];
    EXPECT_EQ(mu[v], prof.delta[v] / mx);
  }
}

TEST(NonUniformity, WorkedValues) {
  EXPECT_DOUBLE_EQ(non_uniformity_loss(std::vector<double>(5, 0.5), std::vector<double>(5, 0.5)), -0.5);
  EXPECT_DOUBLE_EQ(non_uniformity_loss({1, 0, 1, 0}, {0, 1, 0, 1}), -1.0);
  EXPECT_NEAR(non_uniformity_loss({0.8, 0.8}, {0.2, 0.2}), -0.68, 1e-15);
  EXPECT_THROW(non_uniformity_loss({0.5}, {0.5, 0.5}), ValidationError);
}

TEST(NonUniformity, RangeAndGradient) {
  std::mt19937_64 rng(4);
  const auto beta = random_samples(9, rng, 0.0, 1.0);
  Tape t;
  const Var br = column(t, beta);
  const Var loss = non_uniformity_loss(br, 1.0 - br);
  EXPECT_GE(loss.scalar(), -1.0);
  EXPECT_LE(loss.scalar(), -0.5);
  t.backward(loss);
  for (std::size_t v = 0; v < beta.size(); ++v)
    EXPECT_NEAR(br.grad()(static_cast<Eigen::Index>(v), 0), -(4.0 * beta[v] - 2.0) / 9.0, 1e-14);

  Tape u;
  const Var half = column(u, std::vector<double>(4, 0.5));
  u.backward(non_uniformity_loss(half, 1.0 - half));
  EXPECT_EQ(half.grad(), Tensor::Zero(4, 1));

  const auto build = [](Tape&, const std::vector<Var>& v) { return non_uniformity_loss(v[0], 1.0 - v[0]); };
  EXPECT_LT(gradient_check(build, {Eigen::Map<const Tensor>(beta.data(), 9, 1)}).max_rel_error, 1e-6);
}

TEST(CrossEntropy, SaturatedAndUniform) {
  Tape t;
  Tensor sat = Tensor::Zero(3, 4);
  sat(0, 1) = sat(1, 3) = sat(2, 0) = 50.0;
  EXPECT_LT(cross_entropy_nc(t.constant(sat), {1, 3, 0}, {0, 1, 2}).scalar(), 1e-20);
  EXPECT_NEAR(cross_entropy_nc(t.constant(Tensor::Zero(3, 4)), {1, 3, 0}, {0, 2}).scalar(), std::log(4.0), 1e-15);
}

TEST(CrossEntropy, HandComputedTwoNodes) {
  Tape t;
  Tensor logits(3, 3);
  logits << 1, 2, 0, 0, 0, 3, 9, 9, 9;
  const double l0 = -(2.0 - std::log(std::exp(1.0) + std::exp(2.0) + 1.0));
  const double l1 = -(3.0 - std::log(2.0 + std::exp(3.0)));
  // Node 2 is outside the mask and must not contribute.
  EXPECT_NEAR(cross_entropy_nc(t.constant(logits), {1, 2, 0}, {0, 1}).scalar(), (l0 + l1) / 2.0, 1e-14);
}

TEST(CrossEntropy, Errors) {
  Tape t;
  const Var z = t.constant(Tensor::Zero(2, 2));
  EXPECT_THROW(cross_entropy_nc(z, {0, 1}, {}), ValidationError);
  EXPECT_THROW(cross_entropy_nc(z, {0, 2}, {1}), ValidationError);
  EXPECT_THROW(cross_entropy_nc(z, {0}, {1}), ValidationError);
}

TEST(FermiDirac, WorkedValuesAndMonotonicity) {
  EXPECT_DOUBLE_EQ(fermi_dirac_prob(2.0), 0.5);
  EXPECT_NEAR(fermi_dirac_prob(0.0), 1.0 / (std::exp(-2.0) + 1.0), 1e-15);
  EXPECT_NEAR(fermi_dirac_prob(0.0), 0.88080, 1e-5);
  EXPECT_LT(fermi_dirac_prob(60.0), 1e-25);
  double prev = 1.0;
  for (double d = 0.0; d <= 30.0; d += 0.05) {
    const double p = fermi_dirac_prob(d, {1.5, 0.7});
    EXPECT_LT(p, prev);
    EXPECT_GT(p, 0.0);
    prev = p;
  }
  EXPECT_THROW(fermi_dirac_prob(1.0, {0.0, 1.0}), ValidationError);
  EXPECT_THROW(fermi_dirac_prob(1.0, {1.0, -1.0}), ValidationError);
}

TEST(LinkLoss, WorkedValues) {
  Tape t;
  // Row 0 and 1 coincide, row 2 is at distance 2 from both, row 3 is far away.
  Tensor z(4, 2);
  z << 0, 0, 0, 0, 2, 0, 100, 0;
  const Var zv = t.constant(z);
  EXPECT_NEAR(lp_loss(zv, {{0, 2}}, {{1, 2}}).scalar(), std::log(2.0), 1e-15);
  const double eps = fermi_dirac_prob(100.0);
  EXPECT_NEAR(lp_loss(zv, {{0, 1}}, {{0, 3}}).scalar(), -(std::log(0.8807970779778823) + std::log1p(-eps)) / 2.0,
              1e-12);
  EXPECT_THROW(lp_loss(zv, {}, {{0, 3}}), ValidationError);
  EXPECT_THROW(lp_loss(zv, {{0, 1}}, {}), ValidationError);
}

TEST(LinkLoss, ScoresMatchDecoderAndGradientsCheck) {
  std::mt19937_64 rng(5);
  const Tensor z = random_tensor(6, 3, rng, -2, 2);
  const std::vector<NodePair> pos{{0, 1}, {2, 3}, {4, 5}}, neg{{0, 5}, {1, 3}};
  const auto s = edge_scores(z, pos);
  for (std::size_t i = 0; i < pos.size(); ++i)
    EXPECT_DOUBLE_EQ(s[i], fermi_dirac_prob((z.row(static_cast<Eigen::Index>(pos[i].first)) -
                                             z.row(static_cast<Eigen::Index>(pos[i].second)))
                                                .norm()));
  const auto build = [&](Tape&, const std::vector<Var>& v) { return lp_loss(v[0], pos, neg, {1.5, 0.8}); };
  EXPECT_LT(gradient_check(build, {z}).max_rel_error, 1e-6);
}

TEST(OverallLoss, HandCase) {
  Tape t;
  const Var task = t.scalar_constant(1.0);
  const Var br = t.constant(Tensor::Constant(4, 1, 0.5));
  const std::vector<double> mu{0.25, 0.25, 0.75, 0.75};
  const auto terms = overall_loss(task, {br}, {1.0 - br}, mu, {0.1, 0.2});
  EXPECT_DOUBLE_EQ(terms.nu.scalar(), -0.5);
  EXPECT_DOUBLE_EQ(terms.align.scalar(), 0.25);
  EXPECT_NEAR(terms.total.scalar(), 1.0, 1e-15);
}

TEST(OverallLoss, ZeroWeightsGiveTaskLossExactly) {
  std::mt19937_64 rng(6);
  Tape t;
  const Var task = t.scalar_constant(0.7364);
  const Var b1 = t.constant(random_tensor(5, 1, rng, 0, 1)), b2 = t.constant(random_tensor(5, 1, rng, 0, 1));
  const auto terms = overall_loss(task, {b1, b2}, {1.0 - b1, 1.0 - b2}, random_samples(5, rng, 0, 1), {});
  EXPECT_EQ(terms.total.scalar(), 0.7364);
}

TEST(OverallLoss, MatchingDistributionHasZeroAlignment) {
  Tape t;
  const std::vector<double> mu{0.0, 0.5, 1.0, 0.5};
  const Var br = t.constant(Eigen::Map<const Tensor>(std::vector<double>{1.0, 0.5, 0.5, 0.0}.data(), 4, 1));
  EXPECT_EQ(overall_loss(t.scalar_constant(0.0), {br}, {1.0 - br}, mu, {0.0, 1.0}).align.scalar(), 0.0);
}

TEST(OverallLoss, LayerAveraging) {
  Tape t;
  const Var a = t.constant(Tensor::Constant(2, 1, 0.5));
  const Var b = t.constant(Tensor::Constant(2, 1, 1.0));
  const std::vector<double> mu{0.5, 0.5};
  const auto terms = overall_loss(t.scalar_constant(0.0), {a, b}, {1.0 - a, 1.0 - b}, mu, {1.0, 1.0});
  EXPECT_DOUBLE_EQ(terms.nu.scalar(), -0.75);
  EXPECT_DOUBLE_EQ(terms.align.scalar(), 0.25);
}

TEST(OverallLoss, ComparisonModes) {
  Tape t;
  const std::vector<double> mu{0.0, 1.0};
  const Var br = t.constant(Eigen::Map<const Tensor>(std::vector<double>{1.0, 0.0}.data(), 2, 1));
  // Same distribution, opposite assignment: distribution mode sees no gap.
  LossWeights w{0.0, 1.0, 2.0, ComparisonMode::distribution};
  EXPECT_EQ(alignment_loss(br, mu, w).scalar(), 0.0);
  w.mode = ComparisonMode::pairwise;
  EXPECT_DOUBLE_EQ(alignment_loss(br, mu, w).scalar(), 1.0);
  w.mode = ComparisonMode::mean;
  EXPECT_EQ(alignment_loss(br, mu, w).scalar(), 0.0);
  const Var shifted = t.constant(Tensor::Constant(2, 1, 0.8));
  EXPECT_NEAR(alignment_loss(shifted, mu, w).scalar(), 0.09, 1e-15);
  for (auto m : {ComparisonMode::distribution, ComparisonMode::pairwise, ComparisonMode::mean})
    EXPECT_EQ(comparison_mode_from_string(to_string(m)), m);
  EXPECT_THROW(comparison_mode_from_string("median"), ValidationError);
}

TEST(OverallLoss, Errors) {
  Tape t;
  const Var br = t.constant(Tensor::Constant(3, 1, 0.5));
  const Var task = t.scalar_constant(0.0);
  EXPECT_THROW(overall_loss(task, {br}, {1.0 - br}, {0.5, 0.5}, {}), ValidationError);
  EXPECT_THROW(overall_loss(task, {}, {}, {0.5}, {}), ValidationError);
  EXPECT_THROW(overall_loss(task, {br}, {1.0 - br}, {0.5, 0.5, 0.5}, {-0.1, 0.0}), ValidationError);
  EXPECT_THROW(overall_loss(task, {br}, {1.0 - br}, {0.5, 0.5, 0.5}, {0.0, 0.0, 0.5}), ValidationError);
}

TEST(OverallLoss, GradientCheckAllModes) {
  std::mt19937_64 rng(7);
  const auto mu = normalize_delta(random_samples(8, rng, 0, 2));
  for (auto mode : {ComparisonMode::distribution, ComparisonMode::pairwise, ComparisonMode::mean}) {
    const auto build = [&](Tape&, const std::vector<Var>& v) {
      const Var b1 = ad::sigmoid(v[0]), b2 = ad::sigmoid(v[1]);
      return overall_loss(ad::sum(ad::square(v[0])), {b1, b2}, {1.0 - b1, 1.0 - b2}, mu, {0.3, 0.7, 2.0, mode})
          .total;
    };
    EXPECT_LT(gradient_check(build, {random_tensor(8, 1, rng, -2, 2), random_tensor(8, 1, rng, -2, 2)}).max_rel_error,
              1e-6)
        << to_string(mode);
  }
}
