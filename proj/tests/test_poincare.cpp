#include <gtest/gtest.h>

#include <random>

#include <jsgnn/poincare.hpp>

using namespace jsgnn::poincare;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

// Uniform direction, radius so that sqrt(c)|x| = r.
Vector random_ball_coords(std::mt19937_64& rng, Eigen::Index dim, double c, double max_scaled_norm) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v(i) = g(rng);
  return v.normalized() * (max_scaled_norm * u(rng) / std::sqrt(c));
}

Vector random_tangent(std::mt19937_64& rng, Eigen::Index dim, double max_norm) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v(i) = g(rng);
  return v.normalized() * (max_norm * u(rng));
}

bool valid(const BallPoint& p) { return p.curvature().value() * p.coords().squaredNorm() < 1.0 - kMargin; }

}  // namespace

TEST(Curvature, RejectsNonPositive) {
  EXPECT_THROW(Curvature(0.0), jsgnn::ValidationError);
  EXPECT_THROW(Curvature(-1.0), jsgnn::ValidationError);
  EXPECT_DOUBLE_EQ(Curvature(4.0).radius(), 0.5);
}

TEST(BallPoint, RejectsOutsideMargin) {
  EXPECT_THROW(BallPoint(vec({1.0, 0.0}), Curvature(1.0)), jsgnn::ValidationError);
  EXPECT_THROW(BallPoint(vec({0.6, 0.0}), Curvature(4.0)), jsgnn::ValidationError);
  EXPECT_NO_THROW(BallPoint(vec({0.4, 0.0}), Curvature(4.0)));
}

TEST(MobiusAdd, IdentityAndInverse) {
  const Curvature c(1.0);
  const BallPoint x(vec({0.3, -0.2, 0.1}), c);
  const auto zero = BallPoint::origin(3, c);
  EXPECT_LT((mobius_add(x, zero).coords() - x.coords()).norm(), 1e-15);
  EXPECT_LT(mobius_add(mobius_neg(x), x).coords().norm(), 1e-15);
}

TEST(MobiusAdd, HandValue) {
  const Curvature c(1.0);
  const BallPoint x(vec({-0.5, 0.0}), c);
  const auto r = mobius_add(x, x);
  EXPECT_NEAR(r.coords()(0), -0.8, 1e-15);
  EXPECT_EQ(r.coords()(1), 0.0);
}

TEST(MobiusAdd, MismatchRejected) {
  EXPECT_THROW(mobius_add(BallPoint::origin(2, Curvature(1.0)), BallPoint::origin(3, Curvature(1.0))),
               jsgnn::ValidationError);
  EXPECT_THROW(mobius_add(BallPoint::origin(2, Curvature(1.0)), BallPoint::origin(2, Curvature(2.0))),
               jsgnn::ValidationError);
}

TEST(MobiusAdd, LeftCancellation) {
  std::mt19937_64 rng(1);
  for (double c : {0.5, 1.0, 2.0}) {
    for (int i = 0; i < 300; ++i) {
      const BallPoint x(random_ball_coords(rng, 4, c, 0.9), Curvature(c));
      const BallPoint y(random_ball_coords(rng, 4, c, 0.9), Curvature(c));
      const auto back = mobius_add(x, mobius_add(mobius_neg(x), y));
      EXPECT_LT((back.coords() - y.coords()).norm(), 1e-8);
    }
  }
}

TEST(ExpLogOrigin, ZeroIsExact) {
  const Curvature c(1.0);
  EXPECT_EQ(exp_origin(Vector::Zero(3), c).coords(), Vector::Zero(3));
  EXPECT_EQ(log_origin(BallPoint::origin(3, c)), Vector::Zero(3));
}

TEST(ExpLogOrigin, HandValue) {
  const auto y = exp_origin(vec({0.6, 0.0}), Curvature(1.0));
  EXPECT_NEAR(y.coords()(0), std::tanh(0.6), 1e-15);
  EXPECT_NEAR(y.coords()(0), 0.53705, 1e-5);
}

TEST(ExpLogOrigin, RoundTripTangent) {
  std::mt19937_64 rng(2);
  for (double c : {0.5, 1.0, 2.0})
    for (int i = 0; i < 500; ++i) {
      const Vector v = random_tangent(rng, 5, 3.0);
      EXPECT_LT((log_origin(exp_origin(v, Curvature(c))) - v).norm(), 1e-8);
    }
}

TEST(ExpLogOrigin, RoundTripBall) {
  std::mt19937_64 rng(3);
  for (double c : {0.5, 1.0, 2.0})
    for (int i = 0; i < 500; ++i) {
      const BallPoint y(random_ball_coords(rng, 5, c, 0.95), Curvature(c));
      EXPECT_LT((exp_origin(log_origin(y), Curvature(c)).coords() - y.coords()).norm(), 1e-8);
    }
}

TEST(ExpLogAt, ZeroVectorsAndSelf) {
  const BallPoint x(vec({0.2, 0.4}), Curvature(1.0));
  EXPECT_EQ(exp_at(x, Vector::Zero(2)).coords(), x.coords());
  EXPECT_EQ(log_at(x, x), Vector::Zero(2));
}

TEST(ExpLogAt, OriginReducesToOriginMaps) {
  std::mt19937_64 rng(4);
  for (double c : {0.5, 1.0, 2.0}) {
    const auto o = BallPoint::origin(3, Curvature(c));
    for (int i = 0; i < 100; ++i) {
      const Vector v = random_tangent(rng, 3, 2.0);
      EXPECT_LT((exp_at(o, v).coords() - exp_origin(v, Curvature(c)).coords()).norm(), 1e-14);
      const BallPoint y(random_ball_coords(rng, 3, c, 0.9), Curvature(c));
      EXPECT_LT((log_at(o, y) - log_origin(y)).norm(), 1e-12);
    }
  }
}

TEST(ExpLogAt, RoundTripTangentAtRandomBase) {
  std::mt19937_64 rng(5);
  for (double c : {0.5, 1.0, 2.0})
    for (int i = 0; i < 500; ++i) {
      const BallPoint x(random_ball_coords(rng, 4, c, 0.5), Curvature(c));
      const Vector v = random_tangent(rng, 4, 1.0);
      EXPECT_LT((log_at(x, exp_at(x, v)) - v).norm(), 1e-8);
    }
}

TEST(ExpLogAt, RoundTripBallAtRandomBase) {
  std::mt19937_64 rng(6);
  for (double c : {0.5, 1.0, 2.0})
    for (int i = 0; i < 500; ++i) {
      const BallPoint x(random_ball_coords(rng, 4, c, 0.95), Curvature(c));
      const BallPoint y(random_ball_coords(rng, 4, c, 0.95), Curvature(c));
      EXPECT_LT((exp_at(x, log_at(x, y)).coords() - y.coords()).norm(), 1e-8);
    }
}

TEST(MobiusMatvec, IdentityOriginAndComposition) {
  std::mt19937_64 rng(7);
  const Curvature c(1.5);
  const BallPoint x(random_ball_coords(rng, 3, 1.5, 0.8), c);
  EXPECT_LT((mobius_matvec(Matrix::Identity(3, 3), x).coords() - x.coords()).norm(), 1e-10);
  EXPECT_EQ(mobius_matvec(Matrix::Random(2, 3), BallPoint::origin(3, c)).coords(), Vector::Zero(2));
  EXPECT_EQ(mobius_matvec(Matrix::Zero(2, 3), x).coords(), Vector::Zero(2));
  for (int i = 0; i < 50; ++i) {
    const Matrix w = Matrix::Random(2, 3);
    const BallPoint y(random_ball_coords(rng, 3, 1.5, 0.9), c);
    const Vector expected = exp_origin(w * log_origin(y), c).coords();
    EXPECT_LT((mobius_matvec(w, y).coords() - expected).norm(), 1e-15);
  }
  EXPECT_THROW(mobius_matvec(Matrix::Identity(2, 2), x), jsgnn::ValidationError);
}

TEST(Distance, WorkedPair) {
  const Curvature c(1.0);
  const double d = hyp_distance(BallPoint(vec({0.5, 0.0}), c), BallPoint(vec({-0.5, 0.0}), c));
  EXPECT_NEAR(d, 2.0 * std::atanh(0.8), 1e-10);
  EXPECT_NEAR(d, 2.19722, 1e-5);
}

TEST(Distance, SelfSymmetryTriangle) {
  std::mt19937_64 rng(8);
  for (double c : {0.5, 1.0, 2.0})
    for (int i = 0; i < 300; ++i) {
      const BallPoint x(random_ball_coords(rng, 3, c, 0.95), Curvature(c));
      const BallPoint y(random_ball_coords(rng, 3, c, 0.95), Curvature(c));
      const BallPoint z(random_ball_coords(rng, 3, c, 0.95), Curvature(c));
      EXPECT_EQ(hyp_distance(x, x), 0.0);
      EXPECT_NEAR(hyp_distance(x, y), hyp_distance(y, x), 1e-12);
      EXPECT_GT(hyp_distance(x, y), 0.0);
      EXPECT_LE(hyp_distance(x, z), hyp_distance(x, y) + hyp_distance(y, z) + 1e-9);
    }
}

TEST(Distance, FlatLimit) {
  const Vector a = vec({0.3, -0.1}), b = vec({-0.2, 0.25});
  for (double c : {1e-4, 1e-6}) {
    const double d = hyp_distance(BallPoint(a, Curvature(c)), BallPoint(b, Curvature(c)));
    const double flat = 2.0 * (a - b).norm();
    EXPECT_LT(std::abs(d - flat) / flat, 1e-2);
  }
}

TEST(Projection, Contract) {
  const Curvature c(1.0);
  const Vector inside = vec({0.1, 0.2});
  EXPECT_EQ(project_to_ball(inside, c).coords(), inside);
  EXPECT_EQ(project_to_ball(Vector::Zero(2), c).coords(), Vector::Zero(2));
  const auto far = project_to_ball(vec({6.0, 8.0}), c);
  EXPECT_NEAR(far.coords().norm(), 1.0 - kMargin, 1e-15);
  const auto far4 = project_to_ball(vec({6.0, 8.0}), Curvature(4.0));
  EXPECT_NEAR(far4.coords().norm(), (1.0 - kMargin) / 2.0, 1e-15);
}

TEST(Fuzz, OutputsStayInsideBall) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> scale(-12.0, 12.0);
  for (double c : {1e-3, 0.5, 1.0, 2.0, 50.0}) {
    const Curvature cv(c);
    for (int i = 0; i < 300; ++i) {
      Vector big = Vector::Random(4) * std::pow(10.0, scale(rng) / 4.0);
      const auto x = project_to_ball(big, cv);
      const auto y = exp_origin(Vector::Random(4) * std::pow(10.0, scale(rng) / 4.0), cv);
      EXPECT_TRUE(valid(x));
      EXPECT_TRUE(valid(y));
      EXPECT_TRUE(valid(mobius_add(x, y)));
      EXPECT_TRUE(valid(exp_at(x, Vector::Random(4) * 100.0)));
      EXPECT_TRUE(valid(mobius_matvec(Matrix::Random(3, 4) * 50.0, y)));
      EXPECT_TRUE(std::isfinite(hyp_distance(x, y)));
      EXPECT_TRUE(log_at(x, y).allFinite());
    }
  }
}
