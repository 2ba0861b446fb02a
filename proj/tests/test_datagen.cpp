#include <gtest/gtest.h>

#include <Eigen/Cholesky>

#include "colreg/datagen.hpp"

using namespace colreg;

namespace {

double corr(const Vector& a, const Vector& b) {
  const Vector ca = a.array() - a.mean(), cb = b.array() - b.mean();
  return ca.dot(cb) / std::sqrt(ca.squaredNorm() * cb.squaredNorm());
}

// Residual of v after least squares on [1 | x].
Vector residual(const Matrix& x, const Vector& v) {
  Matrix d(x.rows(), x.cols() + 1);
  d << Matrix::Ones(x.rows(), 1), x;
  const Vector beta = (d.transpose() * d).ldlt().solve(d.transpose() * v);
  return v - d * beta;
}

bool same_split(const Split& a, const Split& b) {
  return a.x1 == b.x1 && a.x2 == b.x2 && a.x3 == b.x3 && a.y == b.y && a.latents.z1 == b.latents.z1 &&
         a.latents.z2 == b.latents.z2 && a.latents.y == b.latents.y && a.latents.eps == b.latents.eps;
}

bool same_dataset(const SimDataset& a, const SimDataset& b) {
  return same_split(a.train, b.train) && same_split(a.semi, b.semi) && same_split(a.validation, b.validation) &&
         same_split(a.test, b.test) && same_split(a.oracle_test, b.oracle_test);
}

SigmaSpec sigma_for(Index d1, Index d2, std::uint64_t seed) {
  RngStream rng(seed, streams::sigma);
  return make_sigma(d1, d2, rng);
}

}  // namespace

TEST(Maps, ValuesAtZeroAndOne) {
  EXPECT_DOUBLE_EQ(g1(0.0), 0.1);
  EXPECT_DOUBLE_EQ(g2(0.0), 0.0);
  EXPECT_NEAR(g1(1.0), 1.1, 1e-15);
  Matrix u(1, 3);
  u << 0.0, 1.0, -0.3;
  const Matrix v = g1(u);
  EXPECT_EQ(v(0, 2), g1(-0.3));
  EXPECT_EQ(g2(u)(0, 1), g2(1.0));
}

TEST(Sigma, StructureAndConditioning) {
  const SigmaSpec s = sigma_for(1, 1, 3);
  ASSERT_EQ(s.sigma.rows(), 3);
  EXPECT_NEAR(s.sigma(1, 2), 0.0, 1e-12);
  EXPECT_NEAR(s.sigma(2, 1), 0.0, 1e-12);
  for (Index i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(s.sigma(i, i), 1.0);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Index d1 = 1 + static_cast<Index>(seed % 4), d2 = 1 + static_cast<Index>(seed / 4 % 4);
    const SigmaSpec t = sigma_for(d1, d2, seed);
    EXPECT_GE(min_eigenvalue(t.sigma), 0.01 / 1.01 - 1e-12);
    for (Index c = d1; c < d1 + d2; ++c) EXPECT_NEAR(t.sigma(c, t.y_index()), 0.0, 1e-12);
  }
}

TEST(Sigma, MonteCarloIndependenceOfYAndZ2) {
  const SigmaSpec s = sigma_for(3, 3, 4);
  RngStream rng(4, 99);
  const Matrix draws = sample_gaussian(rng, Vector::Zero(7), s.sigma, 1000000);
  for (Index c = 3; c < 6; ++c) EXPECT_LT(std::abs(corr(draws.col(6), draws.col(c))), 0.004);
}

TEST(Simulate, IdentityMapsNoiseless) {
  const SimDataset ds = simulate(sigma_for(2, 2, 5), 0.0, {30, 10, 10, 10, 10}, 5, true);
  EXPECT_EQ(ds.train.x1, ds.train.latents.z1);
  EXPECT_EQ(ds.train.x2, ds.train.latents.z2);
  EXPECT_EQ(ds.train.y, ds.train.latents.y);
  EXPECT_EQ(ds.semi.y.size(), 0);
  EXPECT_EQ(ds.train.x3.cols(), 0);
}

TEST(Simulate, YUncorrelatedWithX2AndDeterministic) {
  const SimDataset ds = simulate_seeded(3, 3, 0.1, {100000, 0, 0, 0, 0}, 6);
  for (Index c = 0; c < 3; ++c) EXPECT_LT(std::abs(corr(ds.train.y, ds.train.x2.col(c))), 0.015);
  const SplitSizes small{50, 100, 20, 30, 40};
  EXPECT_TRUE(same_dataset(simulate_seeded(3, 3, 0.1, small, 7), simulate_seeded(3, 3, 0.1, small, 7)));
  EXPECT_FALSE(same_dataset(simulate_seeded(3, 3, 0.1, small, 7), simulate_seeded(3, 3, 0.1, small, 8)));
  // Splits come from their own streams, so resizing one leaves the others alone.
  const SimDataset bigger = simulate_seeded(3, 3, 0.1, {80, 100, 20, 30, 40}, 7);
  EXPECT_TRUE(same_split(bigger.test, simulate_seeded(3, 3, 0.1, small, 7).test));
}

TEST(Oracle, ConstantAndX2Functions) {
  const SimDataset ds = simulate_seeded(2, 2, 0.1, {20, 0, 0, 10, 10}, 8);
  RngStream rng(8, streams::oracle_draws);
  const Predictor c = [](const Matrix& x) { return Vector(Vector::Constant(x.rows(), 1.75)); };
  const Predictor psi = [](const Matrix& x) { return Vector(x.col(2).array().sin() + x.col(3).array().square()); };
  for (Index i = 0; i < 5; ++i) {
    EXPECT_EQ(oracle_conditional_expectation(c, ds, ds.test, i, 50, rng), 1.75);
    const double expected = std::sin(ds.test.x2(i, 0)) + ds.test.x2(i, 1) * ds.test.x2(i, 1);
    EXPECT_NEAR(oracle_conditional_expectation(psi, ds, ds.test, i, 50, rng), expected, 1e-14);
  }
  Split bare = ds.test;
  bare.has_latents = false;
  try {
    oracle_conditional_expectation(c, ds, bare, 0, 5, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::missing_latents);
  }
}

TEST(Oracle, GaussianClosedForm) {
  const SigmaSpec s = sigma_for(2, 2, 9);
  const SimDataset ds = simulate(s, 0.0, {20, 0, 0, 8, 0}, 9, true);
  const Matrix s_zz = s.sigma.block(2, 2, 2, 2);
  const Matrix s_1z = s.sigma.block(0, 2, 1, 2);
  const double cond_var = s.sigma(0, 0) - (s_1z * s_zz.inverse() * s_1z.transpose())(0, 0);
  const Predictor first = [](const Matrix& x) { return Vector(x.col(0)); };
  RngStream rng(9, streams::oracle_draws);
  const Index m = 4000;
  for (Index i = 0; i < ds.test.rows(); ++i) {
    const Vector z2 = ds.test.latents.z2.row(i).transpose();
    const double mean = (s_1z * s_zz.ldlt().solve(z2))(0, 0);
    EXPECT_NEAR(oracle_conditional_expectation(first, ds, ds.test, i, m, rng), mean,
                3.0 * std::sqrt(cond_var / static_cast<double>(m)));
  }
}

TEST(Oracle, VarianceShrinksWithDraws) {
  const SimDataset ds = simulate_seeded(2, 2, 0.1, {20, 0, 0, 2, 0}, 10);
  const Predictor h = [](const Matrix& x) { return Vector(x.col(0) + x.col(1).cwiseAbs()); };
  RngStream rng(10, streams::oracle_draws);
  const auto spread = [&](Index m) {
    std::vector<double> v;
    for (int r = 0; r < 400; ++r) v.push_back(oracle_conditional_expectation(h, ds, ds.test, 0, m, rng));
    const double sd = stddev_of(v);
    return sd * sd;
  };
  const double ratio = spread(25) / spread(50);
  EXPECT_GT(ratio, 1.5);
  EXPECT_LT(ratio, 2.7);
}

TEST(General, PartialIndependenceAndDeterminism) {
  const SimDataset ds = simulate_general(2, 3, 2, GeneralScales{}, 0.1, {100000, 0, 0, 0, 0}, 11);
  const Vector ry = residual(ds.train.x3, ds.train.y);
  for (Index c = 0; c < 3; ++c)
    EXPECT_LT(std::abs(corr(ry, residual(ds.train.x3, ds.train.x2.col(c)))), 0.015);
  // Conditioning on the collider as well breaks the independence.
  Matrix with_x1(ds.train.rows(), 4);
  with_x1 << ds.train.x3, ds.train.x1;
  double strongest = 0.0;
  for (Index c = 0; c < 3; ++c)
    strongest = std::max(strongest, std::abs(corr(residual(with_x1, ds.train.y),
                                                  residual(with_x1, ds.train.x2.col(c)))));
  EXPECT_GT(strongest, 0.05);
  const SplitSizes small{40, 30, 20, 20, 20};
  EXPECT_TRUE(same_dataset(simulate_general(2, 3, 2, GeneralScales{}, 0.1, small, 12),
                           simulate_general(2, 3, 2, GeneralScales{}, 0.1, small, 12)));
}

TEST(General, ZeroBetaDecouplesYFromX3) {
  RngStream rng(13, streams::coefficients);
  GeneralSpec g = make_general_spec(1, 1, 2, GeneralScales{}, rng);
  g.beta.setZero();
  const SimDataset ds = simulate_general(g, 0.1, {50000, 0, 0, 0, 0}, 13);
  for (Index c = 0; c < 2; ++c) EXPECT_LT(std::abs(corr(ds.train.y, ds.train.x3.col(c))), 0.02);
  EXPECT_LT(std::abs(corr(ds.train.y, ds.train.x2.col(0))), 0.02);
}

TEST(Fixture, StructureAndOptimalRisk) {
  const SimDataset ds = fixture_section7(100000, 14);
  for (Index i = 0; i < ds.test.rows(); ++i) {
    if (ds.test.x2(i, 0) <= 0.0) {
      ASSERT_EQ(ds.test.x1(i, 0), 0.0);
    } else {
      ASSERT_EQ(ds.test.x1(i, 0), ds.test.y(i));
    }
  }
  const Vector pred = fixture7_optimal(ds.test.features());
  EXPECT_NEAR((pred - ds.test.y).squaredNorm() / 100000.0, 0.5, 0.02);
}
