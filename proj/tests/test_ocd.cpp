/*
 * Copyright (c) 2026, The ogamlss Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "support/testing.hpp"

#include <gtest/gtest.h>

#include <numeric>

namespace ogamlss {
namespace {

double objective(const Mat& G, const Vec& H, const Vec& b, double lambda, const BoolVec& reg) {
  double pen = 0.0;
  for (Index j = 0; j < b.size(); ++j)
    if (reg[j]) pen += std::abs(b[j]);
  return 0.5 * b.dot(G * b) - H.dot(b) + lambda * pen;
}

// Largest KKT violation of b at lambda (bounds inactive), relative to 1 + lambda.
double kkt_violation(const Mat& G, const Vec& H, const Vec& b, double lambda, const BoolVec& reg) {
  const Vec grad = H - G * b;  // negative gradient of the smooth part
  double worst = 0.0;
  for (Index j = 0; j < b.size(); ++j) {
    double v;
    if (!reg[j]) v = std::abs(grad[j]);
    else if (b[j] == 0.0) v = std::max(0.0, std::abs(grad[j]) - lambda);
    else v = std::abs(grad[j] - lambda * (b[j] > 0 ? 1.0 : -1.0));
    worst = std::max(worst, v / (1.0 + lambda));
  }
  return worst;
}

TEST(SoftThreshold, Examples) {
  EXPECT_EQ(soft_threshold(3, 1), 2);
  EXPECT_EQ(soft_threshold(-3, 1), -2);
  EXPECT_EQ(soft_threshold(0.5, 1), 0);
  EXPECT_EQ(soft_threshold(-1, 1), 0);
}

TEST(CoordinateUpdate, Examples) {
  const Mat G = Mat::Identity(1, 1);
  const Vec H = Vec::Constant(1, 2.0);
  const Vec b = Vec::Zero(1);
  EXPECT_EQ(coordinate_update(G, H, b, 0, 1.0, -kInf, kInf, true), 1.0);
  EXPECT_EQ(coordinate_update(G, H, b, 0, 1.0, 0.0, 0.5, true), 0.5);
  EXPECT_EQ(coordinate_update(G, H, b, 0, 3.0, -kInf, kInf, true), 0.0);
  EXPECT_EQ(coordinate_update(G, H, b, 0, 3.0, -kInf, kInf, false), 2.0);
  EXPECT_THROW(coordinate_update(Mat::Zero(1, 1), H, b, 0, 1.0, -kInf, kInf, true), DomainError);
}

TEST(CoordinateUpdate, UsesPartialResidual) {
  const Mat G = (Mat(2, 2) << 2, 1, 1, 3).finished();
  const Vec H = (Vec(2) << 4, 5).finished();
  const Vec b = (Vec(2) << 7, 1).finished();
  // (H0 - G01 b1) / G00, the current b0 must not matter
  EXPECT_DOUBLE_EQ(coordinate_update(G, H, b, 0, 0.0, -kInf, kInf, true), 1.5);
}

TEST(LambdaGrid, Examples) {
  const LambdaGrid g = compute_lambda_grid((Vec(3) << 5, -7, 2).finished(),
                                           BoolVec::Constant(3, true), 0.001, 3);
  EXPECT_EQ(g.values[0], 7.0);
  EXPECT_NEAR(g.values[1], 7.0 * std::sqrt(0.001), 1e-12);
  EXPECT_NEAR(g.values[1], 0.2214, 1e-4);
  EXPECT_NEAR(g.values[2], 0.007, 1e-15);
  const LambdaGrid m = compute_lambda_grid((Vec(2) << 5, -7).finished(),
                                           (BoolVec(2) << true, false).finished(), 0.01, 10);
  EXPECT_EQ(m.lambda_max, 5.0);
}

TEST(LambdaGrid, StrictlyDecreasingAndHomogeneous) {
  std::mt19937_64 rng(2);
  const Vec H = testing::random_vector(6, rng);
  const BoolVec reg = BoolVec::Constant(6, true);
  const LambdaGrid g = compute_lambda_grid(H, reg, 1e-4, 100);
  ASSERT_EQ(g.count(), 100);
  for (Index i = 1; i < g.count(); ++i) EXPECT_LT(g.values[i], g.values[i - 1]);
  EXPECT_NEAR(g.values[99], 1e-4 * g.lambda_max, 1e-12 * g.lambda_max);
  const LambdaGrid s = compute_lambda_grid(3.5 * H, reg, 1e-4, 100);
  EXPECT_LT((s.values - 3.5 * g.values).cwiseAbs().maxCoeff(), 1e-12 * s.lambda_max);
}

TEST(LambdaGrid, DegenerateAndInvalid) {
  const LambdaGrid z = compute_lambda_grid(Vec::Zero(3), BoolVec::Constant(3, true), 0.01, 50);
  ASSERT_EQ(z.count(), 1);
  EXPECT_EQ(z.values[0], 0.0);
  EXPECT_THROW(compute_lambda_grid(Vec::Ones(2), BoolVec::Constant(2, false), 0.01, 5), DomainError);
  EXPECT_THROW(compute_lambda_grid(Vec::Ones(2), BoolVec::Constant(2, true), 1.5, 5), DomainError);
}

TEST(FitPath, OrthonormalClosedForm) {
  const Vec H = (Vec(4) << 3, -2, 0.5, -0.1).finished();
  const BoolVec reg = BoolVec::Constant(4, true);
  PathConstraints c = PathConstraints::lasso(4, -1);
  c.lower[1] = -1.0;
  c.upper[0] = 2.5;
  const LambdaGrid grid = compute_lambda_grid(H, reg, 0.01, 20);
  const CoefficientPath p = fit_path(Mat::Identity(4, 4), H, grid, c);
  for (Index l = 0; l < grid.count(); ++l)
    for (Index j = 0; j < 4; ++j)
      EXPECT_DOUBLE_EQ(p.betas(l, j),
                       std::clamp(soft_threshold(H[j], grid.values[l]), c.lower[j], c.upper[j]));
}

TEST(FitPath, SmallLambdaMatchesDenseSolve) {
  std::mt19937_64 rng(8);
  const Index n = 100, J = 5;
  const Mat X = testing::random_matrix(n, J, rng);
  const Vec y = X * (Vec(5) << 1, -2, 0, 0.5, 3).finished() + testing::random_vector(n, rng);
  const Mat G = X.transpose() * X;
  const Vec H = X.transpose() * y;
  const PathConstraints c = PathConstraints::lasso(J, -1);
  PathOptions opt;
  opt.tol = 1e-10;
  const LambdaGrid grid = compute_lambda_grid(H, c.regularized, 1e-7, 100);
  const CoefficientPath p = fit_path(G, H, grid, c, opt);
  const Vec ols = G.ldlt().solve(H);
  EXPECT_LT((p.betas.row(99).transpose() - ols).cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_TRUE(p.converged.all());
}

TEST(FitPath, NoRandomFeasiblePerturbationImproves) {
  std::mt19937_64 rng(12);
  const Mat G = testing::random_spd(3, rng);
  const Vec H = testing::random_vector(3, rng);
  const PathConstraints c = PathConstraints::lasso(3, 0);
  PathOptions opt;
  opt.tol = 1e-12;
  const Vec resid = unpenalized_residual(G, H, c).second;
  const LambdaGrid grid = compute_lambda_grid(resid, c.regularized, 1e-3, 15);
  const CoefficientPath p = fit_path(G, H, grid, c, opt);
  std::normal_distribution<double> N(0.0, 1.0);
  for (Index l = 0; l < grid.count(); ++l) {
    const Vec b = p.betas.row(l).transpose();
    const double f0 = objective(G, H, b, grid.values[l], c.regularized);
    for (int k = 0; k < 10000; ++k) {
      const double scale = std::pow(10.0, -1.0 - 4.0 * (k % 5) / 4.0);
      Vec t = b;
      for (Index j = 0; j < 3; ++j) t[j] += scale * N(rng);
      EXPECT_GE(objective(G, H, t, grid.values[l], c.regularized), f0 - 1e-12);
    }
  }
}

TEST(FitPath, AllRegularizedZeroAtLambdaMax) {
  std::mt19937_64 rng(13);
  for (int rep = 0; rep < 20; ++rep) {
    const Index J = 2 + rep % 6;
    const Mat G = testing::random_spd(J, rng);
    const Vec H = testing::random_vector(J, rng);
    const PathConstraints c = PathConstraints::lasso(J, 0);
    const Vec resid = unpenalized_residual(G, H, c).second;
    const LambdaGrid grid = compute_lambda_grid(resid, c.regularized, 1e-3, 10);
    const CoefficientPath p = fit_path(G, H, grid, c);
    for (Index j = 1; j < J; ++j) EXPECT_EQ(p.betas(0, j), 0.0);
    EXPECT_NEAR(p.betas(0, 0), H[0] / G(0, 0), 1e-9 * (1 + std::abs(H[0] / G(0, 0))));
  }
}

TEST(FitPath, WarmAndColdStartsAgree) {
  std::mt19937_64 rng(14);
  for (int rep = 0; rep < 10; ++rep) {
    const Index J = 6;
    const Mat G = testing::random_spd(J, rng);
    const Vec H = testing::random_vector(J, rng);
    const PathConstraints c = PathConstraints::lasso(J, 0);
    PathOptions opt;
    opt.tol = 1e-13;
    const LambdaGrid grid =
        compute_lambda_grid(unpenalized_residual(G, H, c).second, c.regularized, 1e-3, 30);
    const CoefficientPath cold = fit_path(G, H, grid, c, opt);
    CoefficientPath junk = cold;
    junk.betas.setConstant(0.7);
    for (WarmStart ws : {WarmStart::PreviousLambda, WarmStart::SameLambda, WarmStart::Blend}) {
      opt.warm_start = ws;
      const CoefficientPath warm = fit_path(G, H, grid, c, opt, &junk);
      EXPECT_LT((warm.betas - cold.betas).cwiseAbs().maxCoeff(), 1e-8);
    }
  }
}

TEST(FitPath, PermutationEquivariant) {
  std::mt19937_64 rng(15);
  const Index J = 5;
  const Mat G = testing::random_spd(J, rng);
  const Vec H = testing::random_vector(J, rng);
  std::vector<Index> perm(J);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Mat Gp(J, J);
  Vec Hp(J);
  for (Index a = 0; a < J; ++a) {
    Hp[a] = H[perm[a]];
    for (Index b = 0; b < J; ++b) Gp(a, b) = G(perm[a], perm[b]);
  }
  const BoolVec reg = BoolVec::Constant(J, true);
  const PathConstraints c = PathConstraints::lasso(J, -1);
  PathOptions opt;
  opt.tol = 1e-13;
  const LambdaGrid grid = compute_lambda_grid(H, reg, 1e-3, 25);
  const CoefficientPath p = fit_path(G, H, grid, c, opt);
  const CoefficientPath q = fit_path(Gp, Hp, grid, c, opt);
  for (Index a = 0; a < J; ++a)
    EXPECT_LT((q.betas.col(a) - p.betas.col(perm[a])).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(FitPathProperty, KktOnRandomSpdInstances) {
  std::mt19937_64 rng(16);
  PathOptions opt;
  opt.tol = 1e-9;
  for (int rep = 0; rep < 100; ++rep) {
    const Index J = 1 + rep % 10;
    const Mat G = testing::random_spd(J, rng);
    const Vec H = testing::random_vector(J, rng);
    const PathConstraints c = PathConstraints::lasso(J, rep % 2 ? 0 : -1);
    if (!c.regularized.any()) continue;
    const LambdaGrid grid =
        compute_lambda_grid(unpenalized_residual(G, H, c).second, c.regularized, 1e-3, 40);
    const CoefficientPath p = fit_path(G, H, grid, c, opt);
    for (Index l = 0; l < grid.count(); ++l) {
      ASSERT_TRUE(p.converged[l]);
      EXPECT_LT(kkt_violation(G, H, p.betas.row(l).transpose(), grid.values[l], c.regularized),
                1e-4);
    }
  }
}

TEST(FitPath, BoundsHoldAndUnregularizedIsNotShrunk) {
  std::mt19937_64 rng(17);
  const Index J = 6;
  const Mat G = testing::random_spd(J, rng);
  const Vec H = 3.0 * testing::random_vector(J, rng);
  PathConstraints c = PathConstraints::lasso(J, 0);
  c.lower.setConstant(-0.2);
  c.upper.setConstant(0.3);
  c.lower[0] = -kInf;
  c.upper[0] = kInf;
  const LambdaGrid grid =
      compute_lambda_grid(unpenalized_residual(G, H, c).second, c.regularized, 1e-3, 30);
  const CoefficientPath p = fit_path(G, H, grid, c);
  for (Index l = 0; l < grid.count(); ++l)
    for (Index j = 0; j < J; ++j) {
      EXPECT_GE(p.betas(l, j), c.lower[j]);
      EXPECT_LE(p.betas(l, j), c.upper[j]);
    }
  // With all others fixed, the intercept is an exact unpenalised coordinate minimum.
  const Vec b = p.betas.row(grid.count() - 1).transpose();
  EXPECT_NEAR(coordinate_update(G, H, b, 0, 1e9, -kInf, kInf, false), b[0], 1e-3);
}

TEST(FitPath, DegenerateColumnPinnedToZero) {
  Mat G = Mat::Identity(3, 3);
  G(2, 2) = 0.0;
  const Vec H = (Vec(3) << 1, 2, 5).finished();
  const PathConstraints c = PathConstraints::lasso(3, 0);
  const LambdaGrid grid = compute_lambda_grid(H, c.regularized, 0.1, 5);
  const CoefficientPath p = fit_path(G, H, grid, c);
  EXPECT_TRUE((p.betas.col(2).array() == 0.0).all());
  EXPECT_TRUE(p.betas.allFinite());
}

TEST(FitPath, ShuffledOrderReachesSameSolution) {
  std::mt19937_64 rng(18);
  const Mat G = testing::random_spd(7, rng);
  const Vec H = testing::random_vector(7, rng);
  const PathConstraints c = PathConstraints::lasso(7, 0);
  PathOptions a, b;
  a.tol = b.tol = 1e-13;
  b.order = CoordinateOrder::Shuffled;
  b.seed = 99;
  const LambdaGrid grid =
      compute_lambda_grid(unpenalized_residual(G, H, c).second, c.regularized, 1e-3, 20);
  EXPECT_LT((fit_path(G, H, grid, c, a).betas - fit_path(G, H, grid, c, b).betas).cwiseAbs().maxCoeff(),
            1e-8);
}

TEST(FitPath, NonConvergenceIsFlaggedNotThrown) {
  std::mt19937_64 rng(19);
  const Mat G = testing::random_spd(8, rng, 9);
  const Vec H = testing::random_vector(8, rng);
  const PathConstraints c = PathConstraints::lasso(8, -1);
  PathOptions opt;
  opt.tol = 1e-300;
  opt.max_iter = 2;
  const LambdaGrid grid = compute_lambda_grid(H, c.regularized, 1e-3, 5);
  const CoefficientPath p = fit_path(G, H, grid, c, opt);
  EXPECT_FALSE(p.converged.tail(4).all());
}

}  // namespace
}  // namespace ogamlss
