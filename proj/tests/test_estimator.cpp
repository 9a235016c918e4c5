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

#include <sstream>

namespace ogamlss {
namespace {

EstimatorConfig tight(EstimatorConfig c) {
  c.outer_tol = 1e-13;
  c.inner_tol = 1e-13;
  c.max_outer = 300;
  c.max_inner = 50;
  return c;
}

// Location-only Gaussian: the scale stays at its starting value, so the
// location weights are constant and the fit is plain (discounted) OLS.
EstimatorConfig location_only(double gamma, Estimation est, OlsSolver solver = OlsSolver::Direct) {
  EstimatorConfig c = EstimatorConfig::for_family("normal", gamma);
  c.estimation = est;
  c.ols_solver = solver;
  c.params[1].fit = false;
  return tight(c);
}

struct Data {
  Mat X;
  Vec y;
};

Data linear_data(Index n, Index J, std::uint64_t seed, double noise = 0.5) {
  std::mt19937_64 rng(seed);
  Data d{testing::design_with_intercept(n, J, rng, 2.0, 1.0), Vec()};
  Vec beta = Vec::Zero(J);
  for (Index j = 0; j < J; ++j) beta[j] = j % 2 ? 0.0 : 1.0 + 0.5 * double(j);
  d.y = d.X * beta + noise * testing::random_vector(n, rng);
  return d;
}

EstimatorState stream(EstimatorState s, const Mat& X, const Vec& y, Index from, int p) {
  for (Index i = from; i < y.size(); ++i)
    s = update(s, std::vector<Vec>(static_cast<std::size_t>(p), Vec(X.row(i).transpose())), y[i]);
  return s;
}

Vec discounted_ols(const Mat& X, const Vec& y, double gamma) {
  const Vec d = detail::discounts(gamma, y.size());
  const Mat G = X.transpose() * d.asDiagonal() * X;
  return G.ldlt().solve(X.transpose() * d.cwiseProduct(y));
}

TEST(WorkingPoint, MeanVarianceResponses) {
  // Expected curvature turns the working responses into y and (y - mu)^2.
  const auto f = make_family("normal_mv");
  std::mt19937_64 rng(1);
  const Index n = 50;
  Mat theta(n, 2);
  theta.col(0) = testing::random_vector(n, rng);
  theta.col(1) = (testing::random_vector(n, rng).array().abs() + 0.3).matrix();
  const Vec y = testing::random_vector(n, rng) * 2.0;
  const auto w0 = working_point(*f, 0, theta.col(0), theta, y, Curvature::Expected);
  const auto w1 = working_point(*f, 1, theta.col(1), theta, y, Curvature::Expected);
  for (Index i = 0; i < n; ++i) {
    EXPECT_NEAR(w0.z[i], y[i], 1e-12);
    EXPECT_NEAR(w0.w[i], 1.0 / theta(i, 1), 1e-12);
    EXPECT_NEAR(w1.z[i], std::pow(y[i] - theta(i, 0), 2), 1e-12 * std::max(1.0, w1.z[i]));
    EXPECT_NEAR(w1.w[i], 0.5 / std::pow(theta(i, 1), 2), 1e-12);
  }
}

TEST(WorkingPoint, LogScaleWeightsPositive) {
  const auto f = make_family("normal");
  Mat theta(3, 2);
  theta << 0, 1, 0, 1, 0, 1;
  const Vec y = (Vec(3) << 0.0, 0.1, 30.0).finished();
  const auto wp = working_point(*f, 1, Vec::Zero(3), theta, y, Curvature::Expected);
  EXPECT_TRUE((wp.w.array() == 2.0).all());
  EXPECT_EQ(wp.floored, 0);
  // The observed curvature is negative near the centre and gets floored.
  const auto obs = working_point(*f, 1, Vec::Zero(3), theta, y, Curvature::Observed, 1e-10);
  EXPECT_EQ(obs.floored, 2);
  EXPECT_GT(obs.w[2], 0.0);
}

// Independent alternating IRLS for a heteroskedastic Gaussian in
// mean-variance form with identity links.
std::pair<Vec, Vec> irls_oracle(const Mat& X, const Mat& Z, const Vec& y) {
  const Index n = y.size();
  Vec v = Vec::Constant(n, (y.array() - y.mean()).square().sum() / double(n - 1));
  Vec a = Vec::Zero(X.cols()), b = Vec::Zero(Z.cols());
  for (int it = 0; it < 5000; ++it) {
    const Vec w = v.cwiseInverse();
    a = (X.transpose() * w.asDiagonal() * X).ldlt().solve(X.transpose() * w.cwiseProduct(y));
    const Vec r2 = (y - X * a).cwiseAbs2();
    const Vec w2 = v.cwiseAbs2().cwiseInverse();
    const Vec nb =
        (Z.transpose() * w2.asDiagonal() * Z).ldlt().solve(Z.transpose() * w2.cwiseProduct(r2));
    const double change = (nb - b).cwiseAbs().maxCoeff();
    b = nb;
    v = Z * b;
    if (change < 1e-14) break;
  }
  return {a, b};
}

TEST(FitBatch, MeanVarianceMatchesIrlsOracle) {
  std::mt19937_64 rng(2);
  const Index n = 1000;
  std::uniform_real_distribution<double> U(0, 1);
  Mat X(n, 2);
  Vec y(n);
  for (Index i = 0; i < n; ++i) {
    const double x = U(rng);
    X(i, 0) = 1;
    X(i, 1) = x;
    y[i] = 1 + 2 * x + std::sqrt(0.5 + 1.5 * x) * std::normal_distribution<double>()(rng);
  }
  EstimatorConfig c = tight(EstimatorConfig::for_family("normal_mv"));
  c.estimation = Estimation::Ols;
  const EstimatorState s = fit_batch(c, same_design(X, 2), y);
  const auto [a, b] = irls_oracle(X, X, y);
  EXPECT_LT((s.params[0].beta - a).cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_LT((s.params[1].beta - b).cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_TRUE(s.report.converged);
}

TEST(FitBatch, InterceptOnlyGaussianIsMle) {
  std::mt19937_64 rng(3);
  const Index n = 400;
  const Vec y = 3.0 + 1.7 * testing::random_vector(n, rng).array();
  EstimatorConfig c = tight(EstimatorConfig::for_family("normal"));
  c.estimation = Estimation::Ols;
  const Mat X = Mat::Ones(n, 1);
  const EstimatorState s = fit_batch(c, same_design(X, 2), y);
  const double mu = y.mean();
  const double sigma = std::sqrt((y.array() - mu).square().mean());
  EXPECT_NEAR(s.params[0].beta[0], mu, 1e-6);
  EXPECT_NEAR(s.params[1].beta[0], std::log(sigma), 1e-6);
  EXPECT_NEAR(s.report.deviance, -2.0 * (-double(n) * (std::log(sigma) + detail::kLogSqrt2Pi) -
                                         0.5 * double(n)),
              1e-6 * double(n));
}

TEST(FitBatch, LassoPathStartsFromInterceptOnly) {
  const Data d = linear_data(300, 6, 4);
  const EstimatorState s = fit_batch(location_only(1.0, Estimation::Lasso), same_design(d.X, 2), d.y);
  const auto& ps = s.params[0];
  ASSERT_EQ(ps.path.count(), 100);
  EXPECT_EQ(ps.path.betas.row(0).tail(5).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(ps.path.betas.row(99).tail(5).cwiseAbs().maxCoeff(), 0.0);
  // The true support {0, 2, 4} survives selection and the noise columns are
  // mostly dropped.
  EXPECT_NE(ps.beta[2], 0.0);
  EXPECT_NE(ps.beta[4], 0.0);
}

TEST(FitBatch, LocationOlsMatchesDiscountedNormalEquations) {
  const Data d = linear_data(200, 5, 5);
  for (double gamma : {1.0, 0.97}) {
    const EstimatorState s = fit_batch(location_only(gamma, Estimation::Ols), same_design(d.X, 2), d.y);
    EXPECT_LT((s.params[0].beta - discounted_ols(d.X, d.y, gamma)).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(UpdateProperty, OnlineOlsEqualsBatchRefit) {
  const Data d = linear_data(260, 5, 6);
  const Index n0 = 60;
  for (double gamma : {1.0, 0.98}) {
    for (auto solver : {OlsSolver::Direct, OlsSolver::Recursive}) {
      const EstimatorConfig c = location_only(gamma, Estimation::Ols, solver);
      EstimatorState s = fit_batch(c, same_design(Mat(d.X.topRows(n0)), 2), Vec(d.y.head(n0)));
      s = stream(s, d.X, d.y, n0, 2);
      EXPECT_LT((s.params[0].beta - discounted_ols(d.X, d.y, gamma)).cwiseAbs().maxCoeff(), 1e-8)
          << gamma;
      EXPECT_EQ(s.n_seen, std::uint64_t(d.y.size()));
    }
  }
}

TEST(UpdateProperty, SingleRowMinibatchEqualsUpdate) {
  const Data d = linear_data(120, 4, 7);
  EstimatorConfig c = EstimatorConfig::for_family("normal", 0.99);
  const EstimatorState s0 = fit_batch(c, same_design(Mat(d.X.topRows(100)), 2), Vec(d.y.head(100)));
  const EstimatorState a = update(s0, {d.X.row(100).transpose(), d.X.row(100).transpose()}, d.y[100]);
  const EstimatorState b = update_minibatch(s0, same_design(Mat(d.X.middleRows(100, 1)), 2),
                                            Vec(d.y.segment(100, 1)));
  EXPECT_EQ(a.params[0].beta, b.params[0].beta);
  EXPECT_EQ(a.params[1].beta, b.params[1].beta);
  EXPECT_EQ(a.params[0].gram.G, b.params[0].gram.G);
}

TEST(UpdateProperty, MinibatchGramEqualsSequentialGram) {
  const Data d = linear_data(150, 4, 8);
  for (auto [gamma, est] : {std::pair{1.0, Estimation::Ols}, std::pair{0.9, Estimation::Lasso}}) {
    const EstimatorConfig c = location_only(gamma, est);
    const EstimatorState s0 =
        fit_batch(c, same_design(Mat(d.X.topRows(100)), 2), Vec(d.y.head(100)));
    const EstimatorState seq = stream(s0, Mat(d.X.topRows(110)), Vec(d.y.head(110)), 100, 2);
    const EstimatorState blk = update_minibatch(s0, same_design(Mat(d.X.middleRows(100, 10)), 2),
                                                Vec(d.y.segment(100, 10)));
    const auto& a = seq.params[0].gram;
    const auto& b = blk.params[0].gram;
    EXPECT_LT((a.G - b.G).cwiseAbs().maxCoeff(), 1e-10 * a.G.cwiseAbs().maxCoeff());
    EXPECT_LT((a.H - b.H).cwiseAbs().maxCoeff(), 1e-10 * a.H.cwiseAbs().maxCoeff());
    EXPECT_NEAR(a.omega, b.omega, 1e-10 * a.omega);
    EXPECT_EQ(seq.n_seen, blk.n_seen);
    EXPECT_NEAR(seq.params[0].scaler.mean[1], blk.params[0].scaler.mean[1], 1e-12);
  }
}

TEST(Update, CountsRows) {
  const Data d = linear_data(80, 3, 9);
  const EstimatorConfig c = EstimatorConfig::for_family("t", 0.995);
  EstimatorState s = fit_batch(c, same_design(Mat(d.X.topRows(60)), 3), Vec(d.y.head(60)));
  EXPECT_EQ(s.n_seen, 60u);
  s = update(s, std::vector<Vec>(3, Vec(d.X.row(60).transpose())), d.y[60]);
  EXPECT_EQ(s.n_seen, 61u);
  EXPECT_EQ(s.params[0].gram.n_seen, 61u);
  s = update_minibatch(s, same_design(Mat(d.X.middleRows(61, 7)), 3), Vec(d.y.segment(61, 7)));
  EXPECT_EQ(s.n_seen, 68u);
  EXPECT_EQ(s.params[2].gram.n_seen, 68u);
  EXPECT_EQ(s.params[0].rss.n_seen, 68u);
}

TEST(Predict, AppliesInverseLinks) {
  const Data d = linear_data(100, 3, 10);
  EstimatorState s = fit_batch(EstimatorConfig::for_family("normal"), same_design(d.X, 2), d.y);
  s.params[0].beta = (Vec(3) << 1, 2, -1).finished();
  s.params[1].beta = (Vec(3) << 0.5, 0, 0.1).finished();
  Mat X(2, 3);
  X << 1, 0, 0, 1, 2, 3;
  const Mat th = predict(s, same_design(X, 2));
  EXPECT_DOUBLE_EQ(th(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(th(0, 1), std::exp(0.5));
  EXPECT_DOUBLE_EQ(th(1, 0), 2.0);
  EXPECT_DOUBLE_EQ(th(1, 1), std::exp(0.8));
  const Theta one = predict_one(s, {X.row(1).transpose(), X.row(1).transpose()});
  EXPECT_DOUBLE_EQ(one[1], std::exp(0.8));
}

TEST(Predict, QuantilesMonotoneAndConsistent) {
  const Data d = linear_data(300, 3, 11);
  const EstimatorState s = fit_batch(EstimatorConfig::for_family("jsu"), same_design(d.X, 4), d.y);
  const Mat X = d.X.topRows(5);
  Vec probs(19);
  for (Index j = 0; j < 19; ++j) probs[j] = 0.05 * double(j + 1);
  const Mat q = predict_quantiles(s, same_design(X, 4), probs);
  const Mat th = predict(s, same_design(X, 4));
  for (Index i = 0; i < 5; ++i) {
    for (Index j = 1; j < 19; ++j) EXPECT_GT(q(i, j), q(i, j - 1));
    for (Index j = 0; j < 19; ++j) {
      const Theta t = th.row(i).transpose();
      double lo = q(i, 0) - 1e3, hi = q(i, 18) + 1e3;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (s.family->cdf(t, mid) < probs[j] ? lo : hi) = mid;
      }
      EXPECT_NEAR(q(i, j), lo, 1e-7 * std::max(1.0, std::abs(lo)));
    }
  }
}

TEST(Snapshot, RoundTripIsBitExact) {
  const Data d = linear_data(140, 4, 12);
  for (auto family : {"normal", "t"}) {
    const int p = make_family(family)->param_count();
    EstimatorConfig c = EstimatorConfig::for_family(family, 0.99);
    c.params[1].scale_skip = BoolVec::Constant(4, false);
    const EstimatorState s =
        fit_batch(c, same_design(Mat(d.X.topRows(120)), p), Vec(d.y.head(120)));
    std::stringstream a;
    write_snapshot(a, s);
    const EstimatorState r = read_snapshot(a);
    std::stringstream b;
    write_snapshot(b, r);
    EXPECT_EQ(a.str(), b.str());
    // Continuing from the restored state is indistinguishable.
    const EstimatorState u1 = stream(s, Mat(d.X.topRows(130)), Vec(d.y.head(130)), 120, p);
    const EstimatorState u2 = stream(r, Mat(d.X.topRows(130)), Vec(d.y.head(130)), 120, p);
    for (int k = 0; k < p; ++k) EXPECT_EQ(u1.params[k].beta, u2.params[k].beta);
    EXPECT_EQ(predict(u1, same_design(d.X, p)), predict(u2, same_design(d.X, p)));
  }
}

TEST(Snapshot, RejectsGarbage) {
  std::stringstream junk("not a snapshot at all");
  EXPECT_THROW(read_snapshot(junk), io::FormatError);
  const Data d = linear_data(60, 2, 13);
  std::stringstream s;
  write_snapshot(s, fit_batch(EstimatorConfig::for_family("normal"), same_design(d.X, 2), d.y));
  std::string bytes = s.str();
  bytes.resize(bytes.size() / 2);
  std::stringstream cut(bytes);
  EXPECT_THROW(read_snapshot(cut), io::FormatError);
}

TEST(FitBatchProperty, SelectionInvariantToColumnScaling) {
  const Data d = linear_data(250, 6, 14);
  Mat Xs = d.X;
  Xs.col(1) = Xs.col(1) * 1000.0 + Vec::Constant(Xs.rows(), 50.0);
  Xs.col(3) = Xs.col(3) * 1e-3;
  const EstimatorConfig c = location_only(1.0, Estimation::Lasso);
  const EstimatorState a = fit_batch(c, same_design(d.X, 2), d.y);
  const EstimatorState b = fit_batch(c, same_design(Xs, 2), d.y);
  EXPECT_EQ(a.params[0].selected, b.params[0].selected);
  for (Index j = 1; j < 6; ++j)
    EXPECT_EQ(a.params[0].beta[j] == 0.0, b.params[0].beta[j] == 0.0) << j;
  const Vec pa = predict(a, same_design(d.X, 2)).col(0);
  const Vec pb = predict(b, same_design(Xs, 2)).col(0);
  EXPECT_LT((pa - pb).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Estimator, Errors) {
  const Data d = linear_data(40, 3, 15);
  const EstimatorConfig c = EstimatorConfig::for_family("normal");
  EXPECT_THROW(update(EstimatorState{}, {Vec::Ones(3), Vec::Ones(3)}, 1.0), StateError);
  EXPECT_THROW(predict(EstimatorState{}, same_design(d.X, 2)), StateError);
  Mat bad = d.X;
  bad(3, 0) = 2.0;
  EXPECT_THROW(fit_batch(c, same_design(bad, 2), d.y), DomainError);
  EXPECT_THROW(fit_batch(c, same_design(d.X, 3), d.y), DimensionError);
  EXPECT_THROW(fit_batch(c, same_design(Mat(d.X.topRows(3)), 2), Vec(d.y.head(3))), DomainError);
  Vec ny = d.y;
  ny[0] = NAN;
  EXPECT_THROW(fit_batch(c, same_design(d.X, 2), ny), DomainError);
  EstimatorConfig g = c;
  g.params[0].gamma = 1.5;
  EXPECT_THROW(fit_batch(g, same_design(d.X, 2), d.y), DomainError);
  const EstimatorState s = fit_batch(c, same_design(d.X, 2), d.y);
  EXPECT_THROW(update(s, {Vec::Ones(4), Vec::Ones(4)}, 1.0), DimensionError);
  EXPECT_THROW(update(s, {Vec::Ones(3), Vec::Ones(3)}, NAN), DomainError);
}

TEST(UpdateProperty, OnlineTracksBatchOnHeteroskedasticData) {
  std::mt19937_64 rng(16);
  const Index n = 1500;
  Mat X = testing::design_with_intercept(n, 3, rng);
  Vec y(n);
  for (Index i = 0; i < n; ++i)
    y[i] = 1 + X(i, 1) + std::exp(0.3 * X(i, 2)) * std::normal_distribution<double>()(rng);
  EstimatorConfig c = EstimatorConfig::for_family("normal");
  c.estimation = Estimation::Ols;
  EstimatorState s = fit_batch(c, same_design(Mat(X.topRows(300)), 2), Vec(y.head(300)));
  s = stream(s, X, y, 300, 2);
  const EstimatorState b = fit_batch(c, same_design(X, 2), y);
  EXPECT_LT((s.params[0].beta - b.params[0].beta).cwiseAbs().maxCoeff(), 0.02);
  EXPECT_LT((s.params[1].beta - b.params[1].beta).cwiseAbs().maxCoeff(), 0.02);
  EXPECT_NEAR(b.params[1].beta[2], 0.3, 0.06);
}

}  // namespace
}  // namespace ogamlss
