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
#pragma once

// Point and probabilistic forecast scores, and the Diebold-Mariano test on
// daily aggregated loss differentials.

#include "common.hpp"
#include "distributions.hpp"

#include <boost/math/distributions/normal.hpp>

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace ogamlss {

struct ForecastRecord {
  std::int64_t day = 0;
  int hour = 0;
  std::string family;
  Theta theta;
  double realized = 0.0;
};

/// 0.01, 0.02, ..., 0.99 (or any count: i / (count + 1)).
inline Vec quantile_grid(Index count = 99) {
  detail::require(count >= 1, "quantile grid needs at least one level");
  Vec q(count);
  for (Index i = 0; i < count; ++i) q[i] = double(i + 1) / double(count + 1);
  return q;
}

inline double pinball(double y, double q, double tau) {
  return y < q ? (1.0 - tau) * (q - y) : tau * (y - q);
}

/// Miss penalty of the interval score: 2/alpha (Winkler) or the alpha/2 variant.
enum class IntervalPenalty { TwoOverAlpha, AlphaOverTwo };

inline double interval_score(double lower, double upper, double y, double alpha,
                             IntervalPenalty pen = IntervalPenalty::TwoOverAlpha) {
  const double f = pen == IntervalPenalty::TwoOverAlpha ? 2.0 / alpha : alpha / 2.0;
  double s = upper - lower;
  if (y < lower) s += f * (lower - y);
  if (y > upper) s += f * (y - upper);
  return s;
}

struct ScoreOptions {
  Vec alphas = (Vec(4) << 0.5, 0.25, 0.1, 0.05).finished();  // 50/75/90/95% intervals
  Vec quantiles = quantile_grid(99);
  double crps_factor = 2.0;  // CRPS ~ factor / |Q| * sum of pinball losses
  IntervalPenalty is_penalty = IntervalPenalty::TwoOverAlpha;
  double density_floor = 1e-300;
};

/// Per-record score panel; every aggregate in ScoreTable is a mean of one of
/// these columns.
struct ScorePanel {
  std::vector<std::int64_t> day;
  std::vector<int> hour;
  Vec sq_err;   // (mean - y)^2, NaN when the mean does not exist
  Vec abs_err;  // |median - y|
  Mat covered;  // records x alphas, 0/1
  Mat is;       // records x alphas
  Vec crps;
  Vec ls;
  Index ls_clamped = 0;
  bool mean_available = true;

  Index size() const { return static_cast<Index>(day.size()); }
};

inline ScorePanel score_records(const Family& family, const std::vector<ForecastRecord>& records,
                                const ScoreOptions& opt = {}) {
  detail::require(opt.quantiles.size() > 0, "empty quantile grid");
  for (Index j = 0; j < opt.quantiles.size(); ++j)
    detail::require(opt.quantiles[j] > 0.0 && opt.quantiles[j] < 1.0 &&
                        (j == 0 || opt.quantiles[j] > opt.quantiles[j - 1]),
                    "quantile grid must be sorted inside (0, 1)");
  for (Index a = 0; a < opt.alphas.size(); ++a)
    detail::require(opt.alphas[a] > 0.0 && opt.alphas[a] < 1.0, "alpha must lie in (0, 1)");
  const Index n = static_cast<Index>(records.size());
  const Index na = opt.alphas.size(), nq = opt.quantiles.size();
  ScorePanel p;
  p.sq_err.resize(n);
  p.abs_err.resize(n);
  p.covered.resize(n, na);
  p.is.resize(n, na);
  p.crps.resize(n);
  p.ls.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto& r = records[static_cast<std::size_t>(i)];
    detail::require(r.hour >= 0 && r.hour < 24, "forecast hour out of range");
    const double y = r.realized;
    p.day.push_back(r.day);
    p.hour.push_back(r.hour);
    try {
      p.sq_err[i] = std::pow(family.mean(r.theta) - y, 2);
    } catch (const DomainError&) {
      p.sq_err[i] = std::numeric_limits<double>::quiet_NaN();
      p.mean_available = false;
    }
    p.abs_err[i] = std::abs(family.quantile(r.theta, 0.5) - y);
    for (Index a = 0; a < na; ++a) {
      const double al = opt.alphas[a];
      const double lo = family.quantile(r.theta, al / 2.0);
      const double hi = family.quantile(r.theta, 1.0 - al / 2.0);
      p.covered(i, a) = (lo <= y && y <= hi) ? 1.0 : 0.0;
      p.is(i, a) = interval_score(lo, hi, y, al, opt.is_penalty);
    }
    double pin = 0.0;
    for (Index j = 0; j < nq; ++j)
      pin += pinball(y, family.quantile(r.theta, opt.quantiles[j]), opt.quantiles[j]);
    p.crps[i] = opt.crps_factor * pin / double(nq);
    const double lp = family.log_pdf(r.theta, y);
    const double cap = -std::log(opt.density_floor);
    if (!(-lp <= cap)) {
      p.ls[i] = cap;
      ++p.ls_clamped;
    } else {
      p.ls[i] = -lp;
    }
  }
  return p;
}

struct PointScores {
  double rmse = 0.0;
  double mae = 0.0;
  bool rmse_available = true;
};

inline PointScores point_scores(const Family& family, const std::vector<ForecastRecord>& records) {
  if (records.empty()) throw DomainError("point_scores: no records");
  ScoreOptions opt;
  opt.alphas.resize(0);
  opt.quantiles = Vec::Constant(1, 0.5);
  const ScorePanel p = score_records(family, records, opt);
  PointScores s;
  s.rmse_available = p.mean_available;
  s.rmse = p.mean_available ? std::sqrt(p.sq_err.mean()) : std::numeric_limits<double>::quiet_NaN();
  s.mae = p.abs_err.mean();
  return s;
}

struct IntervalScores {
  double coverage = 0.0;
  double interval_score = 0.0;
};

inline IntervalScores interval_scores(const Family& family,
                                      const std::vector<ForecastRecord>& records, double alpha,
                                      IntervalPenalty pen = IntervalPenalty::TwoOverAlpha) {
  if (records.empty()) throw DomainError("interval_scores: no records");
  ScoreOptions opt;
  opt.alphas = Vec::Constant(1, alpha);
  opt.quantiles = Vec::Constant(1, 0.5);
  opt.is_penalty = pen;
  const ScorePanel p = score_records(family, records, opt);
  return {p.covered.col(0).mean(), p.is.col(0).mean()};
}

inline double crps_pinball(const Family& family, const std::vector<ForecastRecord>& records,
                           const Vec& grid, double factor = 2.0) {
  if (records.empty()) throw DomainError("crps_pinball: no records");
  ScoreOptions opt;
  opt.alphas.resize(0);
  opt.quantiles = grid;
  opt.crps_factor = factor;
  return score_records(family, records, opt).crps.mean();
}

struct LogScore {
  double value = 0.0;
  Index clamped = 0;
};

inline LogScore log_score(const Family& family, const std::vector<ForecastRecord>& records) {
  if (records.empty()) throw DomainError("log_score: no records");
  LogScore out;
  for (const auto& r : records) {
    const double lp = family.log_pdf(r.theta, r.realized);
    const double cap = -std::log(1e-300);
    if (!(-lp <= cap)) {
      out.value += cap;
      ++out.clamped;
    } else {
      out.value -= lp;
    }
  }
  out.value /= double(records.size());
  return out;
}

/// Closed-form CRPS of N(mu, sigma^2) at y.
inline double crps_normal(double mu, double sigma, double y) {
  const double z = (y - mu) / sigma;
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return sigma * (z * (2.0 * detail::std_normal_cdf(z) - 1.0) + 2.0 * pdf -
                  1.0 / std::sqrt(std::numbers::pi));
}

struct DmResult {
  double statistic = 0.0;
  double p_value = 0.5;
  Index days = 0;
};

/// Diebold-Mariano on daily l1 norms: delta_d = |S^A_d|_1 - |S^B_d|_1,
/// statistic mean / (sd / sqrt(D)), one-sided p = 1 - Phi(statistic). Small p:
/// B is significantly better than A.
inline DmResult dm_test(const Mat& scores_a, const Mat& scores_b, Index min_days = 30) {
  detail::require_size(scores_b.rows(), scores_a.rows(), "dm_test days");
  detail::require_size(scores_b.cols(), scores_a.cols(), "dm_test hours");
  const Index D = scores_a.rows();
  if (D < min_days) throw DomainError("dm_test: need at least " + std::to_string(min_days) + " days");
  detail::require(detail::all_finite(scores_a) && detail::all_finite(scores_b),
                  "dm_test: non-finite scores");
  const Vec delta = scores_a.cwiseAbs().rowwise().sum() - scores_b.cwiseAbs().rowwise().sum();
  const double mean = delta.mean();
  const double var = (delta.array() - mean).square().sum() / double(D - 1);
  DmResult r;
  r.days = D;
  if (!(var > 0.0)) {
    r.statistic = mean == 0.0 ? 0.0 : (mean > 0.0 ? kInf : -kInf);
    r.p_value = mean == 0.0 ? 0.5 : (mean > 0.0 ? 0.0 : 1.0);
    return r;
  }
  r.statistic = mean / std::sqrt(var / double(D));
  r.p_value = 1.0 - detail::std_normal_cdf(r.statistic);
  return r;
}

/// Day x 24 panel of one score column; days without all 24 hours are dropped.
inline Mat daily_panel(const ScorePanel& p, const Vec& column) {
  std::map<std::int64_t, Eigen::Matrix<double, 24, 1>> rows;
  std::map<std::int64_t, int> filled;
  for (Index i = 0; i < p.size(); ++i) {
    auto& r = rows[p.day[static_cast<std::size_t>(i)]];
    if (!filled.count(p.day[static_cast<std::size_t>(i)])) r.setZero();
    r[p.hour[static_cast<std::size_t>(i)]] = column[i];
    ++filled[p.day[static_cast<std::size_t>(i)]];
  }
  std::vector<Eigen::Matrix<double, 24, 1>> keep;
  for (const auto& [d, r] : rows)
    if (filled[d] == 24) keep.push_back(r);
  Mat out(static_cast<Index>(keep.size()), 24);
  for (std::size_t i = 0; i < keep.size(); ++i) out.row(static_cast<Index>(i)) = keep[i].transpose();
  return out;
}

struct ModelScores {
  std::string model;
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double mae = std::numeric_limits<double>::quiet_NaN();
  Vec coverage;
  Vec interval;
  double crps = std::numeric_limits<double>::quiet_NaN();
  double log_score = std::numeric_limits<double>::quiet_NaN();
  Index records = 0;
  ScorePanel panel;
};

inline ModelScores aggregate(const std::string& model, const ScorePanel& p, const ScoreOptions& opt) {
  ModelScores m;
  m.model = model;
  m.records = p.size();
  m.coverage = Vec::Constant(opt.alphas.size(), std::numeric_limits<double>::quiet_NaN());
  m.interval = m.coverage;
  if (p.size() > 0) {
    if (p.mean_available) m.rmse = std::sqrt(p.sq_err.mean());
    m.mae = p.abs_err.mean();
    m.coverage = p.covered.colwise().mean().transpose();
    m.interval = p.is.colwise().mean().transpose();
    m.crps = p.crps.mean();
    m.log_score = p.ls.mean();
  }
  m.panel = p;
  return m;
}

}  // namespace ogamlss
