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

// Online model selection along a lambda path with generalised information
// criteria computed from discounted residual sums of squares.

#include "common.hpp"
#include "gram.hpp"
#include "ocd.hpp"

#include <array>
#include <cstdint>
#include <string>

namespace ogamlss {

/// GIC(L, nu) = -2 log L + nu0 k + nu1 k log n + nu2 k log log n.
struct ICSpec {
  std::array<double, 3> nu{2.0, 0.0, 0.0};

  static constexpr ICSpec aic() { return ICSpec{{2.0, 0.0, 0.0}}; }
  static constexpr ICSpec bic() { return ICSpec{{0.0, 1.0, 0.0}}; }
  static constexpr ICSpec hqc() { return ICSpec{{0.0, 0.0, 2.0}}; }

  /// "aic", "bic", "hqc" or an explicit triplet "nu0,nu1,nu2".
  static ICSpec parse(const std::string& s);
};

inline ICSpec ICSpec::parse(const std::string& s) {
  if (s == "aic" || s == "AIC") return aic();
  if (s == "bic" || s == "BIC") return bic();
  if (s == "hqc" || s == "HQC") return hqc();
  ICSpec out;
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    std::size_t used = 0;
    try {
      out.nu[i] = std::stod(s.substr(pos), &used);
    } catch (const std::exception&) {
      throw DomainError("unknown information criterion '" + s + "'");
    }
    pos += used;
    if (i < 2) {
      if (pos >= s.size() || s[pos] != ',') throw DomainError("bad criterion triplet '" + s + "'");
      ++pos;
    }
    if (out.nu[i] < 0.0) throw DomainError("criterion weights must be nonnegative");
  }
  if (pos != s.size()) throw DomainError("bad criterion triplet '" + s + "'");
  return out;
}

inline double information_criterion(double log_lik, double k, double n_eff, const ICSpec& spec) {
  double penalty = spec.nu[0] * k;
  if (spec.nu[1] != 0.0 && k != 0.0) {
    detail::require(n_eff > 0.0, "information_criterion: n_eff must be positive");
    penalty += spec.nu[1] * k * std::log(n_eff);
  }
  if (spec.nu[2] != 0.0) {
    if (!(n_eff > 1.0)) throw DomainError("information_criterion: log log n needs n_eff > 1");
    if (k != 0.0) penalty += spec.nu[2] * k * std::log(std::log(n_eff));
  }
  return -2.0 * log_lik + penalty;
}

inline constexpr double kRssFloor = 1e-12;

struct GaussianLogLik {
  double value = 0.0;
  bool clamped = false;  // rss was zero and got floored
};

/// Gaussian profile log-likelihood -(n/2) log(RSS/n), additive constant dropped.
inline GaussianLogLik rss_to_loglik(double rss, double n_eff) {
  detail::require(n_eff > 0.0, "rss_to_loglik: n_eff must be positive");
  detail::require(rss >= 0.0 && std::isfinite(rss), "rss_to_loglik: rss must be finite and >= 0");
  GaussianLogLik out;
  if (rss < kRssFloor) {
    rss = kRssFloor;
    out.clamped = true;
  }
  out.value = -0.5 * n_eff * std::log(rss / n_eff);
  return out;
}

/// Per-lambda discounted mean squared working residual. `rss[l] * omega` is the
/// discounted weighted RSS; old mass is scaled by gamma, exactly like the
/// Gramians.
struct RssTracker {
  Vec rss;
  double omega = 0.0;
  double gamma = 1.0;
  std::uint64_t n_seen = 0;

  Index count() const { return rss.size(); }
  double n_eff() const { return effective_sample_size(gamma, double(n_seen)); }
};

inline RssTracker make_rss_tracker(Index count, double gamma) {
  check_forget(gamma);
  return RssTracker{Vec::Zero(count), 0.0, gamma, 0};
}

/// Block update with t rows; row i carries the discount gamma^(t-1-i).
/// `preds` is t x count (fitted working response per row and lambda).
inline RssTracker update_rss(const RssTracker& tracker, const Mat& preds, const Vec& z,
                             const Vec& w) {
  const Index t = z.size();
  detail::require_size(preds.rows(), t, "update_rss predictions");
  detail::require_size(preds.cols(), tracker.count(), "update_rss lambda count");
  detail::require_size(w.size(), t, "update_rss weights");
  detail::require((w.array() > 0.0).all(), "update_rss: weights must be positive");

  Vec dw(t);
  for (Index i = 0; i < t; ++i) dw[i] = std::pow(tracker.gamma, double(t - 1 - i)) * w[i];
  const double old_mass = std::pow(tracker.gamma, double(t)) * tracker.omega;
  const double mass = dw.sum() + old_mass;

  RssTracker out = tracker;
  for (Index l = 0; l < tracker.count(); ++l) {
    double s = 0.0;
    for (Index i = 0; i < t; ++i) {
      const double r = z[i] - preds(i, l);
      s += dw[i] * r * r;
    }
    if (!std::isfinite(s)) throw DomainError("update_rss: non-finite residual");
    out.rss[l] = (s + tracker.rss[l] * old_mass) / mass;
  }
  out.omega = mass;
  out.n_seen = tracker.n_seen + static_cast<std::uint64_t>(t);
  return out;
}

inline RssTracker update_rss(const RssTracker& tracker, const Vec& preds, double z, double w) {
  return update_rss(tracker, Mat(preds.transpose()), Vec::Constant(1, z), Vec::Constant(1, w));
}

inline Index count_nonzero(const Eigen::Ref<const Vec>& beta) {
  Index k = 0;
  for (Index j = 0; j < beta.size(); ++j) k += beta[j] != 0.0;
  return k;
}

enum class SelectionRule {
  InformationCriterion,
  MeanSquare,  // smallest discounted mean squared residual, no complexity penalty
};

/// argmin over the path of GIC(rss_to_loglik(rss * n_eff, n_eff), k_l); ties go
/// to the larger lambda (lower index).
inline Index select_lambda(const RssTracker& tracker, const CoefficientPath& path,
                           const ICSpec& spec, SelectionRule rule = SelectionRule::InformationCriterion) {
  if (path.count() == 0 || tracker.count() == 0) throw DomainError("select_lambda: empty path");
  detail::require_size(tracker.count(), path.count(), "select_lambda tracker/path");
  const double n_eff = tracker.n_eff();

  Index best = 0;
  double best_score = kInf;
  for (Index l = 0; l < path.count(); ++l) {
    double score = 0.0;
    if (rule == SelectionRule::MeanSquare) {
      score = tracker.rss[l];
    } else {
      const double ll = rss_to_loglik(tracker.rss[l] * n_eff, n_eff).value;
      score = information_criterion(ll, double(count_nonzero(path.betas.row(l).transpose())),
                                    n_eff, spec);
    }
    if (score < best_score) {
      best_score = score;
      best = l;
    }
  }
  return best;
}

}  // namespace ogamlss
