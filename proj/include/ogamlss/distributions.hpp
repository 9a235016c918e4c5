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

// Parametric response families with per-parameter links, log-densities,
// first and second log-likelihood derivatives, starting values, CDF,
// quantiles and means.
//
//   "normal"     Normal(mu, sigma)                      links: identity, log
//   "normal_mv"  Normal(mu, sigma^2), mean-variance form links: identity, identity
//   "t"          Student-t(mu, sigma, nu)               links: identity, log, log(nu - 2)
//   "jsu"        Johnson S_U(xi, lambda, delta, gamma)  links: identity, log, log, identity
//
// Johnson S_U is the classical form: Z = gamma + delta * asinh((y - xi) / lambda)
// is standard normal; the parameters are ordered location, scale, tail, skew.

#include "common.hpp"
#include "links.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include <algorithm>
#include <memory>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace ogamlss {

/// Distribution parameters; at most four, never heap-allocated.
using Theta = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 4, 1>;

struct Derivatives {
  double first = 0.0;   // dl / dtheta_k
  double second = 0.0;  // d^2 l / dtheta_k^2
};

struct InitialValues {
  Theta theta;
  bool floored = false;  // sample variance hit the floor
};

class Family {
 public:
  virtual ~Family() = default;

  virtual std::string id() const = 0;
  virtual std::string param_name(int k) const = 0;
  int param_count() const { return static_cast<int>(links_.size()); }
  const LinkFunction& link(int k) const { return links_.at(static_cast<std::size_t>(k)); }

  virtual bool in_domain(const Theta& theta) const = 0;

  double log_pdf(const Theta& theta, double y) const {
    check(theta);
    return log_pdf_unchecked(theta, y);
  }
  Derivatives derivatives(const Theta& theta, double y, int k) const {
    check(theta);
    if (k < 0 || k >= param_count()) throw DimensionError("parameter index out of range");
    return derivatives_unchecked(theta, y, k);
  }
  double cdf(const Theta& theta, double y) const {
    check(theta);
    return cdf_unchecked(theta, y);
  }
  double quantile(const Theta& theta, double prob) const {
    check(theta);
    if (!(prob > 0.0 && prob < 1.0)) throw DomainError("quantile: probability outside (0, 1)");
    return quantile_unchecked(theta, prob);
  }
  double pdf(const Theta& theta, double y) const { return std::exp(log_pdf(theta, y)); }

  /// E[d^2 l / dtheta_k^2] under the distribution itself (minus the Fisher
  /// information of theta_k).
  double expected_second(const Theta& theta, int k) const {
    check(theta);
    if (k < 0 || k >= param_count()) throw DimensionError("parameter index out of range");
    return expected_second_unchecked(theta, k);
  }

  virtual double mean(const Theta& theta) const = 0;
  virtual InitialValues initial_values(const Vec& y) const = 0;
  virtual double sample(const Theta& theta, std::mt19937_64& rng) const = 0;

  /// True when the mean equals the median for every theta.
  virtual bool symmetric() const { return true; }

  /// Pushes each parameter inside its link's valid range by `margin`.
  /// Returns true if anything was clamped.
  bool clamp(Theta& theta, double margin = 1e-10) const {
    bool hit = false;
    for (int k = 0; k < param_count(); ++k) {
      const double lo = link(k).lower() + margin;
      if (!(theta[k] >= lo)) {
        theta[k] = lo;
        hit = true;
      }
      if (theta[k] == kInf) {
        theta[k] = std::numeric_limits<double>::max();
        hit = true;
      }
    }
    return hit;
  }

 protected:
  explicit Family(std::vector<LinkFunction> links) : links_(std::move(links)) {}

  virtual double log_pdf_unchecked(const Theta& theta, double y) const = 0;
  virtual Derivatives derivatives_unchecked(const Theta& theta, double y, int k) const = 0;
  virtual double cdf_unchecked(const Theta& theta, double y) const = 0;
  virtual double quantile_unchecked(const Theta& theta, double prob) const = 0;
  virtual double expected_second_unchecked(const Theta& theta, int k) const = 0;

  void check(const Theta& theta) const {
    if (theta.size() != param_count()) throw DimensionError(id() + ": wrong parameter count");
    if (!in_domain(theta)) throw DomainError(id() + ": parameters outside the domain");
  }

 private:
  std::vector<LinkFunction> links_;
};

using FamilyPtr = std::shared_ptr<const Family>;

namespace detail {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // 0.5 log(2 pi)
inline constexpr double kSdFloor = 1e-6;

inline double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double std_normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

struct SampleMoments {
  double mean = 0.0;
  double sd = 0.0;
  bool floored = false;
};

inline SampleMoments sample_moments(const Vec& y) {
  if (y.size() < 2) throw DomainError("initial_values: need at least two observations");
  require(all_finite(y), "initial_values: non-finite sample");
  SampleMoments m;
  m.mean = y.mean();
  m.sd = std::sqrt((y.array() - m.mean).square().sum() / double(y.size() - 1));
  if (!(m.sd >= kSdFloor)) {
    m.sd = kSdFloor;
    m.floored = true;
  }
  return m;
}

/// Gauss-Hermite rule for expectations over N(0, 1) (Golub-Welsch).
struct NormalQuadrature {
  Vec nodes;
  Vec weights;
};

inline const NormalQuadrature& normal_quadrature() {
  static const NormalQuadrature rule = [] {
    constexpr int n = 64;
    Mat jac = Mat::Zero(n, n);
    for (int i = 1; i < n; ++i) jac(i, i - 1) = jac(i - 1, i) = std::sqrt(double(i));
    Eigen::SelfAdjointEigenSolver<Mat> eig(jac);
    NormalQuadrature r{eig.eigenvalues(), eig.eigenvectors().row(0).transpose().array().square()};
    r.weights /= r.weights.sum();
    return r;
  }();
  return rule;
}

inline double median(Vec y) {
  std::sort(y.data(), y.data() + y.size());
  const Index n = y.size();
  return n % 2 ? y[n / 2] : 0.5 * (y[n / 2 - 1] + y[n / 2]);
}

}  // namespace detail

class NormalFamily final : public Family {
 public:
  NormalFamily() : Family({LinkFunction::identity(), LinkFunction::log()}) {}

  std::string id() const override { return "normal"; }
  std::string param_name(int k) const override { return k == 0 ? "mu" : "sigma"; }
  bool in_domain(const Theta& t) const override {
    return std::isfinite(t[0]) && t[1] > 0.0 && std::isfinite(t[1]);
  }

  double mean(const Theta& t) const override {
    check(t);
    return t[0];
  }

  InitialValues initial_values(const Vec& y) const override {
    auto m = detail::sample_moments(y);
    Theta t(2);
    t << m.mean, m.sd;
    return {t, m.floored};
  }

  double sample(const Theta& t, std::mt19937_64& rng) const override {
    return std::normal_distribution<double>(t[0], t[1])(rng);
  }

 protected:
  double log_pdf_unchecked(const Theta& t, double y) const override {
    const double z = (y - t[0]) / t[1];
    return -detail::kLogSqrt2Pi - std::log(t[1]) - 0.5 * z * z;
  }

  Derivatives derivatives_unchecked(const Theta& t, double y, int k) const override {
    const double r = y - t[0], s2 = t[1] * t[1];
    if (k == 0) return {r / s2, -1.0 / s2};
    return {-1.0 / t[1] + r * r / (s2 * t[1]), 1.0 / s2 - 3.0 * r * r / (s2 * s2)};
  }

  double expected_second_unchecked(const Theta& t, int k) const override {
    return (k == 0 ? -1.0 : -2.0) / (t[1] * t[1]);
  }

  double cdf_unchecked(const Theta& t, double y) const override {
    return detail::std_normal_cdf((y - t[0]) / t[1]);
  }

  double quantile_unchecked(const Theta& t, double p) const override {
    return t[0] + t[1] * detail::std_normal_quantile(p);
  }
};

/// Normal in mean-variance form; its derivatives for the variance are the
/// ones that make Newton scoring coincide with IRLS for heteroskedasticity:
/// the working responses become y and (y - mu)^2 under identity links.
class NormalMeanVarianceFamily final : public Family {
 public:
  NormalMeanVarianceFamily() : Family({LinkFunction::identity(), LinkFunction::identity()}) {}

  std::string id() const override { return "normal_mv"; }
  std::string param_name(int k) const override { return k == 0 ? "mu" : "sigma2"; }
  bool in_domain(const Theta& t) const override {
    return std::isfinite(t[0]) && t[1] > 0.0 && std::isfinite(t[1]);
  }

  double mean(const Theta& t) const override {
    check(t);
    return t[0];
  }

  InitialValues initial_values(const Vec& y) const override {
    auto m = detail::sample_moments(y);
    Theta t(2);
    t << m.mean, m.sd * m.sd;
    return {t, m.floored};
  }

  double sample(const Theta& t, std::mt19937_64& rng) const override {
    return std::normal_distribution<double>(t[0], std::sqrt(t[1]))(rng);
  }

 protected:
  double log_pdf_unchecked(const Theta& t, double y) const override {
    const double r = y - t[0];
    return -detail::kLogSqrt2Pi - 0.5 * std::log(t[1]) - 0.5 * r * r / t[1];
  }

  Derivatives derivatives_unchecked(const Theta& t, double y, int k) const override {
    const double r = y - t[0], v = t[1];
    if (k == 0) return {r / v, -1.0 / v};
    return {0.5 * (r * r - v) / (v * v), -0.5 / (v * v)};
  }

  double expected_second_unchecked(const Theta& t, int k) const override {
    return k == 0 ? -1.0 / t[1] : -0.5 / (t[1] * t[1]);
  }

  double cdf_unchecked(const Theta& t, double y) const override {
    return detail::std_normal_cdf((y - t[0]) / std::sqrt(t[1]));
  }

  double quantile_unchecked(const Theta& t, double p) const override {
    return t[0] + std::sqrt(t[1]) * detail::std_normal_quantile(p);
  }
};

class StudentTFamily final : public Family {
 public:
  /// Degrees of freedom live above 2 so the variance stays finite.
  static constexpr double kDfShift = 2.0;

  StudentTFamily()
      : Family({LinkFunction::identity(), LinkFunction::log(),
                LinkFunction::log_shifted(kDfShift)}) {}

  std::string id() const override { return "t"; }
  std::string param_name(int k) const override {
    return k == 0 ? "mu" : (k == 1 ? "sigma" : "nu");
  }
  bool in_domain(const Theta& t) const override {
    return std::isfinite(t[0]) && t[1] > 0.0 && std::isfinite(t[1]) && t[2] > 0.0 &&
           !std::isnan(t[2]);
  }

  double mean(const Theta& t) const override {
    check(t);
    if (!(t[2] > 1.0)) throw DomainError("t: mean undefined for nu <= 1");
    return t[0];
  }

  InitialValues initial_values(const Vec& y) const override {
    auto m = detail::sample_moments(y);
    Theta t(3);
    t << m.mean, m.sd, 10.0;
    return {t, m.floored};
  }

  double sample(const Theta& t, std::mt19937_64& rng) const override {
    return t[0] + t[1] * std::student_t_distribution<double>(t[2])(rng);
  }

 protected:
  double log_pdf_unchecked(const Theta& t, double y) const override {
    const double mu = t[0], sigma = t[1], nu = t[2];
    const double z = (y - mu) / sigma;
    return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
           0.5 * std::log(nu * std::numbers::pi) - std::log(sigma) -
           0.5 * (nu + 1.0) * std::log1p(z * z / nu);
  }

  Derivatives derivatives_unchecked(const Theta& t, double y, int k) const override {
    const double sigma = t[1], nu = t[2];
    const double r = y - t[0];
    const double s = r * r / (sigma * sigma);
    const double d = nu + s;
    switch (k) {
      case 0:
        return {(nu + 1.0) * r / (sigma * sigma * d),
                (nu + 1.0) * (s - nu) / (sigma * sigma * d * d)};
      case 1:
        return {-1.0 / sigma + (nu + 1.0) * s / (sigma * d),
                1.0 / (sigma * sigma) - (nu + 1.0) * s * (3.0 * nu + s) / (sigma * sigma * d * d)};
      default: {
        using boost::math::digamma;
        using boost::math::trigamma;
        const double first = 0.5 * digamma(0.5 * (nu + 1.0)) - 0.5 * digamma(0.5 * nu) -
                             0.5 / nu - 0.5 * std::log1p(s / nu) +
                             0.5 * (nu + 1.0) * s / (nu * d);
        const double second = 0.25 * trigamma(0.5 * (nu + 1.0)) - 0.25 * trigamma(0.5 * nu) +
                              0.5 / (nu * nu) + 0.5 * s / (nu * d) -
                              0.5 * s * (nu * nu + 2.0 * nu + s) / (nu * nu * d * d);
        return {first, second};
      }
    }
  }

  double expected_second_unchecked(const Theta& t, int k) const override {
    const double s2 = t[1] * t[1], nu = t[2];
    if (k == 0) return -(nu + 1.0) / ((nu + 3.0) * s2);
    if (k == 1) return -2.0 * nu / ((nu + 3.0) * s2);
    using boost::math::trigamma;
    return -(0.25 * (trigamma(0.5 * nu) - trigamma(0.5 * (nu + 1.0))) -
             (nu + 5.0) / (2.0 * nu * (nu + 1.0) * (nu + 3.0)));
  }

  double cdf_unchecked(const Theta& t, double y) const override {
    return boost::math::cdf(boost::math::students_t_distribution<double>(t[2]),
                            (y - t[0]) / t[1]);
  }

  double quantile_unchecked(const Theta& t, double p) const override {
    return t[0] +
           t[1] * boost::math::quantile(boost::math::students_t_distribution<double>(t[2]), p);
  }
};

class JohnsonSUFamily final : public Family {
 public:
  JohnsonSUFamily()
      : Family({LinkFunction::identity(), LinkFunction::log(), LinkFunction::log(),
                LinkFunction::identity()}) {}

  std::string id() const override { return "jsu"; }
  std::string param_name(int k) const override {
    static const char* names[] = {"location", "scale", "tail", "skew"};
    return names[k];
  }
  bool in_domain(const Theta& t) const override {
    return std::isfinite(t[0]) && t[1] > 0.0 && std::isfinite(t[1]) && t[2] > 0.0 &&
           std::isfinite(t[2]) && std::isfinite(t[3]);
  }
  bool symmetric() const override { return false; }

  double mean(const Theta& t) const override {
    check(t);
    return t[0] - t[1] * std::exp(0.5 / (t[2] * t[2])) * std::sinh(t[3] / t[2]);
  }

  InitialValues initial_values(const Vec& y) const override {
    auto m = detail::sample_moments(y);
    Theta t(4);
    t << detail::median(y), m.sd, 1.0, 0.0;
    return {t, m.floored};
  }

  double sample(const Theta& t, std::mt19937_64& rng) const override {
    const double z = std::normal_distribution<double>()(rng);
    return t[0] + t[1] * std::sinh((z - t[3]) / t[2]);
  }

 protected:
  double log_pdf_unchecked(const Theta& t, double y) const override {
    const double u = (y - t[0]) / t[1];
    const double z = t[3] + t[2] * std::asinh(u);
    return std::log(t[2]) - std::log(t[1]) - detail::kLogSqrt2Pi - 0.5 * std::log1p(u * u) -
           0.5 * z * z;
  }

  Derivatives derivatives_unchecked(const Theta& t, double y, int k) const override {
    const double lam = t[1], delta = t[2];
    const double u = (y - t[0]) / lam;
    const double q2 = 1.0 + u * u;
    const double q = std::sqrt(q2);
    const double a = std::asinh(u);
    const double z = t[3] + delta * a;
    // Derivatives of l with respect to the standardised value u.
    const double lu = -u / q2 - z * delta / q;
    const double luu = -(1.0 - u * u) / (q2 * q2) - delta * delta / q2 + z * delta * u / (q2 * q);
    switch (k) {
      case 0:
        return {-lu / lam, luu / (lam * lam)};
      case 1:
        return {-1.0 / lam - u * lu / lam,
                (1.0 + 2.0 * u * lu + u * u * luu) / (lam * lam)};
      case 2:
        return {1.0 / delta - z * a, -1.0 / (delta * delta) - a * a};
      default:
        return {-z, -1.0};
    }
  }

  double expected_second_unchecked(const Theta& t, int k) const override {
    if (k == 2) return -(2.0 + t[3] * t[3]) / (t[2] * t[2]);
    if (k == 3) return -1.0;
    // Y = xi + lambda sinh((Z - gamma) / delta) with Z standard normal.
    const auto& q = detail::normal_quadrature();
    double acc = 0.0;
    for (Index i = 0; i < q.nodes.size(); ++i) {
      const double y = t[0] + t[1] * std::sinh((q.nodes[i] - t[3]) / t[2]);
      acc += q.weights[i] * derivatives_unchecked(t, y, k).second;
    }
    return acc;
  }

  double cdf_unchecked(const Theta& t, double y) const override {
    return detail::std_normal_cdf(t[3] + t[2] * std::asinh((y - t[0]) / t[1]));
  }

  double quantile_unchecked(const Theta& t, double p) const override {
    return t[0] + t[1] * std::sinh((detail::std_normal_quantile(p) - t[3]) / t[2]);
  }
};

/// Family by configuration id: "normal", "normal_mv", "t", "jsu".
inline FamilyPtr make_family(const std::string& id) {
  if (id == "normal") return std::make_shared<NormalFamily>();
  if (id == "normal_mv") return std::make_shared<NormalMeanVarianceFamily>();
  if (id == "t") return std::make_shared<StudentTFamily>();
  if (id == "jsu") return std::make_shared<JohnsonSUFamily>();
  throw DomainError("unknown distribution family '" + id + "'");
}

}  // namespace ogamlss
