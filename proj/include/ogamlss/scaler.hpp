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

// Exponentially discounted mean-variance standardisation of covariates
// (Welford's recursion with forgetting), and the affine maps it induces on
// design rows, Gramians and coefficient vectors.

#include "common.hpp"
#include "gram.hpp"

namespace ogamlss {

inline constexpr double kScaleFloor = 1e-8;

struct ScalerState {
  Vec mean;
  Vec m2;  // discounted sum of squared deviations
  double omega = 0.0;
  double gamma = 1.0;
  BoolVec skip_mask;  // columns passed through untouched (intercept, dummies)

  Index dim() const { return mean.size(); }
  bool fitted() const { return omega > 0.0; }
  Vec variance() const { return omega > 0.0 ? Vec(m2 / omega) : Vec::Zero(dim()); }
  Vec sd() const { return variance().cwiseMax(0.0).cwiseSqrt().cwiseMax(kScaleFloor); }
};

inline ScalerState make_scaler(Index dim, double gamma, BoolVec skip_mask = {}) {
  check_forget(gamma);
  if (skip_mask.size() == 0) skip_mask = BoolVec::Constant(dim, false);
  detail::require_size(skip_mask.size(), dim, "scaler skip mask");
  return ScalerState{Vec::Zero(dim), Vec::Zero(dim), 0.0, gamma, std::move(skip_mask)};
}

/// omega' = gamma omega + 1, d = x - mean, mean' = mean + d / omega',
/// m2' = gamma m2 + d (x - mean').
inline ScalerState partial_fit(const ScalerState& s, const Vec& x) {
  detail::require_size(x.size(), s.dim(), "scaler row");
  detail::require(detail::all_finite(x), "scaler: non-finite input");
  ScalerState out = s;
  out.omega = s.gamma * s.omega + 1.0;
  const Vec d = x - s.mean;
  out.mean = s.mean + d / out.omega;
  out.m2 = s.gamma * s.m2 + d.cwiseProduct(x - out.mean);
  out.m2 = out.m2.cwiseMax(0.0);
  return out;
}

inline ScalerState partial_fit(const ScalerState& s, const Mat& rows) {
  ScalerState out = s;
  for (Index i = 0; i < rows.rows(); ++i) out = partial_fit(out, Vec(rows.row(i).transpose()));
  return out;
}

/// (x - mean) / sd on the non-masked columns.
inline Vec transform(const ScalerState& s, const Vec& x) {
  if (!s.fitted()) throw StateError("scaler: transform before any partial_fit");
  detail::require_size(x.size(), s.dim(), "scaler row");
  const Vec sd = s.sd();
  Vec out = x;
  for (Index j = 0; j < x.size(); ++j)
    if (!s.skip_mask[j]) out[j] = (x[j] - s.mean[j]) / sd[j];
  return out;
}

inline Vec inverse_transform(const ScalerState& s, const Vec& z) {
  if (!s.fitted()) throw StateError("scaler: inverse_transform before any partial_fit");
  detail::require_size(z.size(), s.dim(), "scaler row");
  const Vec sd = s.sd();
  Vec out = z;
  for (Index j = 0; j < z.size(); ++j)
    if (!s.skip_mask[j]) out[j] = s.mean[j] + sd[j] * z[j];
  return out;
}

/// Linear map x -> M x on rows whose column 0 is the constant 1:
///   (M x)_j = (x_j - shift_j * x_0) / scale_j   for mapped columns,
///   (M x)_j = x_j                               otherwise.
/// Because the intercept carries the shift, centring and scaling act linearly,
/// so Gramians transform as M G M' and coefficients as b -> M' b.
class AffineMap {
 public:
  AffineMap() = default;
  AffineMap(Vec shift, Vec scale, BoolVec mapped)
      : shift_(std::move(shift)), scale_(std::move(scale)), mapped_(std::move(mapped)) {
    mapped_[0] = false;
  }

  static AffineMap identity(Index dim) {
    return AffineMap(Vec::Zero(dim), Vec::Ones(dim), BoolVec::Constant(dim, false));
  }

  /// Current standardisation of a scaler (intercept at column 0).
  static AffineMap from_scaler(const ScalerState& s) {
    BoolVec mapped = s.skip_mask.unaryExpr([](bool b) { return !b; });
    return AffineMap(s.mean, s.sd(), mapped);
  }

  /// Like from_scaler but with unit scale on (near) constant columns, so the
  /// map stays well conditioned if such a column later starts to vary.
  static AffineMap anchor_from_scaler(const ScalerState& s) {
    AffineMap m = from_scaler(s);
    const Vec var = s.variance();
    for (Index j = 0; j < m.dim(); ++j) {
      const double tiny = kScaleFloor * std::max(1.0, std::abs(s.mean[j]));
      if (!(std::sqrt(std::max(var[j], 0.0)) > tiny)) m.scale_[j] = 1.0;
    }
    return m;
  }

  Index dim() const { return shift_.size(); }
  const Vec& shift() const { return shift_; }
  const Vec& scale() const { return scale_; }
  const BoolVec& mapped() const { return mapped_; }

  Vec apply(const Vec& x) const {
    Vec out = x;
    for (Index j = 1; j < dim(); ++j)
      if (mapped_[j]) out[j] = (x[j] - shift_[j] * x[0]) / scale_[j];
    return out;
  }

  Mat apply_rows(const Mat& X) const {
    Mat out = X;
    for (Index j = 1; j < dim(); ++j)
      if (mapped_[j]) out.col(j) = (X.col(j) - shift_[j] * X.col(0)) / scale_[j];
    return out;
  }

  Mat matrix() const {
    Mat m = Mat::Identity(dim(), dim());
    for (Index j = 1; j < dim(); ++j) {
      if (!mapped_[j]) continue;
      m(j, j) = 1.0 / scale_[j];
      m(j, 0) = -shift_[j] / scale_[j];
    }
    return m;
  }

  /// b -> M' b: coefficients on mapped rows back to coefficients on inputs.
  Vec transpose_apply(const Vec& b) const {
    Vec out = b;
    for (Index j = 1; j < dim(); ++j) {
      if (!mapped_[j]) continue;
      out[j] = b[j] / scale_[j];
      out[0] -= shift_[j] / scale_[j] * b[j];
    }
    return out;
  }

  /// Inverse of transpose_apply.
  Vec inverse_transpose_apply(const Vec& b) const {
    Vec out = b;
    for (Index j = 1; j < dim(); ++j) {
      if (!mapped_[j]) continue;
      out[j] = b[j] * scale_[j];
      out[0] += shift_[j] * b[j];
    }
    return out;
  }

  /// this o inner^{-1}: maps rows already transformed by `inner` onward to
  /// rows transformed by this map.
  AffineMap relative_to(const AffineMap& inner) const {
    AffineMap out = *this;
    for (Index j = 1; j < dim(); ++j) {
      const bool a = mapped_[j], b = inner.mapped_[j];
      const double sa = a ? scale_[j] : 1.0, ma = a ? shift_[j] : 0.0;
      const double sb = b ? inner.scale_[j] : 1.0, mb = b ? inner.shift_[j] : 0.0;
      out.scale_[j] = sa / sb;
      out.shift_[j] = (ma - mb) / sb;
      out.mapped_[j] = a || b;
    }
    return out;
  }

  /// (M G M', M H) without forming dense products on the identity part.
  std::pair<Mat, Vec> transform_gram(const Mat& G, const Vec& H) const {
    // M G M' with M = matrix(): row ops then column ops, O(J^2).
    Mat g = G;
    Vec h = H;
    for (Index j = 1; j < dim(); ++j) {
      if (!mapped_[j]) continue;
      g.row(j) = (g.row(j) - shift_[j] * g.row(0)) / scale_[j];
      h[j] = (h[j] - shift_[j] * h[0]) / scale_[j];
    }
    for (Index j = 1; j < dim(); ++j) {
      if (!mapped_[j]) continue;
      g.col(j) = (g.col(j) - shift_[j] * g.col(0)) / scale_[j];
    }
    detail::symmetrize(g);
    return {g, h};
  }

  /// transpose_apply on every row of B.
  Mat transpose_apply_rows(const Mat& B) const {
    Mat out = B;
    for (Index j = 1; j < dim(); ++j) {
      if (!mapped_[j]) continue;
      out.col(j) = B.col(j) / scale_[j];
      out.col(0) -= shift_[j] / scale_[j] * B.col(j);
    }
    return out;
  }

  /// inverse_transpose_apply on every row of B.
  Mat inverse_transpose_apply_rows(const Mat& B) const {
    Mat out = B;
    for (Index j = 1; j < dim(); ++j) {
      if (!mapped_[j]) continue;
      out.col(j) = B.col(j) * scale_[j];
      out.col(0) += shift_[j] * B.col(j);
    }
    return out;
  }

 private:
  Vec shift_;
  Vec scale_;
  BoolVec mapped_;
};

}  // namespace ogamlss
