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

// Discounted, weighted Gramian sufficient statistics
//
//   G_n = sum_i gamma^(n-i) w_i x_i' x_i,   H_n = sum_i gamma^(n-i) w_i x_i' y_i,
//   omega_n = sum_i gamma^(n-i) w_i,
//
// and the Sherman-Morrison recursion for G_n^{-1}.

#include "binary_io.hpp"
#include "common.hpp"

#include <cstdint>
#include <istream>
#include <ostream>

namespace ogamlss {

struct GramState {
  Mat G;
  Vec H;
  double omega = 0.0;
  std::uint64_t n_seen = 0;
  double gamma = 1.0;

  Index dim() const { return H.size(); }
};

struct InverseGramState {
  Mat Ginv;
  double gamma = 1.0;

  Index dim() const { return Ginv.rows(); }
};

inline void check_forget(double gamma) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw DomainError("forget factor must lie in (0, 1]");
}

inline GramState make_gram(Index dim, double gamma) {
  check_forget(gamma);
  return GramState{Mat::Zero(dim, dim), Vec::Zero(dim), 0.0, 0, gamma};
}

/// Absorbs one row with weight `w`; the input state is left untouched.
inline GramState update_gram(const GramState& state, const Vec& x, double y, double w) {
  detail::require_size(x.size(), state.dim(), "update_gram row");
  detail::require(std::isfinite(y) && detail::all_finite(x), "update_gram: non-finite input");
  detail::require(w > 0.0 && std::isfinite(w), "update_gram: weight must be positive and finite");

  GramState out = state;
  out.G *= state.gamma;
  out.G.noalias() += w * x * x.transpose();
  out.H = state.gamma * state.H + (w * y) * x;
  out.omega = state.gamma * state.omega + w;
  out.n_seen = state.n_seen + 1;
  detail::symmetrize(out.G);
  return out;
}

/// Mini-batch absorption. Row i of `X` (0-based, t rows) carries the discount
/// gamma^(t-1-i), which makes the result identical to t calls of update_gram.
inline GramState update_gram_batch(const GramState& state, const Mat& X, const Vec& y,
                                   const Vec& w) {
  const Index t = X.rows();
  detail::require_size(X.cols(), state.dim(), "update_gram_batch columns");
  detail::require_size(y.size(), t, "update_gram_batch response");
  detail::require_size(w.size(), t, "update_gram_batch weights");
  detail::require(detail::all_finite(X) && detail::all_finite(y),
                  "update_gram_batch: non-finite input");
  detail::require((w.array() > 0.0).all() && detail::all_finite(w),
                  "update_gram_batch: weights must be positive and finite");

  Vec dw(t);
  for (Index i = 0; i < t; ++i) dw[i] = std::pow(state.gamma, double(t - 1 - i)) * w[i];
  const double decay = std::pow(state.gamma, double(t));

  GramState out = state;
  out.G = decay * state.G;
  out.G.noalias() += X.transpose() * dw.asDiagonal() * X;
  out.H = decay * state.H;
  out.H.noalias() += X.transpose() * dw.cwiseProduct(y);
  out.omega = decay * state.omega + dw.sum();
  out.n_seen = state.n_seen + static_cast<std::uint64_t>(t);
  detail::symmetrize(out.G);
  return out;
}

inline constexpr double kShermanMorrisonFloor = 1e-12;

/// Weighted, discounted Sherman-Morrison step:
///   Ginv' = (1/gamma) [Ginv - Ginv x' x Ginv / (gamma/w + x Ginv x')].
/// Throws NumericalError when the denominator is numerically zero; the caller
/// should then rebuild the inverse from the Gramian (see rebuild_inverse).
inline InverseGramState update_inverse_gram(const InverseGramState& state, const Vec& x,
                                            double w) {
  detail::require_size(x.size(), state.dim(), "update_inverse_gram row");
  detail::require(w > 0.0 && std::isfinite(w), "update_inverse_gram: weight must be positive");
  detail::require(detail::all_finite(x), "update_inverse_gram: non-finite input");

  const Vec gx = state.Ginv * x;
  const double denom = state.gamma / w + x.dot(gx);
  if (!(std::abs(denom) > kShermanMorrisonFloor))
    throw NumericalError("update_inverse_gram: singular rank-one update");

  InverseGramState out = state;
  out.Ginv = (state.Ginv - (gx * gx.transpose()) / denom) / state.gamma;
  detail::symmetrize(out.Ginv);
  return out;
}

/// Moore-Penrose inverse of the Gramian via a symmetric eigendecomposition.
inline InverseGramState rebuild_inverse(const GramState& gram) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(gram.G);
  const Vec& ev = eig.eigenvalues();
  const double cutoff = std::max(ev.cwiseAbs().maxCoeff(), 1.0) * double(gram.dim()) *
                        std::numeric_limits<double>::epsilon();
  Vec inv = Vec::Zero(ev.size());
  for (Index i = 0; i < ev.size(); ++i)
    if (ev[i] > cutoff) inv[i] = 1.0 / ev[i];
  InverseGramState out{eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose(),
                       gram.gamma};
  detail::symmetrize(out.Ginv);
  return out;
}

/// Sherman-Morrison with the rebuild fallback; `after` must already contain `x`.
inline InverseGramState update_inverse_gram_or_rebuild(const InverseGramState& state,
                                                       const GramState& after, const Vec& x,
                                                       double w) {
  try {
    return update_inverse_gram(state, x, w);
  } catch (const NumericalError&) {
    return rebuild_inverse(after);
  }
}

/// (1 - gamma^N) / (1 - gamma), equal to N when gamma == 1.
inline double effective_sample_size(double gamma, double n) {
  check_forget(gamma);
  detail::require(n >= 0.0, "effective_sample_size: negative count");
  if (gamma == 1.0) return n;
  return -std::expm1(n * std::log(gamma)) / (1.0 - gamma);
}

// Snapshot layout (little-endian): 4-byte magic "OGRM", u32 version, u64 J,
// then G (J*J, row-major), H (J), omega, n_seen, gamma as f64.
inline constexpr std::uint32_t kGramSnapshotVersion = 1;

inline void write_gram(std::ostream& out, const GramState& s) {
  io::Writer w(out);
  w.magic("OGRM");
  w.u32(kGramSnapshotVersion);
  w.u64(static_cast<std::uint64_t>(s.dim()));
  for (Index i = 0; i < s.dim(); ++i)
    for (Index j = 0; j < s.dim(); ++j) w.f64(s.G(i, j));
  for (Index i = 0; i < s.dim(); ++i) w.f64(s.H[i]);
  w.f64(s.omega);
  w.f64(static_cast<double>(s.n_seen));
  w.f64(s.gamma);
  w.ok();
}

inline GramState read_gram(std::istream& in) {
  io::Reader r(in);
  r.expect_magic("OGRM");
  if (r.u32() != kGramSnapshotVersion) throw io::FormatError("unsupported gram snapshot version");
  const auto J = r.u64();
  if (J > 100000) throw io::FormatError("implausible gram dimension");
  GramState s;
  s.G.resize(Index(J), Index(J));
  s.H.resize(Index(J));
  for (Index i = 0; i < Index(J); ++i)
    for (Index j = 0; j < Index(J); ++j) s.G(i, j) = r.f64();
  for (Index i = 0; i < Index(J); ++i) s.H[i] = r.f64();
  s.omega = r.f64();
  s.n_seen = static_cast<std::uint64_t>(r.f64());
  s.gamma = r.f64();
  return s;
}

inline void write_inverse_gram(std::ostream& out, const InverseGramState& s) {
  io::Writer w(out);
  w.magic("OGRI");
  w.u32(kGramSnapshotVersion);
  w.u64(static_cast<std::uint64_t>(s.dim()));
  for (Index i = 0; i < s.dim(); ++i)
    for (Index j = 0; j < s.dim(); ++j) w.f64(s.Ginv(i, j));
  w.f64(s.gamma);
  w.ok();
}

inline InverseGramState read_inverse_gram(std::istream& in) {
  io::Reader r(in);
  r.expect_magic("OGRI");
  if (r.u32() != kGramSnapshotVersion) throw io::FormatError("unsupported gram snapshot version");
  const auto J = r.u64();
  if (J > 100000) throw io::FormatError("implausible gram dimension");
  InverseGramState s;
  s.Ginv.resize(Index(J), Index(J));
  for (Index i = 0; i < Index(J); ++i)
    for (Index j = 0; j < Index(J); ++j) s.Ginv(i, j) = r.f64();
  s.gamma = r.f64();
  return s;
}

}  // namespace ogamlss
