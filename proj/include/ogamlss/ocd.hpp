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

// Online coordinate descent for the LASSO on Gramian statistics.
//
// For a fixed lambda the solver minimises
//
//   0.5 b' G b - H' b + lambda * sum_{j regularized} |b_j|,   lower <= b <= upper,
//
// which is the weighted least-squares LASSO once G = X'WX and H = X'Wy.  Only
// (G, H) are needed, so the same code serves batch fits and online updates.

#include "common.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

namespace ogamlss {

inline double soft_threshold(double v, double lambda) {
  if (v > lambda) return v - lambda;
  if (v < -lambda) return v + lambda;
  return 0.0;
}

/// H[j] - G[j,:] b + G[j,j] b[j]: the correlation of coordinate j with the
/// partial residual that excludes j.
inline double partial_residual(const Mat& G, const Vec& H, const Vec& beta, Index j) {
  return H[j] - G.row(j).dot(beta) + G(j, j) * beta[j];
}

struct PathConstraints {
  BoolVec regularized;
  Vec lower;
  Vec upper;

  Index dim() const { return regularized.size(); }

  /// Every coefficient regularized except `unpenalized` (usually the intercept
  /// at column 0); no bounds.
  static PathConstraints lasso(Index dim, Index unpenalized = 0) {
    PathConstraints c{BoolVec::Constant(dim, true), Vec::Constant(dim, -kInf),
                      Vec::Constant(dim, kInf)};
    if (unpenalized >= 0 && unpenalized < dim) c.regularized[unpenalized] = false;
    return c;
  }

  static PathConstraints unpenalized(Index dim) {
    return {BoolVec::Constant(dim, false), Vec::Constant(dim, -kInf), Vec::Constant(dim, kInf)};
  }

  void validate() const {
    detail::require_size(lower.size(), dim(), "lower bounds");
    detail::require_size(upper.size(), dim(), "upper bounds");
    for (Index j = 0; j < dim(); ++j)
      if (!(lower[j] <= upper[j])) throw DomainError("lower bound exceeds upper bound");
  }

  Vec clip(const Vec& b) const { return b.cwiseMax(lower).cwiseMin(upper); }
};

/// One clipped OCD coordinate step. Throws DomainError on a degenerate column
/// (G[j,j] <= 0).
inline double coordinate_update(const Mat& G, const Vec& H, const Vec& beta, Index j,
                                double lambda, double lower, double upper, bool regularized) {
  if (!(G(j, j) > 0.0)) throw DomainError("coordinate_update: non-positive diagonal");
  const double lam = regularized ? lambda : 0.0;
  const double raw = soft_threshold(partial_residual(G, H, beta, j), lam) / G(j, j);
  return std::clamp(raw, lower, upper);
}

struct LambdaGrid {
  double lambda_max = 0.0;
  double eps_lambda = 1e-3;
  Vec values;

  Index count() const { return values.size(); }
};

/// Log-spaced, strictly decreasing grid from max_{j regularized} |H[j]| down to
/// eps_lambda times that value. An all-zero H over the regularized entries
/// yields the single-entry grid {0}.
inline LambdaGrid compute_lambda_grid(const Vec& H, const BoolVec& regularized, double eps_lambda,
                                      Index count) {
  detail::require_size(regularized.size(), H.size(), "compute_lambda_grid mask");
  detail::require(detail::all_finite(H), "compute_lambda_grid: non-finite H");
  detail::require(eps_lambda > 0.0 && eps_lambda < 1.0, "eps_lambda must lie in (0, 1)");
  detail::require(count >= 1, "grid count must be positive");
  if (!regularized.any()) throw DomainError("compute_lambda_grid: no regularized coefficient");

  double lmax = 0.0;
  for (Index j = 0; j < H.size(); ++j)
    if (regularized[j]) lmax = std::max(lmax, std::abs(H[j]));

  LambdaGrid grid{lmax, eps_lambda, Vec()};
  if (lmax == 0.0) {
    grid.values = Vec::Zero(1);
    return grid;
  }
  grid.values.resize(count);
  if (count == 1) {
    grid.values[0] = lmax;
    return grid;
  }
  const double step = std::log(eps_lambda) / double(count - 1);
  for (Index i = 0; i < count; ++i) grid.values[i] = lmax * std::exp(step * double(i));
  grid.values[0] = lmax;
  grid.values[count - 1] = eps_lambda * lmax;
  return grid;
}

struct CoefficientPath {
  Mat betas;  // count x J, row l solves the problem at grid.values[l]
  BoolVec regularized;
  Vec lower;
  Vec upper;
  BoolVec converged;
  std::vector<int> iterations;

  Index count() const { return betas.rows(); }
  Index dim() const { return betas.cols(); }
};

enum class CoordinateOrder { Cyclic, Shuffled };

enum class WarmStart {
  PreviousLambda,  // first lambda from the warm path, later ones from lambda[l-1]
  SameLambda,      // every lambda from the warm path at the same index
  Blend,           // average of the two
};

struct PathOptions {
  double tol = 1e-4;
  int max_iter = 1000;
  bool active_set = true;
  CoordinateOrder order = CoordinateOrder::Cyclic;
  std::uint64_t seed = 0;
  WarmStart warm_start = WarmStart::PreviousLambda;
};

namespace detail {

class CoordinateSolver {
 public:
  CoordinateSolver(const Mat& G, const Vec& H, const PathConstraints& c, const PathOptions& opt)
      : G_(G), H_(H), c_(c), opt_(opt), rng_(opt.seed), all_(G.rows()) {
    std::iota(all_.begin(), all_.end(), Index{0});
    degenerate_.resize(all_.size());
    for (Index j = 0; j < G.rows(); ++j) degenerate_[j] = !(G(j, j) > 0.0);
  }

  bool degenerate(Index j) const { return degenerate_[j]; }

  /// Cycles to convergence at `lambda`; returns {converged, sweeps}.
  std::pair<bool, int> solve(Vec& beta, double lambda) {
    for (Index j = 0; j < beta.size(); ++j)
      if (degenerate_[j]) beta[j] = 0.0;
    Vec resid = H_ - G_ * beta;
    std::vector<Index> order = all_;

    int sweeps = 0;
    while (sweeps < opt_.max_iter) {
      const double full = sweep(G_, beta, resid, all_, order, lambda);
      ++sweeps;
      if (full < opt_.tol) return {true, sweeps};
      if (!opt_.active_set) continue;

      std::vector<Index> active;
      for (Index j = 0; j < beta.size(); ++j)
        if (!degenerate_[j] && (beta[j] != 0.0 || !c_.regularized[j])) active.push_back(j);
      const int used = solve_block(beta, resid, active, lambda, opt_.max_iter - sweeps);
      sweeps += used;
      resid.noalias() = H_ - G_ * beta;
    }
    return {false, sweeps};
  }

  /// Cycles only the unregularized coordinates, all regularized ones held at 0.
  bool solve_unpenalized_block(Vec& beta) {
    std::vector<Index> block;
    for (Index j = 0; j < beta.size(); ++j) {
      if (c_.regularized[j] || degenerate_[j])
        beta[j] = 0.0;
      else
        block.push_back(j);
    }
    if (block.empty()) return true;
    solve_block(beta, H_ - G_ * beta, block, 0.0, opt_.max_iter);
    return converged_;
  }

 private:
  // Sweeps the coordinates `block` of beta on the compact subproblem, others
  // fixed (full_resid = H - G beta on entry), until the largest change drops
  // below tol. Returns sweeps used.
  int solve_block(Vec& beta, const Vec& full_resid, const std::vector<Index>& block,
                  double lambda, int budget) {
    const Index m = static_cast<Index>(block.size());
    Mat Gb(m, m);
    Vec bb(m), rb(m), diag(m), lam(m), lo(m), hi(m);
    for (Index a = 0; a < m; ++a) {
      const Index j = block[a];
      bb[a] = beta[j];
      rb[a] = full_resid[j];
      for (Index c = 0; c < m; ++c) Gb(a, c) = G_(j, block[c]);
      diag[a] = G_(j, j);
      lam[a] = c_.regularized[j] ? lambda : 0.0;
      lo[a] = c_.lower[j];
      hi[a] = c_.upper[j];
    }
    std::vector<Index> order(m);
    std::iota(order.begin(), order.end(), Index{0});
    int used = 0;
    converged_ = false;
    while (used < budget) {
      if (opt_.order == CoordinateOrder::Shuffled) std::shuffle(order.begin(), order.end(), rng_);
      double change = 0.0;
      for (Index a : order) {
        const double next =
            std::clamp(soft_threshold(rb[a] + diag[a] * bb[a], lam[a]) / diag[a], lo[a], hi[a]);
        const double delta = next - bb[a];
        if (delta == 0.0) continue;
        if (!std::isfinite(delta)) throw NumericalError("coordinate descent diverged");
        change = std::max(change, std::abs(delta));
        bb[a] = next;
        const double* __restrict col = Gb.col(a).data();
        double* __restrict r = rb.data();
        for (Index c = 0; c < m; ++c) r[c] -= delta * col[c];
      }
      ++used;
      if (change < opt_.tol) {
        converged_ = true;
        break;
      }
    }
    for (Index a = 0; a < m; ++a) beta[block[a]] = bb[a];
    return used;
  }

  // One pass over `order` (positions into the subproblem G, beta, resid whose
  // coordinate a is global coordinate map[a]); resid tracks H - G beta.
  double sweep(const Mat& G, Vec& beta, Vec& resid, const std::vector<Index>& map,
               std::vector<Index>& order, double lambda) {
    if (opt_.order == CoordinateOrder::Shuffled) std::shuffle(order.begin(), order.end(), rng_);
    double max_change = 0.0;
    for (Index a : order) {
      const Index j = map[a];
      if (degenerate_[j]) continue;
      const double gjj = G(a, a);
      const double lam = c_.regularized[j] ? lambda : 0.0;
      const double next = std::clamp(soft_threshold(resid[a] + gjj * beta[a], lam) / gjj,
                                     c_.lower[j], c_.upper[j]);
      if (!std::isfinite(next)) throw NumericalError("coordinate descent diverged");
      const double delta = next - beta[a];
      if (delta == 0.0) continue;
      max_change = std::max(max_change, std::abs(delta));
      beta[a] = next;
      resid.noalias() -= delta * G.col(a);
    }
    return max_change;
  }

  const Mat& G_;
  const Vec& H_;
  const PathConstraints& c_;
  const PathOptions& opt_;
  std::mt19937_64 rng_;
  std::vector<Index> all_;
  std::vector<char> degenerate_;
  bool converged_ = false;
};

}  // namespace detail

/// Unregularized block fitted with every regularized coefficient at zero, and
/// the resulting residual correlations H - G b.  The largest |.| over the
/// regularized entries is the smallest lambda whose solution is all-zero on
/// the regularized set.
inline std::pair<Vec, Vec> unpenalized_residual(const Mat& G, const Vec& H,
                                                const PathConstraints& c,
                                                const PathOptions& opt = {}) {
  PathOptions tight = opt;
  tight.tol = std::min(opt.tol, 1e-12);
  tight.max_iter = std::max(opt.max_iter, 10000);
  tight.order = CoordinateOrder::Cyclic;
  detail::CoordinateSolver solver(G, H, c, tight);
  Vec beta = c.clip(Vec::Zero(H.size()));
  solver.solve_unpenalized_block(beta);
  Vec resid(H.size());
  for (Index j = 0; j < H.size(); ++j) resid[j] = partial_residual(G, H, beta, j);
  return {beta, resid};
}

/// Pathwise OCD over a decreasing lambda grid with warm starts and active-set
/// iterations. Non-convergence at a grid point is reported in `converged`,
/// never thrown.
inline CoefficientPath fit_path(const Mat& G, const Vec& H, const LambdaGrid& grid,
                                const PathConstraints& constraints, const PathOptions& opt = {},
                                const CoefficientPath* warm = nullptr) {
  const Index J = H.size();
  detail::require_size(G.rows(), J, "fit_path Gramian rows");
  detail::require_size(G.cols(), J, "fit_path Gramian cols");
  detail::require_size(constraints.dim(), J, "fit_path constraints");
  constraints.validate();
  detail::require(grid.count() >= 1, "fit_path: empty lambda grid");
  detail::require(detail::all_finite(G) && detail::all_finite(H), "fit_path: non-finite input");
  if (warm && warm->dim() != J) warm = nullptr;

  const Index L = grid.count();
  CoefficientPath path{Mat::Zero(L, J), constraints.regularized, constraints.lower,
                       constraints.upper, BoolVec::Constant(L, false), std::vector<int>(L, 0)};

  detail::CoordinateSolver solver(G, H, constraints, opt);
  auto warm_row = [&](Index l) -> Vec {
    const Index r = std::min(l, warm->count() - 1);
    return warm->betas.row(r).transpose();
  };

  Vec beta = Vec::Zero(J);
  for (Index l = 0; l < L; ++l) {
    const double lambda = grid.values[l];
    if (l == 0) {
      beta = warm && warm->count() > 0 ? warm_row(0) : Vec::Zero(J);
    } else if (warm && warm->count() > 0 && opt.warm_start == WarmStart::SameLambda) {
      beta = warm_row(l);
    } else if (warm && warm->count() > 0 && opt.warm_start == WarmStart::Blend) {
      beta = 0.5 * (beta + warm_row(l));
    }
    beta = constraints.clip(beta);

    if (l == 0 && constraints.regularized.any()) {
      // Exact zero solution when lambda dominates every residual correlation.
      Vec trial = beta;
      if (solver.solve_unpenalized_block(trial)) {
        double worst = 0.0;
        for (Index j = 0; j < J; ++j)
          if (constraints.regularized[j] && !solver.degenerate(j))
            worst = std::max(worst, std::abs(partial_residual(G, H, trial, j)));
        if (worst <= lambda * (1.0 + 1e-9)) {
          path.betas.row(0) = trial.transpose();
          path.converged[0] = true;
          beta = trial;
          continue;
        }
      }
    }

    auto [ok, sweeps] = solver.solve(beta, lambda);
    path.betas.row(l) = beta.transpose();
    path.converged[l] = ok;
    path.iterations[l] = sweeps;
  }
  return path;
}

}  // namespace ogamlss
