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

// Online distributional regression.
//
// Every distribution parameter theta_k has its own linear predictor
// eta_k = x_k b_k and link g_k. Fitting follows the nested outer/inner cycle:
// the outer cycle walks over the parameters, the inner cycle regresses the
// working response z_k on x_k with working weights w_k, by weighted least
// squares or by a LASSO path plus information-criterion selection. Only the
// discounted Gramians of the weighted regressions are kept, so a new
// observation is absorbed in O(J^2) per parameter without revisiting history.
//
// Gramians are accumulated on rows standardised by a fixed anchor map taken
// at the initial fit. At solve time they are mapped to the current running
// standardisation, which keeps them well conditioned while the scaler drifts.

#include "binary_io.hpp"
#include "common.hpp"
#include "distributions.hpp"
#include "gram.hpp"
#include "ocd.hpp"
#include "scaler.hpp"
#include "selection.hpp"

#include <Eigen/QR>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ogamlss {

enum class Estimation { Ols, Lasso };
enum class OlsSolver { Direct, Recursive };

/// Curvature used for the working weights.
enum class Curvature {
  Observed,  // Newton: observed second derivative, floored when not positive
  Expected,  // scoring: expected second derivative under the current fit
};

struct ParamConfig {
  double gamma = 1.0;
  double eps_lambda = 1e-3;
  Index grid_count = 100;
  bool fit = true;       // false keeps the parameter at its starting value
  BoolVec scale_skip;    // empty: intercept plus 0/1 columns pass unscaled
  BoolVec regularized;   // empty: everything except the intercept
  Vec lower;             // empty: unbounded (bounds act on standardised scale)
  Vec upper;
};

struct EstimatorConfig {
  std::string family = "normal";
  Estimation estimation = Estimation::Lasso;
  OlsSolver ols_solver = OlsSolver::Direct;
  Curvature curvature = Curvature::Expected;
  ICSpec ic = ICSpec::bic();
  SelectionRule rule = SelectionRule::InformationCriterion;
  std::vector<ParamConfig> params;  // resized to the family's parameter count

  double outer_tol = 1e-5;
  double inner_tol = 1e-5;
  int max_outer = 10;
  int max_inner = 30;
  int max_step_halving = 8;
  double eps_rss = 1.5;  // +inf disables the break
  double weight_floor = 1e-10;
  double domain_margin = 1e-10;
  bool select_every_inner = true;
  PathOptions path{};
  WarmStart online_warm_start = WarmStart::SameLambda;

  /// Parameter defaults for a family: eps_lambda 1e-3 for the location,
  /// 1e-4 for the higher parameters.
  static EstimatorConfig for_family(const std::string& family, double gamma = 1.0) {
    EstimatorConfig c;
    c.family = family;
    const int p = make_family(family)->param_count();
    c.params.resize(static_cast<std::size_t>(p));
    for (int k = 0; k < p; ++k) {
      c.params[static_cast<std::size_t>(k)].gamma = gamma;
      c.params[static_cast<std::size_t>(k)].eps_lambda = k == 0 ? 1e-3 : 1e-4;
    }
    return c;
  }

  void validate(int param_count) const {
    if (static_cast<int>(params.size()) != param_count)
      throw DimensionError("estimator config: one ParamConfig per distribution parameter");
    for (const auto& p : params) {
      check_forget(p.gamma);
      detail::require(p.eps_lambda > 0.0 && p.eps_lambda < 1.0, "eps_lambda must lie in (0, 1)");
      detail::require(p.grid_count >= 1, "grid_count must be positive");
    }
    detail::require(eps_rss > 1.0, "eps_rss must exceed 1");
    detail::require(outer_tol > 0.0 && inner_tol > 0.0, "tolerances must be positive");
    detail::require(max_outer >= 1 && max_inner >= 1, "iteration limits must be positive");
    detail::require(weight_floor > 0.0, "weight floor must be positive");
  }
};

/// Per-row linearisation of the log-likelihood in eta_k.
struct WorkingPoint {
  Vec eta;
  Vec theta;
  Vec u;  // score in eta
  Vec w;  // working weight
  Vec z;  // working response eta + u / w
  Index floored = 0;  // rows whose weight hit the floor
};

struct ParamState {
  bool fitted = false;  // false: held at its starting value, no statistics
  GramState gram;       // on anchored rows
  InverseGramState inverse;  // only for the recursive OLS solver
  ScalerState scaler;
  AffineMap anchor;
  RssTracker rss;
  LambdaGrid grid;
  CoefficientPath path;  // on rows standardised by path_map
  AffineMap path_map;
  PathConstraints constraints;
  Index selected = 0;
  Vec beta;  // on raw rows
};

struct FitReport {
  bool converged = false;
  int outer_iterations = 0;
  int inner_iterations = 0;
  Index floored_weights = 0;
  bool clamped = false;    // some theta was pushed back into its domain
  bool rss_break = false;  // an inner cycle stopped on RSS growth
  bool diverged = false;   // the step was rejected and previous coefficients kept
  double deviance = 0.0;
};

struct EstimatorState {
  EstimatorConfig config;
  FamilyPtr family;
  std::vector<ParamState> params;
  double loglik = 0.0;  // discounted log-likelihood accumulator (location gamma)
  double loglik_mass = 0.0;
  std::uint64_t n_seen = 0;
  bool fitted = false;
  FitReport report;

  int param_count() const { return static_cast<int>(params.size()); }
  Index dim(int k) const { return params[static_cast<std::size_t>(k)].beta.size(); }
};

/// One design matrix per distribution parameter, column 0 all ones.
using Design = std::vector<Mat>;

inline Design same_design(const Mat& X, int param_count) {
  return Design(static_cast<std::size_t>(param_count), X);
}

namespace detail {

inline const ParamState& pstate(const EstimatorState& s, int k) {
  return s.params[static_cast<std::size_t>(k)];
}
inline ParamState& pstate(EstimatorState& s, int k) { return s.params[static_cast<std::size_t>(k)]; }
inline const ParamConfig& pconfig(const EstimatorConfig& c, int k) {
  return c.params[static_cast<std::size_t>(k)];
}

inline void check_design(const Design& X, Index n, int p, const EstimatorState* s) {
  if (static_cast<int>(X.size()) != p) throw DimensionError("design: one matrix per parameter");
  for (int k = 0; k < p; ++k) {
    const Mat& x = X[static_cast<std::size_t>(k)];
    require_size(x.rows(), n, "design rows");
    if (s) require_size(x.cols(), s->dim(k), "design columns");
    require(x.cols() >= 1, "design needs an intercept column");
    require(all_finite(x), "design: non-finite entry");
    require((x.col(0).array() == 1.0).all(), "design: column 0 must be the intercept (all ones)");
  }
}

inline BoolVec default_scale_skip(const Mat& X) {
  BoolVec skip(X.cols());
  for (Index j = 0; j < X.cols(); ++j)
    skip[j] = j == 0 || (X.col(j).array() == 0.0 || X.col(j).array() == 1.0).all();
  return skip;
}

inline PathConstraints make_constraints(const ParamConfig& pc, Index J) {
  PathConstraints c = PathConstraints::lasso(J, 0);
  if (pc.regularized.size()) {
    require_size(pc.regularized.size(), J, "regularization mask");
    c.regularized = pc.regularized;
    c.regularized[0] = false;
  }
  if (pc.lower.size()) {
    require_size(pc.lower.size(), J, "lower bounds");
    c.lower = pc.lower;
  }
  if (pc.upper.size()) {
    require_size(pc.upper.size(), J, "upper bounds");
    c.upper = pc.upper;
  }
  c.validate();
  return c;
}

inline bool has_bounds(const PathConstraints& c) {
  return (c.lower.array() > -kInf).any() || (c.upper.array() < kInf).any();
}

inline Vec discounts(double gamma, Index n) {
  Vec d(n);
  double f = 1.0;
  for (Index i = n - 1; i >= 0; --i) {
    d[i] = f;
    f *= gamma;
  }
  return d;
}

/// theta for every row and parameter (n x p); clamps into the domain.
inline Mat predict_theta(const EstimatorState& s, const Design& X, bool* clamped = nullptr) {
  const int p = s.param_count();
  const Index n = X[0].rows();
  Mat theta(n, p);
  for (int k = 0; k < p; ++k) {
    const Vec eta = X[static_cast<std::size_t>(k)] * pstate(s, k).beta;
    const auto& link = s.family->link(k);
    for (Index i = 0; i < n; ++i) theta(i, k) = link.inverse(eta[i]);
  }
  for (Index i = 0; i < n; ++i) {
    Theta t = theta.row(i).transpose();
    if (!s.family->in_domain(t) && s.family->clamp(t, s.config.domain_margin)) {
      if (clamped) *clamped = true;
      theta.row(i) = t.transpose();
    }
  }
  return theta;
}

inline Vec row_loglik(const Family& f, const Mat& theta, const Vec& y) {
  Vec ll(y.size());
  for (Index i = 0; i < y.size(); ++i) ll[i] = f.log_pdf(theta.row(i).transpose(), y[i]);
  return ll;
}

}  // namespace detail

/// Working point of parameter k at the fitted values `theta` (n x p) for
/// linear predictor eta_k.
inline WorkingPoint working_point(const Family& family, int k, const Vec& eta, const Mat& theta,
                                  const Vec& y, Curvature curvature = Curvature::Observed,
                                  double weight_floor = 1e-10) {
  const Index n = y.size();
  detail::require_size(eta.size(), n, "working_point eta");
  detail::require_size(theta.rows(), n, "working_point theta");
  const auto& link = family.link(k);
  WorkingPoint wp{eta, theta.col(k), Vec(n), Vec(n), Vec(n), 0};
  for (Index i = 0; i < n; ++i) {
    const Theta t = theta.row(i).transpose();
    const Derivatives d = family.derivatives(t, y[i], k);
    const double second =
        curvature == Curvature::Observed ? d.second : family.expected_second(t, k);
    const double dtheta = link.inverse_derivative(eta[i]);
    double w = -second * dtheta * dtheta;
    if (!(w > weight_floor)) {
      w = weight_floor;
      ++wp.floored;
    }
    wp.u[i] = d.first * dtheta;
    wp.w[i] = w;
    wp.z[i] = eta[i] + wp.u[i] / w;
  }
  if (!detail::all_finite(wp.z) || !detail::all_finite(wp.w))
    throw NumericalError("working point: non-finite working response");
  return wp;
}

/// Single-row convenience: x is the parameter-k design row, beta its raw
/// coefficients, theta the full parameter vector at that row.
inline WorkingPoint working_point(const Family& family, int k, const Vec& x, const Vec& beta,
                                  const Theta& theta, double y,
                                  Curvature curvature = Curvature::Observed,
                                  double weight_floor = 1e-10) {
  Mat th = theta.transpose();
  th(0, k) = family.link(k).inverse(x.dot(beta));
  return working_point(family, k, Vec::Constant(1, x.dot(beta)), th, Vec::Constant(1, y),
                       curvature, weight_floor);
}

namespace detail {

struct Solve {
  Vec beta;  // raw rows
  CoefficientPath path;
  AffineMap path_map;
  LambdaGrid grid;
  Index selected = 0;
  RssTracker rss;
  Vec scaled_beta;
};

/// Weighted least squares on standardised statistics, degenerate columns
/// pinned to zero.
inline Vec solve_ols(const Mat& G, const Vec& H) {
  const Index J = H.size();
  std::vector<Index> keep;
  const double scale = std::max(1.0, G.diagonal().cwiseAbs().maxCoeff());
  for (Index j = 0; j < J; ++j)
    if (G(j, j) > 1e-14 * scale) keep.push_back(j);
  Vec beta = Vec::Zero(J);
  if (keep.empty()) return beta;
  const Index m = static_cast<Index>(keep.size());
  Mat g(m, m);
  Vec h(m);
  for (Index a = 0; a < m; ++a) {
    h[a] = H[keep[a]];
    for (Index b = 0; b < m; ++b) g(a, b) = G(keep[a], keep[b]);
  }
  Eigen::ColPivHouseholderQR<Mat> qr(g);
  qr.setThreshold(1e-12);
  if (qr.rank() < m) throw NumericalError("singular design in OLS estimation");
  const Vec sol = qr.solve(h);
  for (Index a = 0; a < m; ++a) beta[keep[a]] = sol[a];
  return beta;
}

/// Path coefficients re-expressed for a new standardisation.
inline CoefficientPath remap_path(const CoefficientPath& path, const AffineMap& from,
                                  const AffineMap& to) {
  CoefficientPath out = path;
  out.betas = to.inverse_transpose_apply_rows(from.transpose_apply_rows(path.betas));
  return out;
}

/// Solves parameter k on candidate statistics `gram` (anchored rows). The
/// rows `Xa` (anchored) with working (z, w) feed the RSS tracker `base`.
inline Solve solve_param(const EstimatorConfig& cfg, const ParamState& ps, int k,
                         const GramState& gram, const InverseGramState* inverse,
                         const RssTracker& base, const Mat& Xa, const Vec& z, const Vec& w,
                         bool reselect, bool online) {
  const ParamConfig& pc = pconfig(cfg, k);
  Solve out;
  const AffineMap A = AffineMap::from_scaler(ps.scaler);
  const AffineMap C = A.relative_to(ps.anchor);
  const Mat Xs = C.apply_rows(Xa);

  if (cfg.estimation == Estimation::Ols) {
    const bool bounded = has_bounds(ps.constraints);
    if (cfg.ols_solver == OlsSolver::Recursive && inverse && !bounded) {
      const Vec ba = inverse->Ginv * gram.H;
      out.scaled_beta = C.inverse_transpose_apply(ba);
    } else {
      auto [Gs, Hs] = C.transform_gram(gram.G, gram.H);
      if (bounded) {
        PathConstraints c = ps.constraints;
        c.regularized.setConstant(false);
        LambdaGrid g0{0.0, pc.eps_lambda, Vec::Zero(1)};
        const CoefficientPath* warm = ps.path.count() ? &ps.path : nullptr;
        CoefficientPath remapped;
        if (warm) {
          remapped = remap_path(ps.path, ps.path_map, A);
          warm = &remapped;
        }
        out.scaled_beta = fit_path(Gs, Hs, g0, c, cfg.path, warm).betas.row(0).transpose();
      } else {
        out.scaled_beta = solve_ols(Gs, Hs);
      }
    }
    out.grid = LambdaGrid{0.0, pc.eps_lambda, Vec::Zero(1)};
    out.path = CoefficientPath{out.scaled_beta.transpose(), BoolVec::Constant(Xa.cols(), false),
                               ps.constraints.lower, ps.constraints.upper,
                               BoolVec::Constant(1, true), std::vector<int>(1, 0)};
    out.path_map = A;
    out.selected = 0;
    out.rss = update_rss(base.count() == 1 ? base : make_rss_tracker(1, pc.gamma),
                         Mat(Xs * out.scaled_beta), z, w);
    out.beta = A.transpose_apply(out.scaled_beta);
    return out;
  }

  auto [Gs, Hs] = C.transform_gram(gram.G, gram.H);
  PathOptions opt = cfg.path;
  if (online) opt.warm_start = cfg.online_warm_start;
  const auto& cons = ps.constraints;
  const bool any_reg = cons.regularized.any();
  if (any_reg) {
    const Vec resid = unpenalized_residual(Gs, Hs, cons, opt).second;
    out.grid = compute_lambda_grid(resid, cons.regularized, pc.eps_lambda, pc.grid_count);
  } else {
    out.grid = LambdaGrid{0.0, pc.eps_lambda, Vec::Zero(1)};
  }
  CoefficientPath remapped;
  const CoefficientPath* warm = nullptr;
  if (ps.path.count() && ps.path.dim() == Xa.cols()) {
    remapped = remap_path(ps.path, ps.path_map, A);
    warm = &remapped;
  }
  out.path = fit_path(Gs, Hs, out.grid, cons, opt, warm);
  out.path_map = A;

  const Mat preds = Xs * out.path.betas.transpose();  // rows x L
  const RssTracker start =
      base.count() == out.path.count() ? base : [&] {
        // Grid length changed (degenerate response): restart from the
        // tracker's best mean square so the scale of the criterion survives.
        RssTracker t = make_rss_tracker(out.path.count(), pc.gamma);
        t.omega = base.omega;
        t.n_seen = base.n_seen;
        if (base.count()) t.rss.setConstant(base.rss.minCoeff());
        return t;
      }();
  out.rss = update_rss(start, preds, z, w);
  if (reselect || ps.path.count() != out.path.count()) {
    out.selected = select_lambda(out.rss, out.path, cfg.ic, cfg.rule);
  } else {
    out.selected = std::min(ps.selected, out.path.count() - 1);
  }
  out.scaled_beta = out.path.betas.row(out.selected).transpose();
  out.beta = A.transpose_apply(out.scaled_beta);
  return out;
}

inline void commit(ParamState& ps, Solve&& s) {
  ps.beta = std::move(s.beta);
  ps.path = std::move(s.path);
  ps.path_map = std::move(s.path_map);
  ps.grid = std::move(s.grid);
  ps.selected = s.selected;
  ps.rss = std::move(s.rss);
}

}  // namespace detail

/// Initial fit on a batch (rows in time order, later rows weigh more when
/// gamma < 1).
inline EstimatorState fit_batch(const EstimatorConfig& config, const Design& X, const Vec& y) {
  EstimatorState s;
  s.family = make_family(config.family);
  const int p = s.family->param_count();
  s.config = config;
  if (s.config.params.empty()) {
    const auto d = EstimatorConfig::for_family(config.family);
    s.config.params = d.params;
  }
  s.config.validate(p);
  const Index n = y.size();
  detail::check_design(X, n, p, nullptr);
  detail::require(detail::all_finite(y), "fit_batch: non-finite response");
  const EstimatorConfig& cfg = s.config;

  const InitialValues init = s.family->initial_values(y);
  s.params.resize(static_cast<std::size_t>(p));
  std::vector<Mat> Xa(static_cast<std::size_t>(p));
  for (int k = 0; k < p; ++k) {
    const Mat& x = X[static_cast<std::size_t>(k)];
    const ParamConfig& pc = detail::pconfig(cfg, k);
    ParamState& ps = detail::pstate(s, k);
    const Index J = x.cols();
    if (pc.fit) detail::require(n >= J + 1, "fit_batch: need more rows than coefficients");
    ps.fitted = pc.fit;
    BoolVec skip = pc.scale_skip.size() ? pc.scale_skip : detail::default_scale_skip(x);
    detail::require_size(skip.size(), J, "scale mask");
    skip[0] = true;
    ps.scaler = partial_fit(make_scaler(J, pc.gamma, skip), x);
    ps.anchor = AffineMap::anchor_from_scaler(ps.scaler);
    ps.constraints = detail::make_constraints(pc, J);
    ps.beta = Vec::Zero(J);
    ps.beta[0] = s.family->link(k).link(init.theta[k]);
    ps.gram = make_gram(J, pc.gamma);
    ps.rss = make_rss_tracker(0, pc.gamma);
    ps.path_map = AffineMap::from_scaler(ps.scaler);
    Xa[static_cast<std::size_t>(k)] = ps.anchor.apply_rows(x);
  }

  const double gamma0 = detail::pconfig(cfg, 0).gamma;
  const Vec d0 = detail::discounts(gamma0, n);
  auto deviance = [&](const Mat& theta) {
    return -2.0 * d0.dot(detail::row_loglik(*s.family, theta, y));
  };

  FitReport rep;
  bool clamped = false;
  Mat theta = detail::predict_theta(s, X, &clamped);
  double dev = deviance(theta);
  for (int outer = 0; outer < cfg.max_outer; ++outer) {
    ++rep.outer_iterations;
    const double dev_outer = dev;
    for (int k = 0; k < p; ++k) {
      ParamState& ps = detail::pstate(s, k);
      if (!ps.fitted) continue;
      const Mat& x = X[static_cast<std::size_t>(k)];
      const Mat& xa = Xa[static_cast<std::size_t>(k)];
      const double gk = detail::pconfig(cfg, k).gamma;
      const Vec dk = detail::discounts(gk, n);
      double prev_rss = kInf;
      for (int inner = 0; inner < cfg.max_inner; ++inner) {
        ++rep.inner_iterations;
        const Vec eta = x * ps.beta;
        const WorkingPoint wp =
            working_point(*s.family, k, eta, theta, y, cfg.curvature, cfg.weight_floor);
        const Vec dw = dk.cwiseProduct(wp.w);
        GramState g = make_gram(x.cols(), gk);
        g.G = xa.transpose() * dw.asDiagonal() * xa;
        detail::symmetrize(g.G);
        g.H = xa.transpose() * dw.cwiseProduct(wp.z);
        g.omega = dw.sum();
        g.n_seen = static_cast<std::uint64_t>(n);
        std::optional<InverseGramState> inv;
        if (cfg.estimation == Estimation::Ols && cfg.ols_solver == OlsSolver::Recursive)
          inv = rebuild_inverse(g);
        const bool reselect = cfg.select_every_inner || inner == 0;
        detail::Solve sol =
            detail::solve_param(cfg, ps, k, g, inv ? &*inv : nullptr,
                                make_rss_tracker(ps.rss.count(), gk), xa, wp.z, wp.w, reselect,
                                false);
        const double rss_now = sol.rss.rss[sol.selected];
        if (inner > 0 && rss_now > cfg.eps_rss * prev_rss) {
          rep.rss_break = true;
          break;
        }
        prev_rss = rss_now;

        // Step halving on deviance increase.
        const Vec old_beta = ps.beta;
        Vec beta = sol.beta;
        ps.beta = beta;
        Mat th = detail::predict_theta(s, X, &clamped);
        double nd = deviance(th);
        for (int h = 0; h < cfg.max_step_halving && !(nd <= dev + cfg.inner_tol * std::abs(dev));
             ++h) {
          beta = 0.5 * (beta + old_beta);
          ps.beta = beta;
          th = detail::predict_theta(s, X, &clamped);
          nd = deviance(th);
        }
        if (!std::isfinite(nd)) throw NumericalError("fit_batch: deviance is not finite");
        ps.gram = std::move(g);
        if (inv) ps.inverse = std::move(*inv);
        detail::commit(ps, std::move(sol));
        ps.beta = beta;
        rep.floored_weights = wp.floored;
        theta = std::move(th);
        const double change = std::abs(dev - nd) / std::max(std::abs(nd), 1e-300);
        dev = nd;
        if (change < cfg.inner_tol) break;
      }
    }
    if (std::abs(dev_outer - dev) / std::max(std::abs(dev), 1e-300) < cfg.outer_tol) {
      rep.converged = true;
      break;
    }
  }
  rep.clamped = clamped;
  rep.deviance = dev;
  s.loglik = -0.5 * dev;
  s.loglik_mass = d0.sum();
  s.n_seen = static_cast<std::uint64_t>(n);
  s.fitted = true;
  s.report = rep;
  return s;
}

/// Absorbs t new rows (t >= 1), row i discounted by gamma^(t-1-i). Each
/// parameter's Gramian and RSS tracker are built afresh from the committed
/// ones in every inner iteration and committed exactly once at the end.
inline EstimatorState update_minibatch(const EstimatorState& state, const Design& X,
                                       const Vec& y) {
  if (!state.fitted) throw StateError("update on an unfitted estimator");
  const int p = state.param_count();
  const Index t = y.size();
  detail::require(t >= 1, "update: need at least one row");
  detail::check_design(X, t, p, &state);
  detail::require(detail::all_finite(y), "update: non-finite response");

  EstimatorState s = state;
  const EstimatorConfig& cfg = s.config;
  std::vector<Mat> Xa(static_cast<std::size_t>(p));
  for (int k = 0; k < p; ++k) {
    ParamState& ps = detail::pstate(s, k);
    ps.scaler = partial_fit(ps.scaler, X[static_cast<std::size_t>(k)]);
    Xa[static_cast<std::size_t>(k)] = ps.anchor.apply_rows(X[static_cast<std::size_t>(k)]);
  }

  const double gamma0 = detail::pconfig(cfg, 0).gamma;
  const Vec d0 = detail::discounts(gamma0, t);
  const double carried = std::pow(gamma0, double(t)) * state.loglik;
  auto deviance = [&](const Mat& theta) {
    return -2.0 * (carried + d0.dot(detail::row_loglik(*s.family, theta, y)));
  };

  FitReport rep;
  bool clamped = false;
  std::vector<std::optional<GramState>> cand_gram(static_cast<std::size_t>(p));
  std::vector<std::optional<InverseGramState>> cand_inv(static_cast<std::size_t>(p));

  // Candidate statistics: committed ones plus the new rows, never compounded.
  auto absorb = [&](const ParamState& ps, const Mat& xa, const Vec& wv, const Vec& z,
                    std::optional<InverseGramState>& inv) {
    if (cfg.estimation != Estimation::Ols || cfg.ols_solver != OlsSolver::Recursive)
      return update_gram_batch(ps.gram, xa, z, wv);
    GramState g = ps.gram;
    InverseGramState iv = ps.inverse;
    for (Index i = 0; i < xa.rows(); ++i) {
      const Vec row = xa.row(i).transpose();
      g = update_gram(g, row, z[i], wv[i]);
      iv = update_inverse_gram_or_rebuild(iv, g, row, wv[i]);
    }
    inv = std::move(iv);
    return g;
  };

  try {
    Mat theta = detail::predict_theta(s, X, &clamped);
    double dev = deviance(theta);
    for (int outer = 0; outer < cfg.max_outer; ++outer) {
      ++rep.outer_iterations;
      const double dev_outer = dev;
      for (int k = 0; k < p; ++k) {
        ParamState& ps = detail::pstate(s, k);
        if (!ps.fitted) continue;
        const ParamState& committed = detail::pstate(state, k);
        const Mat& x = X[static_cast<std::size_t>(k)];
        const Mat& xa = Xa[static_cast<std::size_t>(k)];
        double prev_rss = committed.rss.count() ? committed.rss.rss[committed.selected] : kInf;
        if (!(prev_rss > 0.0)) prev_rss = kInf;
        for (int inner = 0; inner < cfg.max_inner; ++inner) {
          ++rep.inner_iterations;
          const Vec eta = x * ps.beta;
          WorkingPoint wp =
              working_point(*s.family, k, eta, theta, y, cfg.curvature, cfg.weight_floor);
          std::optional<InverseGramState> inv;
          GramState g = absorb(committed, xa, wp.w, wp.z, inv);
          const bool reselect = cfg.select_every_inner || inner == 0;
          detail::Solve sol = detail::solve_param(cfg, ps, k, g, inv ? &*inv : nullptr,
                                                  committed.rss, xa, wp.z, wp.w, reselect, true);
          if (!sol.beta.allFinite()) throw NumericalError("update: non-finite coefficients");
          const double rss_now = sol.rss.rss[sol.selected];
          if (rss_now > cfg.eps_rss * prev_rss && cand_gram[static_cast<std::size_t>(k)]) {
            rep.rss_break = true;
            break;
          }
          prev_rss = rss_now;
          ps.beta = sol.beta;
          ps.gram = g;  // provisional, rebuilt from `committed` on the next pass
          cand_gram[static_cast<std::size_t>(k)] = std::move(g);
          cand_inv[static_cast<std::size_t>(k)] = std::move(inv);
          const Index floored = wp.floored;
          detail::commit(ps, std::move(sol));
          ps.gram = committed.gram;  // keep the previous step's Gramian as the base
          rep.floored_weights += floored;
          theta = detail::predict_theta(s, X, &clamped);
          const double nd = deviance(theta);
          if (!std::isfinite(nd)) throw NumericalError("update: deviance is not finite");
          const double change = std::abs(dev - nd) / std::max(std::abs(nd), 1e-300);
          dev = nd;
          if (change < cfg.inner_tol) break;
        }
      }
      if (std::abs(dev_outer - dev) / std::max(std::abs(dev), 1e-300) < cfg.outer_tol) {
        rep.converged = true;
        break;
      }
    }
    for (int k = 0; k < p; ++k) {
      ParamState& ps = detail::pstate(s, k);
      if (!ps.fitted) continue;
      auto& g = cand_gram[static_cast<std::size_t>(k)];
      if (!g) throw std::logic_error("update: parameter without an accepted iteration");
      ps.gram = std::move(*g);
      if (cand_inv[static_cast<std::size_t>(k)]) ps.inverse = std::move(*cand_inv[static_cast<std::size_t>(k)]);
    }
    s.report = rep;
    s.report.clamped = clamped;
    s.report.deviance = dev;
    s.loglik = -0.5 * dev;
  } catch (const NumericalError&) {
    // Keep the previous coefficients; absorb the rows with zero-information
    // weights so the bookkeeping still advances by exactly t rows.
    s = state;
    for (int k = 0; k < p; ++k) {
      ParamState& ps = detail::pstate(s, k);
      ps.scaler = partial_fit(ps.scaler, X[static_cast<std::size_t>(k)]);
      if (!ps.fitted) continue;
      const Mat& xa = Xa[static_cast<std::size_t>(k)];
      const Vec eta = X[static_cast<std::size_t>(k)] * ps.beta;
      const Vec wv = Vec::Constant(t, cfg.weight_floor);
      std::optional<InverseGramState> inv;
      ps.gram = absorb(ps, xa, wv, eta, inv);
      if (inv) ps.inverse = std::move(*inv);
      const AffineMap A = AffineMap::from_scaler(ps.scaler);
      const Mat preds = A.relative_to(ps.anchor).apply_rows(xa) *
                        detail::remap_path(ps.path, ps.path_map, A).betas.transpose();
      ps.rss = update_rss(ps.rss, preds, eta, wv);
    }
    s.report = FitReport{};
    s.report.diverged = true;
    Mat theta = detail::predict_theta(s, X, &s.report.clamped);
    s.loglik = carried + d0.dot(detail::row_loglik(*s.family, theta, y));
    s.report.deviance = -2.0 * s.loglik;
  }
  s.loglik_mass = std::pow(gamma0, double(t)) * state.loglik_mass + d0.sum();
  s.n_seen = state.n_seen + static_cast<std::uint64_t>(t);
  return s;
}

/// Single observation: x[k] is the parameter-k design row.
inline EstimatorState update(const EstimatorState& state, const std::vector<Vec>& x, double y) {
  Design X;
  X.reserve(x.size());
  for (const auto& r : x) X.push_back(r.transpose());
  return update_minibatch(state, X, Vec::Constant(1, y));
}

/// Predictive parameters, one row per observation (n x p).
inline Mat predict(const EstimatorState& s, const Design& X) {
  if (!s.fitted) throw StateError("predict on an unfitted estimator");
  const Index n = X.empty() ? 0 : X[0].rows();
  detail::check_design(X, n, s.param_count(), &s);
  return detail::predict_theta(s, X);
}

inline Theta predict_one(const EstimatorState& s, const std::vector<Vec>& x) {
  Design X;
  for (const auto& r : x) X.push_back(r.transpose());
  return predict(s, X).row(0).transpose();
}

/// Quantiles of the predictive distribution, one row per observation.
inline Mat predict_quantiles(const EstimatorState& s, const Design& X, const Vec& probs) {
  const Mat theta = predict(s, X);
  Mat q(theta.rows(), probs.size());
  for (Index i = 0; i < theta.rows(); ++i) {
    const Theta t = theta.row(i).transpose();
    for (Index j = 0; j < probs.size(); ++j) q(i, j) = s.family->quantile(t, probs[j]);
  }
  return q;
}

// ---------------------------------------------------------------------------
// Snapshots

inline constexpr std::uint32_t kEstimatorSnapshotVersion = 1;

namespace detail {

inline void write_map(io::Writer& w, const AffineMap& m) {
  w.vector(m.shift());
  w.vector(m.scale());
  w.mask(m.mapped());
}

inline AffineMap read_map(io::Reader& r) {
  Vec shift = r.vector();
  Vec scale = r.vector();
  BoolVec mapped = r.mask();
  if (shift.size() != scale.size() || shift.size() != mapped.size() || shift.size() == 0)
    throw io::FormatError("affine map: inconsistent sizes");
  return AffineMap(std::move(shift), std::move(scale), std::move(mapped));
}

inline void write_param_config(io::Writer& w, const ParamConfig& c) {
  w.f64(c.gamma);
  w.f64(c.eps_lambda);
  w.u64(static_cast<std::uint64_t>(c.grid_count));
  w.u32(c.fit ? 1u : 0u);
  w.mask(c.scale_skip);
  w.mask(c.regularized);
  w.vector(c.lower);
  w.vector(c.upper);
}

inline ParamConfig read_param_config(io::Reader& r) {
  ParamConfig c;
  c.gamma = r.f64();
  c.eps_lambda = r.f64();
  c.grid_count = static_cast<Index>(r.u64());
  c.fit = r.u32() != 0;
  c.scale_skip = r.mask();
  c.regularized = r.mask();
  c.lower = r.vector();
  c.upper = r.vector();
  return c;
}

}  // namespace detail

inline void write_snapshot(std::ostream& out, const EstimatorState& s) {
  io::Writer w(out);
  w.magic("OGES");
  w.u32(kEstimatorSnapshotVersion);
  const EstimatorConfig& c = s.config;
  w.str(c.family);
  w.u32(static_cast<std::uint32_t>(c.estimation));
  w.u32(static_cast<std::uint32_t>(c.ols_solver));
  w.u32(static_cast<std::uint32_t>(c.curvature));
  for (double v : c.ic.nu) w.f64(v);
  w.u32(static_cast<std::uint32_t>(c.rule));
  w.f64(c.outer_tol);
  w.f64(c.inner_tol);
  w.u32(static_cast<std::uint32_t>(c.max_outer));
  w.u32(static_cast<std::uint32_t>(c.max_inner));
  w.u32(static_cast<std::uint32_t>(c.max_step_halving));
  w.f64(c.eps_rss);
  w.f64(c.weight_floor);
  w.f64(c.domain_margin);
  w.u32(c.select_every_inner ? 1u : 0u);
  w.f64(c.path.tol);
  w.u32(static_cast<std::uint32_t>(c.path.max_iter));
  w.u32(c.path.active_set ? 1u : 0u);
  w.u32(static_cast<std::uint32_t>(c.path.order));
  w.u64(c.path.seed);
  w.u32(static_cast<std::uint32_t>(c.path.warm_start));
  w.u32(static_cast<std::uint32_t>(c.online_warm_start));
  w.u32(static_cast<std::uint32_t>(c.params.size()));
  for (const auto& pc : c.params) detail::write_param_config(w, pc);

  w.u32(s.fitted ? 1u : 0u);
  w.f64(s.loglik);
  w.f64(s.loglik_mass);
  w.u64(s.n_seen);
  w.u32(static_cast<std::uint32_t>(s.params.size()));
  for (const auto& ps : s.params) {
    w.u32(ps.fitted ? 1u : 0u);
    w.vector(ps.beta);
    w.matrix(ps.gram.G);
    w.vector(ps.gram.H);
    w.f64(ps.gram.omega);
    w.u64(ps.gram.n_seen);
    w.f64(ps.gram.gamma);
    w.matrix(ps.inverse.Ginv);
    w.f64(ps.inverse.gamma);
    w.vector(ps.scaler.mean);
    w.vector(ps.scaler.m2);
    w.f64(ps.scaler.omega);
    w.f64(ps.scaler.gamma);
    w.mask(ps.scaler.skip_mask);
    detail::write_map(w, ps.anchor);
    w.vector(ps.rss.rss);
    w.f64(ps.rss.omega);
    w.f64(ps.rss.gamma);
    w.u64(ps.rss.n_seen);
    w.f64(ps.grid.lambda_max);
    w.f64(ps.grid.eps_lambda);
    w.vector(ps.grid.values);
    w.matrix(ps.path.betas);
    w.mask(ps.path.regularized);
    w.vector(ps.path.lower);
    w.vector(ps.path.upper);
    w.mask(ps.path.converged);
    detail::write_map(w, ps.path_map);
    w.mask(ps.constraints.regularized);
    w.vector(ps.constraints.lower);
    w.vector(ps.constraints.upper);
    w.u64(static_cast<std::uint64_t>(ps.selected));
  }
  w.ok();
}

inline EstimatorState read_snapshot(std::istream& in) {
  io::Reader r(in);
  r.expect_magic("OGES");
  if (r.u32() != kEstimatorSnapshotVersion)
    throw io::FormatError("estimator snapshot: unsupported version");
  EstimatorState s;
  EstimatorConfig& c = s.config;
  c.family = r.str();
  s.family = make_family(c.family);
  c.estimation = static_cast<Estimation>(r.u32());
  c.ols_solver = static_cast<OlsSolver>(r.u32());
  c.curvature = static_cast<Curvature>(r.u32());
  for (double& v : c.ic.nu) v = r.f64();
  c.rule = static_cast<SelectionRule>(r.u32());
  c.outer_tol = r.f64();
  c.inner_tol = r.f64();
  c.max_outer = static_cast<int>(r.u32());
  c.max_inner = static_cast<int>(r.u32());
  c.max_step_halving = static_cast<int>(r.u32());
  c.eps_rss = r.f64();
  c.weight_floor = r.f64();
  c.domain_margin = r.f64();
  c.select_every_inner = r.u32() != 0;
  c.path.tol = r.f64();
  c.path.max_iter = static_cast<int>(r.u32());
  c.path.active_set = r.u32() != 0;
  c.path.order = static_cast<CoordinateOrder>(r.u32());
  c.path.seed = r.u64();
  c.path.warm_start = static_cast<WarmStart>(r.u32());
  c.online_warm_start = static_cast<WarmStart>(r.u32());
  const std::uint32_t np = r.u32();
  if (np != static_cast<std::uint32_t>(s.family->param_count()))
    throw io::FormatError("estimator snapshot: parameter count does not match the family");
  for (std::uint32_t k = 0; k < np; ++k) c.params.push_back(detail::read_param_config(r));

  s.fitted = r.u32() != 0;
  s.loglik = r.f64();
  s.loglik_mass = r.f64();
  s.n_seen = r.u64();
  if (r.u32() != np) throw io::FormatError("estimator snapshot: parameter count mismatch");
  s.params.resize(np);
  for (auto& ps : s.params) {
    ps.fitted = r.u32() != 0;
    ps.beta = r.vector();
    ps.gram.G = r.matrix();
    ps.gram.H = r.vector();
    ps.gram.omega = r.f64();
    ps.gram.n_seen = r.u64();
    ps.gram.gamma = r.f64();
    ps.inverse.Ginv = r.matrix();
    ps.inverse.gamma = r.f64();
    ps.scaler.mean = r.vector();
    ps.scaler.m2 = r.vector();
    ps.scaler.omega = r.f64();
    ps.scaler.gamma = r.f64();
    ps.scaler.skip_mask = r.mask();
    ps.anchor = detail::read_map(r);
    ps.rss.rss = r.vector();
    ps.rss.omega = r.f64();
    ps.rss.gamma = r.f64();
    ps.rss.n_seen = r.u64();
    ps.grid.lambda_max = r.f64();
    ps.grid.eps_lambda = r.f64();
    ps.grid.values = r.vector();
    ps.path.betas = r.matrix();
    ps.path.regularized = r.mask();
    ps.path.lower = r.vector();
    ps.path.upper = r.vector();
    ps.path.converged = r.mask();
    ps.path.iterations.assign(static_cast<std::size_t>(ps.path.betas.rows()), 0);
    ps.path_map = detail::read_map(r);
    ps.constraints.regularized = r.mask();
    ps.constraints.lower = r.vector();
    ps.constraints.upper = r.vector();
    ps.selected = static_cast<Index>(r.u64());
    const Index J = ps.beta.size();
    if (J == 0 || ps.gram.G.rows() != J || ps.gram.H.size() != J || ps.scaler.mean.size() != J ||
        ps.anchor.dim() != J || ps.constraints.regularized.size() != J ||
        (ps.path.count() && (ps.path.dim() != J || ps.selected >= ps.path.count())))
      throw io::FormatError("estimator snapshot: inconsistent parameter block");
  }
  c.validate(static_cast<int>(np));
  return s;
}

}  // namespace ogamlss
