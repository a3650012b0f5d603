#pragma once

#include <chrono>
#include <cmath>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "sdual/common.hpp"
#include "sdual/dictionary.hpp"
#include "sdual/g2.hpp"
#include "sdual/model.hpp"
#include "sdual/penalty.hpp"
#include "sdual/wl1.hpp"

namespace sdual {

struct Type2Options {
  enum class UpdateRule { MacKay, EM, ReweightedL1 };
  UpdateRule update_rule = UpdateRule::MacKay;
  int max_iters = 500;
  double tol = 1e-9;               // relative objective change
  double prune_threshold = 1e-12;  // gamma floor; below it a column is retired
};

/// Marginal-likelihood objective y^T Sigma_y^{-1} y + log|Sigma_y| + sum f(gamma_i).
inline double type2_objective(const Dictionary& dict, const PenaltyFamily& pen,
                              const HyperState& hyp, const Vec& y) {
  SigmaYFactor fac(dict, hyp);
  double val = fac.quad(y) + fac.logdet();
  for (Index i = 0; i < hyp.gamma.size(); ++i) val += pen.f(hyp.gamma(i));
  return val;
}

namespace detail {

/// Posterior quantities on the active set (gamma_i > 0): mean mu, posterior
/// variance diagonal s_diag, and the sensitivities q_i = phi_i^T Sigma_y^{-1} phi_i.
/// Inactive coordinates report mu = 0, s_diag = 0, and still-valid q_i.
struct PosteriorMoments {
  Vec mu;
  Vec s_diag;
  Vec q;
  double resid_sq = 0.0;  // ||y - Phi mu||^2
};

inline PosteriorMoments posterior_moments(const Dictionary& dict, const HyperState& hyp,
                                          const Vec& y) {
  const Index n = dict.rows(), m = dict.cols();
  Mat sigma = hyp.lambda * Mat::Identity(n, n);
  for (Index i = 0; i < m; ++i)
    if (hyp.gamma(i) > 0.0)
      sigma.selfadjointView<Eigen::Lower>().rankUpdate(dict.phi.col(i), hyp.gamma(i));
  sigma.triangularView<Eigen::StrictlyUpper>() = sigma.transpose();
  Eigen::LLT<Mat> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite("posterior moments: Sigma_y factorization failed");

  Vec siy = llt.solve(y);
  Mat sip = llt.solve(dict.phi);  // Sigma_y^{-1} Phi, n x m

  PosteriorMoments mom;
  mom.mu = Vec::Zero(m);
  mom.s_diag = Vec::Zero(m);
  mom.q = Vec(m);
  for (Index i = 0; i < m; ++i) {
    double qi = dict.phi.col(i).dot(sip.col(i));
    mom.q(i) = qi;
    if (hyp.gamma(i) > 0.0) {
      mom.mu(i) = hyp.gamma(i) * dict.phi.col(i).dot(siy);
      mom.s_diag(i) = hyp.gamma(i) - hyp.gamma(i) * hyp.gamma(i) * qi;
    }
  }
  mom.resid_sq = (y - dict.phi * mom.mu).squaredNorm();
  return mom;
}

}  // namespace detail

/// Fixed-point hyperparameter update gamma_i <- mu_i^2 / (1 - S_ii/gamma_i)
/// for a flat hyperprior.  A non-positive denominator or a result under the
/// prune threshold retires the coordinate to exactly 0; zeros stay zero.
inline Vec mackay_update(const Dictionary& dict, const HyperState& hyp, const Vec& y,
                         double prune_threshold = 1e-12) {
  if (!(hyp.lambda > 0.0)) throw ConfigError("mackay_update requires lambda > 0");
  detail::PosteriorMoments mom = detail::posterior_moments(dict, hyp, y);
  Vec out = Vec::Zero(hyp.gamma.size());
  for (Index i = 0; i < out.size(); ++i) {
    double gi = hyp.gamma(i);
    if (gi <= 0.0) continue;
    double denom = 1.0 - mom.s_diag(i) / gi;
    if (denom <= 0.0) continue;  // degenerate direction; prune
    double gnew = mom.mu(i) * mom.mu(i) / denom;
    out(i) = (gnew >= prune_threshold && std::isfinite(gnew)) ? gnew : 0.0;
  }
  return out;
}

/// EM hyperparameter update: the M-step minimizer of
/// (mu_i^2 + S_ii)/gamma + log(gamma) + f(gamma), which is 1/h'(mu_i^2 + S_ii);
/// for a flat hyperprior this reduces to mu_i^2 + S_ii.  Monotone for the
/// marginal-likelihood objective by the standard EM argument.
inline Vec em_update(const Dictionary& dict, const PenaltyFamily& pen,
                     const HyperState& hyp, const Vec& y) {
  if (!(hyp.lambda > 0.0)) throw ConfigError("em_update requires lambda > 0");
  detail::PosteriorMoments mom = detail::posterior_moments(dict, hyp, y);
  Vec out = Vec::Zero(hyp.gamma.size());
  for (Index i = 0; i < out.size(); ++i) {
    if (hyp.gamma(i) <= 0.0) continue;
    double z = mom.mu(i) * mom.mu(i) + mom.s_diag(i);
    double w = pen.dh(z);
    out(i) = (std::isfinite(w) && w > 0.0) ? 1.0 / w : 0.0;
  }
  return out;
}

/// Reweighting functions [phi_i^T (alpha I + Phi |X|^2 Phi^T)^{-1} phi_i]^q.
/// alpha = 0 falls back to an eigendecomposition pseudo-inverse.
inline Vec eta_weights(const Dictionary& dict, const Vec& x, double alpha, double q) {
  if (!(alpha >= 0.0)) throw ConfigError("eta_weights requires alpha >= 0");
  if (!(q > 0.0)) throw ConfigError("eta_weights requires q > 0");
  const Index n = dict.rows(), m = dict.cols();
  Mat b = alpha * Mat::Identity(n, n);
  for (Index i = 0; i < m; ++i) {
    double xi2 = x(i) * x(i);
    if (xi2 > 0.0) b.selfadjointView<Eigen::Lower>().rankUpdate(dict.phi.col(i), xi2);
  }
  b.triangularView<Eigen::StrictlyUpper>() = b.transpose();

  Vec w(m);
  if (alpha > 0.0) {
    Eigen::LLT<Mat> llt(b);
    if (llt.info() != Eigen::Success)
      throw NotPositiveDefinite("eta_weights: factorization failed");
    Mat sol = llt.solve(dict.phi);
    for (Index i = 0; i < m; ++i) w(i) = std::pow(dict.phi.col(i).dot(sol.col(i)), q);
  } else {
    Eigen::SelfAdjointEigenSolver<Mat> eig(b);
    double cut = 1e-12 * std::max(eig.eigenvalues().maxCoeff(), 0.0);
    if (!(cut > 0.0)) throw SingularSystem("eta_weights: zero matrix with alpha = 0");
    Vec inv_ev(n);
    for (Index i = 0; i < n; ++i)
      inv_ev(i) = eig.eigenvalues()(i) > cut ? 1.0 / eig.eigenvalues()(i) : 0.0;
    Mat proj = eig.eigenvectors().transpose() * dict.phi;  // n x m
    for (Index i = 0; i < m; ++i)
      w(i) = std::pow(proj.col(i).cwiseAbs2().dot(inv_ev), q);
  }
  for (Index i = 0; i < m; ++i)
    if (!(w(i) > 0.0) || !std::isfinite(w(i)))
      throw SingularSystem("eta_weights: non-positive weight");
  return w;
}

namespace detail {

/// x-space iteration for the marginal-likelihood objective
/// ||y - Phi x||^2 + lambda g_II(x): alternate the exact inner gamma
/// minimization with a reweighted l1 step on its concave-in-|x| tangent;
/// if a step fails to decrease (possible when f breaks the concavity
/// condition), fall back to the quadratic-bound step, which always does.
inline SolveReport solve_type2_reweighted_l1(const Dictionary& dict,
                                             const PenaltyFamily& pen, double lambda,
                                             const Vec& y, const Type2Options& opts) {
  const Index m = dict.cols();
  SolveReport rep;

  Vec x = dict.phi.completeOrthogonalDecomposition().solve(y);
  GammaEngineConfig gcfg;
  gcfg.diag_shift = lambda;
  GammaEngineResult inner = minimize_gamma_objective(dict, pen, gcfg, x);
  double obj = (y - dict.phi * x).squaredNorm() + lambda * inner.value;
  rep.objective_trace.push_back(obj);

  for (int iter = 1; iter <= opts.max_iters; ++iter) {
    // Tangent weights of g_II in |x| at the inner minimizer; coordinates at
    // zero use the directional derivative 2*sqrt(q_i).
    HyperState hyp(inner.gamma, lambda);
    SigmaYFactor fac(dict, hyp);
    Vec w(m);
    for (Index i = 0; i < m; ++i) {
      if (inner.gamma(i) > 0.0) {
        w(i) = 2.0 * std::abs(x(i)) / inner.gamma(i);
      } else {
        double qi = dict.phi.col(i).dot(fac.solve(dict.phi.col(i)));
        w(i) = 2.0 * std::sqrt(std::max(qi, 0.0));
      }
    }
    double wfloor = 1e-12 * (1.0 + w.maxCoeff());
    for (Index i = 0; i < m; ++i) w(i) = std::max(w(i), wfloor);

    WL1Problem prob{dict, y, w, WL1Mode::Penalized, lambda};
    Vec x_cand = solve_wl1(prob);
    GammaEngineResult inner_cand =
        minimize_gamma_objective(dict, pen, gcfg, x_cand, inner.gamma);
    double obj_cand = (y - dict.phi * x_cand).squaredNorm() + lambda * inner_cand.value;

    if (obj_cand > obj + 1e-12 * (1.0 + std::abs(obj))) {
      // Quadratic-bound step: exact minimizer of the Gaussian surrogate.
      x_cand = posterior_mean(dict, hyp, y);
      inner_cand = minimize_gamma_objective(dict, pen, gcfg, x_cand, inner.gamma);
      obj_cand = (y - dict.phi * x_cand).squaredNorm() + lambda * inner_cand.value;
      if (obj_cand > obj) {  // already at the surrogate fixed point
        rep.converged = true;
        rep.iterations = iter;
        rep.objective_trace.push_back(obj);
        break;
      }
    }

    x = x_cand;
    inner = inner_cand;
    rep.objective_trace.push_back(obj_cand);
    rep.iterations = iter;
    if (std::abs(obj - obj_cand) <= opts.tol * (1.0 + std::abs(obj_cand))) {
      rep.converged = true;
      obj = obj_cand;
      break;
    }
    obj = obj_cand;
  }

  rep.gamma_hat = inner.gamma;
  rep.x_hat = posterior_mean(dict, HyperState(inner.gamma, lambda), y);
  return rep;
}

}  // namespace detail

/// Empirical-Bayes estimation: minimize type2_objective over gamma with the
/// selected update rule, then return the posterior mean at the minimizer.
/// The MacKay rule is a fixed-point search and may transiently increase the
/// objective; ten consecutive increases switch the run to EM, which is
/// monotone.  Non-convergence is reported through the flag, never thrown.
inline SolveReport solve_type2(const Dictionary& dict, const PenaltyFamily& pen,
                               double lambda, const Vec& y,
                               const Type2Options& opts = {}) {
  if (!(lambda > 0.0)) throw ConfigError("solve_type2 requires lambda > 0");
  if (opts.update_rule == Type2Options::UpdateRule::MacKay && !pen.f_is_zero())
    throw ConfigError("MacKay updates assume a flat hyperprior (f = 0)");
  auto t0 = std::chrono::steady_clock::now();

  SolveReport rep;
  if (opts.update_rule == Type2Options::UpdateRule::ReweightedL1) {
    rep = detail::solve_type2_reweighted_l1(dict, pen, lambda, y, opts);
  } else {
    const Index m = dict.cols();
    Vec gamma = Vec::Ones(m);
    bool use_em = opts.update_rule == Type2Options::UpdateRule::EM;
    double obj = type2_objective(dict, pen, HyperState(gamma, lambda), y);
    rep.objective_trace.push_back(obj);
    int rising = 0;

    for (int iter = 1; iter <= opts.max_iters; ++iter) {
      HyperState hyp(gamma, lambda);
      Vec gnew = use_em ? em_update(dict, pen, hyp, y)
                        : mackay_update(dict, hyp, y, opts.prune_threshold);
      for (Index i = 0; i < m; ++i)
        if (gnew(i) < opts.prune_threshold) gnew(i) = 0.0;

      double obj_new = type2_objective(dict, pen, HyperState(gnew, lambda), y);
      gamma = gnew;
      rep.objective_trace.push_back(obj_new);
      rep.iterations = iter;

      if (!use_em) {
        rising = obj_new > obj ? rising + 1 : 0;
        if (rising >= 10) use_em = true;  // fixed-point search stalled; go monotone
      }
      if (std::abs(obj - obj_new) <= opts.tol * (1.0 + std::abs(obj_new))) {
        rep.converged = true;
        obj = obj_new;
        break;
      }
      obj = obj_new;
    }
    rep.gamma_hat = gamma;
    rep.x_hat = posterior_mean(dict, HyperState(gamma, lambda), y);
  }

  rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

/// Geometric homotopy for the reweighting regularizer alpha.
struct AlphaSchedule {
  double alpha0 = -1.0;  // < 0: use 1e-2 * ||y||^2 / n at run time
  double rho = 0.1;
  double alpha_min = 1e-10;

  double at(int k, const Vec& y, Index n) const {
    double a0 = alpha0 > 0.0 ? alpha0 : 1e-2 * y.squaredNorm() / static_cast<double>(n);
    return std::max(alpha_min, a0 * std::pow(rho, k));
  }
};

/// Exact-recovery solver for y = Phi x: reweighted l1 with eta weights and a
/// decreasing alpha homotopy.  w starts at 1, so the first iterate is the
/// plain l1 (basis pursuit) solution; later iterates can only improve the
/// weighted objective.  Terminates when the support and weights stabilize.
inline SolveReport solve_type2_noiseless(const Dictionary& dict, const Vec& y,
                                         const AlphaSchedule& schedule = {},
                                         double q = 1.0,
                                         const Type2Options& opts = {}) {
  const Index n = dict.rows(), m = dict.cols();
  auto t0 = std::chrono::steady_clock::now();

  Vec x_mn = dict.phi.completeOrthogonalDecomposition().solve(y);
  if ((dict.phi * x_mn - y).norm() > 1e-8 * (1.0 + y.norm()))
    throw Infeasible("solve_type2_noiseless: y is not in the range of Phi");

  auto support_of = [&](const Vec& v) {
    std::vector<bool> s(m, false);
    double cut = 1e-8 * (1.0 + v.cwiseAbs().maxCoeff());
    for (Index i = 0; i < m; ++i) s[i] = std::abs(v(i)) > cut;
    return s;
  };

  SolveReport rep;
  Vec w = Vec::Ones(m);
  Vec x = x_mn;
  rep.objective_trace.push_back(w.dot(x.cwiseAbs()));
  std::vector<bool> support = support_of(x);

  for (int k = 0; k < opts.max_iters; ++k) {
    WL1Problem prob{dict, y, w, WL1Mode::Equality, 0.0, &x};
    Vec x_new = solve_wl1(prob);
    Vec w_new = eta_weights(dict, x_new, schedule.at(k, y, n), q);

    rep.objective_trace.push_back(w.dot(x_new.cwiseAbs()));
    rep.iterations = k + 1;

    std::vector<bool> support_new = support_of(x_new);
    double wchange = (w_new - w).norm() / (1.0 + w.norm());
    x = x_new;
    bool support_stable = support_new == support;
    support = support_new;
    w = w_new;
    if (support_stable && wchange <= opts.tol) {
      rep.converged = true;
      break;
    }
  }

  rep.x_hat = x;
  rep.gamma_hat = x.cwiseAbs2();
  rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace sdual
