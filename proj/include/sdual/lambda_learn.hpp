#pragma once

#include <cmath>

#include <Eigen/QR>

#include "sdual/common.hpp"
#include "sdual/dictionary.hpp"
#include "sdual/model.hpp"
#include "sdual/penalty.hpp"
#include "sdual/type2.hpp"

namespace sdual {

struct LambdaLearnOptions {
  int max_iters = 500;
  double tol = 1e-8;
  // The (x, u) split needs graduated smoothing: a large initial epsilon keeps
  // the first reweighting balanced between coefficients and residual, then
  // the usual 10x-per-20-iterations decay (floor 1e-12) sharpens the split.
  double epsilon0 = 1.0;
  double lambda_floor = 1e-10;
  double lambda_cap = 1e12;
};

struct LambdaEstimate {
  double lambda_star = 0.0;
  Vec u_star;
  Vec x_star;
  double objective = 0.0;
  bool converged = false;
  std::vector<double> objective_trace;
};

/// Maximum-likelihood noise estimate given the residual: ||u||^2 / n.
/// Coincides with lambda_star only under the flat hyperprior; the gap
/// between the two is exactly the prior's influence on the noise estimate.
inline double ml_lambda(const LambdaEstimate& est) {
  return est.u_star.squaredNorm() / static_cast<double>(est.u_star.size());
}

/// Joint noise-and-coefficient objective over the hyperparameters:
///   y^T Sigma_y^{-1} y + sum_i [log gamma_i + f(gamma_i)] + n log lambda + n f(lambda).
/// lambda is penalized exactly like each gamma_i, n-fold.
inline double type1_lambda_objective(const Dictionary& dict, const PenaltyFamily& pen,
                                     const HyperState& hyp, const Vec& y) {
  const double n = static_cast<double>(dict.rows());
  double acc = n * (std::log(hyp.lambda) + pen.f(hyp.lambda));
  for (Index i = 0; i < hyp.gamma.size(); ++i) {
    if (hyp.gamma(i) <= 0.0) return -kInf;
    acc += std::log(hyp.gamma(i)) + pen.f(hyp.gamma(i));
  }
  return dual_data_fit(dict, hyp, y) + acc;
}

namespace detail {

/// lambda achieving the minimum of z/lambda + log(lambda) + f(lambda):
/// the tangent point 1/h'(z), clamped into [floor, cap].  h' -> inf at 0
/// maps a vanishing residual to the floor.
inline double lambda_from_residual(const PenaltyFamily& pen, double z, double floor,
                                   double cap) {
  double d = pen.dh(z);
  double lam = (std::isfinite(d) && d > 0.0) ? 1.0 / d : 0.0;
  return std::min(std::max(lam, floor), cap);
}

}  // namespace detail

/// Noise-adaptive MAP estimation: solve
///   min_{x,u} sum_i g(x_i) + n g(||u||_2 / sqrt(n))   s.t.  y = Phi x + u
/// by IRLS on both blocks (u is kept implicit as y - Phi x), then read the
/// noise variance off the residual through the tangent rule.  Each iteration
/// minimizes the separable quadratic bound exactly, so the smoothed
/// objective never increases; steps that fail the descent check (possible
/// once the implicit data weight is floored) are rejected.
inline LambdaEstimate learn_lambda_type1(const Dictionary& dict, const PenaltyFamily& pen,
                                         const Vec& y,
                                         const LambdaLearnOptions& opts = {}) {
  if (y.size() != dict.rows()) throw ConfigError("signal size mismatch");
  if (y.norm() == 0.0) throw ConfigError("learn_lambda_type1 requires y != 0");
  const Index m = dict.cols();
  const double n = static_cast<double>(dict.rows());

  Vec x = dict.phi.completeOrthogonalDecomposition().solve(y);

  auto smoothed_objective = [&](const Vec& xv, double eps) {
    double v = n * pen.h((y - dict.phi * xv).squaredNorm() / n + eps);
    for (Index i = 0; i < m; ++i) v += pen.h(xv(i) * xv(i) + eps);
    return v;
  };

  LambdaEstimate est;
  double eps = std::max(opts.epsilon0, 1e-12);
  est.objective_trace.push_back(smoothed_objective(x, eps));
  Vec gamma(m);

  for (int iter = 1; iter <= opts.max_iters; ++iter) {
    eps = std::max(1e-12, opts.epsilon0 * std::pow(0.1, (iter - 1) / 20));
    double z = (y - dict.phi * x).squaredNorm() / n;
    double omega = pen.dh(z + eps);
    double lam_impl = (std::isfinite(omega) && omega > 0.0)
                          ? std::max(1.0 / omega, opts.lambda_floor)
                          : opts.lambda_floor;
    for (Index i = 0; i < m; ++i) {
      double w = pen.dh(x(i) * x(i) + eps);
      gamma(i) = (std::isfinite(w) && w > 0.0) ? 1.0 / w : 0.0;
    }

    Vec x_cand = posterior_mean(dict, HyperState(gamma, lam_impl), y);
    double f_old = smoothed_objective(x, eps);
    double f_cand = smoothed_objective(x_cand, eps);
    bool accepted = f_cand <= f_old;
    double change = accepted ? (x_cand - x).norm() : 0.0;
    if (accepted) x = x_cand;
    est.objective_trace.push_back(std::min(f_old, f_cand));

    if (!std::isfinite(f_cand)) throw NonConvergence("learn_lambda_type1 diverged");
    if (change <= opts.tol * (1.0 + x.norm())) {
      // Converged once the smoothing has bottomed out; earlier stalls only
      // mean the current eps stage is exhausted.
      if (eps <= 1e-12 || opts.epsilon0 <= 1e-12) {
        est.converged = true;
        break;
      }
    }
  }

  est.x_star = x;
  est.u_star = y - dict.phi * x;
  double z = est.u_star.squaredNorm() / n;
  est.lambda_star =
      detail::lambda_from_residual(pen, z, opts.lambda_floor, opts.lambda_cap);
  est.objective = n * pen.h(z);
  for (Index i = 0; i < m; ++i) est.objective += pen.g(x(i));
  return est;
}

/// Marginal-likelihood noise learning: minimize
///   y^T Sigma_y^{-1} y + log|Sigma_y| + sum_i f(gamma_i) + n f(lambda)
/// jointly by EM, treating lambda as an n-replicated hyperparameter.  The
/// M-step for lambda minimizes R/lambda + n log(lambda) + n f(lambda) with
/// R the expected residual power, giving 1/h'(R/n); for a flat hyperprior
/// this is the classic update R/n.
inline LambdaEstimate learn_lambda_type2(const Dictionary& dict, const PenaltyFamily& pen,
                                         const Vec& y,
                                         const LambdaLearnOptions& opts = {}) {
  if (y.size() != dict.rows()) throw ConfigError("signal size mismatch");
  const Index m = dict.cols();
  const double n = static_cast<double>(dict.rows());

  Vec gamma = Vec::Ones(m);
  double lambda = std::max(opts.lambda_floor, 0.1 * y.squaredNorm() / n);

  auto objective_at = [&](const Vec& g, double lam) {
    return type2_objective(dict, pen, HyperState(g, lam), y) + n * pen.f(lam);
  };

  LambdaEstimate est;
  double obj = objective_at(gamma, lambda);
  est.objective_trace.push_back(obj);

  for (int iter = 1; iter <= opts.max_iters; ++iter) {
    HyperState hyp(gamma, lambda);
    detail::PosteriorMoments mom = detail::posterior_moments(dict, hyp, y);

    double traced = 0.0;  // lambda * sum of (1 - S_ii/gamma_i) over the active set
    Vec gnew = Vec::Zero(m);
    for (Index i = 0; i < m; ++i) {
      if (gamma(i) <= 0.0) continue;
      traced += lambda * (1.0 - mom.s_diag(i) / gamma(i));
      double w = pen.dh(mom.mu(i) * mom.mu(i) + mom.s_diag(i));
      double g = (std::isfinite(w) && w > 0.0) ? 1.0 / w : 0.0;
      gnew(i) = g >= 1e-12 ? g : 0.0;
    }
    double r = mom.resid_sq + traced;
    double lam_new = detail::lambda_from_residual(pen, r / n, opts.lambda_floor,
                                                  opts.lambda_cap);

    gamma = gnew;
    lambda = lam_new;
    double obj_new = objective_at(gamma, lambda);
    est.objective_trace.push_back(obj_new);
    if (!std::isfinite(obj_new)) throw NonConvergence("learn_lambda_type2 diverged");
    if (std::abs(obj - obj_new) <= opts.tol * (1.0 + std::abs(obj_new))) {
      est.converged = true;
      obj = obj_new;
      break;
    }
    obj = obj_new;
  }

  est.lambda_star = lambda;
  est.x_star = posterior_mean(dict, HyperState(gamma, lambda), y);
  est.u_star = y - dict.phi * est.x_star;
  est.objective = obj;
  return est;
}

}  // namespace sdual
