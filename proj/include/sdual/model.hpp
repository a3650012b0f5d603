#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Cholesky>

#include "sdual/common.hpp"
#include "sdual/dictionary.hpp"

namespace sdual {

/// Non-negative hyperparameters: per-coefficient variances gamma and the
/// noise variance lambda.  Together with a dictionary they define
/// Sigma_y = lambda*I + Phi*diag(gamma)*Phi^T.
struct HyperState {
  Vec gamma;      // m, entries >= 0
  double lambda;  // >= 0

  HyperState() : lambda(0.0) {}
  HyperState(Vec g, double l) : gamma(std::move(g)), lambda(l) {
    for (Index i = 0; i < gamma.size(); ++i)
      if (!(gamma(i) >= 0.0)) throw ConfigError("gamma entries must be >= 0");
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  }
};

inline Mat sigma_y_matrix(const Mat& phi, const HyperState& hyp) {
  const Index n = phi.rows();
  Mat sigma = hyp.lambda * Mat::Identity(n, n);
  for (Index i = 0; i < phi.cols(); ++i) {
    double gi = hyp.gamma(i);
    if (gi > 0.0) sigma.selfadjointView<Eigen::Lower>().rankUpdate(phi.col(i), gi);
  }
  sigma.triangularView<Eigen::StrictlyUpper>() = sigma.transpose();
  return sigma;
}

inline Mat sigma_y_matrix(const Dictionary& dict, const HyperState& hyp) {
  return sigma_y_matrix(dict.phi, hyp);
}

/// Cholesky factorization of Sigma_y supporting solves and log-determinant.
/// Throws NotPositiveDefinite when the matrix is singular (e.g. lambda = 0
/// with rank-deficient Phi*Gamma*Phi^T).
class SigmaYFactor {
 public:
  SigmaYFactor(const Dictionary& dict, const HyperState& hyp)
      : SigmaYFactor(sigma_y_matrix(dict.phi, hyp)) {}

  SigmaYFactor(const Mat& phi, const HyperState& hyp)
      : SigmaYFactor(sigma_y_matrix(phi, hyp)) {}

  explicit SigmaYFactor(Mat sigma) : llt_(std::move(sigma)) {
    if (llt_.info() != Eigen::Success)
      throw NotPositiveDefinite("Sigma_y factorization failed");
    const auto& L = llt_.matrixLLT();
    logdet_ = 0.0;
    for (Index i = 0; i < L.rows(); ++i) {
      double d = L(i, i);
      if (!(d > 0.0) || !std::isfinite(d))
        throw NotPositiveDefinite("Sigma_y is not positive definite");
      logdet_ += 2.0 * std::log(d);
    }
  }

  Vec solve(const Vec& v) const { return llt_.solve(v); }
  double logdet() const { return logdet_; }

  /// v^T Sigma_y^{-1} v
  double quad(const Vec& v) const { return v.dot(llt_.solve(v)); }

 private:
  Eigen::LLT<Mat> llt_;
  double logdet_;
};

inline SigmaYFactor sigma_y_factor(const Dictionary& dict, const HyperState& hyp) {
  return SigmaYFactor(dict, hyp);
}

/// Posterior mean Gamma*Phi^T*Sigma_y^{-1}*y.  Entries with gamma_i = 0 are
/// exactly zero; the solve is restricted to the active columns.
inline Vec posterior_mean(const Mat& phi, const HyperState& hyp, const Vec& y) {
  const Index n = phi.rows(), m = phi.cols();
  std::vector<Index> active;
  active.reserve(m);
  for (Index i = 0; i < m; ++i)
    if (hyp.gamma(i) > 0.0) active.push_back(i);

  Vec x = Vec::Zero(m);
  if (active.empty()) return x;

  Mat sigma = hyp.lambda * Mat::Identity(n, n);
  for (Index i : active)
    sigma.selfadjointView<Eigen::Lower>().rankUpdate(phi.col(i), hyp.gamma(i));
  sigma.triangularView<Eigen::StrictlyUpper>() = sigma.transpose();
  SigmaYFactor fac(std::move(sigma));
  Vec w = fac.solve(y);
  for (Index i : active) x(i) = hyp.gamma(i) * phi.col(i).dot(w);
  return x;
}

inline Vec posterior_mean(const Dictionary& dict, const HyperState& hyp, const Vec& y) {
  return posterior_mean(dict.phi, hyp, y);
}

/// y^T Sigma_y^{-1} y, the data-dependent term shared by every gamma-space
/// objective.  Equals min_x (1/lambda)*||y - Phi x||^2 + x^T Gamma^{-1} x.
inline double dual_data_fit(const Dictionary& dict, const HyperState& hyp, const Vec& y) {
  return SigmaYFactor(dict, hyp).quad(y);
}

/// Estimate plus convergence metadata returned by every solver.
/// objective_trace has iterations + 1 entries (value before the first step
/// and after each step); monotone solvers produce a non-increasing trace.
struct SolveReport {
  Vec x_hat;
  Vec gamma_hat;
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
  double wall_time = 0.0;
};

}  // namespace sdual
