#pragma once

// Independent reference implementations used only by the test suite.  Each
// one recomputes a quantity the library produces, by a different route
// (exhaustive search, dense eigendecomposition, combinatorial enumeration,
// or a textbook second-order method), so agreement is meaningful.

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "sdual/common.hpp"

namespace oracles {

using sdual::Index;
using sdual::Mat;
using sdual::Vec;

struct GridPoint1 {
  double arg = 0.0;
  double value = std::numeric_limits<double>::infinity();
};

/// Exhaustive 1-D minimization on a linear or log-spaced grid.
template <typename F>
GridPoint1 grid_min_1d(F&& fn, double lo, double hi, int points, bool log_spaced = false) {
  GridPoint1 best;
  for (int i = 0; i < points; ++i) {
    double t = static_cast<double>(i) / (points - 1);
    double a = log_spaced ? lo * std::pow(hi / lo, t) : lo + (hi - lo) * t;
    double v = fn(a);
    if (v < best.value) {
      best.arg = a;
      best.value = v;
    }
  }
  return best;
}

struct GridPoint2 {
  double a = 0.0, b = 0.0;
  double value = std::numeric_limits<double>::infinity();
};

template <typename F>
GridPoint2 grid_min_2d(F&& fn, double lo_a, double hi_a, double lo_b, double hi_b,
                       int points_a, int points_b, bool log_spaced = false) {
  GridPoint2 best;
  for (int i = 0; i < points_a; ++i) {
    double ta = static_cast<double>(i) / (points_a - 1);
    double a = log_spaced ? lo_a * std::pow(hi_a / lo_a, ta) : lo_a + (hi_a - lo_a) * ta;
    for (int j = 0; j < points_b; ++j) {
      double tb = static_cast<double>(j) / (points_b - 1);
      double b = log_spaced ? lo_b * std::pow(hi_b / lo_b, tb) : lo_b + (hi_b - lo_b) * tb;
      double v = fn(a, b);
      if (v < best.value) {
        best.a = a;
        best.b = b;
        best.value = v;
      }
    }
  }
  return best;
}

/// log-determinant from a full symmetric eigendecomposition.
inline double logdet_eig(const Mat& s) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(s);
  double acc = 0.0;
  for (Index i = 0; i < s.rows(); ++i) acc += std::log(eig.eigenvalues()(i));
  return acc;
}

/// Ridge system solved in coefficient space: the minimizer of
/// (1/lambda)||y - Phi x||^2 + x^T Gamma^{-1} x restricted to gamma_i > 0.
inline Vec qp_ridge_solve(const Mat& phi, const Vec& gamma, double lambda, const Vec& y) {
  std::vector<Index> active;
  for (Index i = 0; i < gamma.size(); ++i)
    if (gamma(i) > 0.0) active.push_back(i);
  Vec x = Vec::Zero(gamma.size());
  if (active.empty()) return x;
  const Index k = static_cast<Index>(active.size());
  Mat phi_s(phi.rows(), k);
  for (Index j = 0; j < k; ++j) phi_s.col(j) = phi.col(active[static_cast<std::size_t>(j)]);
  Mat a = phi_s.transpose() * phi_s / lambda;
  for (Index j = 0; j < k; ++j) a(j, j) += 1.0 / gamma(active[static_cast<std::size_t>(j)]);
  Vec xs = a.ldlt().solve(phi_s.transpose() * y / lambda);
  for (Index j = 0; j < k; ++j) x(active[static_cast<std::size_t>(j)]) = xs(j);
  return x;
}

struct WL1Solution {
  Vec x;
  double objective = std::numeric_limits<double>::infinity();
  bool feasible = false;
};

/// Equality-constrained weighted l1 by vertex enumeration: an optimal basic
/// solution uses at most n linearly independent columns, so scanning every
/// column subset of size <= n and solving exactly covers all vertices.
/// Requires small m (subset count is sum_k C(m, k)).
inline WL1Solution min_weighted_l1_enumerated(const Mat& phi, const Vec& y,
                                              const Vec& w, double feas_tol = 1e-9) {
  const Index n = phi.rows(), m = phi.cols();
  WL1Solution best;
  double ynorm = y.norm();
  if (ynorm <= feas_tol) {
    best.x = Vec::Zero(m);
    best.objective = 0.0;
    best.feasible = true;
    return best;
  }
  const unsigned long long top = 1ULL << m;
  for (unsigned long long mask = 1; mask < top; ++mask) {
    int k = __builtin_popcountll(mask);
    if (k > n) continue;
    Mat sub(n, k);
    std::vector<Index> cols;
    cols.reserve(static_cast<std::size_t>(k));
    for (Index i = 0; i < m; ++i)
      if (mask & (1ULL << i)) {
        sub.col(static_cast<Index>(cols.size())) = phi.col(i);
        cols.push_back(i);
      }
    Eigen::CompleteOrthogonalDecomposition<Mat> cod(sub);
    Vec xs = cod.solve(y);
    if ((sub * xs - y).norm() > feas_tol * (1.0 + ynorm)) continue;
    double obj = 0.0;
    for (std::size_t j = 0; j < cols.size(); ++j)
      obj += w(cols[j]) * std::abs(xs(static_cast<Index>(j)));
    if (obj < best.objective) {
      best.x = Vec::Zero(m);
      for (std::size_t j = 0; j < cols.size(); ++j)
        best.x(cols[j]) = xs(static_cast<Index>(j));
      best.objective = obj;
      best.feasible = true;
    }
  }
  return best;
}

/// Smallest support that represents y exactly, by exhaustive enumeration of
/// all supports of size <= k_max.  Returns the support (empty when y = 0);
/// sets *found = false when none fits.
inline std::vector<Index> min_l0_support(const Mat& phi, const Vec& y, int k_max,
                                         bool* found, double feas_tol = 1e-9) {
  const Index n = phi.rows(), m = phi.cols();
  *found = false;
  double ynorm = y.norm();
  if (ynorm <= feas_tol) {
    *found = true;
    return {};
  }
  std::vector<Index> cols(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) cols[static_cast<std::size_t>(i)] = i;
  for (int k = 1; k <= k_max && k <= static_cast<int>(n); ++k) {
    std::vector<Index> pick(static_cast<std::size_t>(k));
    std::function<std::vector<Index>(int, Index)> rec = [&](int depth, Index start)
        -> std::vector<Index> {
      if (depth == k) {
        Mat sub(n, k);
        for (int j = 0; j < k; ++j) sub.col(j) = phi.col(pick[static_cast<std::size_t>(j)]);
        Vec xs = sub.completeOrthogonalDecomposition().solve(y);
        if ((sub * xs - y).norm() <= feas_tol * (1.0 + ynorm))
          return pick;
        return {};
      }
      for (Index i = start; i < m; ++i) {
        pick[static_cast<std::size_t>(depth)] = i;
        auto r = rec(depth + 1, i + 1);
        if (!r.empty()) return r;
      }
      return {};
    };
    auto r = rec(0, 0);
    if (!r.empty()) {
      *found = true;
      return r;
    }
  }
  return {};
}

/// Direct per-term Bernoulli negative log-likelihood with probability
/// clamping; the numerically naive cross-check for the stable form.
inline double nll_direct(const Mat& phi, const std::vector<int>& labels, const Vec& x) {
  double acc = 0.0;
  for (Index j = 0; j < phi.rows(); ++j) {
    double p = 1.0 / (1.0 + std::exp(-phi.row(j).dot(x)));
    p = std::min(std::max(p, 1e-300), 1.0 - 1e-16);
    acc -= labels[static_cast<std::size_t>(j)] == 1 ? std::log(p) : std::log(1.0 - p);
  }
  return acc;
}

/// Unregularized logistic regression by damped Newton; valid only on
/// non-separable instances where the MLE exists.
inline Vec logistic_mle_newton(const Mat& phi, const std::vector<int>& labels,
                               int iters = 200) {
  const Index m = phi.cols();
  Vec x = Vec::Zero(m);
  double fx = nll_direct(phi, labels, x);
  for (int it = 0; it < iters; ++it) {
    Vec s = phi * x;
    Vec sig(s.size()), dvec(s.size());
    for (Index j = 0; j < s.size(); ++j) {
      sig(j) = 1.0 / (1.0 + std::exp(-s(j)));
      dvec(j) = std::max(sig(j) * (1.0 - sig(j)), 1e-12);
    }
    Vec grad = Vec::Zero(m);
    for (Index j = 0; j < s.size(); ++j)
      grad += (sig(j) - labels[static_cast<std::size_t>(j)]) * phi.row(j).transpose();
    Mat hess = phi.transpose() * dvec.asDiagonal() * phi;
    hess.diagonal().array() += 1e-12;
    Vec step = hess.ldlt().solve(grad);
    double t = 1.0;
    for (int back = 0; back < 60; ++back) {
      double fn = nll_direct(phi, labels, x - t * step);
      if (fn <= fx) {
        x -= t * step;
        fx = fn;
        break;
      }
      t *= 0.5;
    }
    if (grad.norm() < 1e-12) break;
  }
  return x;
}

}  // namespace oracles
