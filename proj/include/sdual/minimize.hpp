#pragma once

#include <cmath>
#include <utility>

#include "sdual/common.hpp"

namespace sdual {

/// Golden-section minimization of a unimodal f on [lo, hi].
/// Returns {argmin, min}.  Cost: O(log((hi-lo)/tol)) evaluations.
template <typename F>
std::pair<double, double> golden_section(F&& f, double lo, double hi,
                                         double tol = 1e-12, int max_iter = 400) {
  static const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - invphi * (b - a);
  double d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  for (int it = 0; it < max_iter && (b - a) > tol * (1.0 + std::abs(a) + std::abs(b)); ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  double xm = 0.5 * (a + b), fm = f(xm);
  if (fc < fm) { xm = c; fm = fc; }
  if (fd < fm) { xm = d; fm = fd; }
  return {xm, fm};
}

/// Minimizes f over [lo, hi] with lo > 0 by golden section in log space.
/// Suited to scale parameters (gamma, lambda) whose natural bracket spans
/// many decades.
template <typename F>
std::pair<double, double> golden_section_log(F&& f, double lo, double hi,
                                             double tol = 1e-13, int max_iter = 400) {
  auto g = [&](double t) { return f(std::exp(t)); };
  auto [t, ft] = golden_section(g, std::log(lo), std::log(hi), tol, max_iter);
  return {std::exp(t), ft};
}

}  // namespace sdual
