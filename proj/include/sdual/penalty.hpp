#pragma once

#include <cmath>
#include <cstdio>
#include <string>

#include "sdual/common.hpp"

namespace sdual {

/// Separable sparse-prior family given by the triple (g, h, f):
///
///   g(x) = h(x^2) is the per-coefficient penalty, with h concave and
///   non-decreasing on [0, inf), and f is the matching hyperparameter penalty
///   chosen so the variational identity
///
///     h(x^2) = min_{gamma >= 0}  x^2/gamma + log(gamma) + f(gamma)
///
///   holds exactly.  f is derived from the concave conjugate of h and is
///   closed form for every kind here.
///
/// Kinds:
///   LpNorm(p)  g(x) = |x|^p, p in (0,2]   (p=2 degenerates to Gaussian)
///   LogSum(d)  g(x) = log(d + |x|), d > 0
///   Gaussian   g(x) = x^2
///   ArdFlat    flat hyperprior, f = 0; the induced g is 1 + log(x^2)
class PenaltyFamily {
 public:
  enum class Kind { LpNorm, LogSum, Gaussian, ArdFlat };

  static PenaltyFamily lp_norm(double p) {
    if (!(p > 0.0) || p > 2.0)
      throw ConfigError("LpNorm requires p in (0, 2]");
    return PenaltyFamily(Kind::LpNorm, p, 0.0);
  }
  static PenaltyFamily log_sum(double delta = 1e-2) {
    if (!(delta > 0.0)) throw ConfigError("LogSum requires delta > 0");
    return PenaltyFamily(Kind::LogSum, 0.0, delta);
  }
  static PenaltyFamily gaussian() { return PenaltyFamily(Kind::Gaussian, 2.0, 0.0); }
  static PenaltyFamily ard_flat() { return PenaltyFamily(Kind::ArdFlat, 0.0, 0.0); }

  Kind kind() const { return kind_; }
  double p() const { return p_; }
  double delta() const { return delta_; }

  /// Per-coefficient penalty g(x) = h(x^2).
  double g(double x) const { return h(x * x); }

  double h(double z) const {
    switch (kind_) {
      case Kind::LpNorm:
        return std::pow(z, 0.5 * p_);
      case Kind::LogSum:
        return std::log(delta_ + std::sqrt(z));
      case Kind::Gaussian:
        return z;
      case Kind::ArdFlat:
        return z > 0.0 ? 1.0 + std::log(z) : -kInf;
    }
    return 0.0;
  }

  /// h'(z); may be +inf at z = 0 for the sparsity-inducing kinds.
  double dh(double z) const {
    switch (kind_) {
      case Kind::LpNorm: {
        if (p_ == 2.0) return 1.0;
        if (z <= 0.0) return kInf;
        return 0.5 * p_ * std::pow(z, 0.5 * p_ - 1.0);
      }
      case Kind::LogSum: {
        if (z <= 0.0) return kInf;
        double r = std::sqrt(z);
        return 0.5 / (r * (delta_ + r));
      }
      case Kind::Gaussian:
        return 1.0;
      case Kind::ArdFlat:
        return z > 0.0 ? 1.0 / z : kInf;
    }
    return 0.0;
  }

  /// Hyperparameter penalty f(gamma), +inf outside the feasible range.
  double f(double gamma) const {
    switch (kind_) {
      case Kind::LpNorm: {
        if (p_ == 2.0) return gaussian_f(gamma);
        if (gamma <= 0.0) return kInf;
        double s = 0.5 * p_;
        double t = s / (1.0 - s);
        return -std::log(gamma) + (1.0 - s) * std::pow(s, t) * std::pow(gamma, t);
      }
      case Kind::LogSum: {
        if (gamma <= 0.0) return kInf;
        double r = 0.5 * (-delta_ + std::sqrt(delta_ * delta_ + 2.0 * gamma));
        return -std::log(gamma) - r * r / gamma + std::log(delta_ + r);
      }
      case Kind::Gaussian:
        return gaussian_f(gamma);
      case Kind::ArdFlat:
        return 0.0;
    }
    return 0.0;
  }

  /// df/dgamma on the interior of the feasible range.
  double f_prime(double gamma) const {
    switch (kind_) {
      case Kind::LpNorm: {
        if (p_ == 2.0) return -1.0 / gamma;
        double s = 0.5 * p_;
        double t = s / (1.0 - s);
        double c = (1.0 - s) * std::pow(s, t);
        return -1.0 / gamma + c * t * std::pow(gamma, t - 1.0);
      }
      case Kind::LogSum: {
        // Envelope form: the inner maximizer r(gamma) is stationary, so only
        // the explicit gamma dependence survives.
        double r = 0.5 * (-delta_ + std::sqrt(delta_ * delta_ + 2.0 * gamma));
        return -1.0 / gamma + r * r / (gamma * gamma);
      }
      case Kind::Gaussian:
        return -1.0 / gamma;
      case Kind::ArdFlat:
        return 0.0;
    }
    return 0.0;
  }

  double f_double_prime(double gamma) const {
    double g2 = gamma * gamma;
    switch (kind_) {
      case Kind::LpNorm: {
        if (p_ == 2.0) return 1.0 / g2;
        double s = 0.5 * p_;
        double t = s / (1.0 - s);
        double c = (1.0 - s) * std::pow(s, t);
        return 1.0 / g2 + c * t * (t - 1.0) * std::pow(gamma, t - 2.0);
      }
      case Kind::LogSum: {
        double dd = std::sqrt(delta_ * delta_ + 2.0 * gamma);
        double r = 0.5 * (-delta_ + dd);
        double rp = 0.5 / dd;
        return 1.0 / g2 + 2.0 * r * rp / g2 - 2.0 * r * r / (g2 * gamma);
      }
      case Kind::Gaussian:
        return 1.0 / g2;
      case Kind::ArdFlat:
        return 0.0;
    }
    return 0.0;
  }

  /// f vanishes identically (flat hyperprior): the per-coordinate gamma
  /// problems then have closed-form minimizers.
  bool f_is_zero() const { return kind_ == Kind::ArdFlat; }

  /// Upper end of the feasible gamma range (f = +inf above it).
  double gamma_cap() const {
    return (kind_ == Kind::Gaussian || (kind_ == Kind::LpNorm && p_ == 2.0))
               ? 1.0
               : kInf;
  }

  /// Label used in reports and CSV schemas, e.g. "lp0.01", "logsum0.01".
  std::string name() const {
    char buf[48];
    switch (kind_) {
      case Kind::LpNorm:
        std::snprintf(buf, sizeof buf, "lp%g", p_);
        return buf;
      case Kind::LogSum:
        std::snprintf(buf, sizeof buf, "logsum%g", delta_);
        return buf;
      case Kind::Gaussian:
        return "gaussian";
      case Kind::ArdFlat:
        return "ard";
    }
    return "?";
  }

  /// Parses the CLI spelling: ard | gaussian | l1 | lp:<p> | logsum[:<delta>].
  static PenaltyFamily parse(const std::string& s) {
    if (s == "ard") return ard_flat();
    if (s == "gaussian") return gaussian();
    if (s == "l1") return lp_norm(1.0);
    if (s.rfind("lp:", 0) == 0) return lp_norm(std::stod(s.substr(3)));
    if (s == "logsum") return log_sum();
    if (s.rfind("logsum:", 0) == 0) return log_sum(std::stod(s.substr(7)));
    throw ConfigError("unknown penalty '" + s +
                      "' (expected ard|gaussian|l1|lp:<p>|logsum[:<delta>])");
  }

 private:
  PenaltyFamily(Kind k, double p, double delta) : kind_(k), p_(p), delta_(delta) {}

  // The Gaussian prior admits only gamma = 1; the conjugate pins
  // f(gamma) = -log(gamma) on (0, 1] and +inf above, so the bracket
  // reduces to x^2/gamma with minimum at gamma = 1.
  static double gaussian_f(double gamma) {
    if (gamma <= 0.0 || gamma > 1.0) return kInf;
    return -std::log(gamma);
  }

  Kind kind_;
  double p_;
  double delta_;
};

}  // namespace sdual
