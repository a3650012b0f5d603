#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "sdual/penalty.hpp"

using sdual::ConfigError;
using sdual::PenaltyFamily;

namespace {

std::vector<PenaltyFamily> sparse_families() {
  return {PenaltyFamily::lp_norm(0.01), PenaltyFamily::lp_norm(0.5),
          PenaltyFamily::lp_norm(1.0),  PenaltyFamily::lp_norm(1.5),
          PenaltyFamily::log_sum(1e-2), PenaltyFamily::log_sum(0.5)};
}

std::vector<PenaltyFamily> all_families() {
  auto fams = sparse_families();
  fams.push_back(PenaltyFamily::gaussian());
  fams.push_back(PenaltyFamily::lp_norm(2.0));
  fams.push_back(PenaltyFamily::ard_flat());
  return fams;
}

}  // namespace

TEST(Penalty, FactoryValidation) {
  EXPECT_THROW(PenaltyFamily::lp_norm(0.0), ConfigError);
  EXPECT_THROW(PenaltyFamily::lp_norm(-1.0), ConfigError);
  EXPECT_THROW(PenaltyFamily::lp_norm(2.5), ConfigError);
  EXPECT_THROW(PenaltyFamily::log_sum(0.0), ConfigError);
  EXPECT_THROW(PenaltyFamily::log_sum(-0.1), ConfigError);
  EXPECT_NO_THROW(PenaltyFamily::lp_norm(2.0));
  EXPECT_NO_THROW(PenaltyFamily::lp_norm(1e-6));
}

TEST(Penalty, ParseSpellings) {
  EXPECT_EQ(PenaltyFamily::parse("ard").kind(), PenaltyFamily::Kind::ArdFlat);
  EXPECT_EQ(PenaltyFamily::parse("gaussian").kind(), PenaltyFamily::Kind::Gaussian);
  PenaltyFamily l1 = PenaltyFamily::parse("l1");
  EXPECT_EQ(l1.kind(), PenaltyFamily::Kind::LpNorm);
  EXPECT_DOUBLE_EQ(l1.p(), 1.0);
  PenaltyFamily lp = PenaltyFamily::parse("lp:0.5");
  EXPECT_DOUBLE_EQ(lp.p(), 0.5);
  PenaltyFamily ls = PenaltyFamily::parse("logsum");
  EXPECT_DOUBLE_EQ(ls.delta(), 1e-2);
  PenaltyFamily ls2 = PenaltyFamily::parse("logsum:0.1");
  EXPECT_DOUBLE_EQ(ls2.delta(), 0.1);
  EXPECT_THROW(PenaltyFamily::parse("l2"), ConfigError);
  EXPECT_THROW(PenaltyFamily::parse(""), ConfigError);
  EXPECT_THROW(PenaltyFamily::parse("lp:3"), ConfigError);
}

TEST(Penalty, NamesRoundTripThroughParse) {
  for (const auto& pen : all_families()) {
    PenaltyFamily back = PenaltyFamily::parse(
        pen.kind() == PenaltyFamily::Kind::LpNorm
            ? "lp:" + std::to_string(pen.p())
        : pen.kind() == PenaltyFamily::Kind::LogSum
            ? "logsum:" + std::to_string(pen.delta())
            : pen.name());
    EXPECT_EQ(back.kind(), pen.kind());
  }
  EXPECT_EQ(PenaltyFamily::lp_norm(0.01).name(), "lp0.01");
  EXPECT_EQ(PenaltyFamily::log_sum(0.01).name(), "logsum0.01");
  EXPECT_EQ(PenaltyFamily::ard_flat().name(), "ard");
}

TEST(Penalty, GIsHOfSquare) {
  for (const auto& pen : all_families()) {
    for (double x : {-2.0, -0.3, 0.7, 1.0, 5.0}) {
      EXPECT_DOUBLE_EQ(pen.g(x), pen.h(x * x)) << pen.name();
      EXPECT_DOUBLE_EQ(pen.g(x), pen.g(-x)) << pen.name();
    }
  }
}

TEST(Penalty, GFiniteAtZeroForSparseKinds) {
  EXPECT_DOUBLE_EQ(PenaltyFamily::lp_norm(0.01).g(0.0), 0.0);
  EXPECT_DOUBLE_EQ(PenaltyFamily::lp_norm(1.0).g(0.0), 0.0);
  EXPECT_NEAR(PenaltyFamily::log_sum(0.5).g(0.0), std::log(0.5), 1e-15);
  EXPECT_DOUBLE_EQ(PenaltyFamily::gaussian().g(0.0), 0.0);
}

TEST(Penalty, HConcaveAndNonDecreasing) {
  for (const auto& pen : all_families()) {
    for (double a : {1e-4, 1e-2, 0.5, 1.0, 4.0}) {
      for (double b : {2e-4, 0.1, 2.0, 9.0, 30.0}) {
        double lo = std::min(a, b), hi = std::max(a, b);
        EXPECT_LE(pen.h(lo), pen.h(hi) + 1e-12) << pen.name();
        double chord = 0.5 * (pen.h(a) + pen.h(b));
        double mid = pen.h(0.5 * (a + b));
        EXPECT_GE(mid, chord - 1e-12) << pen.name() << " at " << a << "," << b;
      }
    }
  }
}

TEST(Penalty, DhPositiveAndMatchesFiniteDifferences) {
  for (const auto& pen : all_families()) {
    for (double z : {1e-3, 0.1, 1.0, 7.0}) {
      double d = pen.dh(z);
      EXPECT_GT(d, 0.0) << pen.name();
      double step = 1e-6 * z;
      double fd = (pen.h(z + step) - pen.h(z - step)) / (2.0 * step);
      EXPECT_NEAR(d, fd, 1e-5 * (1.0 + std::abs(fd))) << pen.name() << " z=" << z;
    }
  }
}

TEST(Penalty, FPrimeMatchesFiniteDifferences) {
  for (const auto& pen : sparse_families()) {
    for (double g : {0.05, 0.3, 1.0, 4.0}) {
      double step = 1e-6 * g;
      double fd = (pen.f(g + step) - pen.f(g - step)) / (2.0 * step);
      EXPECT_NEAR(pen.f_prime(g), fd, 1e-4 * (1.0 + std::abs(fd)))
          << pen.name() << " g=" << g;
      double fd2 = (pen.f_prime(g + step) - pen.f_prime(g - step)) / (2.0 * step);
      EXPECT_NEAR(pen.f_double_prime(g), fd2, 1e-3 * (1.0 + std::abs(fd2)))
          << pen.name() << " g=" << g;
    }
  }
  PenaltyFamily gauss = PenaltyFamily::gaussian();
  for (double g : {0.2, 0.8}) {
    EXPECT_NEAR(gauss.f_prime(g), -1.0 / g, 1e-12);
    EXPECT_NEAR(gauss.f_double_prime(g), 1.0 / (g * g), 1e-12);
  }
}

// The load-bearing identity of the whole dual framework:
// h(z) = min_gamma z/gamma + log(gamma) + f(gamma), minimized at 1/h'(z).
TEST(Penalty, VariationalIdentityAgainstGridSearch) {
  for (const auto& pen : all_families()) {
    for (double z : {0.05, 0.5, 1.0, 3.0, 9.0}) {
      double cap = pen.gamma_cap();
      double hi = std::isfinite(cap) ? cap : 1e4;
      auto bracket = [&](double g) { return z / g + std::log(g) + pen.f(g); };
      auto best = oracles::grid_min_1d(bracket, 1e-6, hi, 400000, true);
      EXPECT_NEAR(pen.h(z), best.value, 1e-5 * (1.0 + std::abs(best.value)))
          << pen.name() << " z=" << z;
      // The grid minimum can only overestimate the true minimum.
      EXPECT_LE(pen.h(z), best.value + 1e-12) << pen.name();
    }
  }
}

TEST(Penalty, BracketMinimizerIsInverseDh) {
  for (const auto& pen : all_families()) {
    for (double z : {0.3, 1.0, 4.0}) {
      double gstar = 1.0 / pen.dh(z);
      double cap = pen.gamma_cap();
      if (std::isfinite(cap)) gstar = std::min(gstar, cap);
      auto bracket = [&](double g) { return z / g + std::log(g) + pen.f(g); };
      double at_star = bracket(gstar);
      // Tangency: the bracket touches h exactly at the minimizer.
      EXPECT_NEAR(at_star, pen.h(z), 1e-10 * (1.0 + std::abs(at_star)))
          << pen.name() << " z=" << z;
      // Local minimality against nearby evaluations.
      for (double c : {0.9, 0.95, 1.05, 1.1}) {
        double g = gstar * c;
        if (std::isfinite(cap) && g > cap) continue;
        EXPECT_GE(bracket(g), at_star - 1e-12) << pen.name();
      }
    }
  }
}

TEST(Penalty, GammaCapAndFlatness) {
  EXPECT_DOUBLE_EQ(PenaltyFamily::gaussian().gamma_cap(), 1.0);
  EXPECT_DOUBLE_EQ(PenaltyFamily::lp_norm(2.0).gamma_cap(), 1.0);
  EXPECT_TRUE(std::isinf(PenaltyFamily::lp_norm(1.0).gamma_cap()));
  EXPECT_TRUE(std::isinf(PenaltyFamily::log_sum().gamma_cap()));
  EXPECT_TRUE(std::isinf(PenaltyFamily::ard_flat().gamma_cap()));

  PenaltyFamily ard = PenaltyFamily::ard_flat();
  EXPECT_TRUE(ard.f_is_zero());
  for (double g : {0.01, 1.0, 100.0}) EXPECT_DOUBLE_EQ(ard.f(g), 0.0);
  EXPECT_FALSE(PenaltyFamily::lp_norm(1.0).f_is_zero());
  EXPECT_FALSE(PenaltyFamily::gaussian().f_is_zero());
}

TEST(Penalty, GaussianFeasibleRange) {
  PenaltyFamily gauss = PenaltyFamily::gaussian();
  EXPECT_TRUE(std::isinf(gauss.f(1.5)));
  EXPECT_TRUE(std::isinf(gauss.f(0.0)));
  EXPECT_NEAR(gauss.f(0.5), -std::log(0.5), 1e-15);
  EXPECT_DOUBLE_EQ(gauss.f(1.0), 0.0);
}

TEST(Penalty, PEqualsTwoDegeneratesToGaussian) {
  PenaltyFamily lp2 = PenaltyFamily::lp_norm(2.0);
  PenaltyFamily gauss = PenaltyFamily::gaussian();
  for (double z : {0.0, 0.4, 1.0, 9.0}) {
    EXPECT_DOUBLE_EQ(lp2.h(z), z);
    EXPECT_DOUBLE_EQ(lp2.dh(z), 1.0);
  }
  for (double g : {0.1, 0.7, 1.0, 2.0}) EXPECT_EQ(lp2.f(g), gauss.f(g));
}

TEST(Penalty, ArdClosedForm) {
  PenaltyFamily ard = PenaltyFamily::ard_flat();
  for (double z : {0.2, 1.0, 5.0}) {
    EXPECT_NEAR(ard.h(z), 1.0 + std::log(z), 1e-15);
    EXPECT_NEAR(ard.dh(z), 1.0 / z, 1e-15);
    // Bracket with f = 0 has minimizer gamma = z and value 1 + log z.
    double direct = z / z + std::log(z);
    EXPECT_NEAR(ard.h(z), direct, 1e-15);
  }
  EXPECT_TRUE(std::isinf(ard.h(0.0)));
}
