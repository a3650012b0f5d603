#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "sdual/g2.hpp"

using namespace sdual;

namespace {

Dictionary identity_dict(Index n) {
  return Dictionary::from_unit_columns(Mat::Identity(n, n));
}

double scalar_bracket(double xx, double lambda, double g) {
  return (xx > 0.0 ? xx / g : 0.0) + std::log(lambda + g);
}

}  // namespace

TEST(G2, ScalarClosedFormAgainstGrid) {
  Dictionary d = identity_dict(1);
  PenaltyFamily ard = PenaltyFamily::ard_flat();
  const double lambda = 1.0, x = 2.0;
  Vec xv(1);
  xv << x;
  auto [value, gamma] = g2_penalty(d, ard, lambda, xv);

  double gstar = (x * x + std::sqrt(std::pow(x, 4) + 4.0 * lambda * x * x)) / 2.0;
  EXPECT_NEAR(gamma(0), gstar, 1e-8 * gstar);
  EXPECT_NEAR(value, x * x / gstar + std::log(lambda + gstar), 1e-10);

  auto best = oracles::grid_min_1d(
      [&](double g) { return scalar_bracket(x * x, lambda, g); }, 1e-4, 100.0,
      1000000, true);
  EXPECT_NEAR(value, best.value, 1e-8 * (1.0 + std::abs(best.value)));
  EXPECT_NEAR(gamma(0), best.arg, 1e-3 * best.arg);
}

TEST(G2, ZeroCoefficientsCollapseToLogLambda) {
  Dictionary d = identity_dict(3);
  PenaltyFamily ard = PenaltyFamily::ard_flat();
  auto [value, gamma] = g2_penalty(d, ard, 2.0, Vec::Zero(3));
  EXPECT_NEAR(value, 3.0 * std::log(2.0), 1e-12);
  EXPECT_EQ(gamma.norm(), 0.0);
}

TEST(G2, OrthonormalColumnsSeparate) {
  Dictionary d = identity_dict(2);
  PenaltyFamily ard = PenaltyFamily::ard_flat();
  const double lambda = 0.5;
  Vec x(2);
  x << 1.3, -0.4;
  auto [value, gamma] = g2_penalty(d, ard, lambda, x);

  double want = 0.0;
  for (Index i = 0; i < 2; ++i) {
    auto best = oracles::grid_min_1d(
        [&](double g) { return scalar_bracket(x(i) * x(i), lambda, g); }, 1e-6,
        50.0, 400000, true);
    want += best.value;
  }
  EXPECT_NEAR(value, want, 1e-7 * (1.0 + std::abs(want)));
  (void)gamma;
}

TEST(G2, RequiresPositiveLambda) {
  Dictionary d = identity_dict(2);
  EXPECT_THROW(g2_penalty(d, PenaltyFamily::ard_flat(), 0.0, Vec::Ones(2)),
               ConfigError);
}

TEST(G2, EngineValueMatchesEvaluator) {
  Rng rng = derive_rng(31, 0);
  Dictionary d = random_gaussian_dictionary(rng, 4, 7);
  PenaltyFamily pen = PenaltyFamily::log_sum(0.05);
  GammaEngineConfig cfg;
  cfg.diag_shift = 0.4;
  Vec x = gaussian_vector(rng, 7);
  GammaEngineResult res = minimize_gamma_objective(d, pen, cfg, x);
  ASSERT_TRUE(res.converged);
  double eval = gamma_objective_value(d.phi, pen, cfg, x, res.gamma);
  EXPECT_NEAR(res.value, eval, 1e-9 * (1.0 + std::abs(eval)));

  // Any other point must evaluate no lower than the minimized value.
  Vec bumped = res.gamma;
  for (Index i = 0; i < bumped.size(); ++i) bumped(i) = bumped(i) * 1.3 + 0.05;
  EXPECT_GE(gamma_objective_value(d.phi, pen, cfg, x, bumped), res.value - 1e-9);
}

TEST(G2, ConcavityCheckerPassesForFlatHyperprior) {
  Rng rng = derive_rng(32, 0);
  Dictionary d = random_gaussian_dictionary(rng, 5, 8);
  GammaConcavityReport rep =
      check_gamma_concavity(d, PenaltyFamily::ard_flat(), 0.7, 60, 99);
  EXPECT_TRUE(rep.pass);
  EXPECT_LE(rep.worst_concavity_violation, 1e-9);
  EXPECT_LE(rep.worst_monotonicity_violation, 1e-9);
  EXPECT_EQ(rep.samples, 60);
}

TEST(G2, ConcavityCheckerFlagsConvexHyperpenalty) {
  Rng rng = derive_rng(33, 0);
  Dictionary d = random_gaussian_dictionary(rng, 3, 5);
  GammaConcavityReport rep = check_gamma_concavity_with(
      d, [](double g) { return g * g; }, 0.7, 60, 99);
  EXPECT_FALSE(rep.pass);
  EXPECT_GT(rep.worst_concavity_violation, 1e-3);
}

TEST(G2, IdenticalEndpointsHaveZeroDefect) {
  Rng rng = derive_rng(34, 0);
  Dictionary d = random_gaussian_dictionary(rng, 3, 5);
  Vec g(5);
  g << 0.2, 1.0, 0.5, 2.0, 0.8;
  auto fpen = [](double) { return 0.0; };
  EXPECT_NEAR(concavity_defect(d, fpen, 0.5, g, g), 0.0, 1e-12);
  EXPECT_NEAR(monotonicity_defect(d, fpen, 0.5, g, Vec::Zero(5)), 0.0, 1e-12);
}

// Concavity of the induced coefficient penalty as a function of |x| along
// non-negative rays: midpoint value at least the chord average.
TEST(G2, InducedPenaltyConcaveAlongRays) {
  Rng rng = derive_rng(35, 0);
  Dictionary d = random_gaussian_dictionary(rng, 4, 6);
  PenaltyFamily ard = PenaltyFamily::ard_flat();
  const double lambda = 0.5;
  for (int trial = 0; trial < 5; ++trial) {
    Vec dir = gaussian_vector(rng, 6).cwiseAbs();
    auto value_at = [&](double t) {
      return g2_penalty(d, ard, lambda, (t * dir).eval()).first;
    };
    for (double a : {0.2, 0.6, 1.1}) {
      double b = a + 0.8;
      double chord = 0.5 * (value_at(a) + value_at(b));
      double mid = value_at(0.5 * (a + b));
      EXPECT_GE(mid, chord - 1e-6) << "trial " << trial << " a=" << a;
    }
  }
}

TEST(G2, InducedPenaltyNonDecreasingPerCoordinate) {
  Rng rng = derive_rng(36, 0);
  Dictionary d = random_gaussian_dictionary(rng, 4, 6);
  PenaltyFamily ard = PenaltyFamily::ard_flat();
  const double lambda = 0.8;
  Vec x = gaussian_vector(rng, 6);
  double base = g2_penalty(d, ard, lambda, x).first;
  for (Index i = 0; i < 6; ++i) {
    Vec grown = x;
    grown(i) += (x(i) >= 0.0 ? 0.5 : -0.5);  // increase |x_i|
    double v = g2_penalty(d, ard, lambda, grown).first;
    EXPECT_GE(v, base - 1e-9) << "coordinate " << i;
  }
}

TEST(G2, WarmStartDoesNotWorsenValue) {
  Rng rng = derive_rng(37, 0);
  Dictionary d = random_gaussian_dictionary(rng, 5, 9);
  PenaltyFamily pen = PenaltyFamily::lp_norm(0.8);
  GammaEngineConfig cfg;
  cfg.diag_shift = 0.3;
  Vec x = gaussian_vector(rng, 9);
  GammaEngineResult cold = minimize_gamma_objective(d, pen, cfg, x);
  GammaEngineResult warm = minimize_gamma_objective(d, pen, cfg, x, cold.gamma);
  ASSERT_TRUE(cold.converged);
  ASSERT_TRUE(warm.converged);
  EXPECT_LE(warm.value, cold.value + 1e-9 * (1.0 + std::abs(cold.value)));
}
