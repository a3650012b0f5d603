// Recover a sparse coefficient vector from noisy measurements, first across a
// small grid of regularization weights and then with the weight learned
// jointly with the coefficients.

#include <cstdio>

#include "sdual/sdual.hpp"

using namespace sdual;

int main() {
  Rng rng = derive_rng(7, 0);
  const Index n = 40, m = 80, k0 = 6;
  Dictionary dict = random_gaussian_dictionary(rng, n, m);

  Vec x0 = Vec::Zero(m);
  for (Index i = 0; i < k0; ++i) x0(i * 12) = gaussian_vector(rng, 1)(0);
  Vec clean = dict.phi * x0;
  Vec noise = gaussian_vector(rng, n);
  Vec y = clean + noise * (0.1 * clean.norm() / noise.norm());

  PenaltyFamily pen = PenaltyFamily::lp_norm(0.5);
  std::printf("%10s %12s %8s\n", "lambda", "rel_err", "nnz");
  for (double lambda : {1e-3, 1e-2, 1e-1, 1.0}) {
    SolveReport rep = solve_type1(dict, pen, lambda, y);
    int nnz = 0;
    for (Index i = 0; i < m; ++i)
      if (rep.x_hat(i) != 0.0) ++nnz;
    std::printf("%10.4f %12.6f %8d\n", lambda, (rep.x_hat - x0).norm() / x0.norm(), nnz);
  }

  LambdaEstimate est = learn_lambda_type1(dict, pen, y);
  std::printf("learned lambda %.6f, rel_err %.6f\n", est.lambda_star,
              (est.x_star - x0).norm() / x0.norm());
  return 0;
}
