// Sparse logistic regression on synthetic data where only 2 of 12 features
// carry signal; the fitted model should concentrate its support there.

#include <cstdio>

#include "sdual/sdual.hpp"

using namespace sdual;

int main() {
  Rng rng = derive_rng(11, 0);
  const Index n = 120, m = 12;
  LabeledDesign design;
  design.phi = gaussian_matrix(rng, n, m);
  Vec w_true = Vec::Zero(m);
  w_true(2) = 2.0;
  w_true(7) = -1.5;
  design.labels.resize(static_cast<std::size_t>(n));
  Vec s = design.phi * w_true;
  for (Index j = 0; j < n; ++j) design.labels[static_cast<std::size_t>(j)] = s(j) > 0.0;
  design.validate(true);

  ClassifierOptions opts;
  opts.lambda = 1.0;
  SolveReport rep = fit_type2_classifier(design, PenaltyFamily::ard_flat(), opts);

  Vec probs = predict_probabilities(design, rep.x_hat);
  int correct = 0;
  for (Index j = 0; j < n; ++j)
    correct += (probs(j) > 0.5) == (design.labels[static_cast<std::size_t>(j)] == 1);
  std::printf("train accuracy %.3f\n", static_cast<double>(correct) / n);
  std::printf("support:");
  for (Index i = 0; i < m; ++i)
    if (std::abs(rep.x_hat(i)) > 1e-8) std::printf(" %d", static_cast<int>(i));
  std::printf("\n");
  return 0;
}
