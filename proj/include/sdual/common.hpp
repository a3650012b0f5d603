#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace sdual {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Sigma_y (or another required system) is not positive definite.
struct NotPositiveDefinite : Error {
  using Error::Error;
};

/// An iterative routine hit its cap without meeting tolerance.
struct NonConvergence : Error {
  using Error::Error;
};

/// A linear system could not be solved even with pseudo-inverse regularization.
struct SingularSystem : Error {
  using Error::Error;
};

/// Equality-constrained problem has no feasible point within tolerance.
struct Infeasible : Error {
  using Error::Error;
};

/// Rejection sampling failed to produce a valid object.
struct GenerationFailure : Error {
  using Error::Error;
};

/// Invalid user-supplied configuration or input data.
struct ConfigError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Seeded randomness. All randomness in the library flows through an explicit
// 64-bit generator; independent streams are derived with splitmix64 so that
// work-pool scheduling cannot change results.
// ---------------------------------------------------------------------------

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Generator for stream `stream` of a run seeded with `seed`.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t stream) {
  return Rng(splitmix64(seed ^ splitmix64(stream)));
}

inline Mat gaussian_matrix(Rng& rng, Index rows, Index cols) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat out(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) out(i, j) = normal(rng);
  return out;
}

inline Vec gaussian_vector(Rng& rng, Index n) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec out(n);
  for (Index i = 0; i < n; ++i) out(i) = normal(rng);
  return out;
}

// FNV-1a, used for config hashes and stream tags.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

}  // namespace sdual
