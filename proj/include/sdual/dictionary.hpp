#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "sdual/common.hpp"

namespace sdual {

/// Dense dictionary with unit l2-norm columns.
///
/// `column_norms` keeps the pre-normalization norms so callers can undo the
/// scaling; `cluster_map`, when present, assigns each column to a cluster id
/// (clustered dictionaries record the cluster each correlated column came
/// from).
struct Dictionary {
  Mat phi;                // n x m, every column unit norm
  Vec column_norms;       // m
  std::optional<std::vector<int>> cluster_map;

  Index rows() const { return phi.rows(); }
  Index cols() const { return phi.cols(); }

  const Vec col(Index i) const { return phi.col(i); }

  /// Normalizes the columns of `raw` and records the original norms.
  /// Throws ConfigError on empty input or a zero column.
  static Dictionary from_columns(Mat raw) {
    if (raw.rows() < 1 || raw.cols() < 1)
      throw ConfigError("dictionary must have at least one row and column");
    Dictionary d;
    d.column_norms = Vec(raw.cols());
    for (Index j = 0; j < raw.cols(); ++j) {
      double nrm = raw.col(j).norm();
      if (!(nrm > 0.0))
        throw ConfigError("dictionary column " + std::to_string(j) +
                          " has zero norm");
      d.column_norms(j) = nrm;
      raw.col(j) /= nrm;
    }
    d.phi = std::move(raw);
    return d;
  }

  /// Dictionary whose columns are already unit norm (asserted to 1e-12).
  static Dictionary from_unit_columns(Mat unit) {
    for (Index j = 0; j < unit.cols(); ++j) {
      if (std::abs(unit.col(j).norm() - 1.0) > 1e-12)
        throw ConfigError("column " + std::to_string(j) + " is not unit norm");
    }
    Dictionary d;
    d.column_norms = Vec::Ones(unit.cols());
    d.phi = std::move(unit);
    return d;
  }
};

/// iid Gaussian dictionary with normalized columns.
inline Dictionary random_gaussian_dictionary(Rng& rng, Index n, Index m) {
  return Dictionary::from_columns(gaussian_matrix(rng, n, m));
}

}  // namespace sdual
