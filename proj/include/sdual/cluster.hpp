#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "sdual/common.hpp"
#include "sdual/dictionary.hpp"

namespace sdual {

/// Recipe for a dictionary of correlated column clusters: an iid Gaussian
/// base of base_d unit-norm columns, each replaced by cluster_sizes[k]
/// perturbed copies whose pairwise angles all stay below epsilon.
struct ClusterSpec {
  Index base_n = 0;
  Index base_d = 0;
  std::vector<Index> cluster_sizes;
  double epsilon = 0.05;  // radians
  std::uint64_t seed = 0;

  Index total_cols() const {
    return std::accumulate(cluster_sizes.begin(), cluster_sizes.end(), Index(0));
  }

  void validate() const {
    if (base_n < 1 || base_d < 1) throw ConfigError("cluster base must be nonempty");
    if (static_cast<Index>(cluster_sizes.size()) != base_d)
      throw ConfigError("need one cluster size per base column");
    for (Index s : cluster_sizes)
      if (s < 1) throw ConfigError("cluster sizes must be >= 1");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  }
};

inline double angle_between(const Vec& a, const Vec& b) {
  double c = a.dot(b) / (a.norm() * b.norm());
  return std::acos(std::min(1.0, std::max(-1.0, c)));
}

/// Largest pairwise angle within any cluster; 0 when every cluster is a
/// singleton.  Requires cluster_map.
inline double max_intra_cluster_angle(const Dictionary& dict) {
  if (!dict.cluster_map) throw ConfigError("dictionary has no cluster map");
  const auto& map = *dict.cluster_map;
  double worst = 0.0;
  for (Index i = 0; i < dict.cols(); ++i)
    for (Index j = i + 1; j < dict.cols(); ++j)
      if (map[i] == map[j])
        worst = std::max(worst, angle_between(dict.phi.col(i), dict.phi.col(j)));
  return worst;
}

/// Builds the clustered dictionary: base columns are iid Gaussian
/// (normalized); cluster k consists of cluster_sizes[k] columns
/// normalize(b_k + delta r) with fresh Gaussian r.  delta starts at a
/// small-angle estimate and halves on each rejection until all pairwise
/// angles inside the cluster fall below epsilon; singleton clusters keep
/// the base column as is.  Throws GenerationFailure after 100 rejections
/// for any one cluster.
inline Dictionary gen_clustered_dictionary(const ClusterSpec& spec) {
  spec.validate();
  Rng rng = derive_rng(spec.seed, 0);
  const Index n = spec.base_n;
  Mat base = gaussian_matrix(rng, n, spec.base_d);
  for (Index k = 0; k < spec.base_d; ++k) {
    double nrm = base.col(k).norm();
    if (!(nrm > 0.0)) throw GenerationFailure("degenerate base column");
    base.col(k) /= nrm;
  }

  Mat phi(n, spec.total_cols());
  std::vector<int> cluster_map(static_cast<std::size_t>(spec.total_cols()));
  Index col = 0;
  for (Index k = 0; k < spec.base_d; ++k) {
    const Index mi = spec.cluster_sizes[static_cast<std::size_t>(k)];
    if (mi == 1) {
      phi.col(col) = base.col(k);
      cluster_map[static_cast<std::size_t>(col)] = static_cast<int>(k);
      ++col;
      continue;
    }
    // A perturbation delta*r with r ~ N(0, I_n) tilts a unit column by about
    // delta*sqrt(n), so two perturbed copies sit about delta*sqrt(2n) apart.
    double delta = spec.epsilon / (4.0 * std::sqrt(static_cast<double>(n)));
    bool accepted = false;
    Mat members(n, mi);
    for (int round = 0; round < 100 && !accepted; ++round) {
      for (Index j = 0; j < mi; ++j) {
        Vec cand = base.col(k) + delta * gaussian_vector(rng, n);
        double nrm = cand.norm();
        if (!(nrm > 0.0)) break;
        members.col(j) = cand / nrm;
      }
      double worst = 0.0;
      for (Index a = 0; a < mi; ++a)
        for (Index b = a + 1; b < mi; ++b)
          worst = std::max(worst, angle_between(members.col(a), members.col(b)));
      if (worst < spec.epsilon && worst > 0.0)
        accepted = true;
      else
        delta *= 0.5;
    }
    if (!accepted)
      throw GenerationFailure("could not meet the intra-cluster angle bound for cluster " +
                              std::to_string(k));
    for (Index j = 0; j < mi; ++j) {
      phi.col(col) = members.col(j);
      cluster_map[static_cast<std::size_t>(col)] = static_cast<int>(k);
      ++col;
    }
  }

  Dictionary d = Dictionary::from_unit_columns(std::move(phi));
  d.cluster_map = std::move(cluster_map);
  return d;
}

}  // namespace sdual
