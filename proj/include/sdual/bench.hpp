#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sdual/cluster.hpp"
#include "sdual/common.hpp"
#include "sdual/dictionary.hpp"
#include "sdual/io.hpp"
#include "sdual/lambda_learn.hpp"
#include "sdual/penalty.hpp"
#include "sdual/type1.hpp"
#include "sdual/type2.hpp"
#include "sdual/wl1.hpp"

namespace sdual {

namespace detail {

/// Runs body(t) for t in [0, count) on `jobs` threads; the first exception
/// wins and is rethrown after all workers stop.  Callers write results into
/// per-index slots, so scheduling order never affects output.
template <typename Body>
void run_trials(int count, int jobs, Body&& body) {
  if (jobs <= 1) {
    for (int t = 0; t < count; ++t) body(t);
    return;
  }
  std::atomic<int> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      int t = next.fetch_add(1);
      if (t >= count) return;
      try {
        body(t);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  int width = std::min(jobs, count);
  pool.reserve(static_cast<std::size_t>(width));
  for (int i = 0; i < width; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

inline Index count_nonzeros_relative(const Vec& x, double rel_tol = 1e-6) {
  double cut = rel_tol * x.cwiseAbs().maxCoeff();
  if (!(cut > 0.0)) return 0;
  Index k = 0;
  for (Index i = 0; i < x.size(); ++i)
    if (std::abs(x(i)) > cut) ++k;
  return k;
}

/// k distinct indices from [0, m), by partial Fisher-Yates on an index pool.
inline std::vector<Index> sample_support(Rng& rng, Index m, Index k) {
  std::vector<Index> pool(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) pool[static_cast<std::size_t>(i)] = i;
  for (Index i = 0; i < k; ++i) {
    std::uniform_int_distribution<Index> pick(i, m - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
  }
  pool.resize(static_cast<std::size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Fixed-lambda sweep with learned-lambda markers.
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  Index n = 100;
  Index m = 50;
  Index k0 = 10;
  double snr_db = 0.0;  // kInf means exact (noiseless) measurements
  std::vector<double> lambda_grid;
  int trials = 1000;
  std::vector<std::string> penalties = {"lp:0.01", "lp:1"};
  std::uint64_t seed = 0;

  static std::vector<double> default_lambda_grid(int points = 50, double lo = 1e-4,
                                                 double hi = 1e1) {
    std::vector<double> grid(static_cast<std::size_t>(points));
    for (int i = 0; i < points; ++i)
      grid[static_cast<std::size_t>(i)] =
          lo * std::pow(hi / lo, static_cast<double>(i) / (points - 1));
    return grid;
  }

  void validate() const {
    if (n < 1 || m < 1) throw ConfigError("n and m must be >= 1");
    if (k0 < 0 || k0 > m) throw ConfigError("k0 must lie in [0, m]");
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (lambda_grid.empty()) throw ConfigError("lambda grid is empty");
    for (std::size_t i = 0; i + 1 < lambda_grid.size(); ++i)
      if (!(lambda_grid[i] < lambda_grid[i + 1]))
        throw ConfigError("lambda grid must be strictly increasing");
    if (!(lambda_grid.front() > 0.0)) throw ConfigError("lambda grid must be positive");
    if (penalties.empty()) throw ConfigError("at least one penalty kind required");
    for (const auto& p : penalties) PenaltyFamily::parse(p);  // throws on bad name
  }

  static ExperimentConfig from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    if (j.contains("n")) c.n = j.at("n").get<Index>();
    if (j.contains("m")) c.m = j.at("m").get<Index>();
    if (j.contains("k0")) c.k0 = j.at("k0").get<Index>();
    if (j.contains("snr_db")) {
      const auto& v = j.at("snr_db");
      if (v.is_string()) {
        if (v.get<std::string>() != "inf") throw ConfigError("snr_db: number or \"inf\"");
        c.snr_db = kInf;
      } else {
        c.snr_db = v.get<double>();
      }
    }
    if (j.contains("lambda_grid"))
      c.lambda_grid = j.at("lambda_grid").get<std::vector<double>>();
    else
      c.lambda_grid = default_lambda_grid();
    if (j.contains("trials")) c.trials = j.at("trials").get<int>();
    if (j.contains("penalties"))
      c.penalties = j.at("penalties").get<std::vector<std::string>>();
    if (!j.contains("seed")) throw ConfigError("config must pin a seed");
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["n"] = n;
    j["m"] = m;
    j["k0"] = k0;
    if (std::isinf(snr_db))
      j["snr_db"] = "inf";
    else
      j["snr_db"] = snr_db;
    j["lambda_grid"] = lambda_grid;
    j["trials"] = trials;
    j["penalties"] = penalties;
    j["seed"] = seed;
    return j;
  }
};

struct SweepRow {
  double lambda = 0.0;
  double mse = 0.0;
  double l0 = 0.0;
};

struct PenaltySweep {
  std::string penalty;
  std::vector<SweepRow> grid;
  SweepRow learned;  // lambda = mean learned lambda across trials
};

struct SweepOutput {
  std::vector<PenaltySweep> per_penalty;
};

/// One simulated instance: unit-norm Gaussian dictionary, k0-sparse x0 with
/// unit Gaussian nonzeros, noise rescaled per trial to hit snr_db exactly.
struct SweepInstance {
  Dictionary dict;
  Vec x0;
  Vec y;
};

inline SweepInstance make_sweep_instance(const ExperimentConfig& cfg, int trial) {
  std::uint64_t t = static_cast<std::uint64_t>(trial);
  Rng rng_dict = derive_rng(cfg.seed, 3 * t);
  Rng rng_x = derive_rng(cfg.seed, 3 * t + 1);
  Rng rng_noise = derive_rng(cfg.seed, 3 * t + 2);

  SweepInstance inst;
  inst.dict = random_gaussian_dictionary(rng_dict, cfg.n, cfg.m);
  inst.x0 = Vec::Zero(cfg.m);
  for (Index i : detail::sample_support(rng_x, cfg.m, cfg.k0))
    inst.x0(i) = gaussian_vector(rng_x, 1)(0);
  Vec clean = inst.dict.phi * inst.x0;
  inst.y = clean;
  if (!std::isinf(cfg.snr_db)) {
    Vec noise = gaussian_vector(rng_noise, cfg.n);
    double target = clean.norm() * std::pow(10.0, -cfg.snr_db / 20.0);
    double nrm = noise.norm();
    if (nrm > 0.0 && target > 0.0) inst.y += noise * (target / nrm);
  }
  return inst;
}

/// For each penalty kind: MAP solutions across the lambda grid plus the
/// jointly learned (x, lambda); per-trial normalized error ||x0 - x||^2 / ||x0||
/// and nonzero counts (relative threshold 1e-6) averaged over trials.
inline SweepOutput run_lambda_sweep(const ExperimentConfig& cfg, int jobs = 1) {
  cfg.validate();
  const std::size_t np = cfg.penalties.size();
  const std::size_t nl = cfg.lambda_grid.size();
  std::vector<PenaltyFamily> pens;
  pens.reserve(np);
  for (const auto& name : cfg.penalties) pens.push_back(PenaltyFamily::parse(name));

  struct TrialCell {
    std::vector<double> mse, l0;  // one per grid point
    double learned_lambda = 0.0, learned_mse = 0.0, learned_l0 = 0.0;
  };
  std::vector<std::vector<TrialCell>> slots(
      static_cast<std::size_t>(cfg.trials), std::vector<TrialCell>(np));

  detail::run_trials(cfg.trials, jobs, [&](int t) {
    SweepInstance inst = make_sweep_instance(cfg, t);
    double x0_norm = inst.x0.norm();
    auto error_of = [&](const Vec& xhat) {
      return (inst.x0 - xhat).squaredNorm() / x0_norm;
    };
    for (std::size_t p = 0; p < np; ++p) {
      TrialCell& cell = slots[static_cast<std::size_t>(t)][p];
      cell.mse.resize(nl);
      cell.l0.resize(nl);
      for (std::size_t li = 0; li < nl; ++li) {
        SolveReport rep = solve_type1(inst.dict, pens[p], cfg.lambda_grid[li], inst.y);
        cell.mse[li] = error_of(rep.x_hat);
        cell.l0[li] = static_cast<double>(detail::count_nonzeros_relative(rep.x_hat));
      }
      LambdaEstimate est = learn_lambda_type1(inst.dict, pens[p], inst.y);
      cell.learned_lambda = est.lambda_star;
      cell.learned_mse = error_of(est.x_star);
      cell.learned_l0 =
          static_cast<double>(detail::count_nonzeros_relative(est.x_star));
    }
  });

  SweepOutput out;
  out.per_penalty.resize(np);
  for (std::size_t p = 0; p < np; ++p) {
    PenaltySweep& ps = out.per_penalty[p];
    ps.penalty = pens[p].name();
    ps.grid.resize(nl);
    for (std::size_t li = 0; li < nl; ++li)
      ps.grid[li].lambda = cfg.lambda_grid[li];
    for (int t = 0; t < cfg.trials; ++t) {
      const TrialCell& cell = slots[static_cast<std::size_t>(t)][p];
      for (std::size_t li = 0; li < nl; ++li) {
        ps.grid[li].mse += cell.mse[li];
        ps.grid[li].l0 += cell.l0[li];
      }
      ps.learned.lambda += cell.learned_lambda;
      ps.learned.mse += cell.learned_mse;
      ps.learned.l0 += cell.learned_l0;
    }
    double inv = 1.0 / cfg.trials;
    for (auto& row : ps.grid) {
      row.mse *= inv;
      row.l0 *= inv;
    }
    ps.learned.lambda *= inv;
    ps.learned.mse *= inv;
    ps.learned.l0 *= inv;
  }
  return out;
}

inline std::vector<std::string> write_sweep_csvs(const std::filesystem::path& dir,
                                                 const SweepOutput& out) {
  std::string mse_text = "penalty,lambda,mse\n";
  std::string l0_text = "penalty,lambda,l0\n";
  std::string learned_text = "penalty,lambda,mse,l0\n";
  for (const auto& ps : out.per_penalty) {
    for (const auto& row : ps.grid) {
      mse_text += ps.penalty + ',' + io::format_g17(row.lambda) + ',' +
                  io::format_g17(row.mse) + '\n';
      l0_text += ps.penalty + ',' + io::format_g17(row.lambda) + ',' +
                 io::format_g17(row.l0) + '\n';
    }
    learned_text += ps.penalty + ',' + io::format_g17(ps.learned.lambda) + ',' +
                    io::format_g17(ps.learned.mse) + ',' +
                    io::format_g17(ps.learned.l0) + '\n';
  }
  io::atomic_write_text(dir / "mse_vs_lambda.csv", mse_text);
  io::atomic_write_text(dir / "l0_vs_lambda.csv", l0_text);
  io::atomic_write_text(dir / "learned_lambda.csv", learned_text);
  return {"mse_vs_lambda.csv", "l0_vs_lambda.csv", "learned_lambda.csv"};
}

// ---------------------------------------------------------------------------
// Exact-recovery experiment on clustered dictionaries.
// ---------------------------------------------------------------------------

// Defaults give the reference suite: 32 base columns in 16 rows, expanded by
// size-2 clusters to a 16 x 64 dictionary, 4 active clusters (8 planted
// nonzeros, so the active cluster sizes sum to at most n).  The expansion
// must leave the dictionary overcomplete; a square expansion would make the
// feasible point unique and the comparison vacuous.
struct RecoveryConfig {
  Index base_n = 16;
  Index base_d = 32;
  std::vector<Index> cluster_sizes;  // defaults to all-2 when empty
  double epsilon = 0.05;
  Index omega0 = 4;  // number of active clusters
  double q = 1.0;
  int trials = 200;
  std::uint64_t seed = 0;

  ClusterSpec cluster_spec(std::uint64_t trial_seed) const {
    ClusterSpec s;
    s.base_n = base_n;
    s.base_d = base_d;
    s.cluster_sizes = cluster_sizes.empty()
                          ? std::vector<Index>(static_cast<std::size_t>(base_d), 2)
                          : cluster_sizes;
    s.epsilon = epsilon;
    s.seed = trial_seed;
    return s;
  }

  void validate() const {
    cluster_spec(0).validate();
    if (omega0 < 1 || omega0 > base_d) throw ConfigError("omega0 must lie in [1, base_d]");
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (!(q > 0.0)) throw ConfigError("q must be > 0");
  }

  static RecoveryConfig from_json(const nlohmann::json& j) {
    RecoveryConfig c;
    if (j.contains("base_n")) c.base_n = j.at("base_n").get<Index>();
    if (j.contains("base_d")) c.base_d = j.at("base_d").get<Index>();
    if (j.contains("cluster_size"))
      c.cluster_sizes.assign(static_cast<std::size_t>(c.base_d),
                             j.at("cluster_size").get<Index>());
    if (j.contains("cluster_sizes"))
      c.cluster_sizes = j.at("cluster_sizes").get<std::vector<Index>>();
    if (j.contains("epsilon")) c.epsilon = j.at("epsilon").get<double>();
    if (j.contains("omega0")) c.omega0 = j.at("omega0").get<Index>();
    if (j.contains("q")) c.q = j.at("q").get<double>();
    if (j.contains("trials")) c.trials = j.at("trials").get<int>();
    if (!j.contains("seed")) throw ConfigError("config must pin a seed");
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["base_n"] = base_n;
    j["base_d"] = base_d;
    if (!cluster_sizes.empty()) j["cluster_sizes"] = cluster_sizes;
    j["epsilon"] = epsilon;
    j["omega0"] = omega0;
    j["q"] = q;
    j["trials"] = trials;
    j["seed"] = seed;
    return j;
  }
};

struct RecoveryTrial {
  Vec x0;
  std::vector<Index> omega0;  // active cluster ids
  std::vector<double> cluster_sums;
  double min_cluster_sum = 0.0;  // smallest |within-cluster sum| among active clusters
  bool success_l1 = false;
  bool success_type2 = false;
  bool base_l1_ok = false;  // plain l1 solves the un-clustered base problem
  double rel_err_l1 = kInf;
  double rel_err_type2 = kInf;
  double resid_l1 = kInf;
  double resid_type2 = kInf;
};

struct RecoverySummary {
  int trials = 0;
  double rate_l1 = 0.0;
  double rate_type2 = 0.0;
  bool dominance = true;  // every l1 success is also a Type II success
};

namespace detail {

inline bool supports_match(const Vec& xhat, const Vec& x0, double tol = 1e-8) {
  for (Index i = 0; i < x0.size(); ++i)
    if ((std::abs(xhat(i)) > tol) != (std::abs(x0(i)) > tol)) return false;
  return true;
}

inline bool exact_recovery(const Vec& xhat, const Vec& x0) {
  return (xhat - x0).norm() / x0.norm() < 1e-4 && supports_match(xhat, x0);
}

}  // namespace detail

/// Recovery on clustered dictionaries assumes no active cluster's planted
/// coefficients sum to zero (cancelled clusters are invisible to the base
/// problem).  Rejects a planted vector violating that, or touching a column
/// outside a fully active cluster.
inline void check_planted_cluster_signal(const Dictionary& dict, const Vec& x0,
                                         double tol = 1e-12) {
  if (!dict.cluster_map) throw ConfigError("dictionary has no cluster structure");
  if (x0.size() != dict.cols()) throw ConfigError("planted vector size mismatch");
  const auto& map = *dict.cluster_map;
  int nclusters = 0;
  for (int c : map) nclusters = std::max(nclusters, c + 1);
  std::vector<double> sums(static_cast<std::size_t>(nclusters), 0.0);
  std::vector<bool> active(static_cast<std::size_t>(nclusters), false);
  for (Index i = 0; i < x0.size(); ++i) {
    auto c = static_cast<std::size_t>(map[static_cast<std::size_t>(i)]);
    sums[c] += x0(i);
    if (x0(i) != 0.0) active[c] = true;
  }
  for (std::size_t c = 0; c < sums.size(); ++c)
    if (active[c] && std::abs(sums[c]) <= tol)
      throw ConfigError("planted coefficients cancel within cluster " +
                        std::to_string(c));
}

/// One clustered recovery trial: fresh dictionary, planted x0 on omega0
/// clusters (every member nonzero, cluster sums bounded away from zero),
/// then one-shot l1 versus the reweighted scheme, plus the base-problem
/// premise check.
inline RecoveryTrial run_recovery_trial(const RecoveryConfig& cfg, int trial) {
  std::uint64_t t = static_cast<std::uint64_t>(trial);
  std::uint64_t dict_seed = splitmix64(cfg.seed ^ splitmix64(2 * t + 1));
  ClusterSpec spec = cfg.cluster_spec(dict_seed);
  Dictionary dict = gen_clustered_dictionary(spec);
  Rng rng = derive_rng(cfg.seed, 2 * t);

  RecoveryTrial out;
  out.omega0 = detail::sample_support(rng, cfg.base_d, cfg.omega0);

  const auto& map = *dict.cluster_map;
  out.x0 = Vec::Zero(dict.cols());
  out.cluster_sums.assign(static_cast<std::size_t>(cfg.base_d), 0.0);
  for (Index k : out.omega0) {
    std::vector<Index> members;
    for (Index i = 0; i < dict.cols(); ++i)
      if (map[static_cast<std::size_t>(i)] == static_cast<int>(k)) members.push_back(i);
    double floor = 1e-3 * std::sqrt(static_cast<double>(members.size()));
    for (int attempt = 0; attempt < 100; ++attempt) {
      double sum = 0.0;
      for (Index i : members) {
        out.x0(i) = gaussian_vector(rng, 1)(0);
        sum += out.x0(i);
      }
      if (std::abs(sum) >= floor) {
        out.cluster_sums[static_cast<std::size_t>(k)] = sum;
        break;
      }
      if (attempt == 99) throw GenerationFailure("cluster sum kept cancelling");
    }
  }
  out.min_cluster_sum = kInf;
  for (Index k : out.omega0)
    out.min_cluster_sum = std::min(
        out.min_cluster_sum, std::abs(out.cluster_sums[static_cast<std::size_t>(k)]));
  check_planted_cluster_signal(dict, out.x0);

  Vec y = dict.phi * out.x0;
  Vec ones = Vec::Ones(dict.cols());

  try {
    WL1Problem l1{dict, y, ones, WL1Mode::Equality, 0.0};
    Vec x_l1 = solve_wl1(l1);
    out.rel_err_l1 = (x_l1 - out.x0).norm() / out.x0.norm();
    out.resid_l1 = (y - dict.phi * x_l1).norm();
    out.success_l1 = detail::exact_recovery(x_l1, out.x0);
  } catch (const NonConvergence&) {
    out.success_l1 = false;
  }

  try {
    Type2Options opts;
    SolveReport rep = solve_type2_noiseless(dict, y, AlphaSchedule{}, cfg.q, opts);
    out.rel_err_type2 = (rep.x_hat - out.x0).norm() / out.x0.norm();
    out.resid_type2 = (y - dict.phi * rep.x_hat).norm();
    out.success_type2 = detail::exact_recovery(rep.x_hat, out.x0);
  } catch (const NonConvergence&) {
    out.success_type2 = false;
  }

  // Definition-level premise: the base dictionary must be l1-friendly for
  // the collapsed problem (one coefficient per cluster, the within-cluster
  // sum).  Base columns are reproducible from the same spec seed.
  {
    Rng base_rng = derive_rng(spec.seed, 0);
    Mat b = gaussian_matrix(base_rng, spec.base_n, spec.base_d);
    for (Index k = 0; k < spec.base_d; ++k) b.col(k) /= b.col(k).norm();
    Vec s = Vec::Zero(spec.base_d);
    for (Index k : out.omega0) s(k) = out.cluster_sums[static_cast<std::size_t>(k)];
    Vec yb = b * s;
    try {
      Dictionary bd = Dictionary::from_unit_columns(std::move(b));
      Vec ones_b = Vec::Ones(bd.cols());
      WL1Problem prob{bd, yb, ones_b, WL1Mode::Equality, 0.0};
      Vec sb = solve_wl1(prob);
      out.base_l1_ok = (sb - s).norm() / s.norm() < 1e-4 && detail::supports_match(sb, s);
    } catch (const NonConvergence&) {
      out.base_l1_ok = false;
    }
  }
  return out;
}

inline std::pair<std::vector<RecoveryTrial>, RecoverySummary> run_recovery_experiment(
    const RecoveryConfig& cfg, int jobs = 1) {
  cfg.validate();
  std::vector<RecoveryTrial> trials(static_cast<std::size_t>(cfg.trials));
  detail::run_trials(cfg.trials, jobs,
                     [&](int t) { trials[static_cast<std::size_t>(t)] = run_recovery_trial(cfg, t); });

  RecoverySummary sum;
  sum.trials = cfg.trials;
  for (const auto& tr : trials) {
    sum.rate_l1 += tr.success_l1 ? 1.0 : 0.0;
    sum.rate_type2 += tr.success_type2 ? 1.0 : 0.0;
    if (tr.success_l1 && !tr.success_type2) sum.dominance = false;
  }
  sum.rate_l1 /= cfg.trials;
  sum.rate_type2 /= cfg.trials;
  return {std::move(trials), sum};
}

inline std::vector<std::string> write_recovery_csvs(
    const std::filesystem::path& dir, const std::vector<RecoveryTrial>& trials,
    const RecoverySummary& sum) {
  std::string trials_text =
      "trial,success_l1,success_type2,base_l1_ok,rel_err_l1,rel_err_type2,min_cluster_sum\n";
  for (std::size_t t = 0; t < trials.size(); ++t) {
    const auto& tr = trials[t];
    trials_text += std::to_string(t) + ',' + (tr.success_l1 ? '1' : '0') + ',' +
                   (tr.success_type2 ? '1' : '0') + ',' + (tr.base_l1_ok ? '1' : '0') +
                   ',' + io::format_g17(tr.rel_err_l1) + ',' +
                   io::format_g17(tr.rel_err_type2) + ',' +
                   io::format_g17(tr.min_cluster_sum) + '\n';
  }
  std::string summary_text = "trials,rate_l1,rate_type2,dominance\n";
  summary_text += std::to_string(sum.trials) + ',' + io::format_g17(sum.rate_l1) + ',' +
                  io::format_g17(sum.rate_type2) + ',' + (sum.dominance ? '1' : '0') +
                  '\n';
  io::atomic_write_text(dir / "trials.csv", trials_text);
  io::atomic_write_text(dir / "summary.csv", summary_text);
  return {"trials.csv", "summary.csv"};
}

}  // namespace sdual
