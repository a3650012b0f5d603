#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "sdual/bench.hpp"

using namespace sdual;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

ExperimentConfig tiny_sweep_config() {
  ExperimentConfig cfg;
  cfg.n = 16;
  cfg.m = 8;
  cfg.k0 = 2;
  cfg.snr_db = 10.0;
  cfg.lambda_grid = {0.01, 0.1, 1.0};
  cfg.trials = 3;
  cfg.penalties = {"l1"};
  cfg.seed = 5;
  return cfg;
}

RecoveryConfig tiny_recovery_config() {
  RecoveryConfig cfg;
  cfg.base_n = 16;
  cfg.base_d = 8;
  cfg.epsilon = 0.05;
  cfg.omega0 = 2;
  cfg.q = 1.0;
  cfg.trials = 3;
  cfg.seed = 21;
  return cfg;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("sdual_bench_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST(SweepConfig, DefaultGridSpansStatedRange) {
  auto grid = ExperimentConfig::default_lambda_grid();
  ASSERT_EQ(grid.size(), 50u);
  EXPECT_NEAR(grid.front(), 1e-4, 1e-16);
  EXPECT_NEAR(grid.back(), 1e1, 1e-12);
  for (size_t i = 0; i + 1 < grid.size(); ++i) EXPECT_LT(grid[i], grid[i + 1]);
}

TEST(SweepConfig, FromJsonParsesAndValidates) {
  nlohmann::json j = {{"n", 16}, {"m", 8},       {"k0", 2},   {"snr_db", "inf"},
                      {"trials", 3}, {"penalties", {"l1"}}, {"seed", 7}};
  ExperimentConfig cfg = ExperimentConfig::from_json(j);
  EXPECT_TRUE(std::isinf(cfg.snr_db));
  EXPECT_EQ(cfg.lambda_grid.size(), 50u);  // default grid fills in
  EXPECT_EQ(cfg.seed, 7u);

  nlohmann::json noseed = j;
  noseed.erase("seed");
  EXPECT_THROW(ExperimentConfig::from_json(noseed), ConfigError);

  nlohmann::json badsnr = j;
  badsnr["snr_db"] = "huge";
  EXPECT_THROW(ExperimentConfig::from_json(badsnr), ConfigError);

  nlohmann::json badgrid = j;
  badgrid["lambda_grid"] = {0.1, 0.1, 1.0};
  EXPECT_THROW(ExperimentConfig::from_json(badgrid), ConfigError);

  nlohmann::json badpen = j;
  badpen["penalties"] = {"l7"};
  EXPECT_THROW(ExperimentConfig::from_json(badpen), ConfigError);

  nlohmann::json j2 = ExperimentConfig::from_json(j).to_json();
  EXPECT_EQ(j2.at("snr_db").get<std::string>(), "inf");
}

TEST(SweepInstances, DeterministicAndExactSnr) {
  ExperimentConfig cfg = tiny_sweep_config();
  SweepInstance a = make_sweep_instance(cfg, 1);
  SweepInstance b = make_sweep_instance(cfg, 1);
  EXPECT_EQ((a.y - b.y).norm(), 0.0);
  EXPECT_EQ((a.x0 - b.x0).norm(), 0.0);
  EXPECT_EQ((a.dict.phi - b.dict.phi).norm(), 0.0);

  SweepInstance c = make_sweep_instance(cfg, 2);
  EXPECT_GT((a.y - c.y).norm(), 0.0);

  Index nnz = 0;
  for (Index i = 0; i < a.x0.size(); ++i)
    if (a.x0(i) != 0.0) ++nnz;
  EXPECT_EQ(nnz, cfg.k0);

  // snr_db = 0 makes the added noise exactly as large as the clean signal.
  ExperimentConfig zero_db = cfg;
  zero_db.snr_db = 0.0;
  SweepInstance z = make_sweep_instance(zero_db, 0);
  Vec clean = z.dict.phi * z.x0;
  EXPECT_NEAR((z.y - clean).norm(), clean.norm(), 1e-12 * clean.norm());

  ExperimentConfig noiseless = cfg;
  noiseless.snr_db = kInf;
  SweepInstance nl = make_sweep_instance(noiseless, 0);
  Vec clean_nl = nl.dict.phi * nl.x0;
  EXPECT_EQ((nl.y - clean_nl).norm(), 0.0);
}

TEST(Sweep, ParallelRunMatchesSerialExactly) {
  ExperimentConfig cfg = tiny_sweep_config();
  SweepOutput serial = run_lambda_sweep(cfg, 1);
  SweepOutput parallel = run_lambda_sweep(cfg, 4);
  ASSERT_EQ(serial.per_penalty.size(), 1u);
  ASSERT_EQ(parallel.per_penalty.size(), 1u);
  const PenaltySweep& s = serial.per_penalty[0];
  const PenaltySweep& p = parallel.per_penalty[0];
  ASSERT_EQ(s.grid.size(), 3u);
  for (size_t li = 0; li < s.grid.size(); ++li) {
    EXPECT_EQ(s.grid[li].lambda, p.grid[li].lambda);
    EXPECT_EQ(s.grid[li].mse, p.grid[li].mse);
    EXPECT_EQ(s.grid[li].l0, p.grid[li].l0);
    EXPECT_GE(s.grid[li].mse, 0.0);
    EXPECT_LE(s.grid[li].l0, 8.0);
  }
  EXPECT_EQ(s.learned.lambda, p.learned.lambda);
  EXPECT_EQ(s.learned.mse, p.learned.mse);
  EXPECT_GT(s.learned.lambda, 0.0);
}

// Without noise the best lambda is 0, so average error can only grow along
// the grid.
TEST(Sweep, NoiselessErrorGrowsWithLambda) {
  ExperimentConfig cfg = tiny_sweep_config();
  cfg.snr_db = kInf;
  cfg.k0 = 3;
  cfg.lambda_grid = {1e-3, 1e-2, 0.1, 0.3, 1.0, 3.0};
  SweepOutput out = run_lambda_sweep(cfg, 1);
  const auto& grid = out.per_penalty[0].grid;
  for (size_t li = 1; li < grid.size(); ++li)
    EXPECT_GE(grid[li].mse, grid[li - 1].mse - 1e-9 * (1.0 + grid[li].mse)) << li;
}

TEST(Sweep, CsvWritersEmitStableBytes) {
  ExperimentConfig cfg = tiny_sweep_config();
  SweepOutput out = run_lambda_sweep(cfg, 1);
  TempDir dir_a("sweep_a");
  TempDir dir_b("sweep_b");
  auto names_a = write_sweep_csvs(dir_a.path, out);
  auto names_b = write_sweep_csvs(dir_b.path, out);
  ASSERT_EQ(names_a.size(), 3u);
  EXPECT_EQ(names_a, names_b);
  for (const auto& name : names_a) {
    std::string a = slurp(dir_a.path / name);
    std::string b = slurp(dir_b.path / name);
    EXPECT_FALSE(a.empty()) << name;
    EXPECT_EQ(a, b) << name;
  }
  std::string mse = slurp(dir_a.path / "mse_vs_lambda.csv");
  EXPECT_EQ(mse.substr(0, mse.find('\n')), "penalty,lambda,mse");
  std::string learned = slurp(dir_a.path / "learned_lambda.csv");
  EXPECT_EQ(learned.substr(0, learned.find('\n')), "penalty,lambda,mse,l0");
}

TEST(PlantedSignalCheck, AcceptsValidRejectsCancelled) {
  ClusterSpec spec;
  spec.base_n = 8;
  spec.base_d = 4;
  spec.cluster_sizes.assign(4, 2);
  spec.epsilon = 0.05;
  spec.seed = 3;
  Dictionary d = gen_clustered_dictionary(spec);

  Vec good = Vec::Zero(8);
  good(0) = 1.0;
  good(1) = 0.5;  // cluster 0 active, sum 1.5
  EXPECT_NO_THROW(check_planted_cluster_signal(d, good));

  Vec cancelled = Vec::Zero(8);
  cancelled(2) = 0.7;
  cancelled(3) = -0.7;  // cluster 1 sums to zero
  EXPECT_THROW(check_planted_cluster_signal(d, cancelled), ConfigError);

  EXPECT_THROW(check_planted_cluster_signal(d, Vec::Zero(5)), ConfigError);

  Rng rng = derive_rng(4, 0);
  Dictionary plain = random_gaussian_dictionary(rng, 4, 6);
  EXPECT_THROW(check_planted_cluster_signal(plain, Vec::Zero(6)), ConfigError);
}

TEST(RecoveryConfig, FromJsonHandlesScalarClusterSize) {
  nlohmann::json j = {{"base_n", 16}, {"base_d", 8}, {"cluster_size", 2},
                      {"omega0", 2},  {"trials", 3}, {"seed", 21}};
  RecoveryConfig cfg = RecoveryConfig::from_json(j);
  ASSERT_EQ(cfg.cluster_sizes.size(), 8u);
  for (Index s : cfg.cluster_sizes) EXPECT_EQ(s, 2);

  nlohmann::json noseed = j;
  noseed.erase("seed");
  EXPECT_THROW(RecoveryConfig::from_json(noseed), ConfigError);

  nlohmann::json bad_omega = j;
  bad_omega["omega0"] = 9;
  EXPECT_THROW(RecoveryConfig::from_json(bad_omega), ConfigError);

  nlohmann::json bad_q = j;
  bad_q["q"] = 0.0;
  EXPECT_THROW(RecoveryConfig::from_json(bad_q), ConfigError);
}

TEST(Recovery, TrialsDeterministicAcrossJobCounts) {
  RecoveryConfig cfg = tiny_recovery_config();
  auto [trials_1, sum_1] = run_recovery_experiment(cfg, 1);
  auto [trials_4, sum_4] = run_recovery_experiment(cfg, 4);
  ASSERT_EQ(trials_1.size(), 3u);
  ASSERT_EQ(trials_4.size(), 3u);
  for (size_t t = 0; t < trials_1.size(); ++t) {
    EXPECT_EQ((trials_1[t].x0 - trials_4[t].x0).norm(), 0.0) << t;
    EXPECT_EQ(trials_1[t].rel_err_l1, trials_4[t].rel_err_l1) << t;
    EXPECT_EQ(trials_1[t].rel_err_type2, trials_4[t].rel_err_type2) << t;
    EXPECT_EQ(trials_1[t].success_l1, trials_4[t].success_l1) << t;
    EXPECT_EQ(trials_1[t].success_type2, trials_4[t].success_type2) << t;
  }
  EXPECT_EQ(sum_1.rate_l1, sum_4.rate_l1);
  EXPECT_EQ(sum_1.rate_type2, sum_4.rate_type2);
  EXPECT_EQ(sum_1.dominance, sum_4.dominance);

  for (const auto& tr : trials_1) {
    EXPECT_GT(tr.x0.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_GE(tr.min_cluster_sum, 1e-3);
    EXPECT_EQ(tr.omega0.size(), 2u);
  }
  EXPECT_GE(sum_1.rate_type2, 0.0);
  EXPECT_LE(sum_1.rate_type2, 1.0);
}

TEST(Recovery, CsvWritersEmitExpectedShape) {
  RecoveryConfig cfg = tiny_recovery_config();
  auto [trials, sum] = run_recovery_experiment(cfg, 1);
  TempDir dir("recovery");
  auto names = write_recovery_csvs(dir.path, trials, sum);
  ASSERT_EQ(names.size(), 2u);

  std::string trials_text = slurp(dir.path / "trials.csv");
  EXPECT_EQ(trials_text.substr(0, trials_text.find('\n')),
            "trial,success_l1,success_type2,base_l1_ok,rel_err_l1,rel_err_type2,"
            "min_cluster_sum");
  int lines = 0;
  for (char ch : trials_text)
    if (ch == '\n') ++lines;
  EXPECT_EQ(lines, 1 + cfg.trials);

  std::string summary_text = slurp(dir.path / "summary.csv");
  EXPECT_EQ(summary_text.substr(0, summary_text.find('\n')),
            "trials,rate_l1,rate_type2,dominance");
}
