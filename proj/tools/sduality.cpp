// Command-line front end: loads problems from CSV/JSON, runs the solvers,
// and writes results plus a run manifest into --out-dir.
//
// Exit codes: 0 success, 1 input error, 2 solver did not converge (outputs
// are still written where an estimate exists), 64 usage error.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sdual/sdual.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using namespace sdual;

int default_jobs() {
  if (const char* s = std::getenv("SPARSE_DUALITY_JOBS")) {
    int v = std::atoi(s);
    if (v >= 1) return v;
  }
  return 1;
}

std::vector<double> vec_to_std(const Vec& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

void emit_manifest(const fs::path& dir, const json& normalized_config,
                   std::uint64_t seed, const std::string& command, double seconds,
                   std::vector<std::string> outputs) {
  io::RunManifest man;
  man.config_hash = io::config_hash_of(normalized_config);
  man.seed = seed;
  man.timings_sec.emplace_back(command, seconds);
  outputs.emplace_back("manifest.json");
  man.outputs = std::move(outputs);
  io::write_manifest(dir, man);
}

json report_to_json(const SolveReport& rep) {
  json j;
  j["converged"] = rep.converged;
  j["iterations"] = rep.iterations;
  j["objective"] = rep.objective_trace.empty() ? 0.0 : rep.objective_trace.back();
  j["objective_trace"] = rep.objective_trace;
  j["wall_time_sec"] = rep.wall_time;
  int nnz = 0;
  for (Index i = 0; i < rep.x_hat.size(); ++i)
    if (rep.x_hat(i) != 0.0) ++nnz;
  j["nonzeros"] = nnz;
  return j;
}

// --- solve ------------------------------------------------------------------

struct SolveArgs {
  std::string dict_path, y_path, out_dir = ".";
  std::string penalty = "lp:1";
  double lambda = 1.0;
  std::string rule = "mackay";
  double q = 1.0;
  int max_iters = 0;  // 0: solver default
  double tol = 0.0;   // 0: solver default
};

int run_solve(const std::string& kind, const SolveArgs& a) {
  Dictionary dict = Dictionary::from_columns(io::load_matrix_csv(a.dict_path));
  Vec y = io::load_vector_csv(a.y_path);
  fs::create_directories(a.out_dir);

  json cfg{{"command", "solve " + kind}, {"dict", a.dict_path},  {"y", a.y_path},
           {"penalty", a.penalty},       {"lambda", a.lambda},   {"rule", a.rule},
           {"q", a.q},                   {"max_iters", a.max_iters}, {"tol", a.tol}};
  Timer timer;
  SolveReport rep;
  if (kind == "type1") {
    Type1Options opts;
    if (a.max_iters > 0) opts.max_iters = a.max_iters;
    if (a.tol > 0.0) opts.tol = a.tol;
    rep = solve_type1(dict, PenaltyFamily::parse(a.penalty), a.lambda, y, opts);
  } else if (kind == "type2") {
    Type2Options opts;
    if (a.rule == "mackay")
      opts.update_rule = Type2Options::UpdateRule::MacKay;
    else if (a.rule == "em")
      opts.update_rule = Type2Options::UpdateRule::EM;
    else if (a.rule == "rwl1")
      opts.update_rule = Type2Options::UpdateRule::ReweightedL1;
    else
      throw ConfigError("unknown update rule: " + a.rule);
    if (a.max_iters > 0) opts.max_iters = a.max_iters;
    if (a.tol > 0.0) opts.tol = a.tol;
    rep = solve_type2(dict, PenaltyFamily::parse(a.penalty), a.lambda, y, opts);
  } else {
    Type2Options opts;
    if (a.max_iters > 0) opts.max_iters = a.max_iters;
    if (a.tol > 0.0) opts.tol = a.tol;
    rep = solve_type2_noiseless(dict, y, AlphaSchedule{}, a.q, opts);
  }

  fs::path dir(a.out_dir);
  io::save_vector_csv(dir / "x.csv", rep.x_hat);
  io::save_vector_csv(dir / "gamma.csv", rep.gamma_hat);
  io::atomic_write_text(dir / "report.json", report_to_json(rep).dump(2) + "\n");
  emit_manifest(dir, cfg, 0, "solve " + kind, timer.seconds(),
                {"x.csv", "gamma.csv", "report.json"});
  std::cout << (rep.converged ? "converged" : "did not converge") << " after "
            << rep.iterations << " iterations\n";
  return rep.converged ? 0 : 2;
}

// --- learn-lambda -----------------------------------------------------------

struct LearnArgs {
  int type = 1;
  std::string dict_path, y_path, out_dir = ".";
  std::string penalty = "lp:1";
};

int run_learn_lambda(const LearnArgs& a) {
  Dictionary dict = Dictionary::from_columns(io::load_matrix_csv(a.dict_path));
  Vec y = io::load_vector_csv(a.y_path);
  fs::create_directories(a.out_dir);

  json cfg{{"command", "learn-lambda"},
           {"type", a.type},
           {"dict", a.dict_path},
           {"y", a.y_path},
           {"penalty", a.penalty}};
  Timer timer;
  PenaltyFamily pen = PenaltyFamily::parse(a.penalty);
  LambdaEstimate est = a.type == 1 ? learn_lambda_type1(dict, pen, y)
                                   : learn_lambda_type2(dict, pen, y);

  json out;
  out["lambda"] = est.lambda_star;
  out["objective"] = est.objective;
  out["converged"] = est.converged;
  out["x"] = vec_to_std(est.x_star);
  out["residual"] = vec_to_std(est.u_star);
  out["objective_trace"] = est.objective_trace;
  fs::path dir(a.out_dir);
  io::atomic_write_text(dir / "estimate.json", out.dump(2) + "\n");
  emit_manifest(dir, cfg, 0, "learn-lambda", timer.seconds(), {"estimate.json"});
  std::cout << "lambda = " << est.lambda_star
            << (est.converged ? "" : " (not converged)") << "\n";
  return est.converged ? 0 : 2;
}

// --- bench ------------------------------------------------------------------

int run_bench(const std::string& kind, const std::string& config_path,
              const std::string& out_dir, int jobs) {
  json raw = io::load_json(config_path);
  Timer timer;
  // Outputs land in a run directory named by the config hash, so reruns of
  // the same config overwrite their own results and nothing else.
  if (kind == "sweep") {
    ExperimentConfig cfg = ExperimentConfig::from_json(raw);
    fs::path dir = fs::path(out_dir) / io::config_hash_of(cfg.to_json());
    fs::create_directories(dir);
    SweepOutput out = run_lambda_sweep(cfg, jobs);
    auto files = write_sweep_csvs(dir, out);
    emit_manifest(dir, cfg.to_json(), cfg.seed, "bench sweep", timer.seconds(), files);
    std::cout << "run directory: " << dir.string() << "\n";
  } else {
    RecoveryConfig cfg = RecoveryConfig::from_json(raw);
    fs::path dir = fs::path(out_dir) / io::config_hash_of(cfg.to_json());
    fs::create_directories(dir);
    auto [trials, summary] = run_recovery_experiment(cfg, jobs);
    auto files = write_recovery_csvs(dir, trials, summary);
    emit_manifest(dir, cfg.to_json(), cfg.seed, "bench recovery", timer.seconds(), files);
    std::cout << "run directory: " << dir.string() << "\n";
    std::cout << "l1 rate " << summary.rate_l1 << ", type2 rate " << summary.rate_type2
              << ", dominance " << (summary.dominance ? "holds" : "violated") << "\n";
  }
  return 0;
}

// --- classify ---------------------------------------------------------------

struct FitArgs {
  std::string data_path, out_dir = ".";
  std::string mode = "type2";
  double lambda = -1.0;  // < 0: keep the option default
  double alpha1 = -1.0, alpha2 = -1.0;
  int max_outer = 0;
  double tol = 0.0;
};

int run_classify_fit(const FitArgs& a) {
  LabeledDesign design = load_labeled_csv(a.data_path);
  fs::create_directories(a.out_dir);

  json cfg{{"command", "classify fit"}, {"data", a.data_path}, {"mode", a.mode},
           {"lambda", a.lambda},        {"alpha1", a.alpha1},  {"alpha2", a.alpha2}};
  Timer timer;
  ClassifierOptions opts;
  if (a.lambda > 0.0) opts.lambda = a.lambda;
  if (a.alpha1 > 0.0) opts.alpha1 = a.alpha1;
  if (a.alpha2 > 0.0) opts.alpha2 = a.alpha2;
  if (a.max_outer > 0) opts.max_outer = a.max_outer;
  if (a.tol > 0.0) opts.tol = a.tol;

  SolveReport rep;
  if (a.mode == "type2")
    rep = fit_type2_classifier(design, PenaltyFamily::ard_flat(), opts);
  else if (a.mode == "approx-l0")
    rep = fit_approx_l0_classifier(design, opts);
  else
    throw ConfigError("unknown fit mode: " + a.mode);

  ClassifierModel model;
  model.x = rep.x_hat;
  model.gamma = rep.gamma_hat;
  model.lambda = opts.lambda;
  model.converged = rep.converged;
  json mj = model.to_json();
  mj["mode"] = a.mode;
  fs::path dir(a.out_dir);
  io::atomic_write_text(dir / "model.json", mj.dump(2) + "\n");
  io::atomic_write_text(dir / "report.json", report_to_json(rep).dump(2) + "\n");
  emit_manifest(dir, cfg, 0, "classify fit", timer.seconds(),
                {"model.json", "report.json"});
  std::cout << (rep.converged ? "converged" : "did not converge") << ", support size "
            << model.support().size() << "\n";
  return rep.converged ? 0 : 2;
}

int run_classify_predict(const std::string& model_path, const std::string& data_path,
                         const std::string& out_dir) {
  ClassifierModel model = ClassifierModel::from_json(io::load_json(model_path));
  Mat feats = io::load_matrix_csv(data_path);
  if (feats.cols() != model.x.size())
    throw ConfigError("feature count " + std::to_string(feats.cols()) +
                      " does not match model size " + std::to_string(model.x.size()));
  fs::create_directories(out_dir);

  json cfg{{"command", "classify predict"}, {"model", model_path}, {"data", data_path}};
  Timer timer;
  Vec s = feats * model.x;
  Vec probs(s.size());
  Vec decisions(s.size());
  for (Index i = 0; i < s.size(); ++i) {
    probs(i) = 1.0 / (1.0 + std::exp(-s(i)));
    decisions(i) = probs(i) > 0.5 ? 1.0 : 0.0;
  }
  fs::path dir(out_dir);
  io::save_vector_csv(dir / "probabilities.csv", probs);
  io::save_vector_csv(dir / "decisions.csv", decisions);
  emit_manifest(dir, cfg, 0, "classify predict", timer.seconds(),
                {"probabilities.csv", "decisions.csv"});
  std::cout << "predicted " << s.size() << " examples\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse linear model estimation toolkit"};
  app.require_subcommand(1);

  SolveArgs sa;
  std::string solve_kind;
  auto* solve = app.add_subcommand("solve", "run a single estimation problem");
  solve->require_subcommand(1);
  for (const char* kind : {"type1", "type2", "type2-noiseless"}) {
    auto* sub = solve->add_subcommand(kind, "");
    sub->add_option("--dict", sa.dict_path, "dictionary CSV (columns are atoms)")
        ->required();
    sub->add_option("--y", sa.y_path, "measurement vector CSV")->required();
    sub->add_option("--out-dir", sa.out_dir, "output directory");
    sub->add_option("--max-iters", sa.max_iters, "iteration cap");
    sub->add_option("--tol", sa.tol, "convergence tolerance");
    if (std::string(kind) != "type2-noiseless") {
      sub->add_option("--lambda", sa.lambda, "regularization weight")->required();
      sub->add_option("--penalty", sa.penalty, "ard|gaussian|l1|lp:<p>|logsum[:<d>]")
          ->required();
    }
    if (std::string(kind) == "type2")
      sub->add_option("--rule", sa.rule, "mackay|em|rwl1");
    if (std::string(kind) == "type2-noiseless")
      sub->add_option("--q", sa.q, "reweighting exponent");
    sub->callback([kind, &solve_kind] { solve_kind = kind; });
  }

  LearnArgs la;
  auto* learn = app.add_subcommand("learn-lambda", "estimate the noise weight");
  learn->add_option("--type", la.type, "1 (MAP) or 2 (evidence)")
      ->required()
      ->check(CLI::IsMember({1, 2}));
  learn->add_option("--dict", la.dict_path, "dictionary CSV")->required();
  learn->add_option("--y", la.y_path, "measurement vector CSV")->required();
  learn->add_option("--penalty", la.penalty, "penalty family")->required();
  learn->add_option("--out-dir", la.out_dir, "output directory");

  std::string bench_kind, bench_config, bench_out = ".";
  int jobs = default_jobs();
  auto* bench = app.add_subcommand("bench", "run a benchmark experiment");
  bench->require_subcommand(1);
  for (const char* kind : {"sweep", "recovery"}) {
    auto* sub = bench->add_subcommand(kind, "");
    sub->add_option("--config", bench_config, "experiment config JSON")->required();
    sub->add_option("--out-dir", bench_out, "output directory");
    sub->add_option("--jobs", jobs, "worker pool width");
    sub->callback([kind, &bench_kind] { bench_kind = kind; });
  }

  FitArgs fa;
  std::string predict_model, predict_data, predict_out = ".";
  auto* classify = app.add_subcommand("classify", "sparse logistic classification");
  classify->require_subcommand(1);
  auto* fit = classify->add_subcommand("fit", "train on a labeled CSV");
  fit->add_option("--data", fa.data_path, "CSV with features then a 0/1 label column")
      ->required();
  fit->add_option("--mode", fa.mode, "type2|approx-l0");
  fit->add_option("--lambda", fa.lambda, "penalty weight");
  fit->add_option("--alpha1", fa.alpha1, "homotopy start for the quadratic term");
  fit->add_option("--alpha2", fa.alpha2, "homotopy start for the covariance shift");
  fit->add_option("--max-outer", fa.max_outer, "outer iteration cap");
  fit->add_option("--tol", fa.tol, "convergence tolerance");
  fit->add_option("--out-dir", fa.out_dir, "output directory");
  auto* predict = classify->add_subcommand("predict", "score a feature CSV");
  predict->add_option("--model", predict_model, "model JSON from fit")->required();
  predict->add_option("--data", predict_data, "feature CSV")->required();
  predict->add_option("--out-dir", predict_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 64;
  }

  try {
    if (solve->parsed()) return run_solve(solve_kind, sa);
    if (learn->parsed()) return run_learn_lambda(la);
    if (bench->parsed()) return run_bench(bench_kind, bench_config, bench_out, jobs);
    if (classify->parsed()) {
      if (fit->parsed()) return run_classify_fit(fa);
      return run_classify_predict(predict_model, predict_data, predict_out);
    }
  } catch (const NonConvergence& e) {
    // The solver gave up before producing an estimate; still leave a
    // machine-readable record of the failed run in the output directory.
    std::cerr << "error: " << e.what() << "\n";
    try {
      json failed{{"converged", false}, {"error", e.what()}};
      fs::path dir = solve->parsed() ? sa.out_dir
                     : learn->parsed() ? la.out_dir
                     : classify->parsed() ? fa.out_dir
                                          : ".";
      fs::create_directories(dir);
      const char* name = learn->parsed() ? "estimate.json" : "report.json";
      sdual::io::atomic_write_text(dir / name, failed.dump(2) + "\n");
    } catch (const std::exception&) {
      // Reporting must not mask the original failure.
    }
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 64;
}
