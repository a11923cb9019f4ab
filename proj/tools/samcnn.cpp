// samcnn: data generation, training, lemma checks, decomposition and grid
// experiments for the two-layer patch CNN.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "samcnn/config.hpp"
#include "samcnn/error.hpp"
#include "samcnn/io.hpp"

namespace fs = std::filesystem;
using namespace samcnn;

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string data;  // optional pre-generated dataset
};

void add_common(CLI::App* sub, Common& c, bool with_data) {
  sub->add_option("--config", c.config, "Key-value config file (SAMCNN_* env vars override keys)")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--out", c.out, "Output directory; nothing is written outside it")->required();
  sub->add_option("--seed", c.seed, "Override the config's base seed");
  if (with_data) sub->add_option("--data", c.data, "Use this dataset file instead of generating one");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

class Run {
public:
  Run(std::string command, const Common& c, const RunConfig& cfg) : dir_(c.out) {
    fs::create_directories(dir_);
    m_.command = std::move(command);
    m_.config = cfg.dump();
    m_.seed = cfg.seed;
    m_.started = utc_timestamp();
    write_manifest();
  }

  std::string path(const std::string& name) {
    m_.outputs.push_back(name);
    return (dir_ / name).string();
  }

  void finish() {
    m_.finished = utc_timestamp();
    write_manifest();
  }

private:
  void write_manifest() {
    write_text_atomic((dir_ / "manifest.json").string(), m_.to_json());
    std::ofstream((dir_ / "config.resolved.cfg").string()) << m_.config;
  }

  fs::path dir_;
  RunManifest m_;
};

Dataset dataset_for(const Common& c, const RunConfig& cfg) {
  if (!c.data.empty()) return read_dataset(c.data);
  return gen_dataset(cfg.data, cfg.n, cfg.data_seed());
}

TrainConfig train_config(const RunConfig& cfg) {
  TrainConfig t = cfg.train;
  t.seed = cfg.train_seed();
  return t;
}

void write_json(const std::string& path, const nlohmann::ordered_json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

int cmd_gen_data(const Common& c) {
  RunConfig cfg = resolve(c);
  cfg.validate();
  Run run("gen-data", c, cfg);
  const Dataset ds = gen_dataset(cfg.data, cfg.n, cfg.data_seed());
  write_dataset(run.path("dataset.bin"), ds);
  const auto rep = concentration_report(ds, cfg.hooks.delta);
  nlohmann::ordered_json j;
  j["n"] = ds.size();
  j["d"] = cfg.data.d;
  j["flipped"] = rep.noisy_total();
  j["noise_norm_range"] = {rep.norm_lo, rep.norm_hi};
  j["max_pair_inner"] = rep.max_pair_inner;
  j["pair_bound"] = rep.pair_bound;
  j["max_mu_inner"] = rep.max_mu_inner;
  j["mu_bound"] = rep.mu_bound;
  j["failures"] = rep.failures();
  write_json(run.path("concentration.json"), j);
  run.finish();
  return 0;
}

int cmd_train(const Common& c) {
  RunConfig cfg = resolve(c);
  cfg.validate();
  Run run("train", c, cfg);
  const Dataset ds = dataset_for(c, cfg);
  NetConfig net = cfg.net;
  net.d = ds.params.d;
  const TrainResult tr = train(ds, net, train_config(cfg));
  write_metrics_csv(run.path("metrics.csv"), tr.trajectory);
  write_weights(run.path("weights_init.bin"), tr.initial);
  write_weights(run.path("weights_final.bin"), tr.final);
  Stream test_rng(cfg.test_seed());
  const TestError te = estimate_test_error(tr.final, ds.params, ds.mu, cfg.n_test, test_rng);
  nlohmann::ordered_json j;
  j["train_loss"] = tr.trajectory.points.back().train_loss;
  j["min_margin"] = tr.trajectory.points.back().min_margin();
  j["test_error"] = te.rate;
  j["test_stderr"] = te.std_error;
  write_json(run.path("summary.json"), j);
  run.finish();
  std::printf("train_loss %.6g  test_error %.4f +- %.4f\n", tr.trajectory.points.back().train_loss, te.rate,
              te.std_error);
  return 0;
}

int cmd_check(const Common& c) {
  RunConfig cfg = resolve(c);
  cfg.validate();
  Run run("check", c, cfg);
  const Dataset ds = dataset_for(c, cfg);
  NetConfig net = cfg.net;
  net.d = ds.params.d;
  TrainConfig tc = train_config(cfg);
  const std::size_t H = tc.batches_per_epoch(ds.size());
  if (H > 1) tc.record_every = 1;

  DecompositionTracker tracker;
  ActivationRecorder acts;
  DeactivationRecorder deact;
  TrainHook* hooks[] = {&tracker, &acts, &deact};
  const TrainResult tr = train(ds, net, tc, hooks);

  const double T_star = cfg.hooks.T_star.value_or(static_cast<double>(tc.epochs * H));
  const TheoryConstants k = TheoryConstants::compute(ds, tr.initial, T_star, cfg.hooks.delta);
  std::vector<CheckReport> reports;
  reports.push_back(check_set_monotonicity(acts.history()));
  std::vector<double> ratios;
  reports.push_back(check_logit_ratio(tr.trajectory.points, k.C2(), &ratios));
  for (auto& r : check_coeff_bounds(tracker.series(), k, ds.size(), ds.params.d)) reports.push_back(r);
  std::vector<int> y, y_hat;
  for (const auto& s : ds.samples) {
    y.push_back(s.y);
    y_hat.push_back(s.y_hat);
  }
  const auto good = check_good_batches(tr.trajectory.schedules, y, y_hat);
  reports.push_back(good.summary);
  const double T1 = first_stage_epochs(net.m, tc.B, ds.size(), tc.eta, ds.params.mu_norm);
  if (tc.algo == Algorithm::sam) reports.push_back(check_sam_deactivation(deact.history(), T1));
  write_check_report_csv(run.path("checks.csv"), reports);

  nlohmann::ordered_json j;
  j["alpha"] = k.alpha;
  j["beta"] = k.beta;
  j["snr"] = k.snr;
  j["gamma_hat"] = k.gamma_hat;
  j["T_star"] = k.T_star;
  j["first_stage_epochs"] = T1;
  j["regime_ratio"] = regime_ratio(ds.size(), ds.params.mu_norm, ds.params.d, ds.params.P, ds.params.sigma_p);
  j["regime"] = to_string(classify_regime(ds.size(), ds.params.mu_norm, ds.params.d, ds.params.P,
                                          ds.params.sigma_p, cfg.hooks.regime));
  j["structural_violations"] = tracker.violations().sign + tracker.violations().pattern;
  j["good_batch_mean_fraction"] = good.mean_fraction;
  j["logit_ratio_per_epoch"] = ratios;
  auto& arr = j["checks"] = nlohmann::ordered_json::array();
  for (const auto& r : reports)
    arr.push_back({{"check", r.check}, {"violations", r.violations}, {"total", r.total},
                   {"worst", r.worst_case_value}, {"vacuous", r.vacuous}, {"note", r.note}});
  write_json(run.path("summary.json"), j);
  run.finish();
  for (const auto& r : reports)
    std::printf("%-18s %6zu / %-8zu worst %.6g%s\n", r.check.c_str(), r.violations, r.total, r.worst_case_value,
                r.vacuous ? " (vacuous)" : "");
  return 0;
}

int cmd_decompose(const Common& c) {
  RunConfig cfg = resolve(c);
  cfg.validate();
  Run run("decompose", c, cfg);
  const Dataset ds = dataset_for(c, cfg);
  NetConfig net = cfg.net;
  net.d = ds.params.d;
  DecompositionTracker::Options opt;
  opt.oracle_every = cfg.hooks.oracle_every == 0 ? 1 : cfg.hooks.oracle_every;
  opt.record_every = cfg.train.record_every;
  DecompositionTracker tracker(opt);
  TrainHook* hooks[] = {&tracker};
  const TrainResult tr = train(ds, net, train_config(cfg), hooks);
  write_coeff_series_csv(run.path("coeff_series.csv"), tracker.series());
  write_coeff_tensors_csv(run.path("coeff_tensors.csv"), tracker.series());
  nlohmann::ordered_json j;
  j["oracle_checks"] = tracker.oracle_checks();
  j["max_gamma_error"] = tracker.max_gamma_error();
  j["max_rho_error"] = tracker.max_rho_error();
  j["max_oracle_residual"] = tracker.max_oracle_residual();
  j["max_reconstruction_error"] = tracker.max_reconstruction_error();
  j["basis_condition"] = tracker.basis().condition_number();
  j["sign_violations"] = tracker.violations().sign;
  j["pattern_violations"] = tracker.violations().pattern;
  j["max_zeta"] = tracker.max_zeta();
  j["min_omega"] = tracker.min_omega();
  j["min_gamma"] = tracker.min_gamma();
  j["max_gamma"] = tracker.max_gamma();
  j["final_train_loss"] = tr.trajectory.points.back().train_loss;
  write_json(run.path("decomposition.json"), j);
  run.finish();
  std::printf("oracle checks %zu  max |gamma err| %.3g  max |rho err| %.3g\n", tracker.oracle_checks(),
              tracker.max_gamma_error(), tracker.max_rho_error());
  return 0;
}

int cmd_grid(const Common& c, std::size_t jobs, bool resume) {
  RunConfig cfg = resolve(c);
  const GridSpec spec = cfg.grid_spec();
  spec.validate();
  Run run("grid", c, cfg);
  GridRunOptions opt;
  opt.out_dir = c.out;
  opt.jobs = jobs;
  opt.resume = resume;
  const auto rows = run_grid(spec, opt);
  run.path("results.csv");
  for (const auto& p : export_heatmap(rows, c.out)) run.path(fs::path(p).filename().string());
  run.finish();
  std::size_t failed = 0;
  for (const auto& r : rows) failed += !r.ok;
  std::printf("%zu trials, %zu failed\n", rows.size(), failed);
  for (const auto& s : aggregate(rows))
    std::printf("%-8s d=%-6zu mu=%-6g test_error %.4f  train_loss %.4g\n", s.algo.c_str(), s.d, s.mu_norm,
                s.mean_test_error, s.mean_train_loss);
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-layer patch CNN: SGD vs SAM on signal-plus-noise data"};
  app.set_version_flag("--version", std::string(SAMCNN_VERSION));
  app.require_subcommand(1);
  app.footer("Environment: any config key can be overridden as SAMCNN_<KEY>, e.g. SAMCNN_TRAIN_ETA=0.1.");

  Common gen, tr, chk, dec, grid;
  std::size_t jobs = std::max(1u, std::thread::hardware_concurrency());
  bool resume = false;

  auto* s_gen = app.add_subcommand("gen-data", "Generate a training set (dataset.bin, concentration.json)");
  add_common(s_gen, gen, false);
  auto* s_train = app.add_subcommand("train", "Train once; write metrics.csv, weights and test error");
  add_common(s_train, tr, true);
  auto* s_check = app.add_subcommand("check", "Train with lemma recorders; write checks.csv");
  add_common(s_check, chk, true);
  auto* s_dec = app.add_subcommand("decompose", "Track signal/noise coefficients against the least-squares oracle");
  add_common(s_dec, dec, true);
  auto* s_grid = app.add_subcommand("grid", "Run a (d, mu, seed, variant) grid; write results.csv and heatmaps");
  add_common(s_grid, grid, false);
  s_grid->add_option("--jobs", jobs, "Parallel trials (default: available cores)")->check(CLI::PositiveNumber);
  s_grid->add_flag("--resume", resume, "Reuse finished trials under <out>/trials");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*s_gen) return cmd_gen_data(gen);
    if (*s_train) return cmd_train(tr);
    if (*s_check) return cmd_check(chk);
    if (*s_dec) return cmd_decompose(dec);
    if (*s_grid) return cmd_grid(grid, jobs, resume);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
