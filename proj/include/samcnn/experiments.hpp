#pragma once

// Grid runner for the (d, ||mu||) phase-transition experiments: one trial per
// (variant, d, mu, seed), test error by fresh Monte Carlo samples.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "samcnn/theory_checks.hpp"

namespace samcnn {

struct Variant {
  std::string name;
  TrainConfig train;
};

/// Hooks attached to every trial. Structural invariants (coefficient signs,
/// label-pattern zeros, S_i in S_tilde_i) are always tracked.
struct HookOptions {
  bool checks = true;             ///< run the lemma reports
  std::size_t oracle_every = 0;   ///< least-squares cross-check stride, 0 = off
  double delta = 0.05;
  std::optional<double> T_star;   ///< defaults to the run's iteration count
  RegimeThresholds regime;
};

struct GridSpec {
  std::vector<std::size_t> d_values;
  std::vector<double> mu_values;
  std::vector<std::uint64_t> seeds;
  std::size_t n = 20;
  DataParams data;        ///< d and mu_norm are overridden per cell
  NetConfig net;          ///< d is overridden per cell
  std::vector<Variant> variants;
  std::size_t n_test = 1000;
  double converge_eps = 0.05;
  HookOptions hooks;

  void validate() const;
};

struct Cell {
  std::size_t d = 0;
  double mu_norm = 0;
  std::uint64_t seed = 0;
  std::string variant;
};

/// Trial seeds hash (seed, d, mu) but not the variant, so every variant of a
/// cell sees the same data, initialization and shuffles.
std::uint64_t data_seed(const Cell& c);
std::uint64_t train_seed(const Cell& c);
std::uint64_t test_seed(const Cell& c);

struct TrialResult {
  Cell cell;
  bool ok = true;
  std::string error;
  double train_loss = 0;
  double test_error = 0;
  double test_stderr = 0;
  long long converged_iteration = -1;  ///< first iteration with train loss <= eps, -1 if never
  double max_gamma = 0;
  double max_sum_zeta = 0;
  std::size_t structural_violations = 0;
  std::string digest;                   ///< compact summary of the lemma reports
  std::vector<CheckReport> checks;      ///< not persisted in results.csv
};

struct TestError {
  double rate = 0;
  double std_error = 0;
};

/// Fraction of n_test fresh samples with y != sign(f(W, x)); sign(0) is an
/// error. The standard error is the binomial sqrt(rate (1 - rate) / n_test).
TestError estimate_test_error(const Weights& w, const DataParams& params, const Vector& mu, std::size_t n_test,
                              Stream& rng);

TrialResult run_trial(const Cell& cell, const GridSpec& spec);

struct GridRunOptions {
  std::string out_dir;      ///< empty = keep everything in memory
  std::size_t jobs = 1;
  bool resume = false;
};

/// All cells in canonical order: variant, d, mu, seed.
std::vector<Cell> grid_cells(const GridSpec& spec);

/// Runs every trial. With an output directory, each finished trial is written
/// atomically under trials/ (and checks/), so an interrupted grid can resume;
/// results.csv is written at the end in canonical order.
std::vector<TrialResult> run_grid(const GridSpec& spec, const GridRunOptions& opt = {});

void write_results_csv(const std::string& path, std::span<const TrialResult> rows);
std::vector<TrialResult> read_results_csv(const std::string& path);

struct CellSummary {
  std::size_t d = 0;
  double mu_norm = 0;
  std::string algo;
  double mean_test_error = 0;
  double std_error = 0;   ///< Monte Carlo error of the mean: sqrt(sum se_i^2) / k
  double mean_train_loss = 0;
  std::size_t n_seeds = 0;
};

/// Per-cell means over successful trials, in first-appearance order.
std::vector<CellSummary> aggregate(std::span<const TrialResult> rows);

const CellSummary* find_cell(std::span<const CellSummary> cells, std::size_t d, double mu, const std::string& algo);

/// Writes heatmap_<algo>.csv for every algorithm in the table and, when the
/// table is non-empty, heatmap_<algo>.pgm. Image layout: one block of
/// `block` pixels per cell, d increasing left to right, ||mu|| increasing
/// bottom to top; gray = round(255 * (1 - error)), so low error is bright.
/// Missing cells are drawn black.
std::vector<std::string> export_heatmap(std::span<const TrialResult> rows, const std::string& dir,
                                        std::size_t block = 16);

/// First-stage SAM runs at the scaling sigma_0 = 1/(P sigma_p sqrt(d)),
/// tau = deactivation_tau(c, ...), used to calibrate c.
struct DeactivationSetup {
  std::size_t d = 1000, n = 20, m = 10, P = 2, B = 10;
  double sigma_p = 1.0, eta = 0.01, mu_norm = 1.0;
};

struct DeactivationStudy {
  double tau = 0, T1 = 0;
  std::size_t events = 0, violations = 0;
  bool vacuous = false;
  double worst_post = 0;
};

DeactivationStudy deactivation_study(const DeactivationSetup& setup, double c, std::span<const std::uint64_t> seeds);

/// Bisection on [lo, hi] for the smallest c with zero violations on `seeds`
/// (assumes violations do not reappear above it). Returns hi when even hi
/// fails.
double calibrate_tau_constant(const DeactivationSetup& setup, std::span<const std::uint64_t> seeds, double lo,
                              double hi, int iterations = 20);

} // namespace samcnn
