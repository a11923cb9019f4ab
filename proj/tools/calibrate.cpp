// Calibrates the two free constants used by the checks: the regime thresholds
// (c_lo, c_hi) against a finished grid, and the SAM perturbation constant for
// the deactivation check.
//
//   calibrate regime <results.csv>
//   calibrate tau [lo hi]

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "samcnn/experiments.hpp"

using namespace samcnn;

namespace {

int regime(const std::string& path) {
  const auto rows = read_results_csv(path);
  const auto cells = aggregate(rows);
  struct Point {
    double r, err;
  };
  std::vector<Point> pts;
  for (const auto& c : cells)
    if (c.algo == "sgd") pts.push_back({regime_ratio(20, c.mu_norm, c.d, 2, 1.0), c.mean_test_error});
  std::vector<double> cuts;
  for (const auto& p : pts) cuts.push_back(p.r);
  std::sort(cuts.begin(), cuts.end());
  // Decisive cells: error <= 0.05 (benign) or >= 0.2 (harmful).
  double best_lo = 0, best_hi = 0;
  std::size_t best = 0, decisive = 0;
  for (const auto& p : pts) decisive += p.err <= 0.05 || p.err >= 0.2;
  for (double lo : cuts)
    for (double hi : cuts) {
      if (hi < lo) continue;
      RegimeThresholds th{lo, hi};
      std::size_t agree = 0;
      for (const auto& p : pts) {
        const double ratio = p.r;
        const Regime g = ratio >= th.c_hi ? Regime::benign : ratio <= th.c_lo ? Regime::harmful : Regime::indeterminate;
        if ((p.err <= 0.05 && g == Regime::benign) || (p.err >= 0.2 && g == Regime::harmful)) ++agree;
      }
      if (agree > best || (agree == best && hi - lo < best_hi - best_lo)) {
        best = agree;
        best_lo = lo;
        best_hi = hi;
      }
    }
  std::printf("%zu SGD cells, %zu decisive; best agreement %zu with c_lo = %.6g, c_hi = %.6g\n", pts.size(), decisive,
              best, best_lo, best_hi);
  for (const auto& p : pts) std::printf("  ratio %12.5g  error %.4f\n", p.r, p.err);
  return 0;
}

int tau(double lo, double hi) {
  const DeactivationSetup setup;
  // calibration seeds are disjoint from the acceptance seeds 0..9
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 100; s < 110; ++s) seeds.push_back(s);
  for (double c : {0.5, 1.0, 2.0, 4.0, 8.0}) {
    const auto r = deactivation_study(setup, c, seeds);
    std::printf("c = %-5g tau = %.4g  violations %zu / %zu\n", c, r.tau, r.violations, r.events);
  }
  const double c = calibrate_tau_constant(setup, seeds, lo, hi);
  std::printf("smallest constant with zero violations: %.6g\n", c);
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  if (argc >= 3 && std::string(argv[1]) == "regime") return regime(argv[2]);
  if (argc >= 2 && std::string(argv[1]) == "tau")
    return tau(argc >= 4 ? std::stod(argv[2]) : 0.1, argc >= 4 ? std::stod(argv[3]) : 16.0);
  std::fprintf(stderr, "usage: calibrate regime <results.csv> | calibrate tau [lo hi]\n");
  return 2;
}
