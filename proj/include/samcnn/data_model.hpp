#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "samcnn/rng.hpp"

namespace samcnn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Parameters of the patch signal-plus-noise distribution.
struct DataParams {
  std::size_t d = 1000;     ///< patch dimension
  std::size_t P = 2;        ///< patches per input
  double sigma_p = 1.0;     ///< noise standard deviation
  double p = 0.0;           ///< label flip probability
  double mu_norm = 1.0;     ///< signal strength

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// One data point. Only the noise vector is stored; the P patches are
/// [xi, ..., y_hat * mu, ..., xi] with the signal at `signal_pos`.
struct Sample {
  Vector xi;
  int y = 1;      ///< observed label
  int y_hat = 1;  ///< true label
  std::size_t signal_pos = 0;
  std::size_t num_patches = 2;

  /// Materialized P x d patch matrix; row k is patch k.
  Matrix patches(const Vector& mu) const;

  bool flipped() const noexcept { return y != y_hat; }
};

struct Dataset {
  DataParams params;
  Vector mu;
  std::vector<Sample> samples;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return samples.size(); }
};

/// mu_norm * e_1.
Vector make_signal(std::size_t d, double mu_norm);

Sample gen_sample(const DataParams& params, const Vector& mu, Stream& rng);

/// n samples; sample i draws from its own stream derive_seed(seed, "sample", i).
Dataset gen_dataset(const DataParams& params, const Vector& mu, std::size_t n, std::uint64_t seed);

/// Convenience: signal from params.mu_norm, then gen_dataset.
Dataset gen_dataset(const DataParams& params, std::size_t n, std::uint64_t seed);

/// Concentration facts about a dataset. Violations are flagged, never thrown.
struct ConcentrationReport {
  double delta = 0.05;

  double norm_lo = 0, norm_hi = 0;      // sigma_p^2 d / 2, 3 sigma_p^2 d / 2
  std::vector<double> noise_sq_norms;   // ||xi_i||^2
  std::vector<bool> norm_ok;

  double pair_bound = 0;                // 2 sigma_p^2 sqrt(d log(6 n^2 / delta))
  double max_pair_inner = 0;
  std::size_t pair_violations = 0;

  double mu_bound = 0;                  // ||mu|| sigma_p sqrt(2 log(6 n / delta))
  double max_mu_inner = 0;
  std::size_t mu_violations = 0;

  // Clean/noisy label counts per observed label y = +1 (index 0), -1 (index 1).
  std::size_t clean_count[2] = {0, 0};
  std::size_t noisy_count[2] = {0, 0};
  double count_radius = 0;              // sqrt((n/2) log(8/delta))
  bool clean_counts_ok = true;
  bool noisy_counts_ok = true;

  std::size_t noisy_total() const noexcept { return noisy_count[0] + noisy_count[1]; }
  bool all_norms_ok() const;
  std::vector<std::string> failures() const;
};

ConcentrationReport concentration_report(const Dataset& ds, double delta = 0.05);

/// Dense view used by the network and optimizers: noise matrix, signal and labels.
struct PatchData {
  RowMatrix xi;              ///< n x d, row i is xi_i
  Vector mu;
  std::vector<int> y;
  std::vector<int> y_hat;
  std::size_t P = 2;

  std::size_t n() const noexcept { return static_cast<std::size_t>(xi.rows()); }
  std::size_t d() const noexcept { return static_cast<std::size_t>(xi.cols()); }
};

PatchData make_patch_data(const Dataset& ds);

} // namespace samcnn
