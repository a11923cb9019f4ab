#pragma once

// On-disk formats. Binary files use native little-endian layout:
//
//   dataset  "SAMD" u32 version, u64 d, P, n, f64 sigma_p, p, mu_norm, u64 seed,
//            f64 mu[d], then per sample i32 y, i32 y_hat, u64 signal_pos, f64 xi[d]
//   weights  "SAMW" u32 version, u64 m, d, f64 w[2m][d] (row j = +1 filters first)

#include <string>
#include <vector>

#include "samcnn/config.hpp"

namespace samcnn {

void write_dataset(const std::string& path, const Dataset& ds);
Dataset read_dataset(const std::string& path);

void write_weights(const std::string& path, const Weights& w);
Weights read_weights(const std::string& path);

/// Rows (t, b, train_loss, min_margin, max_margin).
void write_metrics_csv(const std::string& path, const Trajectory& traj);

struct RunManifest {
  std::string command;
  std::string config;     ///< RunConfig::dump() of the resolved config
  std::string version = SAMCNN_VERSION;
  std::uint64_t seed = 0;
  std::string started;    ///< UTC, ISO 8601
  std::string finished;
  std::vector<std::string> outputs;

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
};

std::string utc_timestamp();

/// Writes via a temporary file and rename.
void write_text_atomic(const std::string& path, const std::string& content);

} // namespace samcnn
