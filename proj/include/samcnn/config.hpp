#pragma once

// Key-value run configuration shared by every subcommand.
//
//   # comment
//   data.d = 1000
//   grid.mu = 0:10:1          # inclusive range
//   grid.seeds = 0,1,2
//   variant.sam.algo = sam    # variants inherit train.* and override it
//
// Unknown keys are errors. Any key can be overridden from the environment as
// SAMCNN_<KEY>, upper-cased with dots replaced by underscores
// (SAMCNN_TRAIN_ETA, SAMCNN_VARIANT_SAM_TAU).

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "samcnn/experiments.hpp"

namespace samcnn {

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t n = 20;
  DataParams data;
  NetConfig net;
  TrainConfig train;
  HookOptions hooks;
  std::size_t n_test = 1000;
  double converge_eps = 0.05;

  std::vector<std::size_t> grid_d;
  std::vector<double> grid_mu;
  std::vector<std::uint64_t> grid_seeds;  ///< empty = {seed}
  std::vector<Variant> variants;          ///< empty = one variant from train.*

  /// Single-run validation (train, check, decompose, gen-data).
  void validate() const;

  GridSpec grid_spec() const;

  /// Canonical text with every key, sufficient to reproduce the run.
  std::string dump() const;

  /// Seeds of the single-run streams, derived from `seed`.
  std::uint64_t data_seed() const;
  std::uint64_t train_seed() const;
  std::uint64_t test_seed() const;
};

/// Raw `key = value` pairs in file order. Throws ConfigError on syntax errors.
std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text,
                                                                  const std::string& source);

/// Builds a config from key-value pairs; later pairs win.
RunConfig config_from_pairs(const std::vector<std::pair<std::string, std::string>>& kv);

/// Reads a file, applies SAMCNN_* environment overrides when `env` is set.
RunConfig load_config(const std::string& path, bool env = true);

RunConfig parse_config(const std::string& text, bool env = false, const std::string& source = "<config>");

/// Every key the parser accepts apart from variant.<name>.*.
const std::vector<std::string>& known_keys();

std::string env_name(const std::string& key);

} // namespace samcnn
