#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "samcnn/network.hpp"

namespace samcnn {

enum class Algorithm { sgd, sam };

std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& s);

struct TrainConfig {
  double eta = 0.01;
  std::size_t B = 20;
  std::size_t epochs = 100;
  Algorithm algo = Algorithm::sgd;
  double tau = 0.0;
  std::uint64_t seed = 0;         ///< init and shuffle streams derive from this
  std::size_t record_every = 0;   ///< iteration stride for trajectory points; 0 = once per epoch
  std::size_t snapshot_every = 0; ///< stride for weight snapshots; 0 = none
  /// Two-phase protocol: SAM for global iterations < sam_iterations, SGD after.
  /// Unset means a single phase of `algo`.
  std::optional<std::size_t> sam_iterations;

  void validate(std::size_t n) const;
  std::size_t batches_per_epoch(std::size_t n) const { return n / B; }
};

using Batch = std::vector<std::size_t>;
using EpochSchedule = std::vector<Batch>;

/// Uniformly random partition of [0, n) into n/B batches of size B. Indices
/// within each batch are sorted, so B == n yields the identity partition.
EpochSchedule epoch_schedule(std::size_t n, std::size_t B, Stream& rng);

Weights sgd_step(const Weights& w, const PatchData& data, std::span<const std::size_t> batch, double eta);

/// tau * g / ||g||_F for the batch gradient g; zero when tau == 0 or g == 0.
Weights sam_perturbation(const Weights& w, const PatchData& data, std::span<const std::size_t> batch,
                         double tau);

Weights sam_step(const Weights& w, const PatchData& data, std::span<const std::size_t> batch, double eta,
                 double tau);

struct TrajectoryPoint {
  std::size_t t = 0;
  std::size_t b = 0;
  std::size_t iteration = 0;  ///< t * H + b
  double train_loss = 0.0;
  Vector margins;             ///< y_i f(W, x_i) for every training sample
  std::optional<Weights> snapshot;

  double min_margin() const { return margins.size() ? margins.minCoeff() : 0.0; }
  double max_margin() const { return margins.size() ? margins.maxCoeff() : 0.0; }
};

struct Trajectory {
  std::size_t H = 1;
  std::vector<TrajectoryPoint> points;
  std::vector<EpochSchedule> schedules;  ///< one per completed epoch
};

struct TrainContext {
  const Dataset& dataset;
  const PatchData& data;
  const NetConfig& net;
  const TrainConfig& cfg;
  std::size_t H;
};

/// Everything an observer needs about one optimizer step. For SAM steps the
/// `eval` terms are taken at the perturbed point W + eps, so their inner
/// products give exactly the activation pattern that drove the update.
struct StepRecord {
  std::size_t t;
  std::size_t b;
  std::size_t iteration;
  bool sam;
  std::span<const std::size_t> batch;
  const Weights& before;
  const Weights& after;
  const ForwardState& state;    ///< all samples at `before`
  const GradientTerms& eval;    ///< batch terms at the gradient evaluation point
  const Weights* perturbation;  ///< eps for SAM steps, nullptr otherwise
  double eta;
};

class TrainHook {
public:
  virtual ~TrainHook() = default;
  virtual void on_start(const TrainContext&, const Weights& /*w0*/, const ForwardState&) {}
  virtual void on_step(const StepRecord&) {}
  virtual void on_finish(const Weights&, const ForwardState&) {}
};

struct TrainResult {
  Trajectory trajectory;
  Weights initial;
  Weights final;
};

/// Runs cfg.epochs epochs of minibatch SGD or SAM. Initial weights are drawn
/// from derive_seed(cfg.seed, "init"); epoch t shuffles with
/// derive_seed(cfg.seed, "shuffle", t). Throws DivergenceError on a
/// non-finite loss.
TrainResult train(const Dataset& ds, const NetConfig& net, const TrainConfig& cfg,
                  std::span<TrainHook* const> hooks = {});

/// Same, starting from the given weights.
TrainResult train(const Dataset& ds, const NetConfig& net, const TrainConfig& cfg, const Weights& w0,
                  std::span<TrainHook* const> hooks = {});

} // namespace samcnn
