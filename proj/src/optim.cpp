#include "samcnn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "samcnn/error.hpp"

namespace samcnn {

std::string to_string(Algorithm a) { return a == Algorithm::sgd ? "sgd" : "sam"; }

Algorithm parse_algorithm(const std::string& s) {
  if (s == "sgd" || s == "SGD")
    return Algorithm::sgd;
  if (s == "sam" || s == "SAM")
    return Algorithm::sam;
  throw ConfigError("train.algo", "unknown algorithm '" + s + "' (expected sgd|sam)");
}

void TrainConfig::validate(std::size_t n) const {
  if (!(eta >= 0.0) || !std::isfinite(eta))
    throw ConfigError("train.eta", "must be a nonnegative finite number");
  if (B < 1)
    throw ConfigError("train.B", "must be >= 1");
  if (n % B != 0)
    throw ConfigError("train.B", "batch size " + std::to_string(B) + " does not divide n = " +
                                     std::to_string(n));
  if (!(tau >= 0.0) || !std::isfinite(tau))
    throw ConfigError("train.tau", "must be a nonnegative finite number");
}

EpochSchedule epoch_schedule(std::size_t n, std::size_t B, Stream& rng) {
  if (B == 0 || n % B != 0)
    throw ConfigError("train.B", "batch size " + std::to_string(B) + " does not divide n = " +
                                     std::to_string(n));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i)
    std::swap(perm[i - 1], perm[rng.below(i)]);
  EpochSchedule out(n / B);
  for (std::size_t h = 0; h < out.size(); ++h) {
    out[h].assign(perm.begin() + static_cast<std::ptrdiff_t>(h * B),
                  perm.begin() + static_cast<std::ptrdiff_t>((h + 1) * B));
    std::sort(out[h].begin(), out[h].end());
  }
  return out;
}

namespace {

Weights descend(const Weights& w, const Gradient& g, double eta) {
  Weights out = w;
  out.matrix() -= eta * g.matrix();
  return out;
}

// Perturbation from an already computed gradient. Returns false when the
// perturbation vanishes (tau == 0 or zero gradient).
bool perturbation_from(const Gradient& g, double tau, Weights& eps) {
  const double norm = g.frobenius_norm();
  if (tau == 0.0 || norm == 0.0)
    return false;
  eps = g;
  eps.matrix() *= tau / norm;
  return true;
}

} // namespace

Weights sgd_step(const Weights& w, const PatchData& data, std::span<const std::size_t> batch, double eta) {
  return descend(w, batch_gradient(w, data, batch), eta);
}

Weights sam_perturbation(const Weights& w, const PatchData& data, std::span<const std::size_t> batch,
                         double tau) {
  Weights eps(w.m(), w.d());
  perturbation_from(batch_gradient(w, data, batch), tau, eps);
  return eps;
}

Weights sam_step(const Weights& w, const PatchData& data, std::span<const std::size_t> batch, double eta,
                 double tau) {
  const Gradient g = batch_gradient(w, data, batch);
  Weights eps;
  if (!perturbation_from(g, tau, eps))
    return descend(w, g, eta);
  return descend(w, batch_gradient(w + eps, data, batch), eta);
}

namespace {

void require_finite(const ForwardState& st, std::size_t t, std::size_t b) {
  if (!st.margins.allFinite()) {
    std::ostringstream os;
    os << "non-finite network output at epoch " << t << ", batch " << b;
    throw DivergenceError(os.str());
  }
}

TrajectoryPoint make_point(std::size_t t, std::size_t b, std::size_t H, const ForwardState& st,
                           const Weights& w, bool snapshot) {
  TrajectoryPoint p;
  p.t = t;
  p.b = b;
  p.iteration = t * H + b;
  p.margins = st.margins;
  p.train_loss = mean_loss(st.margins);
  if (snapshot)
    p.snapshot = w;
  return p;
}

} // namespace

TrainResult train(const Dataset& ds, const NetConfig& net, const TrainConfig& cfg,
                  std::span<TrainHook* const> hooks) {
  net.validate();
  return train(ds, net, cfg, init_weights(net, derive_seed(cfg.seed, "init")), hooks);
}

TrainResult train(const Dataset& ds, const NetConfig& net, const TrainConfig& cfg, const Weights& w0,
                  std::span<TrainHook* const> hooks) {
  net.validate();
  const std::size_t n = ds.size();
  cfg.validate(n);
  const PatchData data = make_patch_data(ds);
  check_dimensions(w0, data);
  if (w0.m() != net.m)
    throw DimensionError("initial weights have " + std::to_string(w0.m()) + " filters per sign, net.m = " +
                         std::to_string(net.m));

  const std::size_t H = cfg.batches_per_epoch(n);
  const std::size_t total = cfg.epochs * H;
  const std::size_t record_every = cfg.record_every == 0 ? H : cfg.record_every;
  const auto wants = [total](std::size_t stride, std::size_t s) {
    return stride != 0 && (s % stride == 0 || s == total);
  };

  TrainResult result;
  result.initial = w0;
  result.trajectory.H = H;
  Trajectory& traj = result.trajectory;

  Weights w = w0;
  ForwardState st = evaluate(w, data);
  require_finite(st, 0, 0);
  traj.points.push_back(make_point(0, 0, H, st, w, cfg.snapshot_every != 0));

  const TrainContext ctx{ds, data, net, cfg, H};
  for (TrainHook* h : hooks)
    h->on_start(ctx, w, st);

  for (std::size_t t = 0; t < cfg.epochs; ++t) {
    Stream shuffle(derive_seed(cfg.seed, "shuffle", t));
    traj.schedules.push_back(epoch_schedule(n, cfg.B, shuffle));
    const EpochSchedule& sched = traj.schedules.back();

    for (std::size_t b = 0; b < H; ++b) {
      const std::size_t k = t * H + b;
      const Batch& batch = sched[b];
      const bool sam = cfg.algo == Algorithm::sam && (!cfg.sam_iterations || k < *cfg.sam_iterations);

      GradientTerms terms = batch_gradient_terms(w, data, batch);
      Weights eps;
      bool perturbed = false;
      if (sam && perturbation_from(terms.grad, cfg.tau, eps)) {
        perturbed = true;
        terms = batch_gradient_terms(w + eps, data, batch);
      }
      Weights next = descend(w, terms.grad, cfg.eta);
      ForwardState next_st = evaluate(next, data);

      const std::size_t s = k + 1;
      const std::size_t nt = s / H, nb = s % H;
      require_finite(next_st, nt, nb);

      const StepRecord rec{t, b, k, sam, batch, w, next, st, terms, perturbed ? &eps : nullptr, cfg.eta};
      for (TrainHook* h : hooks)
        h->on_step(rec);

      w = std::move(next);
      st = std::move(next_st);
      if (wants(record_every, s))
        traj.points.push_back(make_point(nt, nb, H, st, w, wants(cfg.snapshot_every, s)));
    }
  }

  for (TrainHook* h : hooks)
    h->on_finish(w, st);
  result.final = std::move(w);
  return result;
}

} // namespace samcnn
