#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "samcnn/error.hpp"
#include "samcnn/optim.hpp"

using namespace samcnn;

namespace {

Dataset data(std::size_t n, std::uint64_t seed, std::size_t d = 50, double mu = 2.0) {
  DataParams p;
  p.d = d;
  p.mu_norm = mu;
  p.p = 0.1;
  return gen_dataset(p, n, seed);
}

NetConfig net(std::size_t d, std::size_t m = 4) {
  NetConfig c;
  c.d = d;
  c.m = m;
  return c;
}

std::string field_of(const TrainConfig& c, std::size_t n) {
  try {
    c.validate(n);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

} // namespace

TEST_SUITE("optim") {

TEST_CASE("epoch schedule partitions the samples") {
  Stream rng(1);
  const EpochSchedule s = epoch_schedule(12, 4, rng);
  REQUIRE(s.size() == 3);
  std::vector<std::size_t> all;
  for (const auto& b : s) {
    CHECK(b.size() == 4);
    CHECK(std::is_sorted(b.begin(), b.end()));
    all.insert(all.end(), b.begin(), b.end());
  }
  std::sort(all.begin(), all.end());
  for (std::size_t k = 0; k < 12; ++k) CHECK(all[k] == k);
}

TEST_CASE("full batch is the identity partition") {
  Stream rng(2);
  const EpochSchedule s = epoch_schedule(5, 5, rng);
  REQUIRE(s.size() == 1);
  CHECK(s[0] == Batch{0, 1, 2, 3, 4});
}

TEST_CASE("batch membership is uniform over epochs") {
  // P(sample 0 lands in batch 0) = B / n
  std::size_t hits = 0;
  const int epochs = 20000;
  for (int t = 0; t < epochs; ++t) {
    Stream rng(derive_seed(3, "shuffle", static_cast<std::uint64_t>(t)));
    const auto s = epoch_schedule(8, 2, rng);
    hits += std::find(s[0].begin(), s[0].end(), 0) != s[0].end();
  }
  const double f = static_cast<double>(hits) / epochs;
  CHECK(std::abs(f - 0.25) < 4 * std::sqrt(0.25 * 0.75 / epochs));
}

TEST_CASE("sgd step") {
  const Dataset ds = data(6, 4);
  const PatchData pd = make_patch_data(ds);
  const Weights w = init_weights(net(50), 5);
  const std::size_t batch[] = {0, 2};
  const Weights next = sgd_step(w, pd, batch, 0.1);
  CHECK(next == w - 0.1 * batch_gradient(w, pd, batch));
}

TEST_CASE("SAM perturbation has norm tau along the gradient") {
  const Dataset ds = data(6, 6);
  const PatchData pd = make_patch_data(ds);
  const Weights w = init_weights(net(50), 7);
  const std::size_t batch[] = {1, 3, 5};
  const Weights eps = sam_perturbation(w, pd, batch, 0.25);
  CHECK(eps.frobenius_norm() == doctest::Approx(0.25));
  const Gradient g = batch_gradient(w, pd, batch);
  const double cosine = (eps.matrix().cwiseProduct(g.matrix())).sum() / (eps.frobenius_norm() * g.frobenius_norm());
  CHECK(cosine == doctest::Approx(1.0));
  CHECK(sam_perturbation(w, pd, batch, 0.0).frobenius_norm() == 0.0);
}

TEST_CASE("SAM step descends with the gradient at the perturbed point") {
  const Dataset ds = data(6, 8);
  const PatchData pd = make_patch_data(ds);
  const Weights w = init_weights(net(50), 9);
  const std::size_t batch[] = {0, 1, 2, 3, 4, 5};
  const Weights eps = sam_perturbation(w, pd, batch, 0.3);
  const Weights expect = w - 0.05 * batch_gradient(w + eps, pd, batch);
  const Weights got = sam_step(w, pd, batch, 0.05, 0.3);
  CHECK((got - expect).frobenius_norm() < 1e-15);
  CHECK(sam_step(w, pd, batch, 0.05, 0.0) == sgd_step(w, pd, batch, 0.05));
}

TEST_CASE("training is deterministic and records the requested states") {
  const Dataset ds = data(8, 10);
  TrainConfig cfg;
  cfg.B = 4;
  cfg.epochs = 5;
  cfg.seed = 3;
  cfg.record_every = 3;
  cfg.snapshot_every = 2;
  const TrainResult a = train(ds, net(50), cfg);
  const TrainResult b = train(ds, net(50), cfg);
  CHECK(a.final == b.final);
  std::vector<std::size_t> its;
  for (const auto& p : a.trajectory.points) its.push_back(p.iteration);
  CHECK(its == std::vector<std::size_t>{0, 3, 6, 9, 10});
  CHECK(a.trajectory.points[1].t == 1);
  CHECK(a.trajectory.points[1].b == 1);
  CHECK(a.trajectory.points[2].snapshot.has_value());
  CHECK(!a.trajectory.points[1].snapshot.has_value());
  CHECK(a.trajectory.schedules.size() == 5);
}

TEST_CASE("training reproduces manual SGD steps") {
  const Dataset ds = data(4, 11);
  const PatchData pd = make_patch_data(ds);
  TrainConfig cfg;
  cfg.B = 2;
  cfg.epochs = 2;
  cfg.seed = 12;
  cfg.eta = 0.2;
  const TrainResult r = train(ds, net(50), cfg);
  Weights w = r.initial;
  for (const auto& sched : r.trajectory.schedules)
    for (const auto& b : sched) w = sgd_step(w, pd, b, 0.2);
  CHECK(w == r.final);
}

TEST_CASE("two-phase SAM then SGD") {
  const Dataset ds = data(4, 13);
  const PatchData pd = make_patch_data(ds);
  TrainConfig cfg;
  cfg.B = 4;
  cfg.epochs = 4;
  cfg.seed = 14;
  cfg.algo = Algorithm::sam;
  cfg.tau = 0.5;
  cfg.sam_iterations = 2;
  const TrainResult r = train(ds, net(50), cfg);
  Weights w = r.initial;
  for (std::size_t k = 0; k < 4; ++k)
    w = k < 2 ? sam_step(w, pd, r.trajectory.schedules[k][0], cfg.eta, 0.5)
              : sgd_step(w, pd, r.trajectory.schedules[k][0], cfg.eta);
  CHECK((w - r.final).frobenius_norm() == 0.0);
}

TEST_CASE("hooks see every step") {
  struct Counter : TrainHook {
    std::size_t starts = 0, steps = 0, finishes = 0, sam_steps = 0;
    void on_start(const TrainContext&, const Weights&, const ForwardState&) override { ++starts; }
    void on_step(const StepRecord& r) override {
      ++steps;
      sam_steps += r.perturbation != nullptr;
    }
    void on_finish(const Weights&, const ForwardState&) override { ++finishes; }
  } counter;
  const Dataset ds = data(6, 15);
  TrainConfig cfg;
  cfg.B = 3;
  cfg.epochs = 3;
  cfg.algo = Algorithm::sam;
  cfg.tau = 0.1;
  TrainHook* hooks[] = {&counter};
  train(ds, net(50), cfg, hooks);
  CHECK(counter.starts == 1);
  CHECK(counter.steps == 6);
  CHECK(counter.sam_steps == 6);
  CHECK(counter.finishes == 1);
}

TEST_CASE("divergence is reported") {
  const Dataset ds = data(4, 16);
  TrainConfig cfg;
  cfg.B = 4;
  cfg.epochs = 3;
  cfg.eta = 1e308;
  CHECK_THROWS_AS(train(ds, net(50), cfg), DivergenceError);
}

TEST_CASE("config validation names fields") {
  TrainConfig c;
  c.B = 3;
  CHECK(field_of(c, 10) == "train.B");
  c.B = 5;
  c.eta = -1;
  CHECK(field_of(c, 10) == "train.eta");
  c.eta = 0.1;
  c.tau = -0.5;
  CHECK(field_of(c, 10) == "train.tau");
  CHECK(parse_algorithm("sam") == Algorithm::sam);
  CHECK_THROWS_AS(parse_algorithm("adam"), ConfigError);
}

}
