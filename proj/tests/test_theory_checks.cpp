#include <cmath>

#include "doctest.h"
#include "samcnn/error.hpp"
#include "samcnn/theory_checks.hpp"

using namespace samcnn;

namespace {

Dataset data(std::size_t n, std::size_t d, double mu, double p, std::uint64_t seed) {
  DataParams q;
  q.d = d;
  q.mu_norm = mu;
  q.p = p;
  return gen_dataset(q, n, seed);
}

TrajectoryPoint point(std::size_t t, std::size_t b, std::initializer_list<double> margins) {
  TrajectoryPoint p;
  p.t = t;
  p.b = b;
  p.margins = Vector(static_cast<Eigen::Index>(margins.size()));
  Eigen::Index k = 0;
  for (double v : margins) p.margins(k++) = v;
  return p;
}

} // namespace

TEST_SUITE("theory_checks") {

TEST_CASE("theory constants") {
  const Dataset ds = data(10, 400, 2.0, 0.0, 1);
  NetConfig nc;
  nc.d = 400;
  nc.m = 3;
  const Weights w0 = init_weights(nc, 2);
  const TheoryConstants c = TheoryConstants::compute(ds, w0, 100.0);
  CHECK(c.alpha == doctest::Approx(4 * std::log(100.0)));
  CHECK(c.snr == doctest::Approx(2.0 / 20.0));
  CHECK(c.gamma_hat == doctest::Approx(10 * 0.01));
  CHECK(c.C2() == doctest::Approx(148.4131591));
  double beta = 0;
  for (Eigen::Index r = 0; r < 6; ++r) {
    beta = std::max(beta, std::abs(w0.matrix().row(r).dot(ds.mu)));
    for (const auto& s : ds.samples) beta = std::max(beta, std::abs(w0.matrix().row(r).dot(s.xi)));
  }
  CHECK(c.beta == doctest::Approx(2 * beta));
}

TEST_CASE("activation sets by threshold") {
  RowMatrix ip(4, 2);  // m = 2; rows 0-1 are j = +1
  ip << 0.5, -1.0,
        0.05, 2.0,
        -0.3, 0.2,
        0.01, 0.7;
  const int y[] = {1, -1};
  const ActivationSets a = activation_sets(ip, y, 2, 0.1);
  CHECK(a.S[0] == std::vector<bool>{true, false});
  CHECK(a.S_tilde[0] == std::vector<bool>{true, true});
  CHECK(a.S[1] == std::vector<bool>{true, true});
  CHECK(a.S_jr[0] == std::vector<bool>{true, false});
  CHECK(a.S_jr[3] == std::vector<bool>{false, true});
  CHECK(a.inclusion_violations() == 0);
  CHECK(activation_threshold(0.1, 2.0, 50) == doctest::Approx(0.1 * 2.0 * std::sqrt(50.0) / std::sqrt(2.0)));
}

TEST_CASE("monotonicity: initial state alone has no violations") {
  ActivationHistory h;
  h.n = 1;
  h.m = 2;
  h.states.push_back({0, 0, {{true, false}}, {{true, true}}});
  const CheckReport r = check_set_monotonicity(h);
  CHECK(r.violations == 0);
  CHECK(r.violation_fraction() == 0.0);
}

TEST_CASE("monotonicity flags a dropped filter") {
  ActivationHistory h;
  h.n = 1;
  h.m = 2;
  h.H = 1;
  h.states.push_back({0, 0, {{true, true}}, {{true, true}}});
  h.states.push_back({1, 0, {{true, false}}, {{true, false}}});
  const CheckReport r = check_set_monotonicity(h);
  CHECK(r.violations >= 1);
  CHECK(r.worst_case_value == 1.0);
}

TEST_CASE("logit ratio is exactly 1 for one sample or symmetric margins") {
  std::vector<TrajectoryPoint> one{point(0, 0, {0.3}), point(1, 0, {2.0})};
  CHECK(check_logit_ratio(one, std::exp(5.0)).worst_case_value == 1.0);
  std::vector<TrajectoryPoint> sym{point(0, 0, {0.0, 0.0})};
  const CheckReport r = check_logit_ratio(sym, std::exp(5.0));
  CHECK(r.worst_case_value == 1.0);
  CHECK(r.violations == 0);
}

TEST_CASE("logit ratio compares within an epoch and survives saturation") {
  std::vector<double> per_epoch;
  std::vector<TrajectoryPoint> pts{point(0, 0, {0.0}), point(0, 1, {std::log(3.0)}), point(1, 0, {800.0, -5.0})};
  const CheckReport r = check_logit_ratio(pts, std::exp(5.0), &per_epoch);
  REQUIRE(per_epoch.size() == 2);
  // |l'(0)| / |l'(log 3)| = (1/2) / (1/4)
  CHECK(per_epoch[0] == doctest::Approx(2.0));
  CHECK(std::isinf(per_epoch[1]));
  CHECK(r.violations == 1);
}

TEST_CASE("coefficient bounds at iteration 0") {
  const Dataset ds = data(4, 100, 1.0, 0.0, 3);
  NetConfig nc;
  nc.d = 100;
  nc.m = 2;
  const TheoryConstants k = TheoryConstants::compute(ds, init_weights(nc, 4), 50.0);
  std::vector<CoeffSnapshot> series{{0, 0, 0, Coeffs::zeros(2, 4)}};
  for (const auto& r : check_coeff_bounds(series, k, 4, 100)) CHECK(r.violations == 0);
}

TEST_CASE("coefficient bounds flag violations and honour the first-stage cap") {
  TheoryConstants k;
  k.alpha = 2.0;
  k.gamma_hat = 1.0;
  Coeffs c = Coeffs::zeros(1, 2);
  c.zeta(0, 0) = 0.5;
  c.gamma(0) = -0.2;
  std::vector<CoeffSnapshot> series{{0, 0, 0, c}};
  auto reps = check_coeff_bounds(series, k, 2, 100);
  CHECK(reps[0].violations == 0);
  CHECK(reps[3].violations == 1);  // gamma < -1/12
  CoeffBoundOptions opt;
  opt.zeta_cap = 1.0 / 12.0;
  reps = check_coeff_bounds(series, k, 2, 100, opt);
  CHECK(reps[0].violations == 1);
  CHECK(reps[0].worst_case_value == 0.5);
}

TEST_CASE("tau = 0 makes the deactivation check vacuous") {
  const Dataset ds = data(8, 200, 1.0, 0.0, 5);
  NetConfig nc;
  nc.d = 200;
  TrainConfig cfg;
  cfg.algo = Algorithm::sam;
  cfg.tau = 0.0;
  cfg.B = 4;
  cfg.epochs = 3;
  DeactivationRecorder rec;
  TrainHook* hooks[] = {&rec};
  train(ds, nc, cfg, hooks);
  const CheckReport r = check_sam_deactivation(rec.history(), 10.0);
  CHECK(r.vacuous);
  CHECK(r.total > 0);
  CHECK(r.violations == r.total);  // nothing deactivates without a perturbation
}

TEST_CASE("a large perturbation deactivates everything") {
  const Dataset ds = data(8, 400, 1.0, 0.0, 6);
  NetConfig nc;
  nc.d = 400;
  nc.init = InitScheme::gaussian;
  nc.sigma_0 = 1.0 / (2.0 * 20.0);
  TrainConfig cfg;
  cfg.algo = Algorithm::sam;
  cfg.tau = deactivation_tau(8.0, nc.m, 4, 2, 1.0, 400);
  cfg.B = 4;
  cfg.epochs = 3;
  DeactivationRecorder rec;
  TrainHook* hooks[] = {&rec};
  train(ds, nc, cfg, hooks);
  const CheckReport r = check_sam_deactivation(rec.history(), first_stage_epochs(nc.m, 4, 8, cfg.eta, 1.0));
  CHECK(!r.vacuous);
  CHECK(r.total > 0);
  CHECK(r.violations == 0);
}

TEST_CASE("first stage length") {
  CHECK(first_stage_epochs(10, 20, 20, 0.01, 1.0) == doctest::Approx(200.0 / 2.4));
  CHECK(std::isinf(first_stage_epochs(10, 20, 20, 0.01, 0.0)));
}

TEST_CASE("good batches: single full batch counts clean labels") {
  const EpochSchedule sched{{0, 1, 2, 3}};
  std::vector<EpochSchedule> hist{sched};
  const int y[] = {1, 1, -1, -1};
  const int y_hat[] = {1, 1, -1, 1};
  const GoodBatchReport r = check_good_batches(hist, y, y_hat);
  // clean y = +1: 2 of 4, clean y = -1: 1 of 4
  CHECK(r.fraction_pos[0] == 1.0);
  CHECK(r.fraction_neg[0] == 1.0);
  const int y_bad[] = {1, 1, 1, 1};
  const GoodBatchReport r2 = check_good_batches(hist, y_bad, y_bad);
  CHECK(r2.fraction_pos[0] == 0.0);
  CHECK(r2.fraction_neg[0] == 0.0);
}

TEST_CASE("good batches are common under random shuffles") {
  const Dataset ds = data(64, 1, 1.0, 0.1, 7);
  std::vector<int> y, y_hat;
  for (const auto& s : ds.samples) {
    y.push_back(s.y);
    y_hat.push_back(s.y_hat);
  }
  std::vector<EpochSchedule> hist;
  for (std::size_t t = 0; t < 200; ++t) {
    Stream rng(derive_seed(8, "shuffle", t));
    hist.push_back(epoch_schedule(64, 8, rng));
  }
  const GoodBatchReport r = check_good_batches(hist, y, y_hat);
  CHECK(r.mean_fraction >= 0.5);
  CHECK(r.fraction_pos.size() == 200);
}

TEST_CASE("regime classification") {
  CHECK(classify_regime(20, 0.0, 1000, 2, 1.0) == Regime::harmful);
  CHECK(classify_regime(20, 1.0, 100000000, 2, 1.0) == Regime::harmful);
  CHECK(classify_regime(20, 10.0, 1000, 2, 1.0) == Regime::benign);
  CHECK(regime_ratio(20, 2.0, 10, 2, 1.0) == doctest::Approx(20.0 * 16 / (10 * 16)));
  // Decisive cells closest to the gap in the calibration grid.
  CHECK(classify_regime(20, 3.0, 1000, 2, 1.0) == Regime::harmful);    // r 0.101, error 0.222
  CHECK(classify_regime(20, 8.0, 13000, 2, 1.0) == Regime::benign);    // r 0.394, error 0.044
  CHECK(classify_regime(20, 6.0, 5000, 2, 1.0) == Regime::indeterminate);  // r 0.324, error 0.055
  RegimeThresholds th{1.0, 3.0};
  CHECK(classify_regime(20, 2.0, 10, 2, 1.0, th) == Regime::indeterminate);
  CHECK(to_string(Regime::benign) == "benign");
}

TEST_CASE("checks are pure functions of the record") {
  const Dataset ds = data(8, 300, 2.0, 0.1, 9);
  NetConfig nc;
  nc.d = 300;
  TrainConfig cfg;
  cfg.B = 4;
  cfg.epochs = 5;
  cfg.record_every = 1;
  ActivationRecorder acts;
  TrainHook* hooks[] = {&acts};
  const TrainResult r = train(ds, nc, cfg, hooks);
  const CheckReport a = check_set_monotonicity(acts.history());
  const CheckReport b = check_set_monotonicity(acts.history());
  CHECK(a.violations == b.violations);
  CHECK(a.total == b.total);
  CHECK(acts.history().states.size() == 11);
  CHECK(check_logit_ratio(r.trajectory.points, 148.0).worst_case_value ==
        check_logit_ratio(r.trajectory.points, 148.0).worst_case_value);
}

}
