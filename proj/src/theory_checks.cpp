#include "samcnn/theory_checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "samcnn/error.hpp"

namespace samcnn {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

} // namespace

void write_check_report_csv(const std::string& path, std::span<const CheckReport> reports) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "check,window,violations,total,worst_case_value\n";
  for (const auto& r : reports)
    out << r.check << ',' << r.window << ',' << r.violations << ',' << r.total << ','
        << fmt(r.worst_case_value) << '\n';
}

double TheoryConstants::C2() const { return std::exp(C1_logit); }

TheoryConstants TheoryConstants::compute(const Dataset& ds, const Weights& w0, double T_star, double delta) {
  TheoryConstants c;
  c.T_star = std::max(T_star, 1.0);
  c.alpha = 4.0 * std::log(c.T_star);
  c.delta = delta;
  const auto& p = ds.params;
  double worst = 0.0;
  const RowMatrix& w = w0.matrix();
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    worst = std::max(worst, std::abs(w.row(r).dot(ds.mu)));
    for (const auto& s : ds.samples)
      worst = std::max(worst, static_cast<double>(p.P - 1) * std::abs(w.row(r).dot(s.xi)));
  }
  c.beta = 2.0 * worst;
  c.snr = p.mu_norm / (static_cast<double>(p.P - 1) * p.sigma_p * std::sqrt(static_cast<double>(p.d)));
  c.gamma_hat = static_cast<double>(ds.size()) * c.snr * c.snr;
  return c;
}

double activation_threshold(double sigma_0, double sigma_p, std::size_t d) {
  return sigma_0 * sigma_p * std::sqrt(static_cast<double>(d)) / std::sqrt(2.0);
}

ActivationSets activation_sets(const RowMatrix& noise_ip, std::span<const int> y, std::size_t m,
                               double threshold) {
  const std::size_t n = y.size();
  if (static_cast<std::size_t>(noise_ip.rows()) != 2 * m || static_cast<std::size_t>(noise_ip.cols()) != n)
    throw DimensionError("activation_sets: inner products do not match labels");
  ActivationSets a;
  a.threshold = threshold;
  a.S.assign(n, std::vector<bool>(m, false));
  a.S_tilde.assign(n, std::vector<bool>(m, false));
  a.S_jr.assign(2 * m, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t base = y[i] > 0 ? 0 : m;
    for (std::size_t r = 0; r < m; ++r) {
      const double v = noise_ip(static_cast<Eigen::Index>(base + r), static_cast<Eigen::Index>(i));
      a.S[i][r] = v > threshold;
      a.S_tilde[i][r] = v > 0.0;
      a.S_jr[base + r][i] = v > threshold;
    }
  }
  return a;
}

std::size_t ActivationSets::inclusion_violations() const {
  std::size_t v = 0;
  for (std::size_t i = 0; i < S.size(); ++i)
    for (std::size_t r = 0; r < S[i].size(); ++r)
      if (S[i][r] && !S_tilde[i][r]) ++v;
  return v;
}

void ActivationRecorder::on_start(const TrainContext& ctx, const Weights&, const ForwardState& st) {
  const double s0 = sigma_0_ > 0.0 ? sigma_0_ : ctx.net.init_stddev();
  threshold_ = activation_threshold(s0, ctx.dataset.params.sigma_p, ctx.dataset.params.d);
  y_.assign(ctx.data.y.begin(), ctx.data.y.end());
  hist_ = ActivationHistory{};
  hist_.n = y_.size();
  hist_.m = ctx.net.m;
  hist_.H = ctx.H;
  steps_ = 0;
  record(0, 0, st.noise_ip);
}

void ActivationRecorder::on_step(const StepRecord& rec) {
  // on_start already recorded the state before the very first step
  if (steps_++ > 0) record(rec.t, rec.b, rec.state.noise_ip);
}

void ActivationRecorder::on_finish(const Weights&, const ForwardState& st) {
  record(steps_ / hist_.H, steps_ % hist_.H, st.noise_ip);
}

void ActivationRecorder::record(std::size_t t, std::size_t b, const RowMatrix& noise_ip) {
  auto a = activation_sets(noise_ip, y_, hist_.m, threshold_);
  const std::size_t bad = a.inclusion_violations();
  if (bad) throw Error("activation sets: S_i not contained in S_tilde_i");
  hist_.states.push_back({t, b, std::move(a.S), std::move(a.S_tilde)});
}

CheckReport check_set_monotonicity(const ActivationHistory& hist) {
  CheckReport rep;
  rep.check = "set_monotonicity";
  rep.window = "all";
  const std::vector<std::vector<bool>>* prev_start = nullptr;
  const std::vector<std::vector<bool>>* epoch_start = nullptr;
  std::size_t cur_t = static_cast<std::size_t>(-1);
  auto compare = [&](const std::vector<std::vector<bool>>& a, const std::vector<std::vector<bool>>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      std::size_t dropped = 0;
      for (std::size_t r = 0; r < a[i].size(); ++r)
        if (a[i][r] && !b[i][r]) ++dropped;
      ++rep.total;
      if (dropped) {
        ++rep.violations;
        rep.worst_case_value = std::max(rep.worst_case_value, static_cast<double>(dropped));
      }
    }
  };
  for (const auto& s : hist.states) {
    if (s.b == 0 && s.t != cur_t) {
      prev_start = epoch_start;
      epoch_start = &s.S;
      cur_t = s.t;
      if (prev_start) compare(*prev_start, s.S);
    }
    if (epoch_start) compare(*epoch_start, s.S_tilde);
  }
  rep.note = "worst = most filters dropped in one comparison";
  return rep;
}

CheckReport check_logit_ratio(std::span<const TrajectoryPoint> points, double C2, std::vector<double>* per_epoch) {
  CheckReport rep;
  rep.check = "logit_ratio";
  rep.window = "per_epoch";
  if (per_epoch) per_epoch->clear();
  // log|l'(z)| = -log(1 + e^z) = -loss(-z); work in logs so saturated
  // margins do not turn the ratio into 0/0.
  const double log_c2 = std::log(C2);
  std::size_t k = 0;
  while (k < points.size()) {
    const std::size_t t = points[k].t;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (; k < points.size() && points[k].t == t; ++k)
      for (Eigen::Index i = 0; i < points[k].margins.size(); ++i) {
        const double v = -loss(-points[k].margins[i]);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    if (hi < lo) continue;
    const double log_ratio = hi - lo;
    const double ratio = std::exp(log_ratio);
    if (per_epoch) per_epoch->push_back(ratio);
    ++rep.total;
    if (log_ratio > log_c2) ++rep.violations;
    rep.worst_case_value = std::max(rep.worst_case_value, ratio);
  }
  if (rep.total == 0) rep.worst_case_value = 1.0;
  return rep;
}

std::vector<CheckReport> check_coeff_bounds(std::span<const CoeffSnapshot> series, const TheoryConstants& c,
                                            std::size_t n, std::size_t d, const CoeffBoundOptions& opt) {
  const double cap = opt.zeta_cap.value_or(c.alpha);
  const double nd = static_cast<double>(n);
  const double omega_floor =
      -c.beta - 10.0 * std::sqrt(std::log(6.0 * nd * nd / c.delta) / static_cast<double>(d)) * nd * c.alpha;
  const double gamma_floor = -1.0 / 12.0;

  CheckReport zeta{"zeta_upper", opt.zeta_cap ? "first_stage" : "all", 0, 0, 0.0, false,
                   "worst = max zeta; bound = " + fmt(cap)};
  CheckReport zeta_sign{"zeta_nonnegative", "all", 0, 0, 0.0, false, "worst = min zeta"};
  CheckReport omega{"omega_lower", "all", 0, 0, 0.0, false, "worst = min omega; bound = " + fmt(omega_floor)};
  CheckReport gamma{"gamma_lower", "all", 0, 0, 0.0, false, "worst = min gamma; bound = -1/12"};
  CheckReport ratio{"gamma_ratio", "all", 0, 0, 0.0, false, "worst = max gamma / (gamma_hat * alpha), not asserted"};

  double max_zeta = 0, min_zeta = 0, min_omega = 0, min_gamma = 0, max_gamma = 0;
  for (const auto& s : series) {
    const Coeffs& k = s.coeffs;
    const double zmax = k.zeta.size() ? k.zeta.maxCoeff() : 0.0;
    const double zmin = k.zeta.size() ? k.zeta.minCoeff() : 0.0;
    const double omin = k.omega.size() ? k.omega.minCoeff() : 0.0;
    const double gmin = k.gamma.size() ? k.gamma.minCoeff() : 0.0;
    const double gmax = k.gamma.size() ? k.gamma.maxCoeff() : 0.0;
    ++zeta.total, ++zeta_sign.total, ++omega.total, ++gamma.total, ++ratio.total;
    if (zmax > cap) ++zeta.violations;
    if (zmin < 0.0) ++zeta_sign.violations;
    if (omin < omega_floor) ++omega.violations;
    if (gmin < gamma_floor) ++gamma.violations;
    max_zeta = std::max(max_zeta, zmax);
    min_zeta = std::min(min_zeta, zmin);
    min_omega = std::min(min_omega, omin);
    min_gamma = std::min(min_gamma, gmin);
    max_gamma = std::max(max_gamma, gmax);
  }
  zeta.worst_case_value = max_zeta;
  zeta_sign.worst_case_value = min_zeta;
  omega.worst_case_value = min_omega;
  gamma.worst_case_value = min_gamma;
  const double scale = c.gamma_hat * c.alpha;
  ratio.worst_case_value = scale > 0.0 ? max_gamma / scale : std::numeric_limits<double>::infinity();
  if (scale <= 0.0) ratio.vacuous = true;
  return {zeta, zeta_sign, omega, gamma, ratio};
}

void DeactivationRecorder::on_start(const TrainContext& ctx, const Weights&, const ForwardState&) {
  y_.assign(ctx.data.y.begin(), ctx.data.y.end());
  hist_ = DeactivationHistory{};
}

void DeactivationRecorder::on_step(const StepRecord& rec) {
  if (!rec.sam) return;
  DeactivationHistory::Step s{rec.t, rec.b};
  s.perturbed = rec.perturbation && rec.perturbation->frobenius_norm() > 0.0;
  const std::size_t m = rec.before.m();
  for (std::size_t b = 0; b < rec.batch.size(); ++b) {
    const std::size_t k = rec.batch[b];
    const std::size_t base = y_[k] > 0 ? 0 : m;
    for (std::size_t r = 0; r < m; ++r) {
      const auto row = static_cast<Eigen::Index>(base + r);
      const double pre = rec.state.noise_ip(row, static_cast<Eigen::Index>(k));
      if (pre < 0.0) continue;
      const double post = rec.eval.noise_ip(row, static_cast<Eigen::Index>(b));
      ++s.events;
      s.worst_post = std::max(s.worst_post, post);
      if (post >= 0.0) ++s.violations;
    }
  }
  hist_.steps.push_back(s);
}

double first_stage_epochs(std::size_t m, std::size_t B, std::size_t n, double eta, double mu_norm) {
  const double denom = 12.0 * static_cast<double>(n) * eta * mu_norm * mu_norm;
  if (denom <= 0.0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(m * B) / denom;
}

CheckReport check_sam_deactivation(const DeactivationHistory& hist, double T1) {
  CheckReport rep;
  rep.check = "sam_deactivation";
  rep.window = "t<=" + fmt(T1);
  rep.worst_case_value = -std::numeric_limits<double>::infinity();
  bool any_perturbed = false;
  for (const auto& s : hist.steps) {
    if (static_cast<double>(s.t) > T1) continue;
    any_perturbed = any_perturbed || s.perturbed;
    rep.total += s.events;
    rep.violations += s.violations;
    if (s.events) rep.worst_case_value = std::max(rep.worst_case_value, s.worst_post);
  }
  if (!any_perturbed) {
    // with eps == 0 the perturbed inner product equals the unperturbed one,
    // so the deactivation premise never applies
    rep.vacuous = true;
    rep.note = "vacuous: no nonzero perturbation in window";
  } else {
    rep.note = "worst = max <w + eps, xi_k> over events";
  }
  if (rep.total == 0) rep.worst_case_value = 0.0;
  return rep;
}

double deactivation_tau(double c, std::size_t m, std::size_t B, std::size_t P, double sigma_p, std::size_t d) {
  return c * static_cast<double>(m) * std::sqrt(static_cast<double>(B)) /
         (static_cast<double>(P) * sigma_p * std::sqrt(static_cast<double>(d)));
}

GoodBatchReport check_good_batches(std::span<const EpochSchedule> schedules, std::span<const int> y,
                                   std::span<const int> y_hat) {
  GoodBatchReport out;
  out.summary.check = "good_batches";
  out.summary.window = "all";
  double sum = 0;
  std::size_t cnt = 0;
  double worst = 1.0;
  for (const auto& sched : schedules) {
    std::size_t good_pos = 0, good_neg = 0;
    for (const auto& batch : sched) {
      const double B = static_cast<double>(batch.size());
      std::size_t c_pos = 0, c_neg = 0;
      for (std::size_t i : batch) {
        if (y[i] != y_hat[i]) continue;
        (y[i] > 0 ? c_pos : c_neg)++;
      }
      auto good = [&](std::size_t c) {
        const double v = static_cast<double>(c);
        return v >= 0.25 * B && v <= 0.75 * B;
      };
      good_pos += good(c_pos);
      good_neg += good(c_neg);
      out.summary.total += 2;
      out.summary.violations += !good(c_pos) + !good(c_neg);
    }
    const double H = static_cast<double>(sched.size());
    const double fp = sched.empty() ? 0.0 : static_cast<double>(good_pos) / H;
    const double fn = sched.empty() ? 0.0 : static_cast<double>(good_neg) / H;
    out.fraction_pos.push_back(fp);
    out.fraction_neg.push_back(fn);
    sum += fp + fn;
    cnt += 2;
    worst = std::min({worst, fp, fn});
  }
  out.mean_fraction = cnt ? sum / static_cast<double>(cnt) : 0.0;
  out.summary.worst_case_value = cnt ? worst : 0.0;
  out.summary.note = "worst = lowest per-epoch good fraction";
  return out;
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::benign: return "benign";
    case Regime::harmful: return "harmful";
    case Regime::indeterminate: return "indeterminate";
  }
  return "?";
}

double regime_ratio(std::size_t n, double mu_norm, std::size_t d, std::size_t P, double sigma_p) {
  const double p4 = std::pow(static_cast<double>(P), 4) * std::pow(sigma_p, 4);
  return static_cast<double>(n) * std::pow(mu_norm, 4) / (static_cast<double>(d) * p4);
}

Regime classify_regime(std::size_t n, double mu_norm, std::size_t d, std::size_t P, double sigma_p,
                       const RegimeThresholds& th) {
  const double r = regime_ratio(n, mu_norm, d, P, sigma_p);
  if (r >= th.c_hi) return Regime::benign;
  if (r <= th.c_lo) return Regime::harmful;
  return Regime::indeterminate;
}

} // namespace samcnn
