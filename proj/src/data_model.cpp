#include "samcnn/data_model.hpp"

#include <cmath>
#include <sstream>

#include "samcnn/error.hpp"

namespace samcnn {

void DataParams::validate() const {
  if (d < 1)
    throw ConfigError("data.d", "must be >= 1");
  if (P < 2)
    throw ConfigError("data.P", "must be >= 2");
  if (!(sigma_p > 0.0) || !std::isfinite(sigma_p))
    throw ConfigError("data.sigma_p", "must be a positive finite number");
  if (!(p >= 0.0 && p < 0.5))
    throw ConfigError("data.p", "must lie in [0, 0.5)");
  if (!(mu_norm >= 0.0) || !std::isfinite(mu_norm))
    throw ConfigError("data.mu_norm", "must be a nonnegative finite number");
}

Matrix Sample::patches(const Vector& mu) const {
  if (mu.size() != xi.size())
    throw DimensionError("signal and noise dimensions differ");
  Matrix x(num_patches, xi.size());
  for (std::size_t k = 0; k < num_patches; ++k) {
    if (k == signal_pos)
      x.row(k) = static_cast<double>(y_hat) * mu.transpose();
    else
      x.row(k) = xi.transpose();
  }
  return x;
}

Vector make_signal(std::size_t d, double mu_norm) {
  if (d < 1)
    throw ConfigError("data.d", "must be >= 1");
  if (!(mu_norm >= 0.0))
    throw ConfigError("data.mu_norm", "must be nonnegative");
  Vector mu = Vector::Zero(d);
  mu(0) = mu_norm;
  return mu;
}

Sample gen_sample(const DataParams& params, const Vector& mu, Stream& rng) {
  if (static_cast<std::size_t>(mu.size()) != params.d)
    throw DimensionError("signal vector has dimension " + std::to_string(mu.size()) +
                         ", expected " + std::to_string(params.d));
  Sample s;
  s.num_patches = params.P;
  s.y_hat = rng.rademacher();
  s.y = rng.bernoulli(params.p) ? -s.y_hat : s.y_hat;
  s.signal_pos = rng.below(params.P);
  s.xi.resize(params.d);
  for (std::size_t k = 0; k < params.d; ++k)
    s.xi(k) = params.sigma_p * rng.normal();
  return s;
}

Dataset gen_dataset(const DataParams& params, const Vector& mu, std::size_t n, std::uint64_t seed) {
  params.validate();
  if (n < 1)
    throw ConfigError("data.n", "must be >= 1");
  Dataset ds;
  ds.params = params;
  ds.mu = mu;
  ds.seed = seed;
  ds.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Stream rng(derive_seed(seed, "sample", i));
    ds.samples.push_back(gen_sample(params, mu, rng));
  }
  return ds;
}

Dataset gen_dataset(const DataParams& params, std::size_t n, std::uint64_t seed) {
  params.validate();
  return gen_dataset(params, make_signal(params.d, params.mu_norm), n, seed);
}

bool ConcentrationReport::all_norms_ok() const {
  for (bool ok : norm_ok)
    if (!ok)
      return false;
  return true;
}

std::vector<std::string> ConcentrationReport::failures() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < norm_ok.size(); ++i) {
    if (!norm_ok[i]) {
      std::ostringstream os;
      os << "noise_norm[" << i << "]=" << noise_sq_norms[i] << " outside [" << norm_lo << ", "
         << norm_hi << "]";
      out.push_back(os.str());
    }
  }
  if (pair_violations > 0)
    out.push_back("noise_pair_inner: " + std::to_string(pair_violations) + " pairs exceed bound");
  if (mu_violations > 0)
    out.push_back("noise_signal_inner: " + std::to_string(mu_violations) + " samples exceed bound");
  if (!clean_counts_ok)
    out.push_back("clean_label_counts outside concentration interval");
  if (!noisy_counts_ok)
    out.push_back("noisy_label_counts outside concentration interval");
  return out;
}

ConcentrationReport concentration_report(const Dataset& ds, double delta) {
  const std::size_t n = ds.size();
  if (n == 0)
    throw Error("concentration_report: empty dataset");
  const double d = static_cast<double>(ds.params.d);
  const double s2 = ds.params.sigma_p * ds.params.sigma_p;
  const double nn = static_cast<double>(n);

  ConcentrationReport r;
  r.delta = delta;
  r.norm_lo = s2 * d / 2.0;
  r.norm_hi = 3.0 * s2 * d / 2.0;
  r.pair_bound = 2.0 * s2 * std::sqrt(d * std::log(6.0 * nn * nn / delta));
  r.mu_bound = ds.mu.norm() * ds.params.sigma_p * std::sqrt(2.0 * std::log(6.0 * nn / delta));
  r.count_radius = std::sqrt((nn / 2.0) * std::log(8.0 / delta));

  for (std::size_t i = 0; i < n; ++i) {
    const auto& xi = ds.samples[i].xi;
    const double sq = xi.squaredNorm();
    r.noise_sq_norms.push_back(sq);
    r.norm_ok.push_back(sq >= r.norm_lo && sq <= r.norm_hi);

    const double mu_ip = std::abs(xi.dot(ds.mu));
    r.max_mu_inner = std::max(r.max_mu_inner, mu_ip);
    if (mu_ip > r.mu_bound)
      ++r.mu_violations;

    for (std::size_t k = i + 1; k < n; ++k) {
      const double ip = std::abs(xi.dot(ds.samples[k].xi));
      r.max_pair_inner = std::max(r.max_pair_inner, ip);
      if (ip > r.pair_bound)
        ++r.pair_violations;
    }

    const int slot = ds.samples[i].y == 1 ? 0 : 1;
    if (ds.samples[i].flipped())
      ++r.noisy_count[slot];
    else
      ++r.clean_count[slot];
  }

  const double p = ds.params.p;
  for (int slot = 0; slot < 2; ++slot) {
    if (std::abs(static_cast<double>(r.clean_count[slot]) - (1.0 - p) * nn / 2.0) > r.count_radius)
      r.clean_counts_ok = false;
    if (std::abs(static_cast<double>(r.noisy_count[slot]) - p * nn / 2.0) > r.count_radius)
      r.noisy_counts_ok = false;
  }
  return r;
}

PatchData make_patch_data(const Dataset& ds) {
  PatchData pd;
  const std::size_t n = ds.size();
  pd.xi.resize(n, ds.params.d);
  pd.mu = ds.mu;
  pd.P = ds.params.P;
  pd.y.reserve(n);
  pd.y_hat.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    pd.xi.row(i) = ds.samples[i].xi.transpose();
    pd.y.push_back(ds.samples[i].y);
    pd.y_hat.push_back(ds.samples[i].y_hat);
  }
  return pd;
}

} // namespace samcnn
