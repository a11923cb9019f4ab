#include "samcnn/network.hpp"

#include <cmath>

#include "samcnn/error.hpp"

namespace samcnn {

std::string to_string(InitScheme s) {
  return s == InitScheme::gaussian ? "gaussian" : "uniform_fan_in";
}

InitScheme parse_init_scheme(const std::string& s) {
  if (s == "gaussian")
    return InitScheme::gaussian;
  if (s == "uniform_fan_in")
    return InitScheme::uniform_fan_in;
  throw ConfigError("net.init", "unknown scheme '" + s + "' (expected gaussian|uniform_fan_in)");
}

void NetConfig::validate() const {
  if (m < 1)
    throw ConfigError("net.m", "must be >= 1");
  if (d < 1)
    throw ConfigError("net.d", "must be >= 1");
  if (init == InitScheme::gaussian && (!(sigma_0 >= 0.0) || !std::isfinite(sigma_0)))
    throw ConfigError("net.sigma_0", "must be a nonnegative finite number");
}

double NetConfig::init_stddev() const {
  if (init == InitScheme::gaussian)
    return sigma_0;
  return 1.0 / std::sqrt(3.0 * static_cast<double>(d));
}

Weights& Weights::operator+=(const Weights& o) {
  w_ += o.w_;
  return *this;
}

Weights& Weights::operator-=(const Weights& o) {
  w_ -= o.w_;
  return *this;
}

Weights& Weights::operator*=(double s) {
  w_ *= s;
  return *this;
}

bool operator==(const Weights& a, const Weights& b) {
  return a.m_ == b.m_ && a.w_.rows() == b.w_.rows() && a.w_.cols() == b.w_.cols() &&
         a.w_ == b.w_;
}

Weights operator+(Weights a, const Weights& b) { return a += b; }
Weights operator-(Weights a, const Weights& b) { return a -= b; }
Weights operator*(double s, Weights a) { return a *= s; }

Weights init_weights(const NetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Weights w(cfg.m, cfg.d);
  Stream rng(seed);
  auto& mat = w.matrix();
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.d));
  for (Eigen::Index r = 0; r < mat.rows(); ++r) {
    for (Eigen::Index c = 0; c < mat.cols(); ++c) {
      if (cfg.init == InitScheme::gaussian)
        mat(r, c) = cfg.sigma_0 * rng.normal();
      else
        mat(r, c) = bound * (2.0 * rng.uniform() - 1.0);
    }
  }
  return w;
}

double forward(const Weights& w, const Matrix& patches) {
  if (static_cast<std::size_t>(patches.cols()) != w.d())
    throw DimensionError("forward: patch dimension " + std::to_string(patches.cols()) +
                         " does not match weight dimension " + std::to_string(w.d()));
  const Matrix ip = w.matrix() * patches.transpose(); // 2m x P
  double f = 0.0;
  for (Eigen::Index row = 0; row < ip.rows(); ++row) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < ip.cols(); ++k)
      acc += relu(ip(row, k));
    f += w.sign_of_row(static_cast<std::size_t>(row)) * acc;
  }
  return f / static_cast<double>(w.m());
}

double forward(const Weights& w, const Sample& s, const Vector& mu) {
  if (static_cast<std::size_t>(s.xi.size()) != w.d() || mu.size() != s.xi.size())
    throw DimensionError("forward: sample dimension does not match weight dimension");
  const Vector noise_ip = w.matrix() * s.xi;
  const Vector signal_ip = w.matrix() * mu;
  const double noise_copies = static_cast<double>(s.num_patches - 1);
  double f = 0.0;
  for (Eigen::Index row = 0; row < noise_ip.size(); ++row) {
    const double v = relu(s.y_hat * signal_ip(row)) + noise_copies * relu(noise_ip(row));
    f += w.sign_of_row(static_cast<std::size_t>(row)) * v;
  }
  return f / static_cast<double>(w.m());
}

double loss(double z) noexcept {
  if (z >= 0.0)
    return std::log1p(std::exp(-z));
  return -z + std::log1p(std::exp(z));
}

double loss_grad(double z) noexcept {
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return -e / (1.0 + e);
  }
  return -1.0 / (1.0 + std::exp(z));
}

void check_dimensions(const Weights& w, const PatchData& data) {
  if (w.d() != data.d() || static_cast<std::size_t>(data.mu.size()) != data.d())
    throw DimensionError("weights have dimension " + std::to_string(w.d()) + " but data has " +
                         std::to_string(data.d()));
}

Vector margins_from(const RowMatrix& noise_ip, const Vector& signal_ip, const PatchData& data,
                    std::size_t m) {
  const std::size_t n = data.n();
  const double noise_copies = static_cast<double>(data.P - 1);
  Vector margins(n);
  for (std::size_t i = 0; i < n; ++i) {
    double f = 0.0;
    for (Eigen::Index row = 0; row < noise_ip.rows(); ++row) {
      const double v = relu(data.y_hat[i] * signal_ip(row)) +
                       noise_copies * relu(noise_ip(row, static_cast<Eigen::Index>(i)));
      f += Weights::sign_of_row(static_cast<std::size_t>(row), m) * v;
    }
    margins(static_cast<Eigen::Index>(i)) = data.y[i] * f / static_cast<double>(m);
  }
  return margins;
}

ForwardState evaluate(const Weights& w, const PatchData& data) {
  check_dimensions(w, data);
  ForwardState st;
  st.noise_ip = w.matrix() * data.xi.transpose();
  st.signal_ip = w.matrix() * data.mu;
  st.margins = margins_from(st.noise_ip, st.signal_ip, data, w.m());
  return st;
}

double mean_loss(const Vector& margins) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < margins.size(); ++i)
    acc += loss(margins(i));
  return acc / static_cast<double>(margins.size());
}

double batch_loss(const Weights& w, const PatchData& data, std::span<const std::size_t> batch) {
  if (batch.empty())
    throw Error("batch_loss: empty batch");
  check_dimensions(w, data);
  const Vector signal_ip = w.matrix() * data.mu;
  double acc = 0.0;
  const double noise_copies = static_cast<double>(data.P - 1);
  for (std::size_t i : batch) {
    const Vector noise_ip = w.matrix() * data.xi.row(static_cast<Eigen::Index>(i)).transpose();
    double f = 0.0;
    for (Eigen::Index row = 0; row < noise_ip.size(); ++row) {
      const double v = relu(data.y_hat[i] * signal_ip(row)) + noise_copies * relu(noise_ip(row));
      f += w.sign_of_row(static_cast<std::size_t>(row)) * v;
    }
    acc += loss(data.y[i] * f / static_cast<double>(w.m()));
  }
  return acc / static_cast<double>(batch.size());
}

double full_loss(const Weights& w, const PatchData& data) { return mean_loss(evaluate(w, data).margins); }

GradientTerms batch_gradient_terms(const Weights& w, const PatchData& data,
                                   std::span<const std::size_t> batch) {
  if (batch.empty())
    throw Error("batch_gradient: empty batch");
  check_dimensions(w, data);
  const std::size_t m = w.m();
  const std::size_t rows = w.filters();
  const auto B = static_cast<Eigen::Index>(batch.size());

  RowMatrix xi_batch(B, static_cast<Eigen::Index>(data.d()));
  for (Eigen::Index b = 0; b < B; ++b)
    xi_batch.row(b) = data.xi.row(static_cast<Eigen::Index>(batch[static_cast<std::size_t>(b)]));

  GradientTerms out;
  out.noise_ip = w.matrix() * xi_batch.transpose();
  out.signal_ip = w.matrix() * data.mu;
  out.ell_primes.resize(B);

  const double noise_copies = static_cast<double>(data.P - 1);
  for (Eigen::Index b = 0; b < B; ++b) {
    const std::size_t i = batch[static_cast<std::size_t>(b)];
    double f = 0.0;
    for (std::size_t row = 0; row < rows; ++row) {
      const auto r = static_cast<Eigen::Index>(row);
      const double v = relu(data.y_hat[i] * out.signal_ip(r)) + noise_copies * relu(out.noise_ip(r, b));
      f += Weights::sign_of_row(row, m) * v;
    }
    out.ell_primes(b) = loss_grad(data.y[i] * f / static_cast<double>(m));
  }

  // grad_row = (P-1)/(Bm) sum_i l'_i s'(<w, xi_i>) j y_i xi_i
  //          + 1/(Bm) sum_i l'_i s'(<w, y_hat_i mu>) y_hat_i y_i j mu
  const double scale = 1.0 / (static_cast<double>(B) * static_cast<double>(m));
  RowMatrix noise_coef(static_cast<Eigen::Index>(rows), B);
  Vector signal_coef(static_cast<Eigen::Index>(rows));
  for (std::size_t row = 0; row < rows; ++row) {
    const auto r = static_cast<Eigen::Index>(row);
    const double j = Weights::sign_of_row(row, m);
    double sc = 0.0;
    for (Eigen::Index b = 0; b < B; ++b) {
      const std::size_t i = batch[static_cast<std::size_t>(b)];
      const double lp = out.ell_primes(b);
      noise_coef(r, b) = noise_copies * scale * lp * relu_grad(out.noise_ip(r, b)) * j * data.y[i];
      sc += lp * relu_grad(data.y_hat[i] * out.signal_ip(r)) * data.y_hat[i] * data.y[i];
    }
    signal_coef(r) = scale * sc * j;
  }
  out.grad = Weights(m, data.d());
  out.grad.matrix().noalias() = noise_coef * xi_batch;
  out.grad.matrix().noalias() += signal_coef * data.mu.transpose();
  return out;
}

Gradient batch_gradient(const Weights& w, const PatchData& data, std::span<const std::size_t> batch) {
  return batch_gradient_terms(w, data, batch).grad;
}

} // namespace samcnn
