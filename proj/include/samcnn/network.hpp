#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "samcnn/data_model.hpp"

namespace samcnn {

enum class InitScheme { gaussian, uniform_fan_in };

std::string to_string(InitScheme s);
InitScheme parse_init_scheme(const std::string& s);

struct NetConfig {
  std::size_t m = 10;   ///< filters per output sign
  std::size_t d = 1000;
  InitScheme init = InitScheme::uniform_fan_in;
  double sigma_0 = 0.01;

  void validate() const;

  /// Per-entry standard deviation of the initialization: sigma_0 for the
  /// Gaussian scheme, 1/sqrt(3d) for U(-1/sqrt(d), 1/sqrt(d)).
  double init_stddev() const;
};

/// Filter bank w_{j,r}. Stored as a 2m x d row-major matrix: rows [0, m)
/// hold j = +1, rows [m, 2m) hold j = -1.
class Weights {
public:
  Weights() = default;
  Weights(std::size_t m, std::size_t d) : m_(m), w_(RowMatrix::Zero(2 * m, d)) {}

  std::size_t m() const noexcept { return m_; }
  std::size_t d() const noexcept { return static_cast<std::size_t>(w_.cols()); }
  std::size_t filters() const noexcept { return 2 * m_; }

  static int sign_of_row(std::size_t row, std::size_t m) noexcept { return row < m ? 1 : -1; }
  int sign_of_row(std::size_t row) const noexcept { return sign_of_row(row, m_); }
  std::size_t row(int j, std::size_t r) const noexcept { return j > 0 ? r : m_ + r; }

  auto filter(int j, std::size_t r) { return w_.row(static_cast<Eigen::Index>(row(j, r))); }
  auto filter(int j, std::size_t r) const { return w_.row(static_cast<Eigen::Index>(row(j, r))); }

  RowMatrix& matrix() noexcept { return w_; }
  const RowMatrix& matrix() const noexcept { return w_; }

  double frobenius_norm() const { return w_.norm(); }
  bool all_finite() const { return w_.allFinite(); }

  Weights& operator+=(const Weights& o);
  Weights& operator-=(const Weights& o);
  Weights& operator*=(double s);

  friend bool operator==(const Weights& a, const Weights& b);

private:
  std::size_t m_ = 0;
  RowMatrix w_;
};

Weights operator+(Weights a, const Weights& b);
Weights operator-(Weights a, const Weights& b);
Weights operator*(double s, Weights a);

using Gradient = Weights;

Weights init_weights(const NetConfig& cfg, std::uint64_t seed);

/// ReLU and its derivative with the convention relu'(0) = 1.
inline double relu(double z) noexcept { return z > 0.0 ? z : 0.0; }
inline double relu_grad(double z) noexcept { return z >= 0.0 ? 1.0 : 0.0; }

/// Network output f(W, x) for an arbitrary P x d patch matrix.
double forward(const Weights& w, const Matrix& patches);

/// Network output for a data-model sample without materializing patches.
double forward(const Weights& w, const Sample& s, const Vector& mu);

/// Cross-entropy loss log(1 + exp(-z)) and its derivative -1/(1 + exp(z)).
double loss(double z) noexcept;
double loss_grad(double z) noexcept;

/// Inner products and margins of every training sample at one weight point.
struct ForwardState {
  RowMatrix noise_ip;   ///< 2m x n, <w_row, xi_i>
  Vector signal_ip;     ///< 2m, <w_row, mu>
  Vector margins;       ///< n, y_i f(W, x_i)
};

ForwardState evaluate(const Weights& w, const PatchData& data);

/// Margins from precomputed inner products.
Vector margins_from(const RowMatrix& noise_ip, const Vector& signal_ip, const PatchData& data,
                    std::size_t m);

double mean_loss(const Vector& margins);

double batch_loss(const Weights& w, const PatchData& data, std::span<const std::size_t> batch);
double full_loss(const Weights& w, const PatchData& data);

/// Gradient of the batch loss together with the quantities it was built from.
struct GradientTerms {
  Gradient grad;
  Vector ell_primes;    ///< B, l'(y_i f(W, x_i)) for batch samples in batch order
  RowMatrix noise_ip;   ///< 2m x B, <w_row, xi_i> for batch samples
  Vector signal_ip;     ///< 2m, <w_row, mu>
};

GradientTerms batch_gradient_terms(const Weights& w, const PatchData& data,
                                   std::span<const std::size_t> batch);

Gradient batch_gradient(const Weights& w, const PatchData& data, std::span<const std::size_t> batch);

void check_dimensions(const Weights& w, const PatchData& data);

} // namespace samcnn
