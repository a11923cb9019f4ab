#pragma once

// Signal-noise decomposition of the filters,
//
//   w_{j,r} = w0_{j,r} + j * gamma_{j,r} * mu / ||mu||^2
//           + 1/(P-1) * sum_i (zeta_{j,r,i} + omega_{j,r,i}) * xi_i / ||xi_i||^2,
//
// maintained two independent ways: an incremental tracker that applies the
// closed-form per-step coefficient updates, and a least-squares oracle that
// recovers the coefficients from the weights alone.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "samcnn/optim.hpp"

namespace samcnn {

/// Rows index filters as in Weights (j = +1 first), columns index samples.
struct Coeffs {
  Vector gamma;     ///< 2m
  RowMatrix zeta;   ///< 2m x n, >= 0
  RowMatrix omega;  ///< 2m x n, <= 0

  static Coeffs zeros(std::size_t m, std::size_t n);
  std::size_t m() const noexcept { return static_cast<std::size_t>(gamma.size()) / 2; }
  std::size_t n() const noexcept { return static_cast<std::size_t>(zeta.cols()); }
  RowMatrix rho() const { return zeta + omega; }
};

/// Span basis {mu, xi_1, ..., xi_n} with its Gram matrix. When mu == 0 the
/// signal direction is dropped and gamma is identically zero.
class Basis {
public:
  static constexpr double kMaxCondition = 1e12;

  /// Throws DegenerateBasisError if the (column-normalized) Gram matrix has
  /// condition number above kMaxCondition.
  explicit Basis(const PatchData& data);

  const Vector& mu() const noexcept { return mu_; }
  const RowMatrix& xis() const noexcept { return xis_; }
  const Matrix& gram() const noexcept { return gram_; }
  double mu_sq() const noexcept { return mu_sq_; }
  const Vector& xi_sq() const noexcept { return xi_sq_; }
  std::size_t P() const noexcept { return P_; }
  bool has_signal() const noexcept { return mu_sq_ > 0.0; }
  double condition_number() const noexcept { return condition_; }
  std::size_t n() const noexcept { return static_cast<std::size_t>(xis_.rows()); }

  /// Least-squares coordinates of v in the basis (signal first when present).
  Vector solve(const Eigen::Ref<const Vector>& v) const;

private:
  Vector mu_;
  RowMatrix xis_;
  Matrix gram_;       ///< (n+1) x (n+1), or n x n without a signal direction
  double mu_sq_ = 0;
  Vector xi_sq_;
  std::size_t P_ = 2;
  double condition_ = 1;
  Vector scale_;      ///< 1 / column norms
  Eigen::LDLT<Matrix> factor_;
};

/// sigma'(.) indicators at the point where the descent gradient was evaluated.
struct ActivationPattern {
  RowMatrix noise;   ///< 2m x B, sigma'(<w_row, xi_i>)
  RowMatrix signal;  ///< 2m x B, sigma'(<w_row, y_hat_i mu>)
};

ActivationPattern activation_pattern(const GradientTerms& eval, std::span<const std::size_t> batch,
                                     std::span<const int> y_hat);

/// Labels and norms the update rules need.
struct UpdateContext {
  std::span<const int> y;
  std::span<const int> y_hat;
  double mu_sq;
  const Vector& xi_sq;
  std::size_t P;
};

Coeffs track_step_sgd(const Coeffs& c, std::span<const std::size_t> batch, const Vector& ell_primes,
                      const ActivationPattern& act, double eta, const UpdateContext& ctx);

/// Same algebra, driven by the indicators of the perturbed weights W + eps.
Coeffs track_step_sam(const Coeffs& c, std::span<const std::size_t> batch, const Vector& ell_primes,
                      const ActivationPattern& perturbed_act, double eta, const UpdateContext& ctx);

struct OracleSolution {
  Vector gamma;                ///< 2m
  RowMatrix rho;               ///< 2m x n
  Vector residual;             ///< per filter, ||dw - A c||
  double max_relative_residual = 0;  ///< max residual / ||W - W0||_F (0 when W == W0)
};

OracleSolution oracle_solve(const Weights& w, const Weights& w0, const Basis& basis);

Weights reconstruct(const Coeffs& c, const Basis& basis, const Weights& w0);
Weights reconstruct(const Vector& gamma, const RowMatrix& rho, const Basis& basis, const Weights& w0);

/// Sign and label-pattern violations of a coefficient state.
struct StructuralCount {
  std::size_t sign = 0;     ///< zeta < 0 or omega > 0
  std::size_t pattern = 0;  ///< zeta != 0 with y_i != j, omega != 0 with y_i == j
};

StructuralCount structural_violations(const Coeffs& c, std::span<const int> y);

/// Cross-term of the signal read-off: returns (|<w - w0, mu> - j gamma|, bound)
/// for one filter, where bound = 1/(P-1) sum_i |rho_i| |<xi_i, mu>| / ||xi_i||^2.
std::pair<double, double> signal_cross_term(const Weights& w, const Weights& w0, const Coeffs& c,
                                            const Basis& basis, std::size_t row);

struct CoeffSnapshot {
  std::size_t t, b, iteration;
  Coeffs coeffs;
};

/// Hook maintaining tracked coefficients during training and, optionally,
/// cross-checking them against the oracle.
class DecompositionTracker : public TrainHook {
public:
  struct Options {
    std::size_t record_every = 0;  ///< 0 = once per epoch
    std::size_t oracle_every = 0;  ///< 0 = never
    bool strict = false;           ///< throw on a structural violation
  };

  DecompositionTracker() = default;
  explicit DecompositionTracker(Options opt) : opt_(opt) {}

  void on_start(const TrainContext& ctx, const Weights& w0, const ForwardState&) override;
  void on_step(const StepRecord& rec) override;
  void on_finish(const Weights& w, const ForwardState&) override;

  const Coeffs& coeffs() const noexcept { return coeffs_; }
  const std::vector<CoeffSnapshot>& series() const noexcept { return series_; }
  const Basis& basis() const { return *basis_; }

  // Running extremes over every step.
  double max_zeta() const noexcept { return max_zeta_; }
  double min_omega() const noexcept { return min_omega_; }
  double min_gamma() const noexcept { return min_gamma_; }
  double max_gamma() const noexcept { return max_gamma_; }

  const StructuralCount& violations() const noexcept { return violations_; }

  // Oracle cross-check results (valid when oracle_every > 0).
  std::size_t oracle_checks() const noexcept { return oracle_checks_; }
  double max_gamma_error() const noexcept { return max_gamma_err_; }
  double max_rho_error() const noexcept { return max_rho_err_; }
  double max_oracle_residual() const noexcept { return max_oracle_residual_; }
  double max_reconstruction_error() const noexcept { return max_recon_err_; }
  std::size_t cross_term_violations() const noexcept { return cross_term_violations_; }

private:
  void cross_check(const Weights& w);
  void update_extremes();

  Options opt_;
  std::size_t H_ = 1;
  std::size_t last_checked_ = static_cast<std::size_t>(-1);
  std::size_t iteration_ = 0;
  std::optional<Basis> basis_;
  Weights w0_;
  std::vector<int> y_, y_hat_;
  Coeffs coeffs_;
  std::vector<CoeffSnapshot> series_;
  double max_zeta_ = 0, min_omega_ = 0, min_gamma_ = 0, max_gamma_ = 0;
  StructuralCount violations_;
  std::size_t oracle_checks_ = 0;
  double max_gamma_err_ = 0, max_rho_err_ = 0, max_oracle_residual_ = 0, max_recon_err_ = 0;
  std::size_t cross_term_violations_ = 0;
};

/// Rows (t, b, j, r, gamma, sum_zeta, min_omega, max_zeta).
void write_coeff_series_csv(const std::string& path, const std::vector<CoeffSnapshot>& series);

/// Full tensors: rows (t, b, j, r, i, zeta, omega) plus gamma rows with i = -1.
void write_coeff_tensors_csv(const std::string& path, const std::vector<CoeffSnapshot>& series);

} // namespace samcnn
