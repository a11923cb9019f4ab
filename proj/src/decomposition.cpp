#include "samcnn/decomposition.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "samcnn/error.hpp"

namespace samcnn {

Coeffs Coeffs::zeros(std::size_t m, std::size_t n) {
  Coeffs c;
  c.gamma = Vector::Zero(static_cast<Eigen::Index>(2 * m));
  c.zeta = RowMatrix::Zero(static_cast<Eigen::Index>(2 * m), static_cast<Eigen::Index>(n));
  c.omega = RowMatrix::Zero(static_cast<Eigen::Index>(2 * m), static_cast<Eigen::Index>(n));
  return c;
}

Basis::Basis(const PatchData& data) : mu_(data.mu), xis_(data.xi), P_(data.P) {
  const auto n = xis_.rows();
  mu_sq_ = mu_.squaredNorm();
  xi_sq_ = xis_.rowwise().squaredNorm();
  const Eigen::Index off = has_signal() ? 1 : 0;
  const Eigen::Index k = n + off;

  gram_.resize(k, k);
  if (has_signal()) {
    gram_(0, 0) = mu_sq_;
    const Vector cross = xis_ * mu_;
    gram_.block(1, 0, n, 1) = cross;
    gram_.block(0, 1, 1, n) = cross.transpose();
  }
  gram_.block(off, off, n, n) = xis_ * xis_.transpose();

  scale_ = gram_.diagonal().cwiseSqrt().cwiseInverse();
  if (!scale_.allFinite())
    throw DegenerateBasisError("basis contains a zero noise vector");
  const Matrix scaled = scale_.asDiagonal() * gram_ * scale_.asDiagonal();

  Eigen::SelfAdjointEigenSolver<Matrix> eig(scaled);
  const double lo = eig.eigenvalues()(0);
  const double hi = eig.eigenvalues()(k - 1);
  condition_ = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(condition_ <= kMaxCondition)) {
    // Name the basis vectors that participate in the near-null direction.
    const Vector v = eig.eigenvectors().col(0);
    std::ostringstream os;
    os << "Gram matrix condition number " << condition_ << " exceeds " << kMaxCondition
       << "; nearly dependent:";
    for (Eigen::Index c = 0; c < k; ++c) {
      if (std::abs(v(c)) > 0.1) {
        if (has_signal() && c == 0)
          os << " mu";
        else
          os << " xi_" << (c - off);
      }
    }
    throw DegenerateBasisError(os.str());
  }
  factor_.compute(scaled);
}

Vector Basis::solve(const Eigen::Ref<const Vector>& v) const {
  const Eigen::Index off = has_signal() ? 1 : 0;
  const Eigen::Index k = gram_.rows();
  auto project = [&](const Vector& x) {
    Vector rhs(k);
    if (has_signal())
      rhs(0) = mu_.dot(x);
    rhs.tail(k - off) = xis_ * x;
    return rhs;
  };
  auto expand = [&](const Vector& c) {
    Vector x = xis_.transpose() * c.tail(k - off);
    if (has_signal())
      x += c(0) * mu_;
    return x;
  };
  Vector c = scale_.asDiagonal() * factor_.solve(scale_.asDiagonal() * project(v));
  // One step of iterative refinement on the normal equations.
  const Vector r = v - expand(c);
  c += scale_.asDiagonal() * factor_.solve(scale_.asDiagonal() * project(r));
  return c;
}

ActivationPattern activation_pattern(const GradientTerms& eval, std::span<const std::size_t> batch,
                                     std::span<const int> y_hat) {
  const auto rows = eval.noise_ip.rows();
  const auto B = static_cast<Eigen::Index>(batch.size());
  if (eval.noise_ip.cols() != B)
    throw DimensionError("activation_pattern: inner products do not match batch size");
  ActivationPattern act;
  act.noise.resize(rows, B);
  act.signal.resize(rows, B);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index b = 0; b < B; ++b) {
      act.noise(r, b) = relu_grad(eval.noise_ip(r, b));
      act.signal(r, b) = relu_grad(y_hat[batch[static_cast<std::size_t>(b)]] * eval.signal_ip(r));
    }
  }
  return act;
}

namespace {

Coeffs apply_update(const Coeffs& c, std::span<const std::size_t> batch, const Vector& ell_primes,
                    const ActivationPattern& act, double eta, const UpdateContext& ctx) {
  const std::size_t m = c.m();
  const auto rows = static_cast<Eigen::Index>(2 * m);
  const auto B = static_cast<Eigen::Index>(batch.size());
  if (ell_primes.size() != B || act.noise.rows() != rows || act.noise.cols() != B ||
      act.signal.rows() != rows || act.signal.cols() != B)
    throw DimensionError("coefficient update: indicator or loss-derivative arrays do not match (2m, B)");

  const double bm = static_cast<double>(B) * static_cast<double>(m);
  const double noise_rate = eta * static_cast<double>(ctx.P - 1) * static_cast<double>(ctx.P - 1) / bm;
  Coeffs out = c;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const int j = Weights::sign_of_row(static_cast<std::size_t>(r), m);
    double signal_sum = 0.0;
    for (Eigen::Index b = 0; b < B; ++b) {
      const std::size_t i = batch[static_cast<std::size_t>(b)];
      const auto ii = static_cast<Eigen::Index>(i);
      const double lp = ell_primes(b);
      // Clean samples (y == y_hat) push gamma up, flipped samples down.
      signal_sum += lp * act.signal(r, b) * (ctx.y[i] == ctx.y_hat[i] ? 1.0 : -1.0);
      const double step = noise_rate * lp * act.noise(r, b) * ctx.xi_sq(ii);
      if (ctx.y[i] == j)
        out.zeta(r, ii) -= step;
      else
        out.omega(r, ii) += step;
    }
    out.gamma(r) -= eta / bm * signal_sum * ctx.mu_sq;
  }
  return out;
}

} // namespace

Coeffs track_step_sgd(const Coeffs& c, std::span<const std::size_t> batch, const Vector& ell_primes,
                      const ActivationPattern& act, double eta, const UpdateContext& ctx) {
  return apply_update(c, batch, ell_primes, act, eta, ctx);
}

Coeffs track_step_sam(const Coeffs& c, std::span<const std::size_t> batch, const Vector& ell_primes,
                      const ActivationPattern& perturbed_act, double eta, const UpdateContext& ctx) {
  return apply_update(c, batch, ell_primes, perturbed_act, eta, ctx);
}

OracleSolution oracle_solve(const Weights& w, const Weights& w0, const Basis& basis) {
  if (w.d() != w0.d() || w.m() != w0.m())
    throw DimensionError("oracle_solve: weight shapes differ");
  if (w.d() != static_cast<std::size_t>(basis.mu().size()))
    throw DimensionError("oracle_solve: basis dimension does not match weights");
  const std::size_t rows = w.filters();
  const auto n = static_cast<Eigen::Index>(basis.n());
  const Eigen::Index off = basis.has_signal() ? 1 : 0;
  const double noise_copies = static_cast<double>(basis.P() - 1);

  OracleSolution sol;
  sol.gamma = Vector::Zero(static_cast<Eigen::Index>(rows));
  sol.rho = RowMatrix::Zero(static_cast<Eigen::Index>(rows), n);
  sol.residual = Vector::Zero(static_cast<Eigen::Index>(rows));

  const RowMatrix delta = w.matrix() - w0.matrix();
  for (std::size_t row = 0; row < rows; ++row) {
    const auto r = static_cast<Eigen::Index>(row);
    const Vector dv = delta.row(r).transpose();
    const Vector c = basis.solve(dv);
    Vector fit = basis.xis().transpose() * c.tail(n);
    if (basis.has_signal()) {
      fit += c(0) * basis.mu();
      sol.gamma(r) = w.sign_of_row(row) * c(0) * basis.mu_sq();
    }
    for (Eigen::Index i = 0; i < n; ++i)
      sol.rho(r, i) = c(off + i) * noise_copies * basis.xi_sq()(i);
    sol.residual(r) = (dv - fit).norm();
  }
  const double scale = delta.norm();
  sol.max_relative_residual = scale > 0.0 ? sol.residual.norm() / scale : 0.0;
  return sol;
}

Weights reconstruct(const Vector& gamma, const RowMatrix& rho, const Basis& basis, const Weights& w0) {
  const std::size_t rows = w0.filters();
  if (static_cast<std::size_t>(gamma.size()) != rows || static_cast<std::size_t>(rho.rows()) != rows ||
      static_cast<std::size_t>(rho.cols()) != basis.n())
    throw DimensionError("reconstruct: coefficient shapes do not match weights and basis");
  Weights w = w0;
  const double inv_copies = 1.0 / static_cast<double>(basis.P() - 1);
  const Vector inv_xi_sq = basis.xi_sq().cwiseInverse();
  for (std::size_t row = 0; row < rows; ++row) {
    const auto r = static_cast<Eigen::Index>(row);
    Vector add = basis.xis().transpose() * (rho.row(r).transpose().cwiseProduct(inv_xi_sq) * inv_copies);
    if (basis.has_signal())
      add += w.sign_of_row(row) * gamma(r) / basis.mu_sq() * basis.mu();
    w.matrix().row(r) += add.transpose();
  }
  return w;
}

Weights reconstruct(const Coeffs& c, const Basis& basis, const Weights& w0) {
  return reconstruct(c.gamma, c.rho(), basis, w0);
}

StructuralCount structural_violations(const Coeffs& c, std::span<const int> y) {
  StructuralCount out;
  const std::size_t m = c.m();
  for (Eigen::Index r = 0; r < c.zeta.rows(); ++r) {
    const int j = Weights::sign_of_row(static_cast<std::size_t>(r), m);
    for (Eigen::Index i = 0; i < c.zeta.cols(); ++i) {
      if (c.zeta(r, i) < 0.0 || c.omega(r, i) > 0.0)
        ++out.sign;
      const bool own = y[static_cast<std::size_t>(i)] == j;
      if ((own && c.omega(r, i) != 0.0) || (!own && c.zeta(r, i) != 0.0))
        ++out.pattern;
    }
  }
  return out;
}

std::pair<double, double> signal_cross_term(const Weights& w, const Weights& w0, const Coeffs& c,
                                            const Basis& basis, std::size_t row) {
  const auto r = static_cast<Eigen::Index>(row);
  const Vector dv = (w.matrix().row(r) - w0.matrix().row(r)).transpose();
  const double lhs = std::abs(dv.dot(basis.mu()) - w.sign_of_row(row) * c.gamma(r));
  const Vector xi_mu = basis.xis() * basis.mu();
  double bound = 0.0;
  for (Eigen::Index i = 0; i < xi_mu.size(); ++i)
    bound += std::abs(c.zeta(r, i) + c.omega(r, i)) * std::abs(xi_mu(i)) / basis.xi_sq()(i);
  return {lhs, bound / static_cast<double>(basis.P() - 1)};
}

void DecompositionTracker::on_start(const TrainContext& ctx, const Weights& w0, const ForwardState&) {
  H_ = ctx.H;
  basis_.emplace(ctx.data);
  w0_ = w0;
  y_ = ctx.data.y;
  y_hat_ = ctx.data.y_hat;
  coeffs_ = Coeffs::zeros(w0.m(), ctx.data.n());
  series_.clear();
  series_.push_back({0, 0, 0, coeffs_});
  iteration_ = 0;
  last_checked_ = static_cast<std::size_t>(-1);
  if (opt_.oracle_every != 0)
    cross_check(w0);
}

void DecompositionTracker::on_step(const StepRecord& rec) {
  const ActivationPattern act = activation_pattern(rec.eval, rec.batch, y_hat_);
  const UpdateContext ctx{y_, y_hat_, basis_->mu_sq(), basis_->xi_sq(), basis_->P()};
  coeffs_ = rec.sam ? track_step_sam(coeffs_, rec.batch, rec.eval.ell_primes, act, rec.eta, ctx)
                    : track_step_sgd(coeffs_, rec.batch, rec.eval.ell_primes, act, rec.eta, ctx);
  update_extremes();

  const StructuralCount v = structural_violations(coeffs_, y_);
  violations_.sign += v.sign;
  violations_.pattern += v.pattern;
  if (opt_.strict && (v.sign || v.pattern)) {
    std::ostringstream os;
    os << "structural coefficient violation at iteration " << rec.iteration;
    throw Error(os.str());
  }

  iteration_ = rec.iteration + 1;
  const std::size_t stride = opt_.record_every == 0 ? H_ : opt_.record_every;
  if (iteration_ % stride == 0)
    series_.push_back({iteration_ / H_, iteration_ % H_, iteration_, coeffs_});
  if (opt_.oracle_every != 0 && iteration_ % opt_.oracle_every == 0)
    cross_check(rec.after);
}

void DecompositionTracker::on_finish(const Weights& w, const ForwardState&) {
  if (series_.empty() || series_.back().iteration != iteration_)
    series_.push_back({iteration_ / H_, iteration_ % H_, iteration_, coeffs_});
  if (opt_.oracle_every != 0)
    cross_check(w);
}

void DecompositionTracker::update_extremes() {
  max_zeta_ = std::max(max_zeta_, coeffs_.zeta.maxCoeff());
  min_omega_ = std::min(min_omega_, coeffs_.omega.minCoeff());
  min_gamma_ = std::min(min_gamma_, coeffs_.gamma.minCoeff());
  max_gamma_ = std::max(max_gamma_, coeffs_.gamma.maxCoeff());
}

void DecompositionTracker::cross_check(const Weights& w) {
  if (last_checked_ == iteration_)
    return;
  last_checked_ = iteration_;
  ++oracle_checks_;
  const OracleSolution sol = oracle_solve(w, w0_, *basis_);
  max_gamma_err_ = std::max(max_gamma_err_, (sol.gamma - coeffs_.gamma).cwiseAbs().maxCoeff());
  max_rho_err_ = std::max(max_rho_err_, (sol.rho - coeffs_.rho()).cwiseAbs().maxCoeff());
  max_oracle_residual_ = std::max(max_oracle_residual_, sol.max_relative_residual);

  const Weights rebuilt = reconstruct(coeffs_, *basis_, w0_);
  const double scale = w.frobenius_norm();
  const double err = (rebuilt.matrix() - w.matrix()).norm();
  max_recon_err_ = std::max(max_recon_err_, scale > 0.0 ? err / scale : err);

  if (basis_->has_signal()) {
    for (std::size_t row = 0; row < w.filters(); ++row) {
      const auto [lhs, bound] = signal_cross_term(w, w0_, coeffs_, *basis_, row);
      if (lhs > bound + 1e-9 * (1.0 + bound))
        ++cross_term_violations_;
    }
  }
}

namespace {

std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path);
  if (!out)
    throw Error("cannot open " + path + " for writing");
  out << std::setprecision(17);
  return out;
}

} // namespace

void write_coeff_series_csv(const std::string& path, const std::vector<CoeffSnapshot>& series) {
  auto out = open_csv(path);
  out << "t,b,j,r,gamma,sum_zeta,min_omega,max_zeta\n";
  for (const auto& s : series) {
    const std::size_t m = s.coeffs.m();
    for (Eigen::Index row = 0; row < s.coeffs.gamma.size(); ++row) {
      const auto urow = static_cast<std::size_t>(row);
      const int j = Weights::sign_of_row(urow, m);
      out << s.t << ',' << s.b << ',' << j << ',' << (j > 0 ? urow : urow - m) << ',' << s.coeffs.gamma(row)
          << ',' << s.coeffs.zeta.row(row).sum() << ',' << s.coeffs.omega.row(row).minCoeff() << ','
          << s.coeffs.zeta.row(row).maxCoeff() << '\n';
    }
  }
}

void write_coeff_tensors_csv(const std::string& path, const std::vector<CoeffSnapshot>& series) {
  auto out = open_csv(path);
  out << "t,b,j,r,i,gamma_or_zeta,omega\n";
  for (const auto& s : series) {
    const std::size_t m = s.coeffs.m();
    for (Eigen::Index row = 0; row < s.coeffs.gamma.size(); ++row) {
      const auto urow = static_cast<std::size_t>(row);
      const int j = Weights::sign_of_row(urow, m);
      const std::size_t r = j > 0 ? urow : urow - m;
      out << s.t << ',' << s.b << ',' << j << ',' << r << ",-1," << s.coeffs.gamma(row) << ",0\n";
      for (Eigen::Index i = 0; i < s.coeffs.zeta.cols(); ++i)
        out << s.t << ',' << s.b << ',' << j << ',' << r << ',' << i << ',' << s.coeffs.zeta(row, i) << ','
            << s.coeffs.omega(row, i) << '\n';
    }
  }
}

} // namespace samcnn
