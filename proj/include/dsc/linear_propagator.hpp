#pragma once

// Propagators for linear model equations
//
//   Σ_μ φ_μ z^n(t + τ/2 − μτ) + ψ_μ z^p(t − μτ) ≡ 0
//
// solved for the outgoing node field. Provides the general step recursion,
// the first-order K/L/M/N representation with its deflection state, the
// gauge freedom in (L, M, N), the spectral-radius stability measure and the
// deflection correction for perturbed equations.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "dsc/engine.hpp"

namespace dsc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Relative reciprocal-condition threshold below which φ₀ counts as singular.
inline constexpr double kSingularRcond = 1e-13;

/// Coefficients φ_μ (node side) and ψ_μ (port side) of a finite-order linear
/// model, together with the node→port map nb in the cell's block layout.
class LinearModel {
 public:
  LinearModel(std::vector<Matrix> phi, std::vector<Matrix> psi, Matrix nb_map = {},
              bool time_dependent = false)
      : phi_(std::move(phi)), psi_(std::move(psi)), nb_(std::move(nb_map)),
        time_dependent_(time_dependent) {
    if (phi_.empty()) throw ModelError("linear model needs at least phi_0");
    const auto n = phi_[0].rows();
    if (n == 0 || phi_[0].cols() != n) throw ModelError("phi_0 must be square and non-empty");
    if (nb_.size() == 0) nb_ = Matrix::Identity(n, n);
    if (nb_.rows() != n || nb_.cols() != n) throw ModelError("nb must be " + dims(n));
    for (std::size_t mu = 0; mu < phi_.size(); ++mu)
      if (phi_[mu].rows() != n || phi_[mu].cols() != n)
        throw ModelError("phi_" + std::to_string(mu) + " must be " + dims(n));
    for (std::size_t mu = 0; mu < psi_.size(); ++mu)
      if (psi_[mu].rows() != n || psi_[mu].cols() != n)
        throw ModelError("psi_" + std::to_string(mu) + " must be " + dims(n));

    Eigen::FullPivLU<Matrix> lu(phi_[0]);
    const double rcond = lu.rcond();
    if (!lu.isInvertible() || !(rcond > kSingularRcond))
      throw ModelError("phi_0 is not invertible (uniqueness condition violated, rcond = " +
                       std::to_string(rcond) + ")");
    phi0_inv_ = lu.inverse();

    // trailing zero coefficients do not count towards the order
    order_ = 0;
    for (std::size_t mu = 0; mu < std::max(phi_.size(), psi_.size()); ++mu)
      if ((mu < phi_.size() && !phi_[mu].isZero(0.0)) || (mu < psi_.size() && !psi_[mu].isZero(0.0)))
        order_ = mu;
  }

  Eigen::Index dim() const { return phi_[0].rows(); }
  std::size_t order() const { return order_; }
  bool time_dependent() const { return time_dependent_; }
  const Matrix& nb() const { return nb_; }
  const Matrix& phi0_inverse() const { return phi0_inv_; }

  /// φ_μ, zero beyond the stored coefficients.
  Matrix phi(std::size_t mu) const {
    return mu < phi_.size() ? phi_[mu] : Matrix::Zero(dim(), dim());
  }
  Matrix psi(std::size_t mu) const {
    return mu < psi_.size() ? psi_[mu] : Matrix::Zero(dim(), dim());
  }

  /// Residual Σ_μ φ_μ z^n(t+τ/2−μτ) + ψ_μ z^p(t−μτ) from total-field
  /// histories (index μ; missing entries are zero).
  Vector residual(std::span<const Vector> node_totals, std::span<const Vector> port_totals) const {
    Vector r = Vector::Zero(dim());
    for (std::size_t mu = 0; mu <= order_; ++mu) {
      if (mu < node_totals.size()) r += phi(mu) * node_totals[mu];
      if (mu < port_totals.size()) r += psi(mu) * port_totals[mu];
    }
    return r;
  }

 private:
  static std::string dims(Eigen::Index n) {
    return std::to_string(n) + "x" + std::to_string(n);
  }

  std::vector<Matrix> phi_;
  std::vector<Matrix> psi_;
  Matrix nb_;
  bool time_dependent_;
  Matrix phi0_inv_;
  std::size_t order_ = 0;
};

/// Step recursion for the reflection map of a linear model:
///
///   z_out(t) = (−φ₀)⁻¹ Σ_μ { (φ_μ + ψ_μ nb) z_in(t − μτ)
///                          + (φ_{μ+1} + ψ_μ nb) z_out(t − τ − μτ) }
///
/// `incident[μ]` = z_in(t − μτ), `outgoing[μ]` = z_out(t − τ − μτ); shorter
/// spans mean the process started recently (earlier states are zero).
class StepRecursion {
 public:
  explicit StepRecursion(LinearModel model) : model_(std::move(model)) {
    for (std::size_t mu = 0; mu <= model_.order(); ++mu) {
      const Matrix psi_nb = model_.psi(mu) * model_.nb();
      in_coeff_.push_back(model_.phi0_inverse() * (model_.phi(mu) + psi_nb));
      out_coeff_.push_back(model_.phi0_inverse() * (model_.phi(mu + 1) + psi_nb));
    }
  }

  const LinearModel& model() const { return model_; }
  std::size_t order() const { return model_.order(); }

  Vector operator()(std::span<const Vector> incident, std::span<const Vector> outgoing) const {
    Vector acc = Vector::Zero(model_.dim());
    for (std::size_t mu = 0; mu <= model_.order(); ++mu) {
      if (mu < incident.size()) acc.noalias() += in_coeff_[mu] * incident[mu];
      if (mu < outgoing.size()) acc.noalias() += out_coeff_[mu] * outgoing[mu];
    }
    return -acc;
  }

 private:
  LinearModel model_;
  std::vector<Matrix> in_coeff_;
  std::vector<Matrix> out_coeff_;
};

inline Vector reflect_recursive(const LinearModel& model, std::span<const Vector> incident,
                               std::span<const Vector> outgoing) {
  return StepRecursion(model)(incident, outgoing);
}

struct KLMN {
  Matrix K, L, M, N;
};

/// First-order propagator coefficients of a time-independent model of
/// order ≤ 1:
///   K = −Id − φ₀⁻¹ψ₀ nb,  L = −φ₀⁻¹,
///   M = φ₁ + (φ₁ + ψ₀ nb) K,  N = −(φ₁ + ψ₀ nb) φ₀⁻¹.
inline KLMN klmn(const LinearModel& model) {
  if (model.time_dependent()) throw ModelError("klmn requires time-independent coefficients");
  if (model.order() > 1)
    throw ModelError("klmn requires a model of order <= 1 (got " + std::to_string(model.order()) +
                     ")");
  const auto n = model.dim();
  const Matrix& inv = model.phi0_inverse();
  const Matrix psi_nb = model.psi(0) * model.nb();
  const Matrix a = model.phi(1) + psi_nb;
  KLMN out;
  out.K = -Matrix::Identity(n, n) - inv * psi_nb;
  out.L = -inv;
  out.M = model.phi(1) + a * out.K;
  out.N = -a * inv;
  return out;
}

/// One deflected scattering step: (z_out, d) = [[K, L], [M, N]] (z_in, d_prev).
inline std::pair<Vector, Vector> deflected_step(const KLMN& p, const Vector& incident,
                                                const Vector& d_prev) {
  return {p.K * incident + p.L * d_prev, p.M * incident + p.N * d_prev};
}

/// Gauge change of the deflection space: L·I⁻¹, I·M, I·N·I⁻¹; K unchanged.
inline KLMN gauge_transform(const KLMN& p, const Matrix& gauge) {
  if (gauge.rows() != gauge.cols() || gauge.rows() != p.N.rows())
    throw ModelError("gauge matrix has the wrong shape");
  Eigen::FullPivLU<Matrix> lu(gauge);
  if (!lu.isInvertible() || !(lu.rcond() > kSingularRcond))
    throw ModelError("gauge matrix is singular");
  const Matrix inv = lu.inverse();
  return {p.K, p.L * inv, gauge * p.M, gauge * p.N * inv};
}

class StabilityError : public std::runtime_error {
 public:
  StabilityError(const std::string& what, double residual)
      : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

inline constexpr int kEigenMaxIterations = 10000;
inline constexpr double kEigenTolerance = 1e-10;

/// max |λ| over the eigenvalues of N. This is the spectral radius; it bounds
/// every operator norm from below and is used as the convergence measure
/// ‖N‖ < 1 of the propagator series.
inline double stability_norm(const Matrix& n) {
  if (n.rows() != n.cols()) throw std::invalid_argument("stability_norm needs a square matrix");
  if (n.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es;
  es.setMaxIterations(kEigenMaxIterations);
  es.compute(n, true);
  const Eigen::MatrixXcd vecs = es.eigenvectors();
  const Eigen::VectorXcd vals = es.eigenvalues();
  const Eigen::MatrixXcd nc = n.cast<std::complex<double>>();
  const double scale = std::max(1.0, n.norm());
  const double residual = (nc * vecs - vecs * vals.asDiagonal()).norm() / scale;
  if (es.info() != Eigen::Success)
    throw StabilityError("eigenvalue iteration did not converge", residual);
  if (!(residual <= std::sqrt(kEigenTolerance)))
    throw StabilityError("eigen decomposition inaccurate", residual);
  return vals.cwiseAbs().maxCoeff();
}

/// Deflection recursion for perturbed equations F + 𝒥 ≡ 0:
///
///   D(t + τ/2) = −φ₀⁻¹ { 𝒥_t + Σ_μ (φ_{μ+1} + ψ_μ nb) D(t − τ/2 − μτ) }
///
/// `perturbation` is 𝒥_t; `previous[μ]` = D(t − τ/2 − μτ).
inline Vector deflection_update(const LinearModel& model, const Vector& perturbation,
                                std::span<const Vector> previous) {
  Vector acc = perturbation;
  for (std::size_t mu = 0; mu < previous.size() && mu <= model.order(); ++mu)
    acc += (model.phi(mu + 1) + model.psi(mu) * model.nb()) * previous[mu];
  return -(model.phi0_inverse() * acc);
}

/// Totals visible to a perturbation at port time t:
/// node_before[μ] = z^n(t − τ/2 − μτ), port[μ] = z^p(t − μτ).
struct PerturbationInput {
  std::span<const Vector> node_before;
  std::span<const Vector> port;
};
using Perturbation = std::function<Vector(const PerturbationInput&)>;

/// Perturbed reflection R̃ = R + D for one cell, stepping on its own
/// histories. R is the unperturbed step recursion applied to z_in.
class DeflectedReflection {
 public:
  DeflectedReflection(LinearModel model, Perturbation perturbation)
      : propagator_(std::move(model)), perturbation_(std::move(perturbation)) {}

  /// Consumes z_in(t + τ/2) and returns z_out(t + τ/2).
  Vector step(const Vector& incident) {
    const auto& model = propagator_.model();
    const std::size_t depth = model.order() + 2;
    push(incident_, incident, depth);

    const Vector w = propagator_(incident_, unperturbed_);

    // z^n(t − τ/2 − μτ) = z_in + z_out of earlier cycles; z^p(t − μτ) =
    // nb (z_in(t + τ/2 − μτ) + z_out(t − τ/2 − μτ)).
    std::vector<Vector> node_before, port;
    for (std::size_t mu = 0; mu + 1 < incident_.size(); ++mu)
      node_before.push_back(incident_[mu + 1] + outgoing_[mu]);
    for (std::size_t mu = 0; mu < incident_.size(); ++mu) {
      Vector out_prev = mu < outgoing_.size() ? outgoing_[mu] : Vector::Zero(model.dim());
      port.push_back(model.nb() * (incident_[mu] + out_prev));
    }
    const Vector j = perturbation_(PerturbationInput{node_before, port});
    const Vector d = deflection_update(model, j, deflection_);

    const Vector out = w + d;
    push(unperturbed_, w, depth);
    push(deflection_, d, depth);
    push(outgoing_, out, depth);
    return out;
  }

  /// D of the most recent step.
  const Vector& last_deflection() const { return deflection_.front(); }

 private:
  static void push(std::vector<Vector>& h, const Vector& v, std::size_t depth) {
    h.insert(h.begin(), v);
    if (h.size() > depth) h.pop_back();
  }

  StepRecursion propagator_;
  Perturbation perturbation_;
  std::vector<Vector> incident_;     // z_in(t + τ/2 − μτ)
  std::vector<Vector> unperturbed_;  // R[z_in] history (before the current step)
  std::vector<Vector> deflection_;   // D history
  std::vector<Vector> outgoing_;     // z_out history
};

/// Reflection map of a DSC system that solves a linear model on the cell's
/// stacked node blocks (face-major) with the step recursion.
class LinearReflectionMap : public ReflectionMap {
 public:
  explicit LinearReflectionMap(LinearModel model) : propagator_(std::move(model)) {}

  void reflect(const ReflectionContext& ctx, std::span<double> outgoing_node) override {
    const auto m = ctx.view.block_dim();
    const auto n = static_cast<Eigen::Index>(ctx.num_faces * m);
    if (n != propagator_.model().dim())
      throw MapError("linear reflection model dimension " +
                     std::to_string(propagator_.model().dim()) + " does not match cell block " +
                     std::to_string(n));
    const std::size_t p = propagator_.order();
    std::vector<Vector> incident, outgoing;
    for (std::size_t mu = 0; mu <= std::min(p, ctx.step); ++mu)
      incident.push_back(gather(ctx, mu, false));
    for (std::size_t mu = 1; mu <= std::min(p, ctx.step); ++mu)
      outgoing.push_back(gather(ctx, mu, true));
    const Vector out = propagator_(incident, outgoing);
    for (Eigen::Index i = 0; i < n; ++i) outgoing_node[static_cast<std::size_t>(i)] = out[i];
  }

 private:
  static Vector gather(const ReflectionContext& ctx, std::size_t mu, bool out) {
    const auto m = ctx.view.block_dim();
    Vector v(static_cast<Eigen::Index>(ctx.num_faces * m));
    for (std::size_t f = 0; f < ctx.num_faces; ++f) {
      const auto blk = out ? ctx.view.out_node(ctx.first_channel + f, mu)
                           : ctx.view.in_node(ctx.first_channel + f, mu);
      for (std::size_t c = 0; c < m; ++c) v[static_cast<Eigen::Index>(f * m + c)] = blk[c];
    }
    return v;
  }

  StepRecursion propagator_;
};

/// Connection map solving the dual linear model
///   Σ_μ φ_μ z^p(t + τ/2 − μτ) + ψ_μ z^n(t − μτ) ≡ 0
/// on the face's stacked port blocks: the step recursion with port and node,
/// incident and outgoing exchanged.
class LinearConnectionMap : public ConnectionMap {
 public:
  explicit LinearConnectionMap(LinearModel model) : propagator_(std::move(model)) {}

  void connect(const ConnectionContext& ctx, std::span<double> incident_port) override {
    const auto m = ctx.view.block_dim();
    const auto n = static_cast<Eigen::Index>(ctx.channels.size() * m);
    if (n != propagator_.model().dim())
      throw MapError("linear connection model dimension does not match face block");
    const std::size_t p = propagator_.order();
    std::vector<Vector> outgoing, incident;
    for (std::size_t mu = 0; mu <= std::min(p, ctx.step); ++mu)
      outgoing.push_back(gather(ctx, mu, true));
    for (std::size_t mu = 1; mu <= std::min(p, ctx.step); ++mu)
      incident.push_back(gather(ctx, mu, false));
    const Vector in = propagator_(outgoing, incident);
    for (Eigen::Index i = 0; i < n; ++i) incident_port[static_cast<std::size_t>(i)] = in[i];
  }

 private:
  static Vector gather(const ConnectionContext& ctx, std::size_t mu, bool out) {
    const auto m = ctx.view.block_dim();
    Vector v(static_cast<Eigen::Index>(ctx.channels.size() * m));
    for (std::size_t s = 0; s < ctx.channels.size(); ++s) {
      const auto blk = out ? ctx.view.out_port(ctx.channels[s], mu)
                           : ctx.view.in_port(ctx.channels[s], mu);
      for (std::size_t c = 0; c < m; ++c) v[static_cast<Eigen::Index>(s * m + c)] = blk[c];
    }
    return v;
  }

  StepRecursion propagator_;
};

/// Per-cell spectral radii of N against the bound 1.
struct StabilityReport {
  std::vector<double> radius;
  double max_radius = 0.0;
  std::size_t worst_cell = 0;
  double tau = 0.0;

  bool pass() const { return max_radius < 1.0; }

  std::vector<std::size_t> failing_cells() const {
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < radius.size(); ++c)
      if (!(radius[c] < 1.0)) out.push_back(c);
    return out;
  }

  std::string to_text(bool all_cells = true) const {
    std::ostringstream os;
    os.precision(12);
    os << "tau " << tau << '\n';
    if (all_cells)
      for (std::size_t c = 0; c < radius.size(); ++c)
        os << "cell " << c << " spectral_radius " << radius[c] << '\n';
    os << "max spectral_radius " << max_radius << " (cell " << worst_cell << ")\n";
    os << (pass() ? "PASS" : "FAIL") << " (bound 1)\n";
    return os.str();
  }
};

}  // namespace dsc
