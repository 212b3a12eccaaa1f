#pragma once

// Heat diffusion on hexahedral cells as a DSC process with three components
// per face channel. Face ι carries its normal direction m = ι/2 and sign
// (−1)^ι. Node and port blocks encode
//
//   z_node[ι][m] = 2(−1)^ι T^n,      z_port[ι][m] = 2(−1)^ι T^p[ι],
//   z_node[ι][μ] = T^p[2μ+1] − T^p[2μ]   (μ ≠ m, port temperatures of the cell),
//   z_port[ι][μ] = z_node[ι][μ] half a step earlier.
//
// Heat currents into the cell are J_ι = s_ι · ∇^B T with
// ∇^B T_μ = z_node[ι][μ] − δ_μm z_port[ι][μ].

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dsc/engine.hpp"
#include "dsc/geometry.hpp"
#include "dsc/linear_propagator.hpp"
#include "dsc/mesh.hpp"
#include "dsc/state.hpp"

namespace dsc {

inline constexpr std::size_t kHeatComponents = 3;

inline constexpr std::size_t normal_dir(std::size_t face) { return face / 2; }

/// Snapshot of one cell in the middle of cycle k: z_node and T^n at
/// t − τ/2 (before reflection), z_port and T^p at t.
struct HeatCellState {
  std::array<std::array<double, 3>, kFacesPerCell> z_node{};
  std::array<std::array<double, 3>, kFacesPerCell> z_port{};
  double T_node = 0.0;
  std::array<double, kFacesPerCell> T_port{};

  /// Cell at uniform temperature T (ports equal to the node, no gradients).
  static HeatCellState uniform(double T) {
    HeatCellState s;
    s.T_node = T;
    for (std::size_t f = 0; f < kFacesPerCell; ++f) {
      s.z_node[f][normal_dir(f)] = 2.0 * face_sign(f) * T;
      s.z_port[f][normal_dir(f)] = 2.0 * face_sign(f) * T;
      s.T_port[f] = T;
    }
    return s;
  }

  void set_port_temperature(std::size_t face, double T) {
    T_port[face] = T;
    z_port[face][normal_dir(face)] = 2.0 * face_sign(face) * T;
  }
};

class HeatModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// ∇^B T on face ι: normal component 2(−1)^ι(T^n|_{t−τ/2} − T^p[ι]|_t),
/// tangential components (T^p[2μ+1] − T^p[2μ])|_{t−τ}.
inline Vec3 nabla_b(const HeatCellState& s, std::size_t face) {
  Vec3 g;
  for (std::size_t mu = 0; mu < 3; ++mu) {
    g[static_cast<Eigen::Index>(mu)] =
        s.z_node[face][mu] - (mu == normal_dir(face) ? s.z_port[face][mu] : 0.0);
  }
  return g;
}

/// Heat current into the cell through face ι (W).
inline double heat_current(const CellGeometry& g, const HeatCellState& s, std::size_t face) {
  return g.s_coeff.row(static_cast<Eigen::Index>(face)).dot(nabla_b(s, face));
}

inline double s_dot_node(const CellGeometry& g, const HeatCellState& s, std::size_t face) {
  double acc = 0.0;
  for (std::size_t mu = 0; mu < 3; ++mu)
    acc += g.s_coeff(static_cast<Eigen::Index>(face), static_cast<Eigen::Index>(mu)) *
           s.z_node[face][mu];
  return acc;
}

/// Interface temperature from current conservation and temperature
/// continuity. Writes the port blocks of face ι of ζ and face κ of χ; both
/// encode the same T^p, tangential components are copied from each side's
/// own node block. Returns T^p.
inline double connect_interface(const FaceLink& link, const CellGeometry& gz, HeatCellState& sz,
                                const CellGeometry& gx, HeatCellState& sx) {
  const std::size_t i = link.face_index_a;
  const std::size_t k = link.face_index_b;
  const double sign_ik = face_sign(i) * face_sign(k);
  const double a = gz.normal_coeff(i);
  const double b = sign_ik * gx.normal_coeff(k);
  const double denom = a + b;
  // both terms must pull the same way; a vanishing or cancelling sum means
  // the pairing orientation is inconsistent
  if (!(a * b > 0.0) || !(std::abs(denom) > 0.0) || !std::isfinite(denom))
    throw HeatModelError("degenerate interface between cell " + std::to_string(link.cell_a) +
                         " (face " + std::to_string(i) + ") and cell " +
                         std::to_string(link.cell_b) + " (face " + std::to_string(k) +
                         "): s-denominator " + std::to_string(a) + " + " + std::to_string(b));
  const double zi = (s_dot_node(gz, sz, i) + s_dot_node(gx, sx, k)) / denom;
  const double tp = face_sign(i) * zi / 2.0;
  for (std::size_t mu = 0; mu < 3; ++mu) {
    if (mu != normal_dir(i)) sz.z_port[i][mu] = sz.z_node[i][mu];
    if (mu != normal_dir(k)) sx.z_port[k][mu] = sx.z_node[k][mu];
  }
  sz.set_port_temperature(i, tp);
  sx.set_port_temperature(k, tp);
  return tp;
}

struct BoundaryCondition {
  enum class Kind { adiabatic, fixed_temperature };
  Kind kind = Kind::adiabatic;
  double T_fix = 0.0;
  double onset = 0.0;

  static BoundaryCondition adiabatic() { return {}; }
  static BoundaryCondition fixed(double T, double onset_time = 0.0) {
    return {Kind::fixed_temperature, T, onset_time};
  }
};

/// Port block of a mesh-boundary face at port time t. Adiabatic faces get
/// the port value with zero current; fixed faces hold T_fix from the onset
/// on (0 before). Returns T^p.
inline double connect_boundary(std::size_t face, const BoundaryCondition& bc,
                               const CellGeometry& g, HeatCellState& s, double t,
                               std::size_t cell = 0) {
  for (std::size_t mu = 0; mu < 3; ++mu)
    if (mu != normal_dir(face)) s.z_port[face][mu] = s.z_node[face][mu];
  double tp = 0.0;
  if (bc.kind == BoundaryCondition::Kind::adiabatic) {
    const double sm = g.normal_coeff(face);
    if (!(std::abs(sm) > 0.0))
      throw HeatModelError("degenerate boundary face " + std::to_string(face) + " of cell " +
                           std::to_string(cell));
    tp = face_sign(face) * (s_dot_node(g, s, face) / sm) / 2.0;
  } else {
    tp = t >= bc.onset ? bc.T_fix : 0.0;
  }
  s.set_port_temperature(face, tp);
  return tp;
}

/// Reflection: T^n(t+τ/2) = T^n(t−τ/2) + τ/(c_v V)(S + Σ J), then rewrites
/// z_node with the new temperature (normal replicas) and the port
/// temperature differences (tangential). Returns Σ J.
inline double reflect_cell(const CellGeometry& g, HeatCellState& s, double source, double tau,
                           double c_v) {
  double total = 0.0;
  for (std::size_t f = 0; f < kFacesPerCell; ++f) total += heat_current(g, s, f);
  s.T_node += tau / (c_v * g.volume) * (source + total);
  std::array<double, 3> diff{};
  for (std::size_t mu = 0; mu < 3; ++mu)
    diff[mu] = -0.5 * (s.z_port[2 * mu + 1][mu] + s.z_port[2 * mu][mu]);
  for (std::size_t f = 0; f < kFacesPerCell; ++f)
    for (std::size_t mu = 0; mu < 3; ++mu)
      s.z_node[f][mu] = mu == normal_dir(f) ? 2.0 * face_sign(f) * s.T_node : diff[mu];
  return total;
}

/// Dielectric loss power (W): S = ½ σ V Σ_ν |γ_ν^μ U_μ|².
inline double dielectric_source(const CellGeometry& g, double sigma,
                                const std::array<std::complex<double>, 3>& u) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("conductivity must be non-negative");
  const Eigen::Vector3cd uv(u[0], u[1], u[2]);
  const Eigen::Vector3cd e = g.gamma.cast<std::complex<double>>() * uv;
  return 0.5 * sigma * g.volume * e.squaredNorm();
}

/// σ = 2π f ε tan δ
inline double loss_conductivity(double frequency, double permittivity, double tan_delta) {
  const double sigma = 2.0 * M_PI * frequency * permittivity * tan_delta;
  if (!(sigma >= 0.0)) throw std::invalid_argument("loss parameters give negative conductivity");
  return sigma;
}

/// Shared per-cell data of a heat process.
struct HeatField {
  std::vector<CellGeometry> geometry;
  std::vector<double> c_v;
  std::vector<double> source;
  std::vector<double> T_node;  // current T^n, stored once per cell
};

namespace detail {

/// Cell snapshot from the engine: node totals of the previous cycle and the
/// port totals of the current one.
inline HeatCellState gather_cell(const CycleView& view, std::size_t first_channel, double T_node) {
  HeatCellState s;
  s.T_node = T_node;
  for (std::size_t f = 0; f < kFacesPerCell; ++f) {
    for (std::size_t mu = 0; mu < 3; ++mu) {
      s.z_node[f][mu] = view.node_total(first_channel + f, mu, 1);
      s.z_port[f][mu] = view.port_total(first_channel + f, mu, 0);
    }
    s.T_port[f] = face_sign(f) * s.z_port[f][normal_dir(f)] / 2.0;
  }
  return s;
}

}  // namespace detail

/// Connection over all faces of a heat mesh.
class HeatConnectionMap : public ConnectionMap {
 public:
  HeatConnectionMap(const Mesh& mesh, std::shared_ptr<const HeatField> field,
                    std::vector<BoundaryCondition> face_bc)
      : field_(std::move(field)), bc_(std::move(face_bc)), link_(mesh.num_faces()) {
    for (const auto& l : mesh.interfaces) link_[l.face_id] = l;
  }

  void connect(const ConnectionContext& ctx, std::span<double> incident_port) override {
    const auto& view = ctx.view;
    const auto& layout = *ctx.layout;
    const auto& field = *field_;
    auto write = [&](std::size_t side, std::size_t channel, const std::array<double, 3>& port) {
      for (std::size_t mu = 0; mu < 3; ++mu)
        incident_port[side * 3 + mu] = port[mu] - view.out_port(channel, 0)[mu];
    };
    if (ctx.channels.size() == 2) {
      const auto& l = *link_[ctx.face];
      const std::size_t cha = layout.channel(l.cell_a, l.face_index_a);
      const std::size_t chb = layout.channel(l.cell_b, l.face_index_b);
      HeatCellState sa = face_only(view, cha, l.face_index_a);
      HeatCellState sb = face_only(view, chb, l.face_index_b);
      connect_interface(l, field.geometry[l.cell_a], sa, field.geometry[l.cell_b], sb);
      for (std::size_t side = 0; side < 2; ++side) {
        if (ctx.channels[side] == cha) write(side, cha, sa.z_port[l.face_index_a]);
        else write(side, chb, sb.z_port[l.face_index_b]);
      }
      return;
    }
    const std::size_t ch = ctx.channels[0];
    const std::size_t cell = layout.cell_of(ch);
    const std::size_t f = layout.local_face_of(ch);
    HeatCellState s = face_only(view, ch, f);
    const auto& bc = bc_[ctx.face];
    if (bc.kind == BoundaryCondition::Kind::fixed_temperature) {
      // the imposed value arrives through the excitation; the map itself
      // grounds the normal component
      for (std::size_t mu = 0; mu < 3; ++mu)
        s.z_port[f][mu] = mu == normal_dir(f) ? 0.0 : s.z_node[f][mu];
    } else {
      connect_boundary(f, bc, field.geometry[cell], s, ctx.time, cell);
    }
    write(0, ch, s.z_port[f]);
  }

 private:
  static HeatCellState face_only(const CycleView& view, std::size_t channel, std::size_t face) {
    HeatCellState s;
    for (std::size_t mu = 0; mu < 3; ++mu) s.z_node[face][mu] = view.node_total(channel, mu, 1);
    return s;
  }

  std::shared_ptr<const HeatField> field_;
  std::vector<BoundaryCondition> bc_;
  std::vector<std::optional<FaceLink>> link_;
};

/// Reflection over all cells. Each task updates only its own cell's T^n.
class HeatReflectionMap : public ReflectionMap {
 public:
  explicit HeatReflectionMap(std::shared_ptr<HeatField> field) : field_(std::move(field)) {}

  void reflect(const ReflectionContext& ctx, std::span<double> outgoing_node) override {
    auto& field = *field_;
    const std::size_t c = ctx.cell;
    HeatCellState s = detail::gather_cell(ctx.view, ctx.first_channel, field.T_node[c]);
    reflect_cell(field.geometry[c], s, field.source[c], ctx.tau, field.c_v[c]);
    if (!std::isfinite(s.T_node))
      throw HeatModelError("non-finite temperature in cell " + std::to_string(c));
    field.T_node[c] = s.T_node;
    for (std::size_t f = 0; f < kFacesPerCell; ++f)
      for (std::size_t mu = 0; mu < 3; ++mu)
        outgoing_node[f * 3 + mu] = s.z_node[f][mu] - ctx.view.in_node(ctx.first_channel + f, 0)[mu];
  }

 private:
  std::shared_ptr<HeatField> field_;
};

/// Largest τ with spectral radius below 1 for the cell: c_v V / Σ_ι |s_ι^{ι/2}|.
inline double cell_tau_limit(const CellGeometry& g, double c_v) {
  double sum = 0.0;
  for (std::size_t f = 0; f < kFacesPerCell; ++f) sum += std::abs(g.normal_coeff(f));
  return c_v * g.volume / sum;
}

/// First-order linear model of one cell's reflection in the 18 node
/// components (index 3ι + μ), with the normal rows written through the
/// replica mean of the previous temperature.
inline LinearModel cell_linear_model(const CellGeometry& g, double c_v, double tau) {
  constexpr Eigen::Index n = 18;
  auto idx = [](std::size_t f, std::size_t mu) { return static_cast<Eigen::Index>(3 * f + mu); };
  const double c = 2.0 * tau / (c_v * g.volume);
  Matrix phi0 = Matrix::Identity(n, n);
  Matrix phi1 = Matrix::Zero(n, n);
  Matrix psi0 = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < kFacesPerCell; ++i) {
    const auto row = idx(i, normal_dir(i));
    for (std::size_t k = 0; k < kFacesPerCell; ++k) {
      phi1(row, idx(k, normal_dir(k))) -= face_sign(i) * face_sign(k) / 6.0;
      for (std::size_t nu = 0; nu < 3; ++nu)
        phi1(row, idx(k, nu)) -=
            c * face_sign(i) * g.s_coeff(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(nu));
      psi0(row, idx(k, normal_dir(k))) += c * face_sign(i) * g.normal_coeff(k);
    }
    for (std::size_t mu = 0; mu < 3; ++mu) {
      if (mu == normal_dir(i)) continue;
      psi0(idx(i, mu), idx(2 * mu + 1, mu)) += 0.5;
      psi0(idx(i, mu), idx(2 * mu, mu)) += 0.5;
    }
  }
  // ports seen by the cell with the neighbour temperatures held at zero:
  // normal components grounded, tangential components passed through
  Matrix closure = Matrix::Identity(n, n);
  for (std::size_t i = 0; i < kFacesPerCell; ++i) closure(idx(i, normal_dir(i)), idx(i, normal_dir(i))) = 0.0;
  return LinearModel({phi0, phi1}, {psi0}, closure);
}

inline StabilityReport heat_stability_report(const std::vector<CellGeometry>& geometry,
                                             const std::vector<double>& c_v, double tau) {
  StabilityReport r;
  r.tau = tau;
  r.radius.resize(geometry.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (long c = 0; c < static_cast<long>(geometry.size()); ++c) {
    const auto cc = static_cast<std::size_t>(c);
    r.radius[cc] = stability_norm(klmn(cell_linear_model(geometry[cc], c_v[cc], tau)).N);
  }
  for (std::size_t c = 0; c < r.radius.size(); ++c)
    if (c == 0 || r.radius[c] > r.max_radius) {
      r.max_radius = r.radius[c];
      r.worst_cell = c;
    }
  return r;
}

/// 0.9 · min over cells of c_v V / Σ|s^{ι/2}|.
inline double default_tau(const std::vector<CellGeometry>& geometry, const std::vector<double>& c_v) {
  double lim = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < geometry.size(); ++c)
    lim = std::min(lim, cell_tau_limit(geometry[c], c_v[c]));
  return 0.9 * lim;
}

/// Heat process on a mesh: geometry, boundary conditions, sources, initial
/// temperatures and the DSC engine wired together.
class HeatSystem {
 public:
  /// τ ≤ 0 selects the default time step.
  explicit HeatSystem(Mesh mesh, double tau = 0.0) : mesh_(std::move(mesh)) {
    auto field = std::make_shared<HeatField>();
    field->geometry = compute_all_geometry(mesh_);
    for (std::size_t c = 0; c < mesh_.num_cells(); ++c) field->c_v.push_back(mesh_.material_of(c).c_v);
    field->source.assign(mesh_.num_cells(), 0.0);
    field->T_node.assign(mesh_.num_cells(), 0.0);
    field_ = std::move(field);
    tau_ = tau > 0.0 ? tau : default_tau(field_->geometry, field_->c_v);
    bc_.assign(mesh_.num_faces(), BoundaryCondition::adiabatic());
  }

  const Mesh& mesh() const { return mesh_; }
  double tau() const { return tau_; }
  const std::vector<CellGeometry>& geometry() const { return field_->geometry; }
  const std::vector<double>& c_v() const { return field_->c_v; }
  std::size_t steps_done() const { return engine_ ? engine_->steps_done() : 0; }

  void set_boundary(std::size_t face, BoundaryCondition bc) {
    require_unstarted();
    if (face >= mesh_.num_faces() || !mesh_.is_boundary(face))
      throw std::invalid_argument("boundary condition on non-boundary face " + std::to_string(face));
    bc_[face] = bc;
  }
  void set_source(std::size_t cell, double S) {
    if (!std::isfinite(S)) throw std::invalid_argument("source must be finite");
    field_->source.at(cell) = S;
  }
  void set_initial_temperature(std::vector<double> T) {
    require_unstarted();
    if (T.size() != mesh_.num_cells()) throw std::invalid_argument("one temperature per cell");
    field_->T_node = std::move(T);
  }

  StabilityReport stability_report() const {
    return heat_stability_report(field_->geometry, field_->c_v, tau_);
  }

  DSCSystem& engine() {
    if (!engine_) build();
    return *engine_;
  }

  void step() { engine().step(); }
  void run(std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) step();
  }

  double temperature(std::size_t cell) const { return field_->T_node.at(cell); }
  const std::vector<double>& temperatures() const { return field_->T_node; }

  /// Σ c_v V T^n
  double energy() const {
    double e = 0.0;
    for (std::size_t c = 0; c < mesh_.num_cells(); ++c)
      e += field_->c_v[c] * field_->geometry[c].volume * field_->T_node[c];
    return e;
  }

  /// Current state of a cell as seen by the latest completed cycle: node
  /// quantities of the previous half step, port quantities of this step.
  HeatCellState cell_state(std::size_t cell) {
    auto& e = engine();
    const auto view = e.view();
    return detail::gather_cell(view, e.layout().first_channel(cell), field_->T_node[cell]);
  }

  /// J into the cell through face ι over the latest cycle.
  double face_current(std::size_t cell, std::size_t face) {
    return heat_current(field_->geometry[cell], cell_state(cell), face);
  }

  /// (J_ζ, J_χ) for every interface, from the latest connection phase.
  std::vector<std::pair<double, double>> interface_currents() {
    std::vector<std::pair<double, double>> out;
    out.reserve(mesh_.interfaces.size());
    for (const auto& l : mesh_.interfaces)
      out.emplace_back(face_current(l.cell_a, l.face_index_a), face_current(l.cell_b, l.face_index_b));
    return out;
  }

 private:
  void require_unstarted() const {
    if (engine_) throw std::logic_error("heat system already started");
  }

  void build() {
    auto layout = make_layout(mesh_, kHeatComponents);
    engine_ = std::make_unique<DSCSystem>(layout, tau_, 1);
    engine_->set_all_connections(std::make_shared<HeatConnectionMap>(mesh_, field_, bc_));
    engine_->set_all_reflections(std::make_shared<HeatReflectionMap>(field_));

    auto excitation = std::make_shared<PortExcitation>();
    bool any = false;
    for (std::size_t f = 0; f < mesh_.num_faces(); ++f) {
      if (bc_[f].kind != BoundaryCondition::Kind::fixed_temperature) continue;
      const auto& side = mesh_.faces[f].sides[0];
      excitation->drive(f, normal_dir(side.face),
                        PortExcitation::step_signal(2.0 * face_sign(side.face) * bc_[f].T_fix,
                                                    bc_[f].onset));
      any = true;
    }
    if (any) engine_->set_excitation(excitation);

    // the previous node state enters through the outgoing ports of cycle 0
    for (std::size_t c = 0; c < mesh_.num_cells(); ++c) {
      const double T = field_->T_node[c];
      if (T == 0.0) continue;
      for (std::size_t f = 0; f < kFacesPerCell; ++f) {
        std::array<double, 3> blk{};
        blk[normal_dir(f)] = 2.0 * face_sign(f) * T;
        engine_->set_initial_outgoing(layout.channel(c, f), blk);
      }
    }
  }

  Mesh mesh_;
  std::shared_ptr<HeatField> field_;
  double tau_ = 0.0;
  std::vector<BoundaryCondition> bc_;
  std::unique_ptr<DSCSystem> engine_;
};

}  // namespace dsc
