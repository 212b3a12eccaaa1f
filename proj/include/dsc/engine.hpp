#pragma once

// Johns cycle driver. Each step k performs, in order,
//   z_in^n(t+τ/2)  := nb[ C[z_out^p](t) + e(t) ]     (connection, per face)
//   z_out^p(t+τ)   := nb[ R[z_in^n](t+τ/2) ]         (reflection, per cell)
//   t := t + τ
// Within a phase all maps write disjoint partitions; the phases are
// separated by a barrier.
//
// Caveat: excitations act at mesh-boundary faces only and may temporarily
// violate a model's equations there; consistent excitation is the model
// author's responsibility.

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dsc/state.hpp"

namespace dsc {

/// Thrown by a map that cannot produce its output.
class MapError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class StepError : public std::runtime_error {
 public:
  StepError(std::size_t step, const std::string& what)
      : std::runtime_error("step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// Read access to the process history as seen from cycle k. Cycle j holds
/// port quantities at jτ and node quantities at jτ + τ/2; reads before the
/// start of the process return zero.
class CycleView {
 public:
  CycleView(const History<PropagatingField>& history, std::size_t block_dim)
      : history_(&history), m_(block_dim) {}

  std::size_t block_dim() const { return m_; }

  /// z_in^p(kτ − μτ)
  std::span<const double> in_port(std::size_t ch, std::size_t mu) const {
    return PropagatingField::block(history_->at(mu).in_port, m_, ch);
  }
  /// z_out^p(kτ − μτ)
  std::span<const double> out_port(std::size_t ch, std::size_t mu) const {
    return PropagatingField::block(history_->at(mu).out_port, m_, ch);
  }
  /// z_in^n(kτ + τ/2 − μτ)
  std::span<const double> in_node(std::size_t ch, std::size_t mu) const {
    return PropagatingField::block(history_->at(mu).in_node, m_, ch);
  }
  /// z_out^n(kτ + τ/2 − μτ) for μ ≥ 1, read as nb z_out^p of the following
  /// port time.
  std::span<const double> out_node(std::size_t ch, std::size_t mu) const {
    if (mu == 0) throw std::logic_error("out_node(mu = 0) is being computed");
    return PropagatingField::block(history_->at(mu - 1).out_port, m_, ch);
  }
  /// Port total z^p(kτ − μτ).
  double port_total(std::size_t ch, std::size_t comp, std::size_t mu) const {
    return in_port(ch, mu)[comp] + out_port(ch, mu)[comp];
  }
  /// Node total z^n(kτ + τ/2 − μτ), μ ≥ 1.
  double node_total(std::size_t ch, std::size_t comp, std::size_t mu) const {
    return in_node(ch, mu)[comp] + out_node(ch, mu)[comp];
  }

 private:
  const History<PropagatingField>* history_;
  std::size_t m_;
};

struct ConnectionContext {
  std::size_t face;
  std::size_t step;
  double time;  // port time kτ
  double tau;
  const ChannelLayout* layout;
  std::span<const std::size_t> channels;  // one per side
  CycleView view;
};

struct ReflectionContext {
  std::size_t cell;
  std::size_t step;
  double time;  // node time kτ + τ/2
  double tau;
  const ChannelLayout* layout;
  std::size_t first_channel;
  std::size_t num_faces;
  CycleView view;
};

/// Causal operator on one face: produces the incident port blocks of every
/// side (side-major, block_dim values per side) from outgoing-port history.
class ConnectionMap {
 public:
  virtual ~ConnectionMap() = default;
  virtual void connect(const ConnectionContext& ctx, std::span<double> incident_port) = 0;
};

/// Causal operator on one cell: produces the outgoing node blocks of all the
/// cell's channels (face-major) from incident-node history.
class ReflectionMap {
 public:
  virtual ~ReflectionMap() = default;
  virtual void reflect(const ReflectionContext& ctx, std::span<double> outgoing_node) = 0;
};

/// Port process on mesh-boundary faces, added to the connection output.
class Excitation {
 public:
  virtual ~Excitation() = default;
  /// Faces this excitation drives.
  virtual std::vector<std::size_t> targets() const = 0;
  /// Adds e(kτ) for `face` to its incident port block.
  virtual void add(std::size_t face, std::size_t step, double time,
                   std::span<double> incident_port) const = 0;
};

/// Piecewise-constant signals evaluated at port times, one per
/// (face, component) entry.
class PortExcitation : public Excitation {
 public:
  using Signal = std::function<double(std::size_t step, double time)>;

  void drive(std::size_t face, std::size_t component, Signal signal) {
    entries_.push_back({face, component, std::move(signal)});
  }

  std::vector<std::size_t> targets() const override {
    std::vector<std::size_t> out;
    for (const auto& e : entries_) out.push_back(e.face);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  void add(std::size_t face, std::size_t step, double time,
           std::span<double> incident_port) const override {
    for (const auto& e : entries_)
      if (e.face == face) incident_port[e.component] += e.signal(step, time);
  }

  /// Heaviside step of height `amplitude` switching on at the first port
  /// time ≥ onset.
  static Signal step_signal(double amplitude, double onset = 0.0) {
    return [=](std::size_t, double t) { return t >= onset ? amplitude : 0.0; };
  }
  /// Single-step pulse at cycle `at_step`.
  static Signal pulse_signal(double amplitude, std::size_t at_step = 0) {
    return [=](std::size_t k, double) { return k == at_step ? amplitude : 0.0; };
  }
  /// Arbitrary per-step table, zero past its end.
  static Signal table_signal(std::vector<double> values) {
    return [v = std::move(values)](std::size_t k, double) { return k < v.size() ? v[k] : 0.0; };
  }

 private:
  struct Entry {
    std::size_t face;
    std::size_t component;
    Signal signal;
  };
  std::vector<Entry> entries_;
};

struct Probe {
  enum class Timing { port, node };
  std::string id;
  Timing timing = Timing::node;
  std::function<double(const class DSCSystem&)> sample;

  static Probe node_total(std::size_t channel, std::size_t component, std::string id = {});
  static Probe port_total(std::size_t channel, std::size_t component, std::string id = {});
};

struct ProbeSeries {
  std::string id;
  std::vector<double> time;
  std::vector<double> value;
};

/// Mesh layout + connection maps over all faces + reflection maps over all
/// cells + excitation + clock.
class DSCSystem {
 public:
  DSCSystem(ChannelLayout layout, double tau, std::size_t order = 1)
      : layout_(std::move(layout)),
        clock_{tau, 0, Phase::connection},
        history_(order + 1, PropagatingField(layout_.num_channels(), layout_.block_dim())),
        connections_(layout_.num_faces()),
        reflections_(layout_.num_cells()),
        initial_out_port_(layout_.num_channels() * layout_.block_dim(), 0.0) {
    if (!(tau > 0.0)) throw std::invalid_argument("time step must be positive");
    cell_order_.resize(layout_.num_cells());
    std::iota(cell_order_.begin(), cell_order_.end(), 0);
    face_order_.resize(layout_.num_faces());
    std::iota(face_order_.begin(), face_order_.end(), 0);
  }

  const ChannelLayout& layout() const { return layout_; }
  const ProcessClock& clock() const { return clock_; }
  double tau() const { return clock_.tau; }
  std::size_t steps_done() const { return clock_.step; }

  void set_connection(std::size_t face, std::shared_ptr<ConnectionMap> map) {
    connections_.at(face) = std::move(map);
  }
  void set_all_connections(const std::shared_ptr<ConnectionMap>& map) {
    std::fill(connections_.begin(), connections_.end(), map);
  }
  void set_reflection(std::size_t cell, std::shared_ptr<ReflectionMap> map) {
    reflections_.at(cell) = std::move(map);
  }
  void set_all_reflections(const std::shared_ptr<ReflectionMap>& map) {
    std::fill(reflections_.begin(), reflections_.end(), map);
  }

  void set_excitation(std::shared_ptr<const Excitation> e) {
    if (e) {
      for (auto f : e->targets()) {
        if (f >= layout_.num_faces())
          throw std::invalid_argument("excitation targets unknown face " + std::to_string(f));
        if (!layout_.face(f).boundary())
          throw std::invalid_argument("excitation targets interface face " + std::to_string(f) +
                                      "; only mesh-boundary faces may be excited");
      }
      excited_.assign(layout_.num_faces(), false);
      for (auto f : e->targets()) excited_[f] = true;
    }
    excitation_ = std::move(e);
  }

  /// Outgoing port state z_out^p(0). Zero unless set; must be set before the
  /// first step.
  void set_initial_outgoing(std::size_t channel, std::span<const double> block) {
    if (clock_.step != 0) throw std::logic_error("initial state must be set before stepping");
    if (block.size() != layout_.block_dim()) throw std::invalid_argument("block size mismatch");
    std::copy(block.begin(), block.end(),
              initial_out_port_.begin() +
                  static_cast<std::ptrdiff_t>(channel * layout_.block_dim()));
  }

  /// Visitation order within each phase. Results do not depend on it.
  void set_update_order(std::vector<std::size_t> cells, std::vector<std::size_t> faces) {
    if (cells.size() != layout_.num_cells() || faces.size() != layout_.num_faces())
      throw std::invalid_argument("update order must be a permutation");
    cell_order_ = std::move(cells);
    face_order_ = std::move(faces);
  }

  /// Latest completed cycle (ports at kτ, nodes at kτ + τ/2), μ back.
  const PropagatingField& cycle(std::size_t mu = 0) const { return history_.at(mu); }
  CycleView view() const { return CycleView(history_, layout_.block_dim()); }

  void step() {
    check_complete();
    const std::size_t k = clock_.step;
    const std::size_t m = layout_.block_dim();
    // Outgoing node quantities of the previous cycle become outgoing port
    // quantities of this one (z_out^p(t) = nb z_out^n(t − τ/2)).
    std::vector<double> out_port =
        k == 0 ? initial_out_port_ : history_.at(0).out_node;
    PropagatingField& cur = history_.advance();
    cur.out_port = std::move(out_port);

    const double t_port = clock_.port_time();
    clock_.phase = Phase::connection;
    run_phase(face_order_, [&](std::size_t f, std::vector<double>& scratch) {
      const auto& group = layout_.face(f);
      scratch.assign(group.channels.size() * m, 0.0);
      ConnectionContext ctx{f, k, t_port, clock_.tau, &layout_, group.channels, view()};
      connections_[f]->connect(ctx, scratch);
      if (excitation_ && excited_[f]) excitation_->add(f, k, t_port, scratch);
      for (std::size_t s = 0; s < group.channels.size(); ++s) {
        const auto ch = group.channels[s];
        std::copy_n(scratch.begin() + static_cast<std::ptrdiff_t>(s * m), m,
                    cur.in_port.begin() + static_cast<std::ptrdiff_t>(ch * m));
      }
    }, "face");

    // nb: each incident port block becomes the incident node block of the
    // same channel half a step later.
    cur.in_node = cur.in_port;

    const double t_node = clock_.node_time();
    clock_.phase = Phase::reflection;
    run_phase(cell_order_, [&](std::size_t c, std::vector<double>&) {
      const auto first = layout_.first_channel(c);
      const auto nf = layout_.faces_of_cell(c);
      ReflectionContext ctx{c, k, t_node, clock_.tau, &layout_, first, nf, view()};
      std::span<double> out(cur.out_node.data() + first * m, nf * m);
      reflections_[c]->reflect(ctx, out);
    }, "cell");

    ++clock_.step;
    clock_.phase = Phase::connection;
  }

  /// Advances n_steps cycles, sampling every probe when its quantity
  /// switches (port probes at kτ, node probes at kτ + τ/2).
  std::vector<ProbeSeries> run(std::size_t n_steps, const std::vector<Probe>& probes) {
    std::vector<ProbeSeries> series(probes.size());
    for (std::size_t p = 0; p < probes.size(); ++p) {
      series[p].id = probes[p].id;
      series[p].time.reserve(n_steps);
      series[p].value.reserve(n_steps);
    }
    for (std::size_t n = 0; n < n_steps; ++n) {
      const std::size_t k = clock_.step;
      step();
      for (std::size_t p = 0; p < probes.size(); ++p) {
        const double t = probes[p].timing == Probe::Timing::port
                             ? static_cast<double>(k) * clock_.tau
                             : (static_cast<double>(k) + 0.5) * clock_.tau;
        series[p].time.push_back(t);
        series[p].value.push_back(probes[p].sample(*this));
      }
    }
    return series;
  }

 private:
  void check_complete() const {
    for (std::size_t f = 0; f < connections_.size(); ++f)
      if (!connections_[f])
        throw StepError(clock_.step, "face " + std::to_string(f) + " has no connection map");
    for (std::size_t c = 0; c < reflections_.size(); ++c)
      if (!reflections_[c])
        throw StepError(clock_.step, "cell " + std::to_string(c) + " has no reflection map");
  }

  template <class Body>
  void run_phase(const std::vector<std::size_t>& order, Body&& body, const char* what) {
    std::exception_ptr error;
    std::size_t failed = 0;
    const auto n = static_cast<long>(order.size());
#ifdef _OPENMP
#pragma omp parallel
#endif
    {
      std::vector<double> scratch;
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
      for (long i = 0; i < n; ++i) {
        try {
          body(order[static_cast<std::size_t>(i)], scratch);
        } catch (...) {
#ifdef _OPENMP
#pragma omp critical(dsc_phase_error)
#endif
          if (!error || order[static_cast<std::size_t>(i)] < failed) {
            error = std::current_exception();
            failed = order[static_cast<std::size_t>(i)];
          }
        }
      }
    }
    if (error) {
      try {
        std::rethrow_exception(error);
      } catch (const std::exception& e) {
        throw StepError(clock_.step, std::string(what) + " " + std::to_string(failed) + ": " +
                                         e.what());
      }
    }
  }

  ChannelLayout layout_;
  ProcessClock clock_;
  History<PropagatingField> history_;
  std::vector<std::shared_ptr<ConnectionMap>> connections_;
  std::vector<std::shared_ptr<ReflectionMap>> reflections_;
  std::shared_ptr<const Excitation> excitation_;
  std::vector<bool> excited_;
  std::vector<double> initial_out_port_;
  std::vector<std::size_t> cell_order_;
  std::vector<std::size_t> face_order_;
};

inline Probe Probe::node_total(std::size_t channel, std::size_t component, std::string id) {
  if (id.empty()) id = "node:" + std::to_string(channel) + ":" + std::to_string(component);
  return Probe{std::move(id), Timing::node, [=](const DSCSystem& s) {
                 return s.cycle().node_total(channel, component);
               }};
}

inline Probe Probe::port_total(std::size_t channel, std::size_t component, std::string id) {
  if (id.empty()) id = "port:" + std::to_string(channel) + ":" + std::to_string(component);
  return Probe{std::move(id), Timing::port, [=](const DSCSystem& s) {
                 return s.cycle().port_total(channel, component);
               }};
}

/// time,probe_id,value rows, ordered by probe then time.
inline void write_probe_csv(std::ostream& os, const std::vector<ProbeSeries>& series) {
  os << "time,probe_id,value\n";
  const auto prec = os.precision(17);
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.time.size(); ++i)
      os << s.time[i] << ',' << s.id << ',' << s.value[i] << '\n';
  os.precision(prec);
}

}  // namespace dsc
