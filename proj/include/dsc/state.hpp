#pragma once

// Propagating-field containers: paired port/node blocks per (cell, face)
// channel, the node-boundary map, in/out split and bounded history.

#include <cassert>
#include <cstddef>
#include <deque>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dsc/mesh.hpp"

namespace dsc {

/// Port and node components of one scattering channel. Both blocks have the
/// same dimension.
struct PairedBlock {
  std::vector<double> port;
  std::vector<double> node;

  bool operator==(const PairedBlock&) const = default;
};

/// Node-boundary map: swaps port and node components. Involutive.
inline PairedBlock nb(PairedBlock block) {
  std::swap(block.port, block.node);
  return block;
}

inline const std::vector<double>& port_component(const PairedBlock& b) { return b.port; }
inline const std::vector<double>& node_component(const PairedBlock& b) { return b.node; }

/// Back-in-time sequence [z]_μ(t) = z(t − μτ) over a ring of fixed depth.
/// States before the first push (negative time) read as the zero state.
template <class State>
class History {
 public:
  History(std::size_t depth, State zero) : depth_(depth), zero_(std::move(zero)) {
    if (depth_ == 0) throw std::invalid_argument("History depth must be at least 1");
  }

  std::size_t depth() const { return depth_; }
  std::size_t size() const { return ring_.size(); }

  /// Makes `s` the current state (μ = 0); older states shift by one.
  void push(State s) {
    if (ring_.size() == depth_) ring_.pop_back();
    ring_.push_front(std::move(s));
  }

  /// Pushes a copy of the zero state and returns it for in-place filling.
  State& advance() {
    push(zero_);
    return ring_.front();
  }

  const State& at(std::size_t mu) const {
    if (mu >= ring_.size()) {
      if (ring_.size() == depth_)
        throw std::out_of_range("history depth " + std::to_string(depth_) +
                                " exceeded (requested mu = " + std::to_string(mu) + ")");
      return zero_;
    }
    return ring_[mu];
  }

  State& current() {
    assert(!ring_.empty());
    return ring_.front();
  }
  const State& zero() const { return zero_; }

 private:
  std::size_t depth_;
  State zero_;
  std::deque<State> ring_;
};

/// History lookup with the negative-time convention.
template <class State>
const State& history_at(const History<State>& h, std::size_t mu) {
  return h.at(mu);
}

enum class Phase { connection, reflection };

/// Port components switch at kτ, node components at (k + 1/2)τ.
struct ProcessClock {
  double tau = 1.0;
  std::size_t step = 0;
  Phase phase = Phase::connection;

  double port_time() const { return static_cast<double>(step) * tau; }
  double node_time() const { return (static_cast<double>(step) + 0.5) * tau; }
};

/// Flat channel indexing: a channel is one (cell, face) pair; every channel
/// carries a port block and a node block of dimension `block_dim`.
class ChannelLayout {
 public:
  struct FaceGroup {
    std::vector<std::size_t> channels;  // one (mesh boundary) or two (interface)
    bool boundary() const { return channels.size() == 1; }
  };

  ChannelLayout() = default;

  ChannelLayout(std::vector<std::size_t> faces_per_cell, std::size_t block_dim,
                std::vector<FaceGroup> faces)
      : block_dim_(block_dim), faces_(std::move(faces)) {
    cell_offset_.reserve(faces_per_cell.size() + 1);
    cell_offset_.push_back(0);
    for (auto n : faces_per_cell) cell_offset_.push_back(cell_offset_.back() + n);
    channel_cell_.resize(cell_offset_.back());
    for (std::size_t c = 0; c + 1 < cell_offset_.size(); ++c)
      for (auto ch = cell_offset_[c]; ch < cell_offset_[c + 1]; ++ch) channel_cell_[ch] = c;
    channel_face_.assign(cell_offset_.back(), kNone);
    for (std::size_t f = 0; f < faces_.size(); ++f) {
      if (faces_[f].channels.empty() || faces_[f].channels.size() > 2)
        throw std::invalid_argument("face " + std::to_string(f) + " must have one or two sides");
      for (auto ch : faces_[f].channels) {
        if (ch >= channel_face_.size() || channel_face_[ch] != kNone)
          throw std::invalid_argument("face " + std::to_string(f) + ": bad channel " +
                                      std::to_string(ch));
        channel_face_[ch] = f;
      }
    }
    for (std::size_t ch = 0; ch < channel_face_.size(); ++ch)
      if (channel_face_[ch] == kNone)
        throw std::invalid_argument("channel " + std::to_string(ch) + " belongs to no face");
  }

  std::size_t block_dim() const { return block_dim_; }
  std::size_t num_cells() const { return cell_offset_.empty() ? 0 : cell_offset_.size() - 1; }
  std::size_t num_channels() const { return channel_cell_.size(); }
  std::size_t num_faces() const { return faces_.size(); }
  std::size_t faces_of_cell(std::size_t cell) const {
    return cell_offset_[cell + 1] - cell_offset_[cell];
  }
  std::size_t channel(std::size_t cell, std::size_t local_face) const {
    return cell_offset_[cell] + local_face;
  }
  std::size_t first_channel(std::size_t cell) const { return cell_offset_[cell]; }
  std::size_t cell_of(std::size_t channel) const { return channel_cell_[channel]; }
  std::size_t local_face_of(std::size_t channel) const {
    return channel - cell_offset_[channel_cell_[channel]];
  }
  std::size_t face_of(std::size_t channel) const { return channel_face_[channel]; }
  const FaceGroup& face(std::size_t f) const { return faces_[f]; }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::size_t block_dim_ = 0;
  std::vector<std::size_t> cell_offset_;
  std::vector<std::size_t> channel_cell_;
  std::vector<std::size_t> channel_face_;
  std::vector<FaceGroup> faces_;
};

/// Channel layout of a hexahedral mesh: channel = 6·cell + ι, one face group
/// per mesh face (same numbering as Mesh::faces).
inline ChannelLayout make_layout(const Mesh& mesh, std::size_t block_dim) {
  std::vector<ChannelLayout::FaceGroup> groups(mesh.num_faces());
  for (std::size_t f = 0; f < mesh.num_faces(); ++f) {
    if (mesh.faces[f].sides.size() > 2)
      throw MeshError("face " + std::to_string(f) + " is shared by " +
                      std::to_string(mesh.faces[f].sides.size()) + " cells (mesh not simple)");
    for (const auto& side : mesh.faces[f].sides)
      groups[f].channels.push_back(side.cell * kFacesPerCell + side.face);
  }
  return ChannelLayout(std::vector<std::size_t>(mesh.num_cells(), kFacesPerCell), block_dim,
                       std::move(groups));
}

/// One cycle k of a DSC process: port quantities at kτ and node quantities
/// at kτ + τ/2, split into incident and outgoing parts. Totals are sums.
struct PropagatingField {
  std::size_t block_dim = 0;
  std::vector<double> in_port, out_port, in_node, out_node;

  PropagatingField() = default;
  PropagatingField(std::size_t channels, std::size_t m)
      : block_dim(m),
        in_port(channels * m, 0.0),
        out_port(channels * m, 0.0),
        in_node(channels * m, 0.0),
        out_node(channels * m, 0.0) {}

  std::size_t num_channels() const { return block_dim == 0 ? 0 : in_port.size() / block_dim; }

  static std::span<double> block(std::vector<double>& v, std::size_t m, std::size_t ch) {
    return {v.data() + ch * m, m};
  }
  static std::span<const double> block(const std::vector<double>& v, std::size_t m,
                                       std::size_t ch) {
    return {v.data() + ch * m, m};
  }

  double port_total(std::size_t ch, std::size_t comp) const {
    return in_port[ch * block_dim + comp] + out_port[ch * block_dim + comp];
  }
  double node_total(std::size_t ch, std::size_t comp) const {
    return in_node[ch * block_dim + comp] + out_node[ch * block_dim + comp];
  }

  /// Paired totals (port at kτ, node at kτ + τ/2) of one channel.
  PairedBlock totals(std::size_t ch) const {
    PairedBlock b{std::vector<double>(block_dim), std::vector<double>(block_dim)};
    for (std::size_t c = 0; c < block_dim; ++c) {
      b.port[c] = port_total(ch, c);
      b.node[c] = node_total(ch, c);
    }
    return b;
  }
};

/// Debug dump of the totals: cell,face,component,z_port,z_node.
inline void write_state_csv(std::ostream& os, const ChannelLayout& layout,
                            const PropagatingField& field) {
  os << "cell,face,component,z_port,z_node\n";
  const auto prec = os.precision(17);
  for (std::size_t ch = 0; ch < layout.num_channels(); ++ch)
    for (std::size_t c = 0; c < layout.block_dim(); ++c)
      os << layout.cell_of(ch) << ',' << layout.local_face_of(ch) << ',' << c << ','
         << field.port_total(ch, c) << ',' << field.node_total(ch, c) << '\n';
  os.precision(prec);
}

}  // namespace dsc
