#pragma once

// Hexahedral cell geometry: edge, node and face vectors, the coordinate
// matrix β of the node vectors and its transpose inverse γ, volume and the
// face conductance coefficients s.

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsc/mesh.hpp"

namespace dsc {

class GeometryError : public std::runtime_error {
 public:
  GeometryError(std::size_t cell, const std::string& what)
      : std::runtime_error("cell " + std::to_string(cell) + ": " + what), cell_(cell) {}
  std::size_t cell() const { return cell_; }

 private:
  std::size_t cell_;
};

inline constexpr std::size_t kEdgesPerCell = 12;
inline constexpr double kDegeneracyTolerance = 1e-12;

/// Edge table. Edges 4μ..4μ+3 run along local direction μ (from coordinate 0
/// to 1); within a group the two transverse coordinates (taken in cyclic
/// order μ+1, μ+2) step through (0,0), (1,0), (1,1), (0,1). With this order
/// the face formula below selects exactly the four edges bounding face ι and
/// yields outward face vectors.
struct EdgeEnds {
  std::size_t from;
  std::size_t to;
};

inline constexpr std::array<EdgeEnds, kEdgesPerCell> edge_table() {
  constexpr std::array<std::array<std::size_t, 2>, 4> transverse{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
  std::array<EdgeEnds, kEdgesPerCell> table{};
  for (std::size_t dir = 0; dir < 3; ++dir) {
    for (std::size_t n = 0; n < 4; ++n) {
      std::array<std::size_t, 3> coord{};
      coord[(dir + 1) % 3] = transverse[n][0];
      coord[(dir + 2) % 3] = transverse[n][1];
      coord[dir] = 0;
      const std::size_t from = coord[0] + 2 * coord[1] + 4 * coord[2];
      coord[dir] = 1;
      const std::size_t to = coord[0] + 2 * coord[1] + 4 * coord[2];
      table[4 * dir + n] = {from, to};
    }
  }
  return table;
}

struct CellGeometry {
  std::array<Vec3, kEdgesPerCell> edge_vectors;
  std::array<Vec3, 3> node_vectors;
  std::array<Vec3, kFacesPerCell> face_vectors;  // outward area vectors
  Eigen::Matrix3d beta;   // column μ = node vector μ
  Eigen::Matrix3d gamma;  // (βᵀ)⁻¹
  double volume = 0.0;
  Eigen::Matrix<double, 6, 3> s_coeff;  // row ι: λ_H f_ι γ
  Vec3 node_position;
  std::array<Vec3, kFacesPerCell> face_centres;

  /// s_ι^{[ι/2]}, the coefficient multiplying the face's own normal component.
  double normal_coeff(std::size_t face) const { return s_coeff(face, face / 2); }
};

/// (−1)^ι
inline constexpr double face_sign(std::size_t face) { return face % 2 == 0 ? 1.0 : -1.0; }

inline CellGeometry compute_geometry(const std::array<Vec3, kVerticesPerCell>& corners,
                                     double lambda_h, std::size_t cell_id = 0) {
  CellGeometry g;
  constexpr auto table = edge_table();
  double mean_edge = 0.0;
  for (std::size_t e = 0; e < kEdgesPerCell; ++e) {
    g.edge_vectors[e] = corners[table[e].to] - corners[table[e].from];
    mean_edge += g.edge_vectors[e].norm() / kEdgesPerCell;
  }
  for (std::size_t mu = 0; mu < 3; ++mu) {
    g.node_vectors[mu] = 0.25 * (g.edge_vectors[4 * mu] + g.edge_vectors[4 * mu + 1] +
                                 g.edge_vectors[4 * mu + 2] + g.edge_vectors[4 * mu + 3]);
    g.beta.col(static_cast<Eigen::Index>(mu)) = g.node_vectors[mu];
  }

  auto edge = [&](long idx) -> const Vec3& {
    return g.edge_vectors[static_cast<std::size_t>(((idx % 12) + 12) % 12)];
  };
  for (std::size_t f = 0; f < kFacesPerCell; ++f) {
    const long i = static_cast<long>(f);
    const long alt = (f % 2 == 0) ? 1 : -1;
    const Vec3 a = edge(8 + 2 * i) + edge(9 + 2 * (i + alt));
    const Vec3 b = edge(4 + 2 * i) + edge(5 + 2 * i);
    g.face_vectors[f] = face_sign(f) / 4.0 * a.cross(b);
  }

  g.node_position = Vec3::Zero();
  for (const auto& c : corners) g.node_position += c / 8.0;
  for (std::size_t f = 0; f < kFacesPerCell; ++f) {
    g.face_centres[f] = Vec3::Zero();
    for (auto v : local_face_vertices(f)) g.face_centres[f] += corners[v] / 4.0;
  }

  const double det = g.beta.determinant();
  const double scale = mean_edge * mean_edge * mean_edge;
  if (!std::isfinite(det) || std::abs(det) < kDegeneracyTolerance * scale)
    throw GeometryError(cell_id, "degenerate cell (node vectors linearly dependent, det(beta) = " +
                                     std::to_string(det) + ")");
  if (det < 0.0)
    throw GeometryError(cell_id, "inverted cell (left-handed vertex order, det(beta) = " +
                                     std::to_string(det) + ")");
  g.gamma = g.beta.transpose().inverse();

  g.volume = 0.0;
  for (std::size_t f = 0; f < kFacesPerCell; ++f)
    g.volume += (g.face_centres[f] - g.node_position).dot(g.face_vectors[f]) / 3.0;
  if (!(g.volume > 0.0))
    throw GeometryError(cell_id, "non-positive volume " + std::to_string(g.volume));

  for (std::size_t f = 0; f < kFacesPerCell; ++f)
    g.s_coeff.row(static_cast<Eigen::Index>(f)) =
        lambda_h * (g.face_vectors[f].transpose() * g.gamma);
  return g;
}

inline CellGeometry compute_geometry(const Mesh& mesh, std::size_t cell) {
  std::array<Vec3, kVerticesPerCell> corners;
  for (std::size_t v = 0; v < kVerticesPerCell; ++v) corners[v] = mesh.vertex(cell, v);
  return compute_geometry(corners, mesh.material_of(cell).lambda_h, cell);
}

inline std::vector<CellGeometry> compute_all_geometry(const Mesh& mesh) {
  std::vector<CellGeometry> out;
  out.reserve(mesh.num_cells());
  for (std::size_t c = 0; c < mesh.num_cells(); ++c) out.push_back(compute_geometry(mesh, c));
  return out;
}

}  // namespace dsc
