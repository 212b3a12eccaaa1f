#pragma once

// Regular hexahedral mesh: topology, face enumeration, JSON ingestion and
// the simplicity / connectedness checks.

#include <algorithm>
#include <array>
#include <cstddef>
#include <istream>
#include <iterator>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace dsc {

using Vec3 = Eigen::Vector3d;

inline constexpr std::size_t kFacesPerCell = 6;
inline constexpr std::size_t kVerticesPerCell = 8;

class MeshError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Material {
  double lambda_h = 1.0;  // W/(m K)
  double c_v = 1.0;       // J/(m^3 K)
};

/// Eight vertex indices ordered by local coordinates (i,j,k), v = i + 2j + 4k.
struct CellTopology {
  std::array<std::size_t, kVerticesPerCell> vertex_ids{};
  std::string material_id;
};

/// Local vertex indices on face `face`, ascending. Face 2ρ is the low side of
/// local direction ρ, face 2ρ+1 the high side.
inline std::array<std::size_t, 4> local_face_vertices(std::size_t face) {
  const std::size_t dir = face / 2;
  const std::size_t side = face % 2;
  std::array<std::size_t, 4> out{};
  std::size_t n = 0;
  for (std::size_t v = 0; v < kVerticesPerCell; ++v) {
    const std::size_t coord = (v >> dir) & 1U;
    if (coord == side) out[n++] = v;
  }
  return out;
}

struct CellFace {
  std::size_t cell = 0;
  std::size_t face = 0;  // local index 0..5
  bool operator==(const CellFace&) const = default;
};

/// Geometric quadrilateral shared by one or two (or, for irregular input,
/// more) cells.
struct Face {
  std::array<std::size_t, 4> vertex_ids{};  // sorted
  std::vector<CellFace> sides;
};

struct FaceLink {
  std::size_t face_id = 0;
  std::size_t cell_a = 0;
  std::size_t face_index_a = 0;
  std::size_t cell_b = 0;
  std::size_t face_index_b = 0;
};

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<CellTopology> cells;
  std::vector<Face> faces;
  std::vector<FaceLink> interfaces;
  std::vector<std::size_t> boundary_faces;
  /// cell_faces[c][ι] -> face id
  std::vector<std::array<std::size_t, kFacesPerCell>> cell_faces;
  std::map<std::string, Material> materials;
  /// Optional user labels (from the "id" field); index = position otherwise.
  std::vector<long long> cell_labels;

  std::size_t num_cells() const { return cells.size(); }
  std::size_t num_faces() const { return faces.size(); }
  bool is_boundary(std::size_t face_id) const { return faces[face_id].sides.size() == 1; }

  const Material& material_of(std::size_t cell) const {
    const auto it = materials.find(cells[cell].material_id);
    if (it == materials.end())
      throw MeshError("cell " + std::to_string(cell) + ": unknown material '" +
                      cells[cell].material_id + "'");
    return it->second;
  }

  Vec3 vertex(std::size_t cell, std::size_t local) const {
    return vertices[cells[cell].vertex_ids[local]];
  }
};

/// Enumerates faces, interfaces and the mesh boundary from vertices+cells.
/// Clears any previously derived data.
inline void build_faces(Mesh& mesh) {
  mesh.faces.clear();
  mesh.interfaces.clear();
  mesh.boundary_faces.clear();
  mesh.cell_faces.assign(mesh.cells.size(), {});

  std::map<std::array<std::size_t, 4>, std::size_t> index;
  for (std::size_t c = 0; c < mesh.cells.size(); ++c) {
    for (std::size_t f = 0; f < kFacesPerCell; ++f) {
      std::array<std::size_t, 4> key{};
      const auto local = local_face_vertices(f);
      for (std::size_t n = 0; n < 4; ++n) key[n] = mesh.cells[c].vertex_ids[local[n]];
      std::sort(key.begin(), key.end());
      auto [it, inserted] = index.try_emplace(key, mesh.faces.size());
      if (inserted) mesh.faces.push_back(Face{key, {}});
      mesh.faces[it->second].sides.push_back({c, f});
      mesh.cell_faces[c][f] = it->second;
    }
  }
  for (std::size_t id = 0; id < mesh.faces.size(); ++id) {
    const auto& sides = mesh.faces[id].sides;
    if (sides.size() == 1) {
      mesh.boundary_faces.push_back(id);
    } else if (sides.size() == 2) {
      mesh.interfaces.push_back({id, sides[0].cell, sides[0].face, sides[1].cell, sides[1].face});
    }
  }
}

namespace detail {

inline std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(
                 std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

inline double number_at(const nlohmann::json& j, const std::string& where) {
  if (!j.is_number()) throw MeshError(where + ": expected a number");
  return j.get<double>();
}

}  // namespace detail

/// Parses the JSON mesh format:
///   { "vertices": [[x,y,z],...],
///     "cells": [{"v": [8 ids], "material": id, "id": optional int}, ...],
///     "materials": {id: {"lambda_h": ..., "c_v": ...}} }
/// Faces and interfaces are derived. Regularity is NOT checked here.
inline Mesh load_mesh(std::istream& in) {
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw MeshError("mesh parse error at line " +
                    std::to_string(detail::line_of_offset(text, e.byte)) + ": " + e.what());
  }
  if (!doc.is_object()) throw MeshError("mesh: top level must be an object");
  for (const char* key : {"vertices", "cells"})
    if (!doc.contains(key) || !doc[key].is_array())
      throw MeshError(std::string("mesh: missing array '") + key + "'");

  Mesh mesh;
  const auto& verts = doc["vertices"];
  mesh.vertices.reserve(verts.size());
  for (std::size_t i = 0; i < verts.size(); ++i) {
    const std::string where = "vertex " + std::to_string(i);
    const auto& v = verts[i];
    if (!v.is_array() || v.size() != 3) throw MeshError(where + ": expected [x, y, z]");
    Vec3 p(detail::number_at(v[0], where), detail::number_at(v[1], where),
           detail::number_at(v[2], where));
    if (!p.allFinite()) throw MeshError(where + ": non-finite coordinate");
    mesh.vertices.push_back(p);
  }

  const auto& cells = doc["cells"];
  std::map<long long, std::size_t> seen_labels;
  bool any_label = false;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const std::string where = "cell record " + std::to_string(c);
    const auto& rec = cells[c];
    if (!rec.is_object() || !rec.contains("v") || !rec["v"].is_array() || rec["v"].size() != 8)
      throw MeshError(where + ": expected {\"v\": [8 vertex indices], ...}");
    CellTopology cell;
    for (std::size_t n = 0; n < 8; ++n) {
      const auto& idx = rec["v"][n];
      if (!idx.is_number_integer() || idx.get<long long>() < 0)
        throw MeshError(where + ": vertex index must be a non-negative integer");
      const auto id = idx.get<std::size_t>();
      if (id >= mesh.vertices.size())
        throw MeshError(where + ": vertex index " + std::to_string(id) + " out of range (" +
                        std::to_string(mesh.vertices.size()) + " vertices)");
      cell.vertex_ids[n] = id;
    }
    auto sorted = cell.vertex_ids;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw MeshError(where + ": vertex ids must be distinct");

    if (rec.contains("material")) {
      const auto& m = rec["material"];
      cell.material_id = m.is_string() ? m.get<std::string>() : m.dump();
    } else {
      cell.material_id = "default";
    }

    long long label = static_cast<long long>(c);
    if (rec.contains("id")) {
      if (!rec["id"].is_number_integer()) throw MeshError(where + ": 'id' must be an integer");
      label = rec["id"].get<long long>();
      any_label = true;
    }
    if (auto [it, ok] = seen_labels.try_emplace(label, c); !ok)
      throw MeshError(where + ": duplicate cell id " + std::to_string(label) +
                      " (first used by record " + std::to_string(it->second) + ")");
    mesh.cell_labels.push_back(label);
    mesh.cells.push_back(cell);
  }
  if (!any_label) mesh.cell_labels.clear();

  if (doc.contains("materials")) {
    const auto& mats = doc["materials"];
    if (!mats.is_object()) throw MeshError("mesh: 'materials' must be an object");
    for (const auto& [id, m] : mats.items()) {
      const std::string where = "material '" + id + "'";
      if (!m.is_object() || !m.contains("lambda_h") || !m.contains("c_v"))
        throw MeshError(where + ": expected {\"lambda_h\": ..., \"c_v\": ...}");
      Material mat{detail::number_at(m["lambda_h"], where), detail::number_at(m["c_v"], where)};
      if (!(mat.lambda_h > 0.0) || !(mat.c_v > 0.0))
        throw MeshError(where + ": lambda_h and c_v must be positive");
      mesh.materials[id] = mat;
    }
  }
  for (std::size_t c = 0; c < mesh.cells.size(); ++c) {
    const auto& id = mesh.cells[c].material_id;
    if (!mesh.materials.contains(id)) {
      if (id == "default")
        mesh.materials[id] = Material{};
      else
        throw MeshError("cell record " + std::to_string(c) + ": unknown material '" + id + "'");
    }
  }

  build_faces(mesh);
  return mesh;
}

inline Mesh load_mesh_string(const std::string& text) {
  std::istringstream in(text);
  return load_mesh(in);
}

inline nlohmann::json mesh_to_json(const Mesh& mesh) {
  nlohmann::json doc;
  doc["vertices"] = nlohmann::json::array();
  for (const auto& v : mesh.vertices) doc["vertices"].push_back({v.x(), v.y(), v.z()});
  doc["cells"] = nlohmann::json::array();
  for (std::size_t c = 0; c < mesh.cells.size(); ++c) {
    nlohmann::json rec;
    rec["v"] = mesh.cells[c].vertex_ids;
    rec["material"] = mesh.cells[c].material_id;
    if (!mesh.cell_labels.empty()) rec["id"] = mesh.cell_labels[c];
    doc["cells"].push_back(rec);
  }
  doc["materials"] = nlohmann::json::object();
  for (const auto& [id, m] : mesh.materials)
    doc["materials"][id] = {{"lambda_h", m.lambda_h}, {"c_v", m.c_v}};
  return doc;
}

struct ValidationReport {
  struct OverShared {
    std::size_t face_id;
    std::size_t cell_count;
  };
  std::vector<OverShared> simplicity;       // faces shared by more than two cells
  std::vector<std::size_t> component_sizes;  // > 1 entry means (C) is violated

  bool ok() const { return simplicity.empty() && component_sizes.size() <= 1; }

  std::string to_string() const {
    std::ostringstream os;
    if (ok()) {
      os << "ok";
      return os.str();
    }
    for (const auto& s : simplicity)
      os << "(S) face " << s.face_id << " shared by " << s.cell_count << " cells\n";
    if (component_sizes.size() > 1) {
      os << "(C) " << component_sizes.size() << " disconnected components, sizes:";
      for (auto n : component_sizes) os << ' ' << n;
      os << '\n';
    }
    return os.str();
  }
};

/// Checks simplicity (every face in at most two cells) and connectedness
/// through shared faces. Violations are returned, never thrown.
inline ValidationReport validate_regular(const Mesh& mesh) {
  ValidationReport report;
  std::vector<std::size_t> parent(mesh.cells.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t id = 0; id < mesh.faces.size(); ++id) {
    const auto& sides = mesh.faces[id].sides;
    if (sides.size() > 2) report.simplicity.push_back({id, sides.size()});
    for (std::size_t s = 1; s < sides.size(); ++s) {
      const auto a = find(sides[0].cell), b = find(sides[s].cell);
      if (a != b) parent[a] = b;
    }
  }
  std::map<std::size_t, std::size_t> sizes;
  for (std::size_t c = 0; c < mesh.cells.size(); ++c) ++sizes[find(c)];
  for (const auto& [root, n] : sizes) report.component_sizes.push_back(n);
  std::sort(report.component_sizes.rbegin(), report.component_sizes.rend());
  return report;
}

}  // namespace dsc
