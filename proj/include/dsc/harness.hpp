#pragma once

// Transverse heat-conduction experiment: a slab of distorted hexahedra,
// Heaviside temperature step on one side, adiabatic elsewhere, far-side
// temperature compared with the analytic series.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dsc/geometry.hpp"
#include "dsc/heat_model.hpp"
#include "dsc/mesh.hpp"

namespace dsc {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when the requested time step fails the per-cell spectral check.
class StabilityRefusal : public std::runtime_error {
 public:
  explicit StabilityRefusal(StabilityReport report)
      : std::runtime_error(describe(report)), report_(std::move(report)) {}
  const StabilityReport& report() const { return report_; }

 private:
  static std::string describe(const StabilityReport& r) {
    std::ostringstream os;
    os.precision(12);
    const auto bad = r.failing_cells();
    os << "time step " << r.tau << " refused: " << bad.size()
       << " cell(s) with spectral radius >= 1";
    for (std::size_t i = 0; i < bad.size() && i < 10; ++i)
      os << (i == 0 ? ": " : ", ") << "cell " << bad[i] << " = " << r.radius[bad[i]];
    if (bad.size() > 10) os << ", ...";
    return os.str();
  }
  StabilityReport report_;
};

// ---------------------------------------------------------------------------
// Mesh generation

/// Deterministic uniform doubles in [0, 1) from a 64-bit Mersenne twister.
class UnitRandom {
 public:
  explicit UnitRandom(std::uint64_t seed) : engine_(seed) {}
  double operator()() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
};

/// nx × ny × nz grid of pitch-sized cells; every vertex is moved by an
/// offset of length ≤ amplitude, vertices on the outer planes only within
/// those planes. All cells use material "default".
inline Mesh generate_distorted_mesh(std::size_t nx, std::size_t ny, std::size_t nz, double pitch,
                                   double amplitude, std::uint64_t seed,
                                   Material material = Material{}) {
  if (nx == 0 || ny == 0 || nz == 0) throw std::invalid_argument("grid dimensions must be positive");
  if (!(pitch > 0.0)) throw std::invalid_argument("pitch must be positive");
  if (!(amplitude >= 0.0) || !(amplitude < 0.5 * pitch))
    throw std::invalid_argument("distortion amplitude must lie in [0, 0.5*pitch)");

  Mesh mesh;
  mesh.materials["default"] = material;
  const std::array<std::size_t, 3> n{nx, ny, nz};
  auto vid = [&](std::size_t i, std::size_t j, std::size_t k) {
    return i + (nx + 1) * (j + (ny + 1) * k);
  };
  UnitRandom rng(seed);
  mesh.vertices.resize((nx + 1) * (ny + 1) * (nz + 1));
  for (std::size_t k = 0; k <= nz; ++k)
    for (std::size_t j = 0; j <= ny; ++j)
      for (std::size_t i = 0; i <= nx; ++i) {
        const std::array<std::size_t, 3> ijk{i, j, k};
        Vec3 d;
        do {
          d = Vec3(2.0 * rng() - 1.0, 2.0 * rng() - 1.0, 2.0 * rng() - 1.0);
        } while (d.squaredNorm() > 1.0);
        for (int a = 0; a < 3; ++a)
          if (ijk[a] == 0 || ijk[a] == n[a]) d[a] = 0.0;
        mesh.vertices[vid(i, j, k)] =
            pitch * Vec3(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)) +
            amplitude * d;
      }

  for (std::size_t k = 0; k < nz; ++k)
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i) {
        CellTopology cell;
        for (std::size_t v = 0; v < kVerticesPerCell; ++v)
          cell.vertex_ids[v] = vid(i + (v & 1U), j + ((v >> 1) & 1U), k + ((v >> 2) & 1U));
        cell.material_id = "default";
        mesh.cells.push_back(cell);
      }
  build_faces(mesh);
  try {
    compute_all_geometry(mesh);
  } catch (const GeometryError& e) {
    throw MeshError(std::string("distorted mesh invalid (reduce amplitude): ") + e.what());
  }
  return mesh;
}

// ---------------------------------------------------------------------------
// Analytic oracle

/// Slab 0 ≤ x ≤ L, initially 0, held at T₀ at x = 0 from t = 0, insulated
/// at x = L.
struct AnalyticSlabOracle {
  double length = 1.0;
  double alpha = 1.0;
  double amplitude = 1.0;
  std::size_t max_terms = 10'000'000;
  double relative_cutoff = 1e-12;

  double temperature(double x, double t) const {
    if (!(x >= 0.0) || x > length * (1.0 + 1e-12)) throw std::domain_error("x outside the slab");
    if (t < 0.0) throw std::domain_error("negative time");
    if (t == 0.0) return x > 0.0 ? 0.0 : amplitude;
    double sum = 0.0;
    for (std::size_t n = 0; n < max_terms; ++n) {
      const double k = (2.0 * static_cast<double>(n) + 1.0) * M_PI / (2.0 * length);
      const double decay = std::exp(-alpha * k * k * t);
      const double bound = 4.0 / ((2.0 * static_cast<double>(n) + 1.0) * M_PI) * decay;
      if (bound < relative_cutoff) break;
      sum += bound * std::sin(k * x);
    }
    return amplitude * (1.0 - sum);
  }
};

// ---------------------------------------------------------------------------
// Experiment

enum class Direction { horizontal, vertical };

inline std::string to_string(Direction d) {
  return d == Direction::horizontal ? "horizontal" : "vertical";
}

struct ExperimentConfig {
  // mesh source: generator unless mesh_file is set
  std::string mesh_file;
  std::size_t nx = 20, ny = 20, nz = 1;
  double pitch = 1.0;
  double amplitude = 0.3;
  std::uint64_t seed = 1;
  Material material{1.0, 1.0};

  double tau = 0.0;  // ≤ 0: automatic
  std::size_t n_steps = 0;  // 0: run to the end of the window
  std::vector<Direction> directions{Direction::horizontal, Direction::vertical};
  double step_amplitude = 1.0;
  double onset = 0.0;
  double window_begin = 0.1;  // in units of L²/α
  double window_end = 3.0;
  double tolerance = 0.02;
  std::size_t output_every = 1;
  std::string output;
};

namespace detail {

template <class T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j, const std::string& base_dir = {}) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  ExperimentConfig c;
  if (j.contains("mesh")) {
    const auto& m = j["mesh"];
    if (m.contains("file")) {
      c.mesh_file = m["file"].get<std::string>();
      if (!base_dir.empty() && !c.mesh_file.empty() && c.mesh_file.front() != '/')
        c.mesh_file = base_dir + "/" + c.mesh_file;
    } else if (m.contains("generator")) {
      const auto& g = m["generator"];
      c.nx = detail::get_or<std::size_t>(g, "nx", c.nx);
      c.ny = detail::get_or<std::size_t>(g, "ny", c.ny);
      c.nz = detail::get_or<std::size_t>(g, "nz", c.nz);
      c.pitch = detail::get_or<double>(g, "pitch", c.pitch);
      c.amplitude = detail::get_or<double>(g, "amplitude", c.amplitude);
      c.seed = detail::get_or<std::uint64_t>(g, "seed", c.seed);
    } else {
      throw ConfigError("config: 'mesh' needs 'file' or 'generator'");
    }
  }
  if (j.contains("material")) {
    c.material.lambda_h = detail::get_or<double>(j["material"], "lambda_h", c.material.lambda_h);
    c.material.c_v = detail::get_or<double>(j["material"], "c_v", c.material.c_v);
    if (!(c.material.lambda_h > 0.0) || !(c.material.c_v > 0.0))
      throw ConfigError("config: material constants must be positive");
  }
  if (j.contains("tau")) {
    if (j["tau"].is_string()) {
      if (j["tau"].get<std::string>() != "auto") throw ConfigError("config: tau must be a number or \"auto\"");
      c.tau = 0.0;
    } else {
      c.tau = detail::get_or<double>(j, "tau", 0.0);
      if (!(c.tau > 0.0)) throw ConfigError("config: tau must be positive");
    }
  }
  c.n_steps = detail::get_or<std::size_t>(j, "n_steps", c.n_steps);
  if (j.contains("direction")) {
    const auto d = j["direction"].get<std::string>();
    if (d == "horizontal") c.directions = {Direction::horizontal};
    else if (d == "vertical") c.directions = {Direction::vertical};
    else if (d == "both") c.directions = {Direction::horizontal, Direction::vertical};
    else throw ConfigError("config: direction must be horizontal, vertical or both");
  }
  c.step_amplitude = detail::get_or<double>(j, "step_amplitude", c.step_amplitude);
  c.onset = detail::get_or<double>(j, "onset", c.onset);
  if (j.contains("window")) {
    const auto w = j["window"].get<std::vector<double>>();
    if (w.size() != 2 || !(w[0] >= 0.0) || !(w[1] > w[0]))
      throw ConfigError("config: window must be [begin, end] with 0 <= begin < end");
    c.window_begin = w[0];
    c.window_end = w[1];
  }
  c.tolerance = detail::get_or<double>(j, "tolerance", c.tolerance);
  c.output_every = std::max<std::size_t>(1, detail::get_or<std::size_t>(j, "output_every", c.output_every));
  c.output = detail::get_or<std::string>(j, "output", c.output);
  if (!c.output.empty() && !base_dir.empty() && c.output.front() != '/')
    c.output = base_dir + "/" + c.output;
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  const auto slash = path.find_last_of('/');
  return parse_config(j, slash == std::string::npos ? std::string{} : path.substr(0, slash));
}

inline Mesh experiment_mesh(const ExperimentConfig& c) {
  if (c.mesh_file.empty())
    return generate_distorted_mesh(c.nx, c.ny, c.nz, c.pitch, c.amplitude, c.seed, c.material);
  std::ifstream in(c.mesh_file);
  if (!in) throw ConfigError("cannot open mesh " + c.mesh_file);
  return load_mesh(in);
}

struct DispersionRow {
  double t;
  double T_dsc;
  double T_analytic;
  double rel_error;
};

struct DirectionResult {
  Direction direction = Direction::horizontal;
  double tau = 0.0;
  std::size_t n_steps = 0;
  double length = 0.0;
  double alpha = 0.0;
  double probe_x = 0.0;   // mean probe distance from the heated side
  std::vector<DispersionRow> rows;  // samples inside the window
  double max_rel_error = 0.0;
  bool pass = false;
};

struct DispersionReport {
  std::vector<DirectionResult> results;
  StabilityReport stability;
  bool pass() const {
    return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.pass; });
  }
};

namespace detail {

/// Boundary faces lying in the plane coordinate[axis] = value.
inline std::vector<std::size_t> faces_in_plane(const Mesh& mesh, int axis, double value,
                                               double tol) {
  std::vector<std::size_t> out;
  for (auto f : mesh.boundary_faces) {
    bool in = true;
    for (auto v : mesh.faces[f].vertex_ids) in = in && std::abs(mesh.vertices[v][axis] - value) <= tol;
    if (in) out.push_back(f);
  }
  return out;
}

}  // namespace detail

/// Runs one propagation direction on a prepared mesh.
inline DirectionResult run_direction(const Mesh& mesh, const ExperimentConfig& c, Direction dir) {
  const int axis = dir == Direction::horizontal ? 0 : 1;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& v : mesh.vertices) {
    lo = std::min(lo, v[axis]);
    hi = std::max(hi, v[axis]);
  }
  const double length = hi - lo;
  const double tol = 1e-9 * std::max(1.0, length);
  const auto heated = detail::faces_in_plane(mesh, axis, lo, tol);
  const auto far = detail::faces_in_plane(mesh, axis, hi, tol);
  if (heated.empty() || far.empty()) throw ConfigError("mesh has no planar heated/far side");

  const Material mat = mesh.material_of(0);
  for (std::size_t cell = 0; cell < mesh.num_cells(); ++cell) {
    const auto& m = mesh.material_of(cell);
    if (m.lambda_h != mat.lambda_h || m.c_v != mat.c_v)
      throw ConfigError("dispersion test needs a homogeneous material");
  }

  HeatSystem sys(mesh, c.tau);
  const auto report = sys.stability_report();
  if (!report.pass()) throw StabilityRefusal(report);
  for (auto f : heated) sys.set_boundary(f, BoundaryCondition::fixed(c.step_amplitude, c.onset));

  std::vector<std::size_t> probe;
  double probe_x = 0.0;
  for (auto f : far) probe.push_back(mesh.faces[f].sides[0].cell);
  std::sort(probe.begin(), probe.end());
  probe.erase(std::unique(probe.begin(), probe.end()), probe.end());
  for (auto cell : probe) probe_x += sys.geometry()[cell].node_position[axis] - lo;
  probe_x /= static_cast<double>(probe.size());

  DirectionResult r;
  r.direction = dir;
  r.tau = sys.tau();
  r.length = length;
  r.alpha = mat.lambda_h / mat.c_v;
  r.probe_x = probe_x;
  const double t_char = length * length / r.alpha;
  const double t_begin = c.window_begin * t_char;
  const double t_end = c.window_end * t_char;
  r.n_steps = c.n_steps > 0 ? c.n_steps
                            : static_cast<std::size_t>(std::ceil(t_end / r.tau - 0.5)) + 1;
  const AnalyticSlabOracle oracle{length, r.alpha, c.step_amplitude};

  double max_err = 0.0, max_an = 0.0;
  auto& engine = sys.engine();
  for (std::size_t k = 0; k < r.n_steps; ++k) {
    engine.step();
    const double t = (static_cast<double>(k) + 0.5) * r.tau;
    if (t < t_begin || t > t_end) continue;
    double T = 0.0;
    for (auto cell : probe) T += sys.temperature(cell);
    T /= static_cast<double>(probe.size());
    const double Ta = t >= c.onset ? oracle.temperature(std::min(probe_x, length), t - c.onset) : 0.0;
    max_err = std::max(max_err, std::abs(T - Ta));
    max_an = std::max(max_an, std::abs(Ta));
    r.rows.push_back({t, T, Ta, 0.0});
  }
  for (auto& row : r.rows)
    row.rel_error = max_an > 0.0 ? std::abs(row.T_dsc - row.T_analytic) / max_an
                                 : (row.T_dsc == row.T_analytic ? 0.0 : std::abs(row.T_dsc));
  r.max_rel_error = max_an > 0.0 ? max_err / max_an : max_err;
  r.pass = !r.rows.empty() && r.max_rel_error <= c.tolerance;
  return r;
}

inline DispersionReport run_dispersion_test(const ExperimentConfig& c) {
  const Mesh mesh = experiment_mesh(c);
  const auto v = validate_regular(mesh);
  if (!v.ok()) throw ConfigError("mesh is not regular: " + v.to_string());
  DispersionReport report;
  for (auto d : c.directions) report.results.push_back(run_direction(mesh, c, d));
  report.stability = HeatSystem(mesh, c.tau).stability_report();
  return report;
}

inline void write_dispersion_csv(std::ostream& os, const DispersionReport& report,
                                 std::size_t every = 1) {
  os << "t,probe,T_dsc,T_analytic,rel_error\n";
  const auto prec = os.precision(17);
  for (const auto& r : report.results)
    for (std::size_t i = 0; i < r.rows.size(); i += std::max<std::size_t>(every, 1)) {
      const auto& row = r.rows[i];
      os << row.t << ',' << to_string(r.direction) << ',' << row.T_dsc << ',' << row.T_analytic
         << ',' << row.rel_error << '\n';
    }
  os.precision(prec);
}

}  // namespace dsc
