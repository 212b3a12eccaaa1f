#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "dsc/harness.hpp"
#include "oracles.hpp"

TEST(DistortedMesh, ZeroAmplitudeIsCubeGrid) {
  const auto mesh = dsc::generate_distorted_mesh(3, 2, 2, 0.5, 0.0, 1);
  EXPECT_EQ(mesh.num_cells(), 12u);
  for (std::size_t c = 0; c < mesh.num_cells(); ++c) {
    const auto g = dsc::compute_geometry(mesh, c);
    EXPECT_NEAR(g.volume, 0.125, 1e-15);
    EXPECT_LT((g.beta - 0.5 * Eigen::Matrix3d::Identity()).norm(), 1e-15);
  }
  EXPECT_TRUE(dsc::validate_regular(mesh).ok());
}

TEST(DistortedMesh, DeterministicAndValid) {
  const auto a = dsc::generate_distorted_mesh(20, 20, 1, 1.0, 0.3, 77);
  const auto b = dsc::generate_distorted_mesh(20, 20, 1, 1.0, 0.3, 77);
  const auto c = dsc::generate_distorted_mesh(20, 20, 1, 1.0, 0.3, 78);
  EXPECT_EQ(a.vertices, b.vertices);
  EXPECT_NE(a.vertices, c.vertices);
  for (std::size_t cell = 0; cell < a.num_cells(); ++cell) EXPECT_GT(dsc::compute_geometry(a, cell).volume, 0.0);
  EXPECT_EQ(a.interfaces.size(), 2u * 20u * 19u);
}

TEST(DistortedMesh, OffsetsBoundedAndBoundaryPlanesKept) {
  const std::size_t n = 6;
  const double amp = 0.3;
  const auto mesh = dsc::generate_distorted_mesh(n, n, 2, 1.0, amp, 3);
  std::size_t moved = 0;
  for (std::size_t k = 0; k <= 2; ++k)
    for (std::size_t j = 0; j <= n; ++j)
      for (std::size_t i = 0; i <= n; ++i) {
        const auto& v = mesh.vertices[i + (n + 1) * (j + (n + 1) * k)];
        const dsc::Vec3 d = v - dsc::Vec3(i, j, k);
        EXPECT_LE(d.norm(), amp + 1e-15);
        if (i == 0 || i == n) {
          EXPECT_EQ(d.x(), 0.0);
        }
        if (j == 0 || j == n) {
          EXPECT_EQ(d.y(), 0.0);
        }
        if (k == 0 || k == 2) {
          EXPECT_EQ(d.z(), 0.0);
        }
        moved += d.norm() > 0.0;
      }
  EXPECT_GT(moved, 0u);
}

TEST(DistortedMesh, AmplitudeRange) {
  EXPECT_THROW(dsc::generate_distorted_mesh(2, 2, 1, 1.0, 0.5, 1), std::invalid_argument);
  EXPECT_THROW(dsc::generate_distorted_mesh(2, 2, 1, 1.0, -0.1, 1), std::invalid_argument);
  EXPECT_THROW(dsc::generate_distorted_mesh(0, 2, 1, 1.0, 0.1, 1), std::invalid_argument);
}

TEST(AnalyticSlab, InitialAndSteadyState) {
  const dsc::AnalyticSlabOracle o{2.0, 0.5, 3.0};
  EXPECT_EQ(o.temperature(1.0, 0.0), 0.0);
  EXPECT_EQ(o.temperature(0.0, 0.0), 3.0);
  EXPECT_NEAR(o.temperature(2.0, 1e4), 3.0, 1e-12);
  EXPECT_NEAR(o.temperature(0.7, 1e4), 3.0, 1e-12);
  EXPECT_NEAR(o.temperature(0.0, 0.3), 3.0, 1e-12);
  EXPECT_THROW(o.temperature(2.5, 1.0), std::domain_error);
}

TEST(AnalyticSlab, MatchesFiniteDifferencesAtUnitFourierNumber) {
  const dsc::AnalyticSlabOracle o{1.0, 1.0, 1.0};
  const double fd = oracle::slab_far_side_fd(1.0, 1.0, 1.0, 1.0, 200);
  EXPECT_NEAR(o.temperature(1.0, 1.0), fd, 1e-4);
}

TEST(AnalyticSlab, SatisfiesHeatEquation) {
  const dsc::AnalyticSlabOracle o{1.0, 0.8, 1.0};
  const double h = 1e-3, dt = 1e-5;
  for (double t : {0.05, 0.2, 0.6})
    for (double x : {0.1, 0.35, 0.6, 0.9}) {
      const double ut = (o.temperature(x, t + dt) - o.temperature(x, t - dt)) / (2 * dt);
      const double uxx =
          (o.temperature(x + h, t) - 2 * o.temperature(x, t) + o.temperature(x - h, t)) / (h * h);
      EXPECT_NEAR(ut, 0.8 * uxx, 1e-4) << "x " << x << " t " << t;
    }
  // insulated far side
  const double flux = (o.temperature(1.0, 0.3) - o.temperature(1.0 - h, 0.3)) / h;
  EXPECT_NEAR(flux, 0.0, 1e-3);
}

TEST(Config, ParsesFullDocument) {
  const auto j = nlohmann::json::parse(R"({
    "mesh": {"generator": {"nx": 4, "ny": 5, "nz": 1, "pitch": 0.5, "amplitude": 0.1, "seed": 9}},
    "material": {"lambda_h": 2.0, "c_v": 4.0},
    "tau": 0.01, "n_steps": 10, "direction": "vertical",
    "step_amplitude": 3.0, "window": [0.2, 1.0], "tolerance": 0.05, "output": "x.csv"
  })");
  const auto c = dsc::parse_config(j, "/tmp");
  EXPECT_EQ(c.nx, 4u);
  EXPECT_EQ(c.ny, 5u);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_DOUBLE_EQ(c.material.c_v, 4.0);
  EXPECT_DOUBLE_EQ(c.tau, 0.01);
  ASSERT_EQ(c.directions.size(), 1u);
  EXPECT_EQ(c.directions[0], dsc::Direction::vertical);
  EXPECT_EQ(c.output, "/tmp/x.csv");
}

TEST(Config, Rejections) {
  EXPECT_THROW(dsc::parse_config(nlohmann::json::parse(R"({"tau": "fast"})")), dsc::ConfigError);
  EXPECT_THROW(dsc::parse_config(nlohmann::json::parse(R"({"tau": -1})")), dsc::ConfigError);
  EXPECT_THROW(dsc::parse_config(nlohmann::json::parse(R"({"direction": "diagonal"})")), dsc::ConfigError);
  EXPECT_THROW(dsc::parse_config(nlohmann::json::parse(R"({"window": [2, 1]})")), dsc::ConfigError);
  EXPECT_THROW(dsc::parse_config(nlohmann::json::parse(R"({"mesh": {}})")), dsc::ConfigError);
  EXPECT_THROW(dsc::parse_config(nlohmann::json::parse(R"({"material": {"c_v": 0}})")), dsc::ConfigError);
}

namespace {

dsc::ExperimentConfig small_config() {
  dsc::ExperimentConfig c;
  c.nx = 8;
  c.ny = 8;
  c.amplitude = 0.2;
  c.seed = 4;
  c.window_end = 1.0;
  c.tolerance = 0.05;
  return c;
}

}  // namespace

TEST(Dispersion, ZeroAmplitudeGivesZeroError) {
  auto c = small_config();
  c.step_amplitude = 0.0;
  const auto r = dsc::run_dispersion_test(c);
  for (const auto& d : r.results) {
    EXPECT_EQ(d.max_rel_error, 0.0);
    for (const auto& row : d.rows) EXPECT_EQ(row.T_dsc, 0.0);
    EXPECT_TRUE(d.pass);
  }
}

TEST(Dispersion, CubeGridBelowTolerance) {
  auto c = small_config();
  c.amplitude = 0.0;
  c.tau = 0.02;
  const auto r = dsc::run_dispersion_test(c);
  ASSERT_EQ(r.results.size(), 2u);
  for (const auto& d : r.results) EXPECT_LT(d.max_rel_error, 0.01);
  EXPECT_TRUE(r.pass());
}

TEST(Dispersion, DirectionsAgreeOnDistortedMesh) {
  const auto r = dsc::run_dispersion_test(small_config());
  ASSERT_EQ(r.results.size(), 2u);
  const double h = r.results[0].max_rel_error, v = r.results[1].max_rel_error;
  EXPECT_TRUE(r.pass());
  EXPECT_LE(std::max(h, v), 2.0 * std::min(h, v));
}

TEST(Dispersion, ReproducibleCsv) {
  auto c = small_config();
  c.directions = {dsc::Direction::horizontal};
  std::ostringstream a, b;
  dsc::write_dispersion_csv(a, dsc::run_dispersion_test(c));
  dsc::write_dispersion_csv(b, dsc::run_dispersion_test(c));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().rfind("t,probe,T_dsc,T_analytic,rel_error\n", 0), 0u);
}

TEST(Dispersion, UnstableStepRefused) {
  auto c = small_config();
  const dsc::HeatSystem probe(dsc::experiment_mesh(c));
  c.tau = 2.0 * probe.tau();
  try {
    dsc::run_dispersion_test(c);
    FAIL() << "expected StabilityRefusal";
  } catch (const dsc::StabilityRefusal& e) {
    EXPECT_FALSE(e.report().pass());
    EXPECT_FALSE(e.report().failing_cells().empty());
    EXPECT_NE(std::string(e.what()).find("spectral radius"), std::string::npos);
  }
}
