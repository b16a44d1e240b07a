#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dfib/bolker.hpp"
#include "dfib/geometry.hpp"
#include "dfib/microlocal.hpp"
#include "dfib/phase.hpp"
#include "dfib/recovery.hpp"
#include "dfib/transforms.hpp"

namespace dfib {

struct GridConfig {
  std::vector<std::string> names;
  std::vector<std::vector<double>> axes;
  Grid grid() const { return Grid{names, axes}; }
};

struct GeometryConfig {
  std::string model = "plane";  // plane | flat_disk | sphere | minkowski | custom
  int dim = 2;
  Box box;
  double radius = 1.0;
  double time_half = 3.0;  // minkowski
  double t_max = 7.0;      // sphere
  std::string family;      // minkowski: light_rays | null_rays
  std::string symbol;      // p(x, xi); custom rays and disk bicharacteristics
  std::string boundary;    // rho(x) < 0 inside; custom
  FlowOptions flow;
};

struct GraphConfig {
  std::vector<std::string> phi;
  int N = 2, n1 = 1;
  std::vector<int> zsolve{0};
  std::string amplitude = "1";
  AnalyticGraph build() const { return AnalyticGraph::parse(phi, N, n1, zsolve, amplitude); }
};

struct DefiningConfig {
  std::vector<std::string> b;  // over x0..x{n-1} then z0..z{N-k-1}
  int N = 2, k = 1;
};

struct TransformConfig {
  std::string kind = "euclidean_radon";
  std::string kappa = "1";  // over z0.. then x0..
  GridConfig grid;
  double per_unit = 64;
  QuadRule rule = QuadRule::GaussLegendre;
  bool line_coordinates = false;  // disk models: grid nodes are (w, s) of lines
  std::vector<std::string> start;  // custom rays: start state over z0..
  Box domain;                      // custom rays: parameter domain
  std::optional<GraphConfig> graph;
  std::optional<DefiningConfig> defining;
  Box z_box;
};

struct FieldConfig {
  std::string expr;
  std::string level;
  Box support;
  std::string grid_file;  // resolved against the scenario directory
};

struct BolkerProbe {
  Vec z, x, coeffs, eta;
  std::optional<double> t;   // ray families: x = x_z(t)
  bool eta_is_xi = false;    // eta = the ray covector at t
  std::string label;
};

struct BolkerTask {
  std::vector<BolkerProbe> probes;
  ImmersionMethod method = ImmersionMethod::Auto;
  double lo = 1e-10, hi = 1e-8;
  int injectivity_samples = 64;
  double injectivity_threshold = 1e-6;
  int pvs_seeds = 32;
};

struct WavefrontTask {
  GridConfig base;
  int directions = 16;
  double magnitude = 1.0;
  DetectorConfig detector;
};

struct PhasePointConfig {
  Vec v1, v2, x;
};

struct PhaseTask {
  std::vector<PhasePointConfig> points;
  int random_count = 0;
  std::vector<double> deltas;  // displacements along eta for the random points
  double z_range = 1.0, x_range = 1.5;
  std::vector<double> lambdas;  // K_lambda at every point when set
  CriticalOptions critical;
  KernelOptions kernel;
};

struct RecoverTask {
  std::string F;
  double s_min = 0, s_max = 1;
  Box region;
  Vec center;
  std::string data;  // expression over z0, z1; empty: Radon transform of the field
  LayerStripOptions strip;
  FoliationOptions foliation;
};

struct Scenario {
  std::string task = "forward";
  GeometryConfig geometry;
  TransformConfig transform;
  std::optional<FieldConfig> field;
  unsigned long long seed = 1;
  BolkerTask bolker;
  WavefrontTask wavefront;
  PhaseTask phase;
  RecoverTask recover;
  std::filesystem::path base_dir;

  /// Throws SchemaError naming the offending field, ParseError on bad JSON or expressions.
  static Scenario from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = ".");
  static Scenario load(const std::filesystem::path& path);
};

struct RunResult {
  nlohmann::json summary;
  std::vector<std::string> outputs;  // file names relative to the output directory
};

/// Runs the task and writes its artifacts into out_dir (manifest excluded).
RunResult run_scenario(const Scenario& sc, const std::filesystem::path& out_dir);

/// Pieces used by the tasks, exposed for tests.
ScalarField build_field(const Scenario& sc);
RayFamily build_rays(const Scenario& sc);
std::function<double(const Vec& z)> build_forward(const Scenario& sc, const ScalarField& f);

}  // namespace dfib
