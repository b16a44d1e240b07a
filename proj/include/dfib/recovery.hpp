#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dfib/bolker.hpp"
#include "dfib/expr.hpp"
#include "dfib/fibration.hpp"
#include "dfib/microlocal.hpp"

namespace dfib {

/// Level sets Gamma_s = {F = s} for s in (s_min, s_max].
struct Foliation {
  int dim = 2;
  Expr F;  // over x0..x{n-1}
  double s_min = 0, s_max = 1;
  Box region;
  Vec center;  // rays from here meet each level once (default sampler)
  /// Optional custom sampler of Gamma_s.
  std::function<std::vector<Vec>(double s, int count)> sampler;

  static Foliation parse(const std::string& F, int dim, double s_min, double s_max, const Box& region,
                         const Vec& center = Vec());

  double value(const Vec& x) const;
  Vec grad(const Vec& x) const;
  /// Points of Gamma_s; the default shoots rays from `center` (circle in 2D, Fibonacci sphere in 3D).
  std::vector<Vec> level_points(double s, int count) const;

 private:
  std::vector<Expr> dF_;
};

struct LevelCheck {
  double s = 0;
  int samples = 0;
  int pvs_pass = 0;
  double min_margin = 0;  // {p,{p,F}} at the tangency covectors
  bool nested = true;
  std::vector<std::string> failures;
  bool pass = false;
};

struct FoliationReport {
  std::vector<LevelCheck> levels;
  bool pass = false;
  std::string to_json(int indent = 2) const;
};

struct FoliationOptions {
  int levels = 8;
  int per_level = 32;
  double margin = 1e-8;
  int pvs_seeds = 32;
};

/// dF(x) in PVS(x) and strict pseudoconvexity {p,{p,F}} > margin at the tangency covectors.
FoliationReport foliation_validate(const Foliation& fol, const Symbol& p, const FoliationOptions& opt = {});

struct TangentRay {
  Vec z;           // family parameter
  double t = 0;    // time at which the ray passes x
  Vec xi;          // characteristic covector at x
  Vec velocity;    // x_z'(t)
  double tangency = 0;  // |dF(x_z')| / (|dF| |x_z'|)
  double distance = 0;  // |x_z(t) - x|
  double window_lo = 0, window_hi = 0;  // short segment inside {F <= s + delta}
  bool conjugate_free = true;           // conjugate_scan on the window found nothing
};

struct TangentOptions {
  double delta = 0.05;  // allowed rise of F on the short segment
  int window_samples = 32;
  int pvs_seeds = 32;
};

/// Ray of the family tangent to Gamma_s at x. Throws SearchFailed.
TangentRay tangent_ray_at(const Foliation& fol, const RayFamily& rays, double s, const Vec& x,
                          const TangentOptions& opt = {});

/// Transform data in the coordinates of `fib`.
struct DataModel {
  Fibration fib;
  std::function<double(const Vec& z)> data;
  /// Data coordinate z of the curve through x with velocity xdot.
  std::function<Vec(const Vec& x, const Vec& xdot)> curve_param;
};

/// Radon data z = (w, s) for lines {x . theta(w) = s}.
DataModel radon_data(std::function<double(const Vec& z)> data);

struct LayerStripOptions {
  double s_start = 0;    // first level; 0 means s_max
  double step = 0.05;
  double min_step_frac = 1e-3;  // of the F-range
  int tangency_points = 32;
  double local_radius = 0.025;  // half-width of the local data window around z
  int local_samples = 33;       // per axis
  double covector_length = 1.5;
  TangentOptions tangent;
  DetectorConfig detector;
};

struct LevelVerdict {
  double s = 0;
  double step = 0;
  std::vector<WfClass> verdicts;  // per tangency point, + then - conormal
  std::vector<std::string> errors;
  double margin = 0;  // smallest epsilon_hat minus eps_reg (inf when all below floor)
  bool certified = false;
};

struct RecoveryReport {
  std::vector<LevelVerdict> levels;
  double stop_level = 0;
  double s_max = 0;
  bool reached_bottom = false;
  /// Levels certified vanishing: (stop_level, s_max].
  std::pair<double, double> certified_interval() const { return {stop_level, s_max}; }
  std::string to_json(int indent = 2) const;
};

/// Descends the levels from s_max and stops at the first level whose tangent conormals are
/// not all regular for the local data (after step halving down to the floor).
RecoveryReport layer_strip(const Foliation& fol, const RayFamily& rays, const DataModel& model,
                           const LayerStripOptions& opt = {});

/// Local data around z: the data on a (local_samples)^N grid, bilinear in between, times a
/// compactly supported bump of the given half-width.
ScalarField local_data_field(const std::function<double(const Vec&)>& data, const Vec& z, double radius,
                             int samples);

}  // namespace dfib
