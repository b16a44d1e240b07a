#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "dfib/geometry.hpp"
#include "dfib/linalg.hpp"

namespace dfib {

/// Family of curves x_z(t) generated by a bundle vector field; z ranges over
/// a parameter box and `start` maps z to the initial bundle point.
struct RayFamily {
  VectorField field;
  ChartGeometry chart;
  int N = 0;
  Box domain;
  std::function<Vec(const Vec& z)> start;
  FlowOptions flow;
  std::optional<Symbol> symbol;  // set when the field is H_p

  Trajectory trajectory(const Vec& z) const;
};

/// Defining function b(x, z') with values in R^k; the fiber over z = (z', z'') is {b = z''}.
struct DefiningMap {
  std::function<Vec(const Vec& x, const Vec& zp)> b;
  std::function<Mat(const Vec& x, const Vec& zp)> b_x;   // k x n, optional
  std::function<Mat(const Vec& x, const Vec& zp)> b_zp;  // k x (N-k), optional

  Mat jac_x(const Vec& x, const Vec& zp) const;
  Mat jac_zp(const Vec& x, const Vec& zp) const;
};

/// Graph form x'' = phi(z, x'); `split` lists the x' coordinates then the x'' coordinates.
struct GraphMap {
  std::function<Vec(const Vec& z, const Vec& x1)> phi;
  std::function<Mat(const Vec& z, const Vec& x1)> phi_z;   // k x N, optional
  std::function<Mat(const Vec& z, const Vec& x1)> phi_x1;  // k x n', optional
  std::vector<int> split;

  Mat jac_z(const Vec& z, const Vec& x1) const;
  Mat jac_x1(const Vec& z, const Vec& x1) const;
};

enum class MeasureMode { Leray, Surface };

struct FiberNodes {
  std::vector<Vec> x;
  std::vector<double> w;
  bool empty_level = false;
  double total() const;
};

/// Linearization of Z at a point in graph coordinates.
struct LocalGraph {
  std::vector<int> split;  // x' indices then x'' indices
  Mat phi_z;               // k x N
  Mat phi_x1;              // k x n'
};

class Fibration {
 public:
  int N = 0;
  int n = 0;
  int k = 0;  // codimension of the fibers, n''
  std::optional<DefiningMap> defining;
  std::optional<GraphMap> graph;
  std::optional<RayFamily> rays;
  std::function<double(const Vec& z, const Vec& x)> kappa;
  MeasureMode measure = MeasureMode::Leray;
  Box x_box;
  Box z_box;
  /// Optional explicit parametrization of the fibers (quadrature nodes for G_z).
  std::function<FiberNodes(const Vec& z, double per_unit)> fiber_rule;

  double weight(const Vec& z, const Vec& x) const { return kappa ? kappa(z, x) : 1.0; }
  /// Distance of (z, x) from Z in the available representation.
  double residual(const Vec& z, const Vec& x) const;
  LocalGraph local_graph(const Vec& z, const Vec& x) const;
  /// Parameter of the ray through x (ray fibrations only).
  double ray_time(const Vec& z, const Vec& x) const;
};

struct ConormalFiber {
  Mat tangent;    // n x n', basis of T_x G_z
  Mat conormal;   // n x k, basis of N*_x G_z
  Mat A;          // N x n, eta -> zeta on N*_x G_z
  LocalGraph graph;
};

struct CanonicalPoint {
  Vec z, zeta, x, eta;
};

ConormalFiber conormal_fiber(const Fibration& fib, const Vec& z, const Vec& x, double tol = 1e-7);
/// zeta -> eta, inverse of A on N*_x G_z (n x N).
Mat b_matrix(const Fibration& fib, const Vec& z, const Vec& x);
/// The point (z, A eta, x, eta) with eta = conormal * coeffs.
CanonicalPoint canonical_point(const Fibration& fib, const Vec& z, const Vec& x, const Vec& coeffs);
/// Residuals of a canonical point: membership, annihilation of T_x G_z, zeta = A eta.
struct CanonicalCheck {
  double membership = 0, annihilation = 0, duality = 0;
  bool ok(double tol = 1e-8) const { return membership < tol && annihilation < tol && duality < tol; }
};
CanonicalCheck check_canonical(const Fibration& fib, const CanonicalPoint& c);

struct SubmersionReport {
  bool pass = true;
  double min_ratio = 1.0;
  std::vector<std::pair<Vec, Vec>> offenders;
};
/// Rank of phi_z over sample points (z, x) on Z; throws RankDeficient listing offenders.
SubmersionReport submersion_check(const Fibration& fib,
                                  const std::vector<std::pair<Vec, Vec>>& samples,
                                  double threshold = 1e-8);

/// Quadrature nodes on G_z for the natural fiber measure.
FiberNodes induced_measure(const Fibration& fib, const Vec& z, double per_unit = 64.0);

/// Nodes on the level set {g = 0} inside a box by a smooth partition over coordinate splits.
FiberNodes level_set_nodes(const std::function<Vec(const Vec&)>& g,
                           const std::function<Mat(const Vec&)>& g_x, int k, const Box& box,
                           double per_unit, MeasureMode mode);

/// Time of first return of the base curve to its start (periodic fibers).
double orbit_period(const VectorField& field, const Vec& start, double t_max,
                    const FlowOptions& opt = {});

/// n x N matrix of variation fields d x_z(t) / dz_j by central differences.
Mat variation_matrix(const RayFamily& rays, const Vec& z, double t, double h = 1e-5);
std::vector<Mat> variation_matrices(const RayFamily& rays, const Vec& z,
                                    const std::vector<double>& ts, double h = 1e-5);
/// Same for the full bundle state (state_dim x N).
std::vector<Mat> state_variations(const RayFamily& rays, const Vec& z, const std::vector<double>& ts,
                                  double h = 1e-5);

struct RayValidation {
  int tested = 0;
  double min_variation_margin = 1.0;
};

/// Builds Z = {(z, x_z(t))} after probing nontrapping, tangential exits, self-intersections
/// and (when dim G <= dim Xi - 2) enough variations on the sample parameters.
Fibration from_ray_family(const RayFamily& rays, const std::vector<Vec>& samples,
                          RayValidation* report = nullptr);

/// Fibers {b(x, z') = z''}; validates surjectivity of b_x on the samples (x, z').
Fibration from_defining_function(const DefiningMap& b, int n, int N, int k, const Box& x_box,
                                 const Box& z_box,
                                 const std::vector<std::pair<Vec, Vec>>& samples,
                                 MeasureMode mode = MeasureMode::Leray);

/// Lines {x . theta(w) = s} in the plane, z = (w, s), with an explicit line rule for G_z.
Fibration radon_fibration(double half_width = 8.0);

}  // namespace dfib
