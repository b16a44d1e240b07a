#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dfib/fibration.hpp"
#include "dfib/geometry.hpp"

namespace dfib {

/// f(x) = smooth(x) * [level(x) < 0] inside the support box, zero outside.
/// Without a level function the field is just `smooth` restricted to the box.
struct ScalarField {
  ScalarFn smooth;
  ScalarFn level;
  Box support;

  double operator()(const Vec& x) const;
  bool piecewise() const { return static_cast<bool>(level); }

  static ScalarField zero(int dim);
  static ScalarField from_fn(ScalarFn f, Box support);
  /// Multilinear interpolation of row-major samples (last axis fastest) on the uniform grid
  /// spanning `box` with the given shape, endpoints included.
  static ScalarField from_samples(std::vector<double> values, const std::vector<size_t>& shape, Box box);
  static ScalarField indicator(ScalarFn level, Box support, ScalarFn smooth = nullptr);
  /// Gaussian exp(-|x - c|^2 / (2 sigma^2)) with a support box of +-12 sigma.
  static ScalarField gaussian(const Vec& center, double sigma);
  /// Indicator of the ball |x - c| < r.
  static ScalarField ball(const Vec& center, double r);
};

using Kappa = std::function<double(const Vec& z, const Vec& x)>;

enum class TransformKind { Generic, GeodesicXray, NullBichar, CodimKRadon, EuclideanRadon };
enum class QuadRule { GaussLegendre, Midpoint };

struct TransformSpec {
  Fibration fibration;
  TransformKind kind = TransformKind::Generic;
  double per_unit = 64.0;
  QuadRule rule = QuadRule::GaussLegendre;
};

/// Integral of weight * f along curve(t), t in [a, b]. Gauss-Legendre panels are split
/// where the curve crosses the field's jump set or the support box.
double integrate_curve(const std::function<Vec(double)>& curve, double a, double b, const ScalarField& f,
                       const std::function<double(const Vec&)>& weight, double per_unit,
                       QuadRule rule = QuadRule::GaussLegendre);

/// Rf(z) = integral over G_z of kappa f.
double forward(const TransformSpec& spec, const ScalarField& f, const Vec& z);

/// Classical Radon transform in the plane: z = (w, s), line {x . (cos w, sin w) = s}.
double euclidean_radon(const ScalarField& f, double w, double s, double per_unit = 64.0,
                       const Kappa& kappa = nullptr, QuadRule rule = QuadRule::GaussLegendre);

/// Integral of kappa f along x_z(t) over (-tau_minus, tau_plus).
double ray_forward(const RayFamily& rays, const Kappa& kappa, const ScalarField& f, const Vec& z,
                   double per_unit = 64.0, QuadRule rule = QuadRule::GaussLegendre);

/// Integral along the H_p flow from a characteristic start state (x, xi).
double null_bichar_forward(const Symbol& p, const ChartGeometry& chart, const Kappa& kappa,
                           const ScalarField& f, const Vec& state, double per_unit = 64.0,
                           const FlowOptions& opt = {});

/// Quadrature over the level set {b(., z') = z''}; sets *empty when the level set misses the box.
double codim_k_forward(const Fibration& fib, const Kappa& kappa, const ScalarField& f, const Vec& z,
                       double per_unit = 64.0, bool* empty = nullptr);

/// Tensor grid of parameter values, first axis slowest.
struct Grid {
  std::vector<std::string> names;
  std::vector<std::vector<double>> axes;

  size_t size() const;
  std::vector<size_t> shape() const;
  Vec point(size_t flat) const;
  static std::vector<double> linspace(double a, double b, int n);
  /// n cell centers of [a, b).
  static std::vector<double> centers(double a, double b, int n);
};

struct Sinogram {
  Grid grid;
  std::vector<double> values;
  std::vector<std::string> errors;  // per-node messages, empty when the node succeeded
  size_t failures() const;
};

Sinogram sinogram(const TransformSpec& spec, const ScalarField& f, const Grid& grid);
/// Same, over an arbitrary per-node evaluator.
Sinogram sinogram(const std::function<double(const Vec&)>& eval, const Grid& grid);

}  // namespace dfib
