#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dfib/fibration.hpp"
#include "dfib/linalg.hpp"
#include "dfib/transforms.hpp"

namespace dfib {

/// Gaussian wave packets m_u(y) = lambda^{3n/4} c_n e^{i lambda y.u2} e^{-lambda |y - u1|^2 / 2}.
struct WavePacketFamily {
  int dim = 1;

  static double c(int n);
  cplx operator()(const Vec& y, const Vec& u1, const Vec& u2, double lambda) const;
  /// Closed form of the squared L2 norm: lambda^n 2^{-n} pi^{-n}.
  double self_pairing(double lambda) const;
  /// Half-width of the quadrature window around u1.
  static double window(double lambda) { return 8.0 / std::sqrt(lambda); }
};

struct FbiValue {
  cplx value;
  double abs_mass = 0;    // quadrature of |f conj(m)|, the scale for noise floors
  double truncation = 0;  // bound on the error from cutting the packet at the window
};

/// (L f)(u) = integral of f(y) conj(m_u(y)). Piecewise fields are split at their jump set.
/// `resolution` scales the node density.
FbiValue fbi_transform_full(const ScalarField& f, const Vec& u1, const Vec& u2, double lambda,
                            double resolution = 1.0);
cplx fbi_transform(const ScalarField& f, const Vec& u1, const Vec& u2, double lambda);

/// Uniform grid of phase-space centres; axes are u1 coordinates then u2 coordinates.
struct FbiCoefficients {
  Grid grid;
  double lambda = 1;
  std::vector<cplx> values;
  int dim() const { return static_cast<int>(grid.axes.size()) / 2; }
};

FbiCoefficients fbi_coefficients(const ScalarField& f, const Grid& grid, double lambda);
/// Largest grid spacing allowed by the inversion check: 0.5 lambda^{-1/2}.
double fbi_max_spacing(double lambda);
/// Riemann sum of coefficients times packets; throws GridTooCoarse unless `allow_coarse`.
ScalarField fbi_inverse(const FbiCoefficients& c, const Box& support, bool allow_coarse = false);
/// Riemann sum of |L f|^2 over the grid (equals |f|^2 for fine grids).
double fbi_energy(const FbiCoefficients& c);

enum class WfClass { Regular, Singular, Inconclusive };
const char* class_name(WfClass c);

struct DetectorConfig {
  std::vector<double> lambdas{8, 16, 32, 64, 128, 256, 512, 1024};
  double eps_sing = 0.01;
  double eps_reg = 0.05;
  double max_residual = 0.5;
  double floor_rel = 1e-12;
};

struct DecayEstimate {
  double epsilon_hat = 0;
  double residual = 0;
  WfClass cls = WfClass::Inconclusive;
  bool below_floor = false;
  std::vector<double> magnitudes;
  int used = 0;  // ladder values above the noise floor
};

/// Fit of log|L f(u)| against lambda over the ladder.
DecayEstimate decay_rate_estimate(const ScalarField& f, const Vec& u1, const Vec& u2,
                                  const DetectorConfig& cfg = {});
DecayEstimate classify_decay(const std::vector<double>& lambdas, const std::vector<double>& magnitudes,
                             const std::vector<double>& floors, const DetectorConfig& cfg);

struct PhasePoint {
  Vec u1, u2;
};

/// Every point of a base grid paired with `directions` equally spaced covectors of the
/// given length (2D), or with +-magnitude (1D).
std::vector<PhasePoint> phase_grid(const Grid& base, int directions, double magnitude);

struct WavefrontReport {
  int dim = 0;
  std::vector<PhasePoint> points;
  std::vector<DecayEstimate> estimates;
  std::vector<std::string> errors;
  DetectorConfig config;

  std::vector<size_t> singular() const;
  size_t count(WfClass c) const;
  std::string to_csv() const;
};

WavefrontReport wavefront_scan(const ScalarField& f, const std::vector<PhasePoint>& points,
                               const DetectorConfig& cfg = {});

/// f restricted to the set where it exceeds `floor`; its jump set is the support boundary,
/// which lets the quadrature split where sampled data (e.g. a sinogram) stops being smooth.
ScalarField support_split_field(ScalarFn fn, const Box& box, double floor = 1e-12);

struct PropagationOptions {
  int samples = 720;  // z' grid resolution for the incidence search
};

/// Images (z, A eta) of the covectors (x, eta) under the canonical relation.
std::vector<CanonicalPoint> propagate_wavefront(const Fibration& fib,
                                                const std::vector<std::pair<Vec, Vec>>& source,
                                                const PropagationOptions& opt = {});

}  // namespace dfib
