#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dfib/fibration.hpp"
#include "dfib/geometry.hpp"

namespace dfib {

struct VariationField {
  Vec z;
  Vec w;
  std::vector<double> t;
  std::vector<Vec> J;
};

/// J_w(t) = d/ds x_{z + s w}(t) by central differences of flows.
VariationField variation_field(const RayFamily& rays, const Vec& z, const Vec& w,
                               const std::vector<double>& t_grid, double h = 1e-5);
/// Same by integrating the linearized flow d(dy)/dt = DY(y) dy along the ray.
VariationField variation_field_ode(const RayFamily& rays, const Vec& z, const Vec& w,
                                   const std::vector<double>& t_grid);

struct ConjugatePair {
  double t = 0, s = 0;
  double margin = 0;
};

struct ConjugateOptions {
  /// true: rank of V_z(t, s) + R xdot (geodesic families).
  /// false: look for w != 0 with J_w(t) = J_w(s) = 0 (null bicharacteristic families,
  /// where the rank test is always deficient by the xi(t) direction).
  bool modulo_tangent = true;
  double threshold = 1e-6;
  int exclude_steps = 2;
};

struct ConjugateScan {
  std::vector<ConjugatePair> pairs;
  double min_margin = 1.0;  // over the scanned (t, s) away from the diagonal
};

/// Flags (t, s) where V_z(t, s) (+ R xdot) fails to fill the expected dimension.
ConjugateScan conjugate_scan(const RayFamily& rays, const Vec& z, const std::vector<double>& t_grid,
                             const ConjugateOptions& opt = {});

enum class Verdict { Pass, Fail, Inconclusive };
std::string verdict_name(Verdict v);

struct InjectivityResult {
  bool pass = true;
  double min_ratio = 1.0;
  std::vector<Vec> witnesses;  // annihilated points y
  int tested = 0;
};

/// For sampled y in G_z \ {x}, checks that eta does not annihilate V_z(x, y).
InjectivityResult injectivity_check(const Fibration& fib, const CanonicalPoint& p, int samples = 64,
                                    double threshold = 1e-6);

enum class ImmersionMethod { Auto, Graph, Defining, FiberHessian, RayVariation };
std::string method_name(ImmersionMethod m);

struct ImmersionResult {
  Verdict verdict = Verdict::Pass;
  double margin = 0;  // sigma_min / sigma_max after column scaling
  ImmersionMethod method = ImmersionMethod::Auto;
  Mat matrix;
};

/// Rank test for d(pi_L) at a canonical point; margins in [lo, hi] are inconclusive.
ImmersionResult immersion_check(const Fibration& fib, const CanonicalPoint& p,
                                ImmersionMethod method = ImmersionMethod::Auto, double lo = 1e-10,
                                double hi = 1e-8);

/// Whether p(x, .) is positively homogeneous, judged from a few scaling probes.
bool is_homogeneous(const Symbol& p, const Vec& x);

struct PvsResult {
  bool member = false;
  Vec xi;              // characteristic covector found (member or best candidate)
  double residual = 0;
  double angle = 0;    // angle between the lines of eta and xi
};

/// Searches xi in Xi_x with eta(grad_xi p) = 0 and eta not parallel to xi.
PvsResult pvs_membership(const Symbol& p, const Vec& x, const Vec& eta, int seeds = 32,
                         unsigned long long rng_seed = 1);

struct PseudoconvexityOptions {
  double level = 0.0;  // constraint p = level
  std::optional<bool> normalize_xi;  // |xi| = 1; default: when level == 0
  int x_samples = 6;   // per axis
  int xi_seeds = 8;
  double margin = 1e-8;
  unsigned long long seed = 1;
};

struct PseudoconvexityResult {
  bool pass = false;
  bool empty = false;
  double worst = 0;
  Vec worst_point;
  int samples = 0;
};

/// min of {p,{p,F}} over {p = level, {p,F} = 0} with x in the region {inside(x) <= 0} of the box.
PseudoconvexityResult pseudoconvexity_check(const Symbol& p, const Expr& F, const Box& region,
                                            const ScalarFn& inside = nullptr,
                                            const PseudoconvexityOptions& opt = {});

struct BolkerReport {
  CanonicalPoint point;
  ImmersionResult immersion;
  InjectivityResult injectivity;
  std::optional<PvsResult> pvs;
  std::optional<PseudoconvexityResult> pseudoconvexity;
};

BolkerReport bolker_report(const Fibration& fib, const CanonicalPoint& p);
std::string to_json(const BolkerReport& r, int indent = 2);

}  // namespace dfib
