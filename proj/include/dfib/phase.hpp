#pragma once

#include <string>
#include <vector>

#include "dfib/expr.hpp"
#include "dfib/fibration.hpp"
#include "dfib/linalg.hpp"

namespace dfib {

/// Graph-form fibration x'' = phi(z, x') with an analytic phi, x = (x', x'').
/// The fibre equation is solved for the z coordinates listed in `zsolve`; the remaining
/// z coordinates are the chart variables zeta' on Z^x = {z : (z, x) in Z}.
class AnalyticGraph {
 public:
  /// phi: k expressions over z0..z{N-1} then x0..x{n1-1}; amplitude over z then x (all n).
  AnalyticGraph(std::vector<Expr> phi, int N, int n1, std::vector<int> zsolve, Expr amplitude = Expr(1.0));
  static AnalyticGraph parse(const std::vector<std::string>& phi, int N, int n1, std::vector<int> zsolve,
                             const std::string& amplitude = "1");
  /// Lines x1 = z0 + z1 x0 in the plane.
  static AnalyticGraph slope_intercept();

  int N() const { return N_; }
  int n1() const { return n1_; }
  int k() const { return k_; }
  int n() const { return n1_ + k_; }
  int m() const { return N_ - k_; }
  const std::vector<int>& zsolve() const { return zsolve_; }
  const std::vector<int>& zfree() const { return zfree_; }

  CVec phi(const CVec& z, const CVec& x1) const;
  CMat phi_z(const CVec& z, const CVec& x1) const;   // k x N
  CMat phi_x1(const CVec& z, const CVec& x1) const;  // k x n1
  double amplitude(const Vec& z, const Vec& x) const;

  /// Point of Z^x with chart coordinates zeta'; Newton from `seed` (a full z).
  CVec z_of(const CVec& zp, const CVec& x, const CVec& seed) const;
  /// dz / dzeta' (N x m) at a point of Z^x.
  CMat z_zeta(const CVec& z, const CVec& x) const;
  CVec free_part(const CVec& z) const;

  /// The same fibration as a Fibration in graph form.
  Fibration fibration(const Box& x_box, const Box& z_box) const;

 private:
  std::vector<Expr> phi_;
  std::vector<std::vector<Expr>> dphi_;  // k x (N + n1)
  Expr amp_;
  int N_, n1_, k_;
  std::vector<int> zsolve_, zfree_;
};

struct ChiOptions {
  Box x1_box;  // multi-start region for x' (default [-3, 3]^n1)
  int starts = 16;
  unsigned seed = 1;
  double tol = 1e-10;
};

struct PhasePair {
  Vec x, eta;
  double residual = 0;
};

/// The map v -> (x, eta) through the canonical relation: v2 = -phi_z(v1, x')^T eta'',
/// x'' = phi(v1, x'), eta' = -phi_x'(v1, x')^T eta''. Throws NotInImage.
PhasePair chi_map(const AnalyticGraph& g, const Vec& v1, const Vec& v2, const ChiOptions& opt = {});

/// A right inverse of chi: a v with chi(v) = (x, eta), found by Newton in zeta' from the
/// seed. Throws NotInImage.
std::pair<Vec, Vec> chi_plus(const AnalyticGraph& g, const Vec& x, const Vec& eta, const Vec& zp_seed);

/// Psi(zeta'; x, v) = -z . v2 + i (z - v1)^2 / 2 on Z^x, and its zeta' gradient.
cplx phase_Psi(const AnalyticGraph& g, const CVec& z, const Vec& v1, const Vec& v2);
CVec phase_grad(const AnalyticGraph& g, const CVec& z, const Vec& x, const Vec& v1, const Vec& v2);

struct CriticalOptions {
  int homotopy_steps = 8;
  int max_newton = 60;
  double newton_tol = 1e-12;
  double hess_tol = 1e-10;
  int seeds = 16;
  double seed_radius = 0.25;
  unsigned rng_seed = 1;
  double dx = 1e-6;  // central-difference step for d_x psi
  ChiOptions chi;
};

struct PhaseDiagnostics {
  Vec v1, v2, x;
  Vec x0, eta0;  // chi(v)
  CVec zeta_c, z_c;
  cplx psi;
  cplx hess_det;
  CMat hessian;
  double newton_residual = 0;
  double prop1 = 0;        // |psi(x0, v) + v1 . v2|
  double prop2 = 0;        // |d_x psi(x0, v) - eta0|
  double distance = 0;     // |x - x0|
  double coercivity = 0;   // Im psi / |x - x0|^2 when x != x0
  double seed_spread = 0;  // largest distance of a converged multi-start root from zeta_c
  int seeds_converged = 0;

  std::string to_json(int indent = 2) const;
};

/// Complex critical point of Psi(.; x, v), continued from the real one at x0 = pi(chi(v)).
/// Throws NewtonDiverged or HessianDegenerate.
PhaseDiagnostics critical_point_solve(const AnalyticGraph& g, const Vec& x, const Vec& v1, const Vec& v2,
                                      const CriticalOptions& opt = {});

/// psi(x, v) alone, continued from x0 (cheaper than the full diagnostics).
cplx phase_psi(const AnalyticGraph& g, const Vec& x, const Vec& v1, const Vec& v2,
               const CriticalOptions& opt = {});

struct KernelOptions {
  double window = 8.0;  // half-width in units of lambda^{-1/2}
  double min_per_unit = 64;
};

/// K_lambda(x, v) = c_N lambda^{3N/4} int e^{i lambda Psi} a~ dzeta' with a~ = a / |det phi_z''|.
/// Throws ChartFailure when phi_z'' degenerates on the window.
cplx kernel_K_lambda(const AnalyticGraph& g, const Vec& x, const Vec& v1, const Vec& v2, double lambda,
                     const KernelOptions& opt = {});

}  // namespace dfib
