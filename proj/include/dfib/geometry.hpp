#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dfib/expr.hpp"
#include "dfib/linalg.hpp"

namespace dfib {

/// Single-chart manifold description: coordinate box, optional boundary
/// defining function rho (interior is rho <= 0) and optional metric.
struct ChartGeometry {
  int dim = 0;
  Box box;
  ScalarFn boundary;
  VecFn boundary_grad;
  std::function<Mat(const Vec&)> metric;

  bool has_boundary() const { return static_cast<bool>(boundary); }
  double rho(const Vec& x) const { return boundary(x); }
  Vec grad_rho(const Vec& x) const;
  double diameter() const { return box.diameter(); }
  /// Checks box extents, metric symmetry/definiteness and boundary transversality on samples.
  void validate(const std::vector<Vec>& samples, bool riemannian = true) const;
};

ChartGeometry disk_chart(double radius, int dim = 2);

/// Symbol p(x, xi) on the cotangent chart of an n-dimensional base.
/// Expression symbols carry exact derivatives; closures use central differences.
class Symbol {
 public:
  using Closure = std::function<double(const Vec& x, const Vec& xi)>;

  Symbol() = default;
  static Symbol from_expr(const Expr& e, int n);
  static Symbol parse(const std::string& text, int n);
  static Symbol from_closure(Closure f, int n, double fd_step = 1e-6);

  int dim() const { return n_; }
  bool symbolic() const { return static_cast<bool>(expr_); }
  const Expr& expr() const { return *expr_; }
  double fd_step() const { return h_; }

  double operator()(const Vec& x, const Vec& xi) const;
  Vec grad_x(const Vec& x, const Vec& xi) const;
  Vec grad_xi(const Vec& x, const Vec& xi) const;
  Mat hess_xi(const Vec& x, const Vec& xi) const;

 private:
  struct Derived;
  int n_ = 0;
  double h_ = 1e-6;
  std::shared_ptr<const Expr> expr_;
  std::shared_ptr<const Derived> derived_;
  Closure closure_;
};

/// {a,b} = grad_xi a . grad_x b - grad_x a . grad_xi b.
Symbol poisson_bracket(const Symbol& a, const Symbol& b);

/// Vector field on a bundle whose state is (base, fiber); base_dim leading coordinates.
struct VectorField {
  int base_dim = 0;
  int state_dim = 0;
  VecFn f;

  Vec operator()(const Vec& y) const { return f(y); }
  VectorField reversed() const;
};

/// H_p = (grad_xi p, -grad_x p) on T*M.
VectorField hamiltonian_vector_field(const Symbol& p);

struct FlowOptions {
  double atol = 1e-9;
  double rtol = 1e-9;
  double max_step = 0.0;  // 0: diameter / 32
  double max_time = 0.0;  // 0: 1e3 * diameter / speed at start
  double exit_tol = 1e-10;
  double tangency_tol = 1e-4;
  bool check_tangency = true;
};

/// One accepted Dormand-Prince step with the data for its dense output.
struct DenseStep {
  double t0 = 0.0;
  double h = 0.0;  // signed
  Vec y0;
  std::array<Vec, 7> k;
  Vec eval(double t) const;
};

/// Integral curve through a start point, maximally extended inside the chart.
struct Trajectory {
  int base_dim = 0;
  std::vector<double> times;
  std::vector<Vec> states;
  double tau_minus = 0.0;
  double tau_plus = 0.0;
  bool trapped_minus = false;
  bool trapped_plus = false;
  std::vector<DenseStep> forward;
  std::vector<DenseStep> backward;
  Vec start;

  Vec state_at(double t) const;
  Vec base_at(double t) const { return state_at(t).head(base_dim); }
  bool trapped() const { return trapped_minus || trapped_plus; }
};

/// Integrates one direction (sign = +1 or -1) until exit through rho = 0 or max_time.
/// Returns the exit time (>= 0) and fills the dense steps.
double integrate_direction(const VectorField& field, const ChartGeometry& chart, const Vec& y0,
                           int sign, const FlowOptions& opt, std::vector<DenseStep>& steps,
                           bool& trapped);

Trajectory flow_integrate(const VectorField& field, const ChartGeometry& chart, const Vec& start,
                          const FlowOptions& opt = {});

/// Forward-only flow for a fixed time span (no boundary handling); returns the end state.
Vec flow_for(const VectorField& field, const Vec& start, double t, const FlowOptions& opt = {});

struct ExitTimes {
  double tau_minus = 0.0;
  double tau_plus = 0.0;
  bool trapped = false;
};

ExitTimes exit_time(const VectorField& field, const ChartGeometry& chart, const Vec& start,
                    const FlowOptions& opt = {});

}  // namespace dfib
