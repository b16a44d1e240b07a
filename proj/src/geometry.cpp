#include "dfib/geometry.hpp"

#include <algorithm>
#include <cmath>

#include "dfib/error.hpp"

namespace dfib {

Vec ChartGeometry::grad_rho(const Vec& x) const {
  if (boundary_grad) return boundary_grad(x);
  return gradient_fd(boundary, x);
}

void ChartGeometry::validate(const std::vector<Vec>& samples, bool riemannian) const {
  for (const auto& [lo, hi] : box.axes)
    if (!(hi > lo)) throw Error(ErrorKind::SchemaError, "chart box has an empty axis");
  for (const Vec& x : samples) {
    if (metric) {
      Mat g = metric(x);
      if ((g - g.transpose()).norm() > 1e-12 * std::max(1.0, g.norm()))
        throw Error(ErrorKind::SchemaError, "metric is not symmetric");
      Eigen::SelfAdjointEigenSolver<Mat> es(g);
      const Vec& ev = es.eigenvalues();
      if (riemannian && ev.minCoeff() <= 0)
        throw Error(ErrorKind::SchemaError, "metric is not positive definite");
      if (!riemannian && ev.cwiseAbs().minCoeff() <= 1e-14 * ev.cwiseAbs().maxCoeff())
        throw Error(ErrorKind::SchemaError, "metric is degenerate");
    }
    if (has_boundary() && std::abs(rho(x)) < 1e-8 && grad_rho(x).norm() < 1e-12)
      throw Error(ErrorKind::SchemaError, "boundary function has a critical point on rho = 0");
  }
}

ChartGeometry disk_chart(double radius, int dim) {
  ChartGeometry g;
  g.dim = dim;
  g.box = cube(dim, -1.05 * radius, 1.05 * radius);
  g.boundary = [radius](const Vec& x) { return x.squaredNorm() - radius * radius; };
  g.boundary_grad = [](const Vec& x) { return Vec(2.0 * x); };
  g.metric = [dim](const Vec&) { return Mat(Mat::Identity(dim, dim)); };
  return g;
}

// --- symbols -------------------------------------------------------------

struct Symbol::Derived {
  std::vector<Expr> dx, dxi;
  std::vector<std::vector<Expr>> hxi;
};

Symbol Symbol::from_expr(const Expr& e, int n) {
  Symbol s;
  s.n_ = n;
  s.expr_ = std::make_shared<const Expr>(e);
  auto d = std::make_shared<Derived>();
  for (int i = 0; i < n; ++i) {
    d->dx.push_back(e.diff(i));
    d->dxi.push_back(e.diff(n + i));
  }
  d->hxi.resize(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) d->hxi[i].push_back(d->dxi[i].diff(n + j));
  s.derived_ = d;
  return s;
}

Symbol Symbol::parse(const std::string& text, int n) {
  return from_expr(Expr::parse(text, phase_space_names(n)), n);
}

Symbol Symbol::from_closure(Closure f, int n, double fd_step) {
  Symbol s;
  s.n_ = n;
  s.h_ = fd_step;
  s.closure_ = std::move(f);
  return s;
}

namespace {

Vec stack(const Vec& x, const Vec& xi) {
  Vec z(x.size() + xi.size());
  z << x, xi;
  return z;
}

}  // namespace

double Symbol::operator()(const Vec& x, const Vec& xi) const {
  if (expr_) return expr_->eval(stack(x, xi));
  return closure_(x, xi);
}

Vec Symbol::grad_x(const Vec& x, const Vec& xi) const {
  if (expr_) {
    Vec z = stack(x, xi), g(n_);
    for (int i = 0; i < n_; ++i) g[i] = derived_->dx[i].eval(z);
    return g;
  }
  return gradient_fd([&](const Vec& y) { return closure_(y, xi); }, x, h_);
}

Vec Symbol::grad_xi(const Vec& x, const Vec& xi) const {
  if (expr_) {
    Vec z = stack(x, xi), g(n_);
    for (int i = 0; i < n_; ++i) g[i] = derived_->dxi[i].eval(z);
    return g;
  }
  return gradient_fd([&](const Vec& y) { return closure_(x, y); }, xi, h_);
}

Mat Symbol::hess_xi(const Vec& x, const Vec& xi) const {
  if (expr_) {
    Vec z = stack(x, xi);
    Mat h(n_, n_);
    for (int i = 0; i < n_; ++i)
      for (int j = 0; j < n_; ++j) h(i, j) = derived_->hxi[i][j].eval(z);
    return h;
  }
  Mat h = jacobian_fd([&](const Vec& y) { return grad_xi(x, y); }, xi, std::max(h_, 1e-4));
  return 0.5 * (h + h.transpose());
}

Symbol poisson_bracket(const Symbol& a, const Symbol& b) {
  const int n = a.dim();
  if (a.symbolic() && b.symbolic()) {
    Expr s(0.0);
    for (int i = 0; i < n; ++i) {
      s = s + a.expr().diff(n + i) * b.expr().diff(i);
      s = s - a.expr().diff(i) * b.expr().diff(n + i);
    }
    return Symbol::from_expr(s, n);
  }
  auto f = [a, b](const Vec& x, const Vec& xi) {
    return a.grad_xi(x, xi).dot(b.grad_x(x, xi)) - a.grad_x(x, xi).dot(b.grad_xi(x, xi));
  };
  // differentiating a finite-difference bracket again needs a coarser step
  return Symbol::from_closure(f, n, std::max({a.fd_step(), b.fd_step(), 1e-4}));
}

// --- vector fields --------------------------------------------------------

VectorField VectorField::reversed() const {
  VectorField r = *this;
  VecFn g = f;
  r.f = [g](const Vec& y) { return Vec(-g(y)); };
  return r;
}

VectorField hamiltonian_vector_field(const Symbol& p) {
  VectorField v;
  const int n = p.dim();
  v.base_dim = n;
  v.state_dim = 2 * n;
  v.f = [p, n](const Vec& y) {
    Vec x = y.head(n), xi = y.tail(n);
    Vec out(2 * n);
    out << p.grad_xi(x, xi), -p.grad_x(x, xi);
    return out;
  };
  return v;
}

// --- Dormand-Prince 5(4) --------------------------------------------------

namespace {

constexpr double C[7] = {0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1, 1};
constexpr double A[7][6] = {
    {0, 0, 0, 0, 0, 0},
    {1.0 / 5, 0, 0, 0, 0, 0},
    {3.0 / 40, 9.0 / 40, 0, 0, 0, 0},
    {44.0 / 45, -56.0 / 15, 32.0 / 9, 0, 0, 0},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729, 0, 0},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656, 0},
    {35.0 / 384, 0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84}};
constexpr double E[7] = {-71.0 / 57600, 0,           71.0 / 16695, -71.0 / 1920,
                         17253.0 / 339200, -22.0 / 525, 1.0 / 40};
// dense output polynomial coefficients (theta, theta^2, theta^3, theta^4)
constexpr double P[7][4] = {
    {1, -8048581381.0 / 2820520608, 8663915743.0 / 2820520608, -12715105075.0 / 11282082432},
    {0, 0, 0, 0},
    {0, 131558114200.0 / 32700410799, -68118460800.0 / 10900136933,
     87487479700.0 / 32700410799},
    {0, -1754552775.0 / 470086768, 14199869525.0 / 1410260304, -10690763975.0 / 1880347072},
    {0, 127303824393.0 / 49829197408, -318862633887.0 / 49829197408,
     701980252875.0 / 199316789632},
    {0, -282668133.0 / 205662961, 2019193451.0 / 616988883, -1453857185.0 / 822651844},
    {0, 40617522.0 / 29380423, -110615467.0 / 29380423, 69997945.0 / 29380423}};

bool finite(const Vec& v) { return v.allFinite(); }

struct StepResult {
  Vec y1;
  double err;
  DenseStep dense;
};

StepResult dp_step(const VectorField& field, double t, const Vec& y, const Vec& k0, double h,
                   const FlowOptions& opt) {
  StepResult r;
  DenseStep& d = r.dense;
  d.t0 = t;
  d.h = h;
  d.y0 = y;
  d.k[0] = k0;
  for (int s = 1; s < 7; ++s) {
    Vec ys = y;
    for (int j = 0; j < s; ++j)
      if (A[s][j] != 0.0) ys += h * A[s][j] * d.k[j];
    if (s == 6) r.y1 = ys;
    d.k[s] = field(ys);
    if (!finite(d.k[s])) throw Error(ErrorKind::NonFinite, "vector field returned a non-finite value");
  }
  Vec e = Vec::Zero(y.size());
  for (int s = 0; s < 7; ++s) e += E[s] * d.k[s];
  e *= h;
  double acc = 0;
  for (int i = 0; i < y.size(); ++i) {
    const double sc = opt.atol + opt.rtol * std::max(std::abs(y[i]), std::abs(r.y1[i]));
    acc += (e[i] / sc) * (e[i] / sc);
  }
  r.err = std::sqrt(acc / y.size());
  (void)C;
  return r;
}

}  // namespace

Vec DenseStep::eval(double t) const {
  const double th = (t - t0) / h;
  const double p[4] = {th, th * th, th * th * th, th * th * th * th};
  Vec y = y0;
  for (int s = 0; s < 7; ++s) {
    const double c = P[s][0] * p[0] + P[s][1] * p[1] + P[s][2] * p[2] + P[s][3] * p[3];
    if (c != 0.0) y += h * c * k[s];
  }
  return y;
}

double integrate_direction(const VectorField& field, const ChartGeometry& chart, const Vec& y0,
                           int sign, const FlowOptions& opt, std::vector<DenseStep>& steps,
                           bool& trapped) {
  trapped = false;
  const int nb = field.base_dim;
  const double diam = chart.diameter();
  const double max_step = opt.max_step > 0 ? opt.max_step : diam / 32.0;
  Vec k0 = field(y0);
  if (!finite(k0)) throw Error(ErrorKind::NonFinite, "vector field is not finite at the start");
  double max_time = opt.max_time;
  if (max_time <= 0) {
    const double speed = k0.head(nb).norm();
    max_time = 1e3 * diam / std::max(speed, 1e-12);
  }
  const bool bnd = chart.has_boundary();

  auto rho_at = [&](const Vec& y) { return chart.rho(y.head(nb)); };
  auto transversality = [&](const Vec& y, const Vec& dy) {
    Vec g = chart.grad_rho(y.head(nb));
    Vec v = dy.head(nb);
    const double den = g.norm() * v.norm();
    return den > 0 ? g.dot(v) / den : 0.0;
  };

  if (bnd) {
    const double r0 = rho_at(y0);
    if (r0 > 1e-8) throw Error(ErrorKind::OffManifold, "flow start lies outside {rho <= 0}");
    if (std::abs(r0) <= 1e-8) {
      const double c = sign * transversality(y0, k0);
      if (c > opt.tangency_tol) return 0.0;  // leaving immediately
      if (opt.check_tangency && std::abs(c) <= opt.tangency_tol)
        throw Error(ErrorKind::TangentialExit, "start on the boundary with tangential velocity");
    }
  }

  double t = 0.0;
  Vec y = y0;
  double h = std::min(max_step, 0.05 * diam / std::max(k0.norm(), 1e-12));
  h = std::max(h, 1e-6);
  int rejects = 0;
  while (true) {
    if (t + h > max_time) h = max_time - t;
    StepResult r = dp_step(field, sign * t, y, k0, sign * h, opt);
    if (r.err > 1.0) {
      h *= std::max(0.2, 0.9 * std::pow(r.err, -0.2));
      if (++rejects > 200 || h < 1e-14)
        throw Error(ErrorKind::NonFinite, "step size underflow in flow integration");
      continue;
    }
    rejects = 0;
    const double t1 = t + h;
    if (bnd) {
      const double r1 = rho_at(r.y1);
      if (r1 > 0.0) {
        // bisect on the dense output for the crossing
        double a = t, b = t1;
        Vec yb = r.y1;
        for (int it = 0; it < 200; ++it) {
          const double m = 0.5 * (a + b);
          Vec ym = r.dense.eval(sign * m);
          const double rm = rho_at(ym);
          if (std::abs(rm) < opt.exit_tol && rm >= 0) {
            b = m;
            yb = ym;
            break;
          }
          if (rm > 0) {
            b = m;
            yb = ym;
          } else {
            a = m;
          }
          if (b - a < 1e-15 * std::max(1.0, b)) break;
        }
        if (opt.check_tangency) {
          const double c = std::abs(transversality(yb, field(yb)));
          if (c < opt.tangency_tol)
            throw Error(ErrorKind::TangentialExit, "trajectory meets the boundary tangentially");
        }
        steps.push_back(r.dense);
        return b;
      }
    }
    steps.push_back(r.dense);
    t = t1;
    y = r.y1;
    k0 = r.dense.k[6];
    if (t >= max_time * (1 - 1e-15)) {
      trapped = true;
      return max_time;
    }
    const double fac = r.err > 0 ? std::min(5.0, 0.9 * std::pow(r.err, -0.2)) : 5.0;
    h = std::min(max_step, h * fac);
  }
}

Trajectory flow_integrate(const VectorField& field, const ChartGeometry& chart, const Vec& start,
                          const FlowOptions& opt) {
  Trajectory tr;
  tr.base_dim = field.base_dim;
  tr.start = start;
  tr.tau_plus = integrate_direction(field, chart, start, +1, opt, tr.forward, tr.trapped_plus);
  tr.tau_minus = integrate_direction(field, chart, start, -1, opt, tr.backward, tr.trapped_minus);
  for (auto it = tr.backward.rbegin(); it != tr.backward.rend(); ++it) {
    const double te = std::max(it->t0 + it->h, -tr.tau_minus);
    if (te < 0 && (tr.times.empty() || te > tr.times.back())) {
      tr.times.push_back(te);
      tr.states.push_back(it->eval(te));
    }
  }
  tr.times.push_back(0.0);
  tr.states.push_back(start);
  for (const auto& s : tr.forward) {
    const double te = std::min(s.t0 + s.h, tr.tau_plus);
    if (te > tr.times.back()) {
      tr.times.push_back(te);
      tr.states.push_back(s.eval(te));
    }
  }
  return tr;
}

Vec Trajectory::state_at(double t) const {
  const auto& steps = t >= 0 ? forward : backward;
  if (steps.empty()) return start;
  // steps are ordered by |t|; binary search on the far end of each step
  const double at = std::abs(t);
  size_t lo = 0, hi = steps.size() - 1;
  while (lo < hi) {
    const size_t mid = (lo + hi) / 2;
    if (std::abs(steps[mid].t0 + steps[mid].h) < at)
      lo = mid + 1;
    else
      hi = mid;
  }
  return steps[lo].eval(t);
}

Vec flow_for(const VectorField& field, const Vec& start, double t, const FlowOptions& opt) {
  ChartGeometry free;
  free.dim = field.base_dim;
  free.box = cube(field.base_dim, -1.0, 1.0);
  FlowOptions o = opt;
  o.max_time = std::abs(t);
  if (o.max_step <= 0) o.max_step = std::max(std::abs(t) / 8.0, 1e-3);
  if (t == 0.0) return start;
  std::vector<DenseStep> steps;
  bool trapped = false;
  integrate_direction(field, free, start, t > 0 ? 1 : -1, o, steps, trapped);
  return steps.back().eval(t);
}

ExitTimes exit_time(const VectorField& field, const ChartGeometry& chart, const Vec& start,
                    const FlowOptions& opt) {
  Trajectory tr = flow_integrate(field, chart, start, opt);
  return {tr.tau_minus, tr.tau_plus, tr.trapped()};
}

}  // namespace dfib
