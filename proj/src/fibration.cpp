#include "dfib/fibration.hpp"

#include <algorithm>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <numeric>

#include "dfib/error.hpp"

namespace dfib {

Trajectory RayFamily::trajectory(const Vec& z) const { return flow_integrate(field, chart, start(z), flow); }

Mat DefiningMap::jac_x(const Vec& x, const Vec& zp) const {
  if (b_x) return b_x(x, zp);
  return jacobian_fd([&](const Vec& y) { return b(y, zp); }, x);
}

Mat DefiningMap::jac_zp(const Vec& x, const Vec& zp) const {
  if (b_zp) return b_zp(x, zp);
  return jacobian_fd([&](const Vec& w) { return b(x, w); }, zp);
}

Mat GraphMap::jac_z(const Vec& z, const Vec& x1) const {
  if (phi_z) return phi_z(z, x1);
  return jacobian_fd([&](const Vec& w) { return phi(w, x1); }, z);
}

Mat GraphMap::jac_x1(const Vec& z, const Vec& x1) const {
  if (phi_x1) return phi_x1(z, x1);
  return jacobian_fd([&](const Vec& y) { return phi(z, y); }, x1);
}

double FiberNodes::total() const { return std::accumulate(w.begin(), w.end(), 0.0); }

namespace {

std::vector<int> identity_split(int n) {
  std::vector<int> s(n);
  std::iota(s.begin(), s.end(), 0);
  return s;
}

Vec pick(const Vec& x, const std::vector<int>& idx, int from, int count) {
  Vec out(count);
  for (int i = 0; i < count; ++i) out[i] = x[idx[from + i]];
  return out;
}

Mat pick_cols(const Mat& m, const std::vector<int>& idx, int from, int count) {
  Mat out(m.rows(), count);
  for (int i = 0; i < count; ++i) out.col(i) = m.col(idx[from + i]);
  return out;
}

// all k-subsets of {0..n-1}
std::vector<std::vector<int>> subsets(int n, int k) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  std::function<void(int)> rec = [&](int start) {
    if (static_cast<int>(cur.size()) == k) {
      out.push_back(cur);
      return;
    }
    for (int i = start; i < n; ++i) {
      cur.push_back(i);
      rec(i + 1);
      cur.pop_back();
    }
  };
  rec(0);
  return out;
}

std::vector<int> complement(int n, const std::vector<int>& J) {
  std::vector<int> c;
  for (int i = 0; i < n; ++i)
    if (std::find(J.begin(), J.end(), i) == J.end()) c.push_back(i);
  return c;
}

Vec velocity(const RayFamily& rays, const Vec& state) {
  return rays.field(state).head(rays.field.base_dim);
}

}  // namespace

double Fibration::ray_time(const Vec& z, const Vec& x) const {
  Trajectory tr = rays->trajectory(z);
  const int M = 512;
  double best_t = 0, best_d = 1e300;
  for (int i = 0; i <= M; ++i) {
    const double t = -tr.tau_minus + (tr.tau_minus + tr.tau_plus) * i / M;
    const double d = (tr.base_at(t) - x).norm();
    if (d < best_d) {
      best_d = d;
      best_t = t;
    }
  }
  for (int it = 0; it < 50; ++it) {
    Vec s = tr.state_at(best_t);
    Vec v = velocity(*rays, s);
    const double dt = -(s.head(n) - x).dot(v) / v.squaredNorm();
    best_t += dt;
    if (std::abs(dt) < 1e-14) break;
  }
  return best_t;
}

double Fibration::residual(const Vec& z, const Vec& x) const {
  if (defining) {
    const Vec zp = z.head(N - k), zpp = z.tail(k);
    return (defining->b(x, zp) - zpp).norm();
  }
  if (graph) {
    auto split = graph->split.empty() ? identity_split(n) : graph->split;
    Vec x1 = pick(x, split, 0, n - k), x2 = pick(x, split, n - k, k);
    return (x2 - graph->phi(z, x1)).norm();
  }
  if (rays) {
    Trajectory tr = rays->trajectory(z);
    return (tr.base_at(ray_time(z, x)) - x).norm();
  }
  throw Error(ErrorKind::SchemaError, "fibration has no representation");
}

LocalGraph Fibration::local_graph(const Vec& z, const Vec& x) const {
  LocalGraph lg;
  const int n1 = n - k;
  if (graph) {
    lg.split = graph->split.empty() ? identity_split(n) : graph->split;
    Vec x1 = pick(x, lg.split, 0, n1);
    lg.phi_z = graph->jac_z(z, x1);
    lg.phi_x1 = graph->jac_x1(z, x1);
    return lg;
  }
  if (defining) {
    const Vec zp = z.head(N - k);
    Mat bx = defining->jac_x(x, zp);
    Mat bz = defining->jac_zp(x, zp);
    double best = -1;
    std::vector<int> bestJ;
    for (const auto& J : subsets(n, k)) {
      const double s = rank_report(pick_cols(bx, J, 0, k)).singular_values.minCoeff();
      if (s > best) {
        best = s;
        bestJ = J;
      }
    }
    if (best <= 1e-12 * std::max(1.0, bx.norm()))
      throw Error(ErrorKind::ChartFailure, "no coordinate split makes b_x'' invertible");
    std::vector<int> rest = complement(n, bestJ);
    lg.split = rest;
    lg.split.insert(lg.split.end(), bestJ.begin(), bestJ.end());
    Mat b2 = pick_cols(bx, bestJ, 0, k);
    Mat b1 = pick_cols(bx, rest, 0, n1);
    Eigen::PartialPivLU<Mat> lu(b2);
    lg.phi_x1 = -lu.solve(b1);
    lg.phi_z.resize(k, N);
    lg.phi_z.leftCols(N - k) = -lu.solve(bz);
    lg.phi_z.rightCols(k) = lu.inverse();
    return lg;
  }
  if (rays) {
    const double t = ray_time(z, x);
    Trajectory tr = rays->trajectory(z);
    Vec v = velocity(*rays, tr.state_at(t));
    Mat J = variation_matrix(*rays, z, t);
    int i1 = 0;
    v.cwiseAbs().maxCoeff(&i1);
    std::vector<int> rest = complement(n, {i1});
    lg.split = {i1};
    lg.split.insert(lg.split.end(), rest.begin(), rest.end());
    Vec v2 = pick(v, lg.split, 1, k);
    lg.phi_x1 = v2 / v[i1];
    Mat J2(k, N);
    for (int r = 0; r < k; ++r) J2.row(r) = J.row(rest[r]);
    lg.phi_z = J2 - (v2 / v[i1]) * J.row(i1);
    return lg;
  }
  throw Error(ErrorKind::SchemaError, "fibration has no representation");
}

ConormalFiber conormal_fiber(const Fibration& fib, const Vec& z, const Vec& x, double tol) {
  const double r = fib.residual(z, x);
  if (r > tol * std::max(1.0, x.norm()))
    throw Error(ErrorKind::OffManifold, "point is off Z (residual " + std::to_string(r) + ")");
  ConormalFiber c;
  c.graph = fib.local_graph(z, x);
  const int n = fib.n, k = fib.k, n1 = n - k;
  const auto& s = c.graph.split;
  c.tangent = Mat::Zero(n, n1);
  for (int j = 0; j < n1; ++j) {
    c.tangent(s[j], j) = 1.0;
    for (int r2 = 0; r2 < k; ++r2) c.tangent(s[n1 + r2], j) = c.graph.phi_x1(r2, j);
  }
  c.conormal = Mat::Zero(n, k);
  for (int j = 0; j < k; ++j) {
    c.conormal(s[n1 + j], j) = 1.0;
    for (int i = 0; i < n1; ++i) c.conormal(s[i], j) = -c.graph.phi_x1(j, i);
  }
  c.A = Mat::Zero(fib.N, n);
  for (int j = 0; j < k; ++j) c.A.col(s[n1 + j]) = -c.graph.phi_z.row(j).transpose();
  return c;
}

Mat b_matrix(const Fibration& fib, const Vec& z, const Vec& x) {
  const int n = fib.n, N = fib.N, k = fib.k;
  if (fib.defining) {
    Mat bx = fib.defining->jac_x(x, z.head(N - k));
    Mat B = Mat::Zero(n, N);
    B.rightCols(k) = -bx.transpose();
    return B;
  }
  ConormalFiber c = conormal_fiber(fib, z, x);
  Mat AC = c.A * c.conormal;  // N x k
  return c.conormal * AC.completeOrthogonalDecomposition().pseudoInverse();
}

CanonicalPoint canonical_point(const Fibration& fib, const Vec& z, const Vec& x, const Vec& coeffs) {
  ConormalFiber c = conormal_fiber(fib, z, x);
  CanonicalPoint p;
  p.z = z;
  p.x = x;
  p.eta = c.conormal * coeffs;
  p.zeta = c.A * p.eta;
  return p;
}

CanonicalCheck check_canonical(const Fibration& fib, const CanonicalPoint& p) {
  CanonicalCheck r;
  r.membership = fib.residual(p.z, p.x);
  ConormalFiber c = conormal_fiber(fib, p.z, p.x, 1e-6);
  Mat T = c.tangent;
  for (int j = 0; j < T.cols(); ++j) T.col(j).normalize();
  r.annihilation = (T.transpose() * p.eta).norm() / p.eta.norm();
  r.duality = (p.zeta - c.A * p.eta).norm() / std::max(p.zeta.norm(), 1e-300);
  return r;
}

SubmersionReport submersion_check(const Fibration& fib,
                                  const std::vector<std::pair<Vec, Vec>>& samples,
                                  double threshold) {
  SubmersionReport rep;
  for (const auto& [z, x] : samples) {
    LocalGraph g = fib.local_graph(z, x);
    RankReport rr = rank_report(g.phi_z, threshold);
    rep.min_ratio = std::min(rep.min_ratio, rr.ratio);
    if (rr.rank < fib.k) {
      rep.pass = false;
      rep.offenders.emplace_back(z, x);
    }
  }
  if (!rep.pass)
    throw Error(ErrorKind::RankDeficient,
                "phi_z is not surjective at " + std::to_string(rep.offenders.size()) + " sample(s)");
  return rep;
}

namespace {

// Roots of g along the x'' block with the x' coordinates of x held fixed.
std::vector<Vec> fiber_roots(const std::function<Vec(const Vec&)>& g,
                             const std::function<Mat(const Vec&)>& g_x, const std::vector<int>& J,
                             int k, const Box& box, const Vec& x) {
  std::vector<Vec> roots;
  if (k == 1) {
    const int j = J[0];
    const double lo = box.axes[j].first, hi = box.axes[j].second;
    const int M = std::max(32, static_cast<int>(std::ceil((hi - lo) * 16)));
    auto gj = [&](double s) {
      Vec y = x;
      y[j] = s;
      return g(y)[0];
    };
    double a = lo, fa = gj(a);
    for (int m = 1; m <= M; ++m) {
      const double b = lo + (hi - lo) * m / M;
      const double fb = gj(b);
      if (fa == 0.0) {
        Vec y = x;
        y[j] = a;
        roots.push_back(y);
      } else if (fa * fb < 0) {
        boost::uintmax_t iters = 200;
        auto r = boost::math::tools::toms748_solve(gj, a, b, fa, fb,
                                                   boost::math::tools::eps_tolerance<double>(52), iters);
        Vec y = x;
        y[j] = 0.5 * (r.first + r.second);
        roots.push_back(y);
      }
      a = b;
      fa = fb;
    }
    return roots;
  }
  // Newton from a coarse grid of seeds in the x'' block
  const int S = 4;
  int total = 1;
  for (int r = 0; r < k; ++r) total *= S;
  for (int sidx = 0; sidx < total; ++sidx) {
    Vec y = x;
    int rem = sidx;
    for (int r = 0; r < k; ++r) {
      const auto [lo, hi] = box.axes[J[r]];
      y[J[r]] = lo + (hi - lo) * ((rem % S) + 0.5) / S;
      rem /= S;
    }
    bool ok = false;
    for (int it = 0; it < 60; ++it) {
      Vec gv = g(y);
      Mat gJ = pick_cols(g_x(y), J, 0, k);
      Vec step = gJ.fullPivLu().solve(gv);
      for (int r = 0; r < k; ++r) y[J[r]] -= step[r];
      if (!y.allFinite()) break;
      if (step.norm() < 1e-14 * std::max(1.0, y.norm())) {
        ok = g(y).norm() < 1e-10;
        break;
      }
    }
    if (!ok || !box.contains(y)) continue;
    bool dup = false;
    for (const auto& r : roots) dup |= (r - y).norm() < 1e-8;
    if (!dup) roots.push_back(y);
  }
  return roots;
}

// Visits the tensor Gauss rule over the x' coordinates and the fiber roots above each node.
template <class Visit>
void sweep_split(const std::vector<Rule>& rules, const std::vector<int>& rest, const Box& box,
                 const std::function<std::vector<Vec>(const Vec&)>& roots_at, Visit&& visit) {
  std::vector<size_t> idx(rest.size(), 0);
  for (const Rule& r : rules)
    if (r.size() == 0) return;
  while (true) {
    Vec x = box.center();
    double w0 = 1.0;
    for (size_t a = 0; a < rest.size(); ++a) {
      x[rest[a]] = rules[a].x[idx[a]];
      w0 *= rules[a].w[idx[a]];
    }
    for (const Vec& y : roots_at(x)) visit(y, w0);
    size_t a = 0;
    while (a < idx.size()) {
      if (++idx[a] < rules[a].size()) break;
      idx[a] = 0;
      ++a;
    }
    if (a == idx.size()) return;
  }
}

}  // namespace

FiberNodes level_set_nodes(const std::function<Vec(const Vec&)>& g,
                           const std::function<Mat(const Vec&)>& g_x, int k, const Box& box,
                           double per_unit, MeasureMode mode) {
  const int n = box.dim();
  FiberNodes out;
  auto splits = subsets(n, k);
  for (const auto& J : splits) {
    std::vector<int> rest = complement(n, J);
    auto roots_at = [&](const Vec& x) { return fiber_roots(g, g_x, J, k, box, x); };
    // first pass over the whole box finds the extent of the level set in the x' coordinates,
    // the second concentrates the rule there so small fibers are resolved
    std::vector<Rule> rules;
    for (int i : rest) rules.push_back(gauss_per_unit(box.axes[i].first, box.axes[i].second, per_unit));
    Vec lo = Vec::Constant(n, std::numeric_limits<double>::infinity()), hi = -lo;
    sweep_split(rules, rest, box, roots_at, [&](const Vec& y, double) {
      lo = lo.cwiseMin(y);
      hi = hi.cwiseMax(y);
    });
    if (!rest.empty() && !std::isfinite(lo[rest[0]])) continue;
    for (size_t a = 0; a < rest.size(); ++a) {
      const auto [blo, bhi] = box.axes[rest[a]];
      const double pad = 16.0 / per_unit;
      const double a0 = std::max(blo, lo[rest[a]] - pad), a1 = std::min(bhi, hi[rest[a]] + pad);
      const int panels = std::max(8, static_cast<int>(std::ceil((a1 - a0) * per_unit / 16.0)));
      rules[a] = gauss_panels(a0, a1, panels);
    }
    sweep_split(rules, rest, box, roots_at, [&](const Vec& y, double w0) {
      Mat gx = g_x(y);
      double sum4 = 0;
      for (const auto& J2 : splits) sum4 += std::pow(std::abs(pick_cols(gx, J2, 0, k).determinant()), 4);
      if (sum4 <= 0) throw Error(ErrorKind::DegenerateFrame, "level set gradient vanishes");
      const double dJ = std::abs(pick_cols(gx, J, 0, k).determinant());
      double w = w0 * dJ * dJ * dJ / sum4;
      if (mode == MeasureMode::Surface) w *= std::sqrt((gx * gx.transpose()).determinant());
      if (w > 0) {
        out.x.push_back(y);
        out.w.push_back(w);
      }
    });
  }
  out.empty_level = out.x.empty();
  return out;
}

FiberNodes induced_measure(const Fibration& fib, const Vec& z, double per_unit) {
  if (fib.fiber_rule) return fib.fiber_rule(z, per_unit);
  if (fib.rays) {
    Trajectory tr = fib.rays->trajectory(z);
    if (tr.trapped()) throw Error(ErrorKind::Trapped, "ray does not leave the domain");
    Rule r = gauss_per_unit(-tr.tau_minus, tr.tau_plus, per_unit);
    FiberNodes out;
    for (size_t i = 0; i < r.size(); ++i) {
      out.x.push_back(tr.base_at(r.x[i]));
      out.w.push_back(r.w[i]);
    }
    return out;
  }
  if (fib.defining) {
    const int N = fib.N, k = fib.k;
    const Vec zp = z.head(N - k), zpp = z.tail(k);
    const DefiningMap& d = *fib.defining;
    return level_set_nodes([&](const Vec& x) { return Vec(d.b(x, zp) - zpp); },
                           [&](const Vec& x) { return d.jac_x(x, zp); }, k, fib.x_box, per_unit,
                           fib.measure);
  }
  if (fib.graph) {
    const int n1 = fib.n - fib.k;
    auto split = fib.graph->split.empty() ? identity_split(fib.n) : fib.graph->split;
    std::vector<Rule> rules;
    for (int i = 0; i < n1; ++i)
      rules.push_back(gauss_per_unit(fib.x_box.axes[split[i]].first, fib.x_box.axes[split[i]].second, per_unit));
    FiberNodes out;
    std::vector<size_t> idx(n1, 0);
    while (true) {
      Vec x1(n1);
      double w = 1.0;
      for (int a = 0; a < n1; ++a) {
        x1[a] = rules[a].x[idx[a]];
        w *= rules[a].w[idx[a]];
      }
      Vec x2 = fib.graph->phi(z, x1);
      Vec x(fib.n);
      for (int a = 0; a < n1; ++a) x[split[a]] = x1[a];
      for (int a = 0; a < fib.k; ++a) x[split[n1 + a]] = x2[a];
      if (fib.x_box.contains(x)) {
        if (fib.measure == MeasureMode::Surface) {
          Mat p = fib.graph->jac_x1(z, x1);
          w *= std::sqrt((Mat::Identity(n1, n1) + p.transpose() * p).determinant());
        }
        out.x.push_back(x);
        out.w.push_back(w);
      }
      int a = 0;
      while (a < n1) {
        if (++idx[a] < rules[a].size()) break;
        idx[a] = 0;
        ++a;
      }
      if (a == n1) break;
    }
    out.empty_level = out.x.empty();
    return out;
  }
  throw Error(ErrorKind::SchemaError, "fibration has no representation");
}

double orbit_period(const VectorField& field, const Vec& start, double t_max, const FlowOptions& opt) {
  ChartGeometry free;
  free.dim = field.base_dim;
  free.box = cube(field.base_dim, -1, 1);
  FlowOptions o = opt;
  o.max_time = t_max;
  if (o.max_step <= 0) o.max_step = t_max / 256;
  std::vector<DenseStep> steps;
  bool trapped;
  integrate_direction(field, free, start, +1, o, steps, trapped);
  Trajectory tr;
  tr.base_dim = field.base_dim;
  tr.forward = steps;
  tr.start = start;
  const Vec x0 = start.head(field.base_dim);
  auto d2 = [&](double t) { return (tr.base_at(t) - x0).squaredNorm(); };
  const int M = 2048;
  double far = 0;
  for (int i = 1; i <= M; ++i) {
    const double t = t_max * i / M;
    const double d = d2(t);
    far = std::max(far, d);
    if (far > 1e-4 && i >= 2) {
      const double tp = t_max * (i - 1) / M, tm = t_max * (i - 2) / M;
      if (d2(tp) < d2(tm) && d2(tp) <= d) {
        // Brent minimization on [tm, t]
        boost::uintmax_t iters = 200;
        auto r = boost::math::tools::brent_find_minima(d2, tm, t, 52, iters);
        if (r.second < 1e-10 * std::max(1.0, far)) return r.first;
      }
    }
  }
  throw Error(ErrorKind::Trapped, "no return to the start within the horizon");
}

std::vector<Mat> state_variations(const RayFamily& rays, const Vec& z, const std::vector<double>& ts,
                                  double h) {
  const int m = rays.field.state_dim;
  std::vector<Mat> out(ts.size(), Mat::Zero(m, rays.N));
  FlowOptions o = rays.flow;
  o.check_tangency = false;
  for (int j = 0; j < rays.N; ++j) {
    Vec zp = z, zm = z;
    zp[j] += h;
    zm[j] -= h;
    Trajectory tp = flow_integrate(rays.field, rays.chart, rays.start(zp), o);
    Trajectory tm = flow_integrate(rays.field, rays.chart, rays.start(zm), o);
    for (size_t i = 0; i < ts.size(); ++i) out[i].col(j) = (tp.state_at(ts[i]) - tm.state_at(ts[i])) / (2 * h);
  }
  return out;
}

std::vector<Mat> variation_matrices(const RayFamily& rays, const Vec& z, const std::vector<double>& ts,
                                    double h) {
  std::vector<Mat> out = state_variations(rays, z, ts, h);
  for (Mat& m : out) m = m.topRows(rays.field.base_dim).eval();
  return out;
}

Mat variation_matrix(const RayFamily& rays, const Vec& z, double t, double h) {
  return variation_matrices(rays, z, {t}, h)[0];
}

namespace {

void probe_self_intersection(const Trajectory& tr, const Vec& z, double diam) {
  const int M = 512;
  const double a = -tr.tau_minus, b = tr.tau_plus;
  const double dt = (b - a) / M;
  std::vector<Vec> xs;
  for (int i = 0; i <= M; ++i) xs.push_back(tr.base_at(a + dt * i));
  double step_len = 0;
  for (int i = 0; i < M; ++i) step_len = std::max(step_len, (xs[i + 1] - xs[i]).norm());
  for (int i = 0; i <= M; ++i)
    for (int j = i + 11; j <= M; ++j) {
      if ((xs[i] - xs[j]).norm() > 2.0 * step_len) continue;
      // refine min |x(t) - x(s)| by Gauss-Newton in (t, s)
      double t = a + dt * i, s = a + dt * j;
      for (int it = 0; it < 40; ++it) {
        Vec st = tr.state_at(t), ss = tr.state_at(s);
        Vec r = (st - ss).head(tr.base_dim);
        Mat Jm(tr.base_dim, 2);
        const double e = 1e-6 * std::max(1.0, b - a);
        Jm.col(0) = (tr.base_at(t + e) - tr.base_at(t - e)) / (2 * e);
        Jm.col(1) = -(tr.base_at(s + e) - tr.base_at(s - e)) / (2 * e);
        Vec d = Jm.completeOrthogonalDecomposition().solve(r);
        t = std::clamp(t - d[0], a, b);
        s = std::clamp(s - d[1], a, b);
        if (d.norm() < 1e-14) break;
      }
      if (std::abs(t - s) > 10 * dt && (tr.base_at(t) - tr.base_at(s)).norm() < 1e-6 * diam) {
        std::string zs;
        for (int q = 0; q < z.size(); ++q) zs += (q ? "," : "") + std::to_string(z[q]);
        throw Error(ErrorKind::SelfIntersection, "curve z=(" + zs + ") meets itself at t=" +
                                                     std::to_string(t) + ", s=" + std::to_string(s));
      }
    }
}

}  // namespace

Fibration from_ray_family(const RayFamily& rays, const std::vector<Vec>& samples, RayValidation* report) {
  const int n = rays.field.base_dim;
  // fiber dimension of the unit-speed bundle is one less than the state's
  const int xi_dim = rays.field.state_dim == n ? n : rays.field.state_dim - 1;
  const bool check_variations = rays.N <= xi_dim - 2;
  RayValidation rep;
  for (const Vec& z : samples) {
    Trajectory tr;
    try {
      tr = rays.trajectory(z);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::TangentialExit)
        throw Error(ErrorKind::TangentialIntersection, e.what());
      throw;
    }
    if (tr.trapped()) throw Error(ErrorKind::Trapped, "ray does not leave the domain");
    probe_self_intersection(tr, z, rays.chart.diameter());
    if (check_variations) {
      std::vector<double> ts;
      for (int i = 1; i < 16; ++i) ts.push_back(-tr.tau_minus + (tr.tau_minus + tr.tau_plus) * i / 16.0);
      auto Js = variation_matrices(rays, z, ts);
      for (size_t i = 0; i < ts.size(); ++i) {
        Mat M(n, rays.N + 1);
        M.leftCols(rays.N) = Js[i];
        M.col(rays.N) = velocity(rays, tr.state_at(ts[i]));
        RankReport rr = rank_report_normalized(M);
        if (rr.rank < n)
          throw Error(ErrorKind::InsufficientVariations, "variations do not span at t=" + std::to_string(ts[i]));
        // margin: smallest of the n leading singular values relative to the largest
        rep.min_variation_margin = std::min(rep.min_variation_margin, rr.singular_values[n - 1] / rr.singular_values[0]);
      }
    }
    ++rep.tested;
  }
  if (report) *report = rep;
  Fibration f;
  f.N = rays.N;
  f.n = n;
  f.k = n - 1;
  f.rays = rays;
  f.x_box = rays.chart.box;
  f.z_box = rays.domain;
  return f;
}

Fibration from_defining_function(const DefiningMap& b, int n, int N, int k, const Box& x_box, const Box& z_box,
                                 const std::vector<std::pair<Vec, Vec>>& samples, MeasureMode mode) {
  for (const auto& [x, zp] : samples) {
    RankReport rr = rank_report(b.jac_x(x, zp));
    if (rr.rank < k) throw Error(ErrorKind::RankDeficient, "b_x is not surjective at a sample point");
  }
  Fibration f;
  f.N = N;
  f.n = n;
  f.k = k;
  f.defining = b;
  f.measure = mode;
  f.x_box = x_box;
  f.z_box = z_box;
  return f;
}

Fibration radon_fibration(double half_width) {
  DefiningMap d;
  d.b = [](const Vec& x, const Vec& zp) {
    Vec v(1);
    v[0] = x[0] * std::cos(zp[0]) + x[1] * std::sin(zp[0]);
    return v;
  };
  d.b_x = [](const Vec&, const Vec& zp) {
    Mat m(1, 2);
    m << std::cos(zp[0]), std::sin(zp[0]);
    return m;
  };
  d.b_zp = [](const Vec& x, const Vec& zp) {
    Mat m(1, 1);
    m << -x[0] * std::sin(zp[0]) + x[1] * std::cos(zp[0]);
    return m;
  };
  Box xb = cube(2, -half_width, half_width);
  Box zb;
  zb.axes = {{0.0, M_PI}, {-half_width, half_width}};
  Fibration f = from_defining_function(d, 2, 2, 1, xb, zb, {}, MeasureMode::Leray);
  f.fiber_rule = [xb](const Vec& z, double per_unit) {
    const double c = std::cos(z[0]), s = std::sin(z[0]);
    Vec th(2), perp(2);
    th << c, s;
    perp << -s, c;
    // clip the line s*theta + t*perp to the box
    double lo = -1e300, hi = 1e300;
    for (int i = 0; i < 2; ++i) {
      const double p0 = z[1] * th[i], dp = perp[i];
      const auto [a, b] = xb.axes[i];
      if (std::abs(dp) < 1e-15) {
        if (p0 < a || p0 > b) lo = hi = 0;
        continue;
      }
      double t1 = (a - p0) / dp, t2 = (b - p0) / dp;
      if (t1 > t2) std::swap(t1, t2);
      lo = std::max(lo, t1);
      hi = std::min(hi, t2);
    }
    FiberNodes out;
    if (hi <= lo) {
      out.empty_level = true;
      return out;
    }
    Rule r = gauss_per_unit(lo, hi, per_unit);
    for (size_t i = 0; i < r.size(); ++i) {
      out.x.push_back(z[1] * th + r.x[i] * perp);
      out.w.push_back(r.w[i]);
    }
    return out;
  };
  return f;
}

}  // namespace dfib
