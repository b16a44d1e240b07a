#include "dfib/bolker.hpp"

#include <algorithm>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <random>

#include "dfib/error.hpp"

namespace dfib {

namespace {

// Right singular vectors of the `count` smallest singular values.
Mat trailing_right_vectors(const Mat& a, int count) {
  if (count <= 0) return Mat(a.cols(), 0);
  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeFullV);
  return svd.matrixV().rightCols(count);
}

double sigma(const Mat& a, int i) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(a);
  const Vec s = svd.singularValues();
  return i < s.size() ? s[i] : 0.0;
}

Mat orth_complement_projector(const Vec& v) {
  const int n = static_cast<int>(v.size());
  const double vv = v.squaredNorm();
  if (vv == 0) return Mat::Identity(n, n);
  return Mat::Identity(n, n) - v * v.transpose() / vv;
}

// Perturbed trajectories z +- h e_j, shared by all evaluations along one ray.
class VariationCache {
 public:
  VariationCache(const RayFamily& rays, const Vec& z, double h = 1e-5) : rays_(rays), h_(h) {
    FlowOptions o = rays.flow;
    o.check_tangency = false;
    base_ = flow_integrate(rays.field, rays.chart, rays.start(z), o);
    for (int j = 0; j < rays.N; ++j) {
      Vec zp = z, zm = z;
      zp[j] += h;
      zm[j] -= h;
      plus_.push_back(flow_integrate(rays.field, rays.chart, rays.start(zp), o));
      minus_.push_back(flow_integrate(rays.field, rays.chart, rays.start(zm), o));
    }
  }

  const Trajectory& base() const { return base_; }
  int n() const { return rays_.field.base_dim; }

  Mat state_jacobian(double t) const {
    Mat S(rays_.field.state_dim, rays_.N);
    for (int j = 0; j < rays_.N; ++j) S.col(j) = (plus_[j].state_at(t) - minus_[j].state_at(t)) / (2 * h_);
    return S;
  }
  Mat J(double t) const { return state_jacobian(t).topRows(n()); }
  Vec state(double t) const { return base_.state_at(t); }
  Vec xdot(double t) const { return rays_.field(state(t)).head(n()); }

 private:
  const RayFamily& rays_;
  double h_;
  Trajectory base_;
  std::vector<Trajectory> plus_, minus_;
};

// {w : J_w(s) parallel to xdot(s)}
Mat tangential_directions(const VariationCache& c, double s) {
  const Mat PJ = orth_complement_projector(c.xdot(s)) * c.J(s);
  const int N = static_cast<int>(PJ.cols());
  return trailing_right_vectors(PJ, N - (c.n() - 1));
}

Verdict classify(double margin, double lo, double hi) {
  if (margin > hi) return Verdict::Pass;
  if (margin < lo) return Verdict::Fail;
  return Verdict::Inconclusive;
}

double brent_min(const std::function<double(double)>& f, double a, double b, double* at) {
  auto r = boost::math::tools::brent_find_minima(f, a, b, 40);
  *at = r.first;
  return r.second;
}

double line_angle(const Vec& a, const Vec& b) {
  const double c = std::abs(a.dot(b)) / (a.norm() * b.norm());
  return std::acos(std::min(1.0, c));
}

}  // namespace

std::string verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Fail: return "fail";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "";
}

std::string method_name(ImmersionMethod m) {
  switch (m) {
    case ImmersionMethod::Auto: return "auto";
    case ImmersionMethod::Graph: return "graph";
    case ImmersionMethod::Defining: return "defining";
    case ImmersionMethod::FiberHessian: return "fiber_hessian";
    case ImmersionMethod::RayVariation: return "ray_variation";
  }
  return "";
}

VariationField variation_field(const RayFamily& rays, const Vec& z, const Vec& w,
                               const std::vector<double>& t_grid, double h) {
  VariationField v{z, w, t_grid, {}};
  const double wn = w.norm();
  if (wn == 0) {
    v.J.assign(t_grid.size(), Vec::Zero(rays.field.base_dim));
    return v;
  }
  const double e = h / wn;
  FlowOptions o = rays.flow;
  o.check_tangency = false;
  const Trajectory tp = flow_integrate(rays.field, rays.chart, rays.start(z + e * w), o);
  const Trajectory tm = flow_integrate(rays.field, rays.chart, rays.start(z - e * w), o);
  for (double t : t_grid) v.J.push_back((tp.base_at(t) - tm.base_at(t)) / (2 * e));
  return v;
}

VariationField variation_field_ode(const RayFamily& rays, const Vec& z, const Vec& w,
                                   const std::vector<double>& t_grid) {
  const int m = rays.field.state_dim, n = rays.field.base_dim;
  VariationField v{z, w, t_grid, {}};
  const double e = 1e-6 / std::max(w.norm(), 1e-300);
  Vec y0(2 * m);
  y0.head(m) = rays.start(z);
  y0.tail(m) = w.norm() == 0 ? Vec::Zero(m) : Vec((rays.start(z + e * w) - rays.start(z - e * w)) / (2 * e));
  VectorField aug;
  aug.base_dim = 2 * m;
  aug.state_dim = 2 * m;
  const VectorField field = rays.field;
  aug.f = [field, m](const Vec& u) {
    const Vec y = u.head(m);
    Vec out(2 * m);
    out.head(m) = field(y);
    out.tail(m) = jacobian_fd(field.f, y) * u.tail(m);
    return out;
  };
  FlowOptions o = rays.flow;
  o.max_step = rays.flow.max_step > 0 ? rays.flow.max_step : rays.chart.diameter() / 32;
  v.J.assign(t_grid.size(), Vec());
  std::vector<size_t> order(t_grid.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int dir : {1, -1}) {
    std::vector<size_t> idx;
    for (size_t i : order)
      if ((dir > 0) == (t_grid[i] >= 0)) idx.push_back(i);
    std::sort(idx.begin(), idx.end(),
              [&](size_t a, size_t b) { return std::abs(t_grid[a]) < std::abs(t_grid[b]); });
    Vec y = y0;
    double t = 0;
    for (size_t i : idx) {
      y = flow_for(aug, y, t_grid[i] - t, o);
      t = t_grid[i];
      v.J[i] = y.segment(m, n);
    }
  }
  return v;
}

ConjugateScan conjugate_scan(const RayFamily& rays, const Vec& z, const std::vector<double>& t_grid,
                             const ConjugateOptions& opt) {
  ConjugateScan out;
  const VariationCache cache(rays, z);
  const int n = cache.n(), N = rays.N;
  if (N < n - 1) return out;
  const size_t G = t_grid.size();
  std::vector<Mat> Js(G), Ps(G);
  for (size_t i = 0; i < G; ++i) {
    Js[i] = cache.J(t_grid[i]);
    Ps[i] = opt.modulo_tangent ? orth_complement_projector(cache.xdot(t_grid[i])) : Mat::Identity(n, n);
  }
  for (size_t si = 0; si < G; ++si) {
    const double s = t_grid[si];
    std::function<double(const Mat&, const Mat&)> raw;
    double scale = 0;
    if (opt.modulo_tangent) {
      const Mat W = trailing_right_vectors(orth_complement_projector(cache.xdot(s)) * Js[si], N - (n - 1));
      for (size_t i = 0; i < G; ++i) scale = std::max(scale, sigma(Js[i] * W, 0));
      raw = [W, n](const Mat& PJt, const Mat&) { return sigma(PJt * W, n - 2); };
    } else {
      for (size_t i = 0; i < G; ++i) {
        Mat st(2 * n, N);
        st << Js[i], Js[si];
        scale = std::max(scale, sigma(st, 0));
      }
      raw = [n, N](const Mat& Jt, const Mat& Js_) {
        Mat st(2 * n, N);
        st << Jt, Js_;
        return sigma(st, N - 1);
      };
    }
    if (scale == 0) continue;
    auto margin_at = [&](double t) {
      const Mat P = opt.modulo_tangent ? orth_complement_projector(cache.xdot(t)) : Mat::Identity(n, n);
      return raw(P * cache.J(t), Js[si]) / scale;
    };
    std::vector<double> m(G, std::numeric_limits<double>::infinity());
    std::vector<bool> allowed(G, false);
    for (size_t i = 0; i < G; ++i) {
      if (std::abs(static_cast<long>(i) - static_cast<long>(si)) <= opt.exclude_steps) continue;
      allowed[i] = true;
      m[i] = raw(Ps[i] * Js[i], Js[si]) / scale;
      out.min_margin = std::min(out.min_margin, m[i]);
    }
    for (size_t i = 0; i < G; ++i) {
      if (!allowed[i]) continue;
      double t = t_grid[i], v = m[i];
      const bool interior = i > 0 && i + 1 < G && allowed[i - 1] && allowed[i + 1];
      if (interior && m[i] <= m[i - 1] && m[i] <= m[i + 1]) {
        v = brent_min(margin_at, t_grid[i - 1], t_grid[i + 1], &t);
        out.min_margin = std::min(out.min_margin, v);
      } else if (v >= opt.threshold) {
        continue;
      }
      if (v < opt.threshold) out.pairs.push_back({t, s, v});
    }
  }
  return out;
}

namespace {

struct DefiningGraph {
  std::vector<int> rest, J;  // x' and x'' coordinates
};

DefiningGraph defining_split(const Fibration& fib, const Vec& z, const Vec& x) {
  const LocalGraph lg = fib.local_graph(z, x);
  const int n1 = fib.n - fib.k;
  DefiningGraph d;
  d.rest.assign(lg.split.begin(), lg.split.begin() + n1);
  d.J.assign(lg.split.begin() + n1, lg.split.end());
  return d;
}

// phi_z (k x N) of the local graph of {b(x, z') = z''} at the point over x1 near x.
Mat defining_phi_z(const Fibration& fib, const DefiningGraph& d, const Vec& z, const Vec& x, const Vec& x1) {
  const int N = fib.N, k = fib.k;
  const DefiningMap& b = *fib.defining;
  const Vec zp = z.head(N - k), zpp = z.tail(k);
  Vec y = x;
  for (size_t i = 0; i < d.rest.size(); ++i) y[d.rest[i]] = x1[i];
  for (int it = 0; it < 60; ++it) {
    const Vec r = b.b(y, zp) - zpp;
    Mat bx = b.jac_x(y, zp), b2(k, k);
    for (int c = 0; c < k; ++c) b2.col(c) = bx.col(d.J[c]);
    const Vec step = b2.fullPivLu().solve(r);
    for (int c = 0; c < k; ++c) y[d.J[c]] -= step[c];
    if (step.norm() < 1e-15 * std::max(1.0, y.norm())) break;
  }
  Mat bx = b.jac_x(y, zp), b2(k, k);
  for (int c = 0; c < k; ++c) b2.col(c) = bx.col(d.J[c]);
  Mat rhs(k, N);
  rhs.leftCols(N - k) = -b.jac_zp(y, zp);
  rhs.rightCols(k) = Mat::Identity(k, k);
  return b2.fullPivLu().solve(rhs);
}

Mat graph_condition_matrix(const Fibration& fib, const CanonicalPoint& p) {
  const int n = fib.n, N = fib.N, k = fib.k, n1 = n - k;
  std::function<Mat(const Vec&)> phi_z;
  std::vector<int> rest, J;
  if (fib.graph) {
    const LocalGraph lg = fib.local_graph(p.z, p.x);
    rest.assign(lg.split.begin(), lg.split.begin() + n1);
    J.assign(lg.split.begin() + n1, lg.split.end());
    phi_z = [&](const Vec& x1) { return fib.graph->jac_z(p.z, x1); };
  } else if (fib.defining) {
    const DefiningGraph d = defining_split(fib, p.z, p.x);
    rest = d.rest;
    J = d.J;
    phi_z = [&fib, d, &p](const Vec& x1) { return defining_phi_z(fib, d, p.z, p.x, x1); };
  } else {
    throw Error(ErrorKind::SchemaError, "graph-form check needs a graph or defining representation");
  }
  Vec x1(n1), eta2(k);
  for (int i = 0; i < n1; ++i) x1[i] = p.x[rest[i]];
  for (int i = 0; i < k; ++i) eta2[i] = p.eta[J[i]];
  Mat M(N, n);
  M.leftCols(k) = phi_z(x1).transpose();
  const double h = 1e-5;
  for (int i = 0; i < n1; ++i) {
    Vec a = x1, b = x1;
    a[i] += h;
    b[i] -= h;
    M.col(k + i) = (phi_z(a).transpose() * eta2 - phi_z(b).transpose() * eta2) / (2 * h);
  }
  return M;
}

Mat defining_condition_matrix(const Fibration& fib, const CanonicalPoint& p) {
  const int n = fib.n, N = fib.N, k = fib.k;
  const DefiningMap& b = *fib.defining;
  const Vec zp = p.z.head(N - k), zeta2 = p.zeta.tail(k);
  Mat M(n, N);
  M.leftCols(k) = b.jac_x(p.x, zp).transpose();
  const double h = 1e-5;
  for (int j = 0; j < N - k; ++j) {
    Vec a = zp, c = zp;
    a[j] += h;
    c[j] -= h;
    M.col(k + j) = (b.jac_x(p.x, a).transpose() * zeta2 - b.jac_x(p.x, c).transpose() * zeta2) / (2 * h);
  }
  return M;
}

double annihilation_margin(const Vec& eta, const Mat& M) {
  const double s = sigma(M, 0);
  if (s == 0) return 0.0;
  return (eta.transpose() * M).norm() / (eta.norm() * s);
}

// d(Y^h(x, .)) restricted to T Xi_x, as an n x (n-1) matrix.
Mat fiber_derivative(const RayFamily& rays, const Vec& state) {
  const int n = rays.field.base_dim, m = rays.field.state_dim;
  const Vec x = state.head(n), xi = state.tail(m - n);
  Mat D;
  if (rays.symbol)
    D = rays.symbol->hess_xi(x, xi);
  else
    D = jacobian_fd(
        [&](const Vec& f) {
          Vec s(m);
          s << x, f;
          return Vec(rays.field(s).head(n));
        },
        xi);
  const Vec yh = rays.field(state).head(n);
  const Mat P = trailing_right_vectors(yh.transpose(), static_cast<int>(D.cols()) - 1);
  return D * P;
}

Mat ray_variation_matrix(const RayFamily& rays, const VariationCache& c, double t) {
  const int n = c.n();
  const Vec st = c.state(t), xd = c.xdot(t);
  const Mat S = c.state_jacobian(t);
  const Mat W = tangential_directions(c, t);
  const Mat DY = jacobian_fd([&](const Vec& y) { return Vec(rays.field(y).head(n)); }, st);
  const Vec Y = rays.field(st);
  Mat M(n, W.cols());
  for (int i = 0; i < W.cols(); ++i) {
    const Vec ds = S * W.col(i);
    const double dt = -xd.dot(ds.head(n)) / xd.squaredNorm();
    M.col(i) = DY * (ds + dt * Y);
  }
  return M;
}

}  // namespace

ImmersionResult immersion_check(const Fibration& fib, const CanonicalPoint& p, ImmersionMethod method,
                                double lo, double hi) {
  ImmersionResult r;
  if (method == ImmersionMethod::Auto) {
    if (fib.defining)
      method = ImmersionMethod::Defining;
    else if (fib.graph)
      method = ImmersionMethod::Graph;
    else if (fib.rays)
      method = fib.N == fib.rays->field.state_dim - 2 ? ImmersionMethod::FiberHessian : ImmersionMethod::RayVariation;
    else
      throw Error(ErrorKind::SchemaError, "fibration has no representation");
  }
  r.method = method;
  switch (method) {
    case ImmersionMethod::Graph:
      r.matrix = graph_condition_matrix(fib, p);
      r.margin = rank_report_normalized(r.matrix).ratio;
      break;
    case ImmersionMethod::Defining:
      if (!fib.defining) throw Error(ErrorKind::SchemaError, "defining-form check needs a defining function");
      r.matrix = defining_condition_matrix(fib, p);
      r.margin = rank_report_normalized(r.matrix).ratio;
      break;
    case ImmersionMethod::FiberHessian:
    case ImmersionMethod::RayVariation: {
      if (!fib.rays) throw Error(ErrorKind::SchemaError, "ray-form check needs a ray family");
      const double t = fib.ray_time(p.z, p.x);
      if (method == ImmersionMethod::FiberHessian) {
        const Trajectory tr = fib.rays->trajectory(p.z);
        r.matrix = fiber_derivative(*fib.rays, tr.state_at(t));
      } else {
        const VariationCache c(*fib.rays, p.z);
        r.matrix = ray_variation_matrix(*fib.rays, c, t);
      }
      r.margin = annihilation_margin(p.eta, r.matrix);
      break;
    }
    case ImmersionMethod::Auto:
      break;
  }
  r.verdict = classify(r.margin, lo, hi);
  return r;
}

InjectivityResult injectivity_check(const Fibration& fib, const CanonicalPoint& p, int samples,
                                    double threshold) {
  InjectivityResult out;
  const Vec eta = p.eta;
  auto record = [&](const Vec& y, double ratio) {
    ++out.tested;
    out.min_ratio = std::min(out.min_ratio, ratio);
    if (ratio <= threshold) {
      out.pass = false;
      out.witnesses.push_back(y);
    }
  };
  if (fib.rays) {
    const VariationCache c(*fib.rays, p.z);
    const Trajectory& tr = c.base();
    const double tx = fib.ray_time(p.z, p.x);
    const Mat Jx = c.J(tx);
    const double scale = eta.norm() * sigma(Jx, 0);
    if (scale == 0) throw Error(ErrorKind::DegenerateFrame, "variation fields vanish at x");
    auto ratio_at = [&](double s) {
      const Mat W = tangential_directions(c, s);
      return (eta.transpose() * Jx * W).norm() / scale;
    };
    const double a = -tr.tau_minus, b = tr.tau_plus;
    const int G = std::max(samples, 8);
    const double dt = (b - a) / G;
    std::vector<double> ts, rs;
    for (int i = 0; i <= G; ++i) {
      const double s = a + dt * i;
      ts.push_back(s);
      rs.push_back(std::abs(s - tx) <= 2 * dt ? std::numeric_limits<double>::infinity() : ratio_at(s));
    }
    for (int i = 0; i <= G; ++i) {
      if (!std::isfinite(rs[i])) continue;
      double s = ts[i], v = rs[i];
      if (i > 0 && i < G && std::isfinite(rs[i - 1]) && std::isfinite(rs[i + 1]) && rs[i] <= rs[i - 1] &&
          rs[i] <= rs[i + 1])
        v = brent_min(ratio_at, ts[i - 1], ts[i + 1], &s);
      record(tr.base_at(s), v);
    }
    return out;
  }
  const int N = fib.N, k = fib.k;
  const FiberNodes nodes = induced_measure(fib, p.z, 16.0);
  const double excl = 1e-3 * std::max(fib.x_box.axes.empty() ? 1.0 : fib.x_box.diameter(), 1e-12);
  std::vector<Vec> ys;
  const size_t stride = std::max<size_t>(1, nodes.x.size() / std::max(samples, 1));
  for (size_t i = 0; i < nodes.x.size(); i += stride)
    if ((nodes.x[i] - p.x).norm() > excl) ys.push_back(nodes.x[i]);
  if (fib.defining) {
    const DefiningMap& b = *fib.defining;
    const Vec zp = p.z.head(N - k);
    const Mat bx = b.jac_x(p.x, zp);
    const Vec mu = (bx * bx.transpose()).ldlt().solve(bx * eta);
    Mat Ax(k, N);  // w -> b_{z'}(x) w' - w''
    Ax.leftCols(N - k) = b.jac_zp(p.x, zp);
    Ax.rightCols(k) = -Mat::Identity(k, k);
    const double scale = mu.norm() * sigma(Ax, 0);
    for (const Vec& y : ys) {
      Mat Ay(k, N);
      Ay.leftCols(N - k) = b.jac_zp(y, zp);
      Ay.rightCols(k) = -Mat::Identity(k, k);
      const Mat W = trailing_right_vectors(Ay, N - k);
      record(y, (mu.transpose() * Ax * W).norm() / scale);
    }
    return out;
  }
  if (fib.graph) {
    const LocalGraph lg = fib.local_graph(p.z, p.x);
    const int n1 = fib.n - k;
    auto x1_of = [&](const Vec& y) {
      Vec v(n1);
      for (int i = 0; i < n1; ++i) v[i] = y[lg.split[i]];
      return v;
    };
    Vec eta2(k);
    for (int i = 0; i < k; ++i) eta2[i] = eta[lg.split[n1 + i]];
    const Mat Px = fib.graph->jac_z(p.z, x1_of(p.x));
    const double scale = eta2.norm() * sigma(Px, 0);
    for (const Vec& y : ys) {
      const Mat W = trailing_right_vectors(fib.graph->jac_z(p.z, x1_of(y)), N - k);
      record(y, (eta2.transpose() * Px * W).norm() / scale);
    }
    return out;
  }
  throw Error(ErrorKind::SchemaError, "fibration has no representation");
}

bool is_homogeneous(const Symbol& p, const Vec& x) {
  std::mt19937_64 rng(12345);
  std::normal_distribution<double> nd;
  double degree = std::numeric_limits<double>::quiet_NaN();
  for (int probe = 0; probe < 4; ++probe) {
    Vec xi(p.dim());
    for (int i = 0; i < xi.size(); ++i) xi[i] = nd(rng);
    const double a = p(x, xi), b = p(x, 2 * xi), c = p(x, 3 * xi);
    if (std::abs(a) < 1e-12) continue;
    if (b / a <= 0) return false;
    const double m = std::log2(b / a);
    if (std::abs(c - std::pow(3.0, m) * a) > 1e-9 * std::abs(c)) return false;
    if (std::isnan(degree))
      degree = m;
    else if (std::abs(m - degree) > 1e-9)
      return false;
  }
  return !std::isnan(degree);
}

PvsResult pvs_membership(const Symbol& p, const Vec& x, const Vec& eta, int seeds,
                         unsigned long long rng_seed) {
  const int n = p.dim();
  const bool homog = is_homogeneous(p, x);
  const Vec e = eta.normalized();
  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> nd;
  PvsResult best;
  best.residual = std::numeric_limits<double>::infinity();
  bool feasible = false;
  for (int sd = 0; sd < seeds; ++sd) {
    Vec xi(n);
    for (int i = 0; i < n; ++i) xi[i] = nd(rng);
    xi.normalize();
    // project onto Xi_x first, then solve the full system from there
    for (int rows : {homog ? -2 : -1, homog ? 3 : 2}) {
      const bool full = rows > 0;
      rows = std::abs(rows);
      for (int it = 0; it < 80; ++it) {
        const Vec g = p.grad_xi(x, xi);
        Vec F(rows);
        Mat Jm(rows, n);
        int r = 0;
        F[r] = p(x, xi);
        Jm.row(r++) = g.transpose();
        if (full) {
          F[r] = e.dot(g);
          Jm.row(r++) = (p.hess_xi(x, xi) * e).transpose();
        }
        if (homog) {
          F[r] = 0.5 * (xi.squaredNorm() - 1);
          Jm.row(r++) = xi.transpose();
        }
        const Vec step = Jm.completeOrthogonalDecomposition().solve(F);
        xi -= step;
        if (!xi.allFinite()) break;
        if (step.norm() < 1e-15 * std::max(1.0, xi.norm())) break;
      }
      if (!xi.allFinite() || xi.norm() == 0) break;
      if (!full) {
        const Vec g = p.grad_xi(x, xi);
        if (std::abs(p(x, xi)) < 1e-8 * std::max(g.norm(), 1e-300) * xi.norm()) feasible = true;
      }
    }
    if (!xi.allFinite() || xi.norm() == 0) continue;
    const Vec g = p.grad_xi(x, xi);
    const double gn = std::max(g.norm(), 1e-300);
    const double r_char = std::abs(p(x, xi)) / (gn * xi.norm());
    const double res = std::max(r_char, std::abs(e.dot(g)) / gn);
    const double ang = line_angle(e, xi);
    const bool member = res < 1e-8 && ang > 1e-4;
    if ((member && !best.member) || (member == best.member && res < best.residual)) {
      best.member = member;
      best.xi = xi;
      best.residual = res;
      best.angle = ang;
    }
  }
  if (!feasible) throw Error(ErrorKind::SearchFailed, "no characteristic covector found over x");
  return best;
}

PseudoconvexityResult pseudoconvexity_check(const Symbol& p, const Expr& F, const Box& region,
                                            const ScalarFn& inside, const PseudoconvexityOptions& opt) {
  const int n = p.dim();
  const Symbol Fs = Symbol::from_expr(F, n);
  const Symbol q = poisson_bracket(p, Fs);
  const Symbol r = poisson_bracket(p, q);
  const bool norm_xi = opt.normalize_xi.value_or(opt.level == 0.0);
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> nd;
  PseudoconvexityResult out;
  out.worst = std::numeric_limits<double>::infinity();
  auto in_region = [&](const Vec& x) { return region.contains(x) && (!inside || inside(x) <= 0); };
  const int S = std::max(opt.x_samples, 1);
  long total = 1;
  for (int i = 0; i < n; ++i) total *= S;
  for (long cell = 0; cell < total; ++cell) {
    Vec x0(n);
    long rem = cell;
    for (int i = 0; i < n; ++i) {
      const auto [lo, hi] = region.axes[i];
      x0[i] = lo + (hi - lo) * ((rem % S) + 0.5) / S;
      rem /= S;
    }
    if (!in_region(x0)) continue;
    for (int sd = 0; sd < opt.xi_seeds; ++sd) {
      Vec u(2 * n);
      u.head(n) = x0;
      for (int i = 0; i < n; ++i) u[n + i] = nd(rng);
      u.tail(n).normalize();
      const int rows = norm_xi ? 3 : 2;
      bool ok = false;
      for (int it = 0; it < 80; ++it) {
        const Vec x = u.head(n), xi = u.tail(n);
        Vec G(rows);
        Mat Jm(rows, 2 * n);
        G[0] = p(x, xi) - opt.level;
        G[1] = q(x, xi);
        Jm.row(0) << p.grad_x(x, xi).transpose(), p.grad_xi(x, xi).transpose();
        Jm.row(1) << q.grad_x(x, xi).transpose(), q.grad_xi(x, xi).transpose();
        if (norm_xi) {
          G[2] = 0.5 * (xi.squaredNorm() - 1);
          Jm.row(2) << Vec::Zero(n).transpose(), xi.transpose();
        }
        const Vec step = Jm.completeOrthogonalDecomposition().solve(G);
        u -= step;
        if (!u.allFinite()) break;
        if (step.norm() < 1e-14 * std::max(1.0, u.norm())) {
          ok = true;
          break;
        }
      }
      if (!ok) continue;
      const Vec x = u.head(n), xi = u.tail(n);
      if (!in_region(x) || xi.norm() == 0) continue;
      const double scale = std::max(1.0, xi.squaredNorm());
      if (std::abs(p(x, xi) - opt.level) > 1e-10 * scale || std::abs(q(x, xi)) > 1e-10 * scale) continue;
      const double v = r(x, xi);
      ++out.samples;
      if (v < out.worst) {
        out.worst = v;
        out.worst_point = u;
      }
    }
  }
  out.empty = out.samples == 0;
  out.pass = !out.empty && out.worst > opt.margin;
  if (out.empty) out.worst = 0;
  return out;
}

BolkerReport bolker_report(const Fibration& fib, const CanonicalPoint& p) {
  BolkerReport r;
  r.point = p;
  r.immersion = immersion_check(fib, p);
  r.injectivity = injectivity_check(fib, p);
  return r;
}

namespace {

std::vector<double> to_std(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

std::string to_json(const BolkerReport& r, int indent) {
  using nlohmann::json;
  json j;
  j["point"] = {{"z", to_std(r.point.z)}, {"zeta", to_std(r.point.zeta)}, {"x", to_std(r.point.x)},
                {"eta", to_std(r.point.eta)}};
  j["immersion"] = {{"pass", r.immersion.verdict == Verdict::Pass},
                    {"verdict", verdict_name(r.immersion.verdict)},
                    {"margin", r.immersion.margin},
                    {"method", method_name(r.immersion.method)}};
  json w = json::array();
  for (const Vec& y : r.injectivity.witnesses) w.push_back(to_std(y));
  j["injectivity"] = {{"pass", r.injectivity.pass},
                      {"min_ratio", r.injectivity.min_ratio},
                      {"tested", r.injectivity.tested},
                      {"witnesses", w}};
  if (r.pvs)
    j["pvs"] = {{"member", r.pvs->member}, {"xi", to_std(r.pvs->xi)}, {"residual", r.pvs->residual},
                {"angle", r.pvs->angle}};
  else
    j["pvs"] = nullptr;
  if (r.pseudoconvexity)
    j["pseudoconvexity"] = {{"pass", r.pseudoconvexity->pass},
                            {"empty", r.pseudoconvexity->empty},
                            {"worst", r.pseudoconvexity->worst},
                            {"samples", r.pseudoconvexity->samples}};
  else
    j["pseudoconvexity"] = nullptr;
  return j.dump(indent);
}

}  // namespace dfib
