#include "dfib/phase.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "dfib/error.hpp"
#include "dfib/microlocal.hpp"

namespace dfib {

namespace {

std::vector<std::string> graph_names(int N, int n) {
  auto names = indexed_names("z", N);
  const auto xs = indexed_names("x", n);
  names.insert(names.end(), xs.begin(), xs.end());
  return names;
}

CVec join(const CVec& a, const CVec& b) {
  CVec out(a.size() + b.size());
  out << a, b;
  return out;
}

CVec to_c(const Vec& v) { return v.cast<cplx>(); }

}  // namespace

AnalyticGraph::AnalyticGraph(std::vector<Expr> phi, int N, int n1, std::vector<int> zsolve, Expr amplitude)
    : phi_(std::move(phi)), amp_(std::move(amplitude)), N_(N), n1_(n1),
      k_(static_cast<int>(phi_.size())), zsolve_(std::move(zsolve)) {
  if (static_cast<int>(zsolve_.size()) != k_)
    throw Error(ErrorKind::ChartFailure, "need one solved z coordinate per component of phi");
  for (int i = 0; i < N_; ++i)
    if (std::find(zsolve_.begin(), zsolve_.end(), i) == zsolve_.end()) zfree_.push_back(i);
  if (static_cast<int>(zfree_.size()) != N_ - k_)
    throw Error(ErrorKind::ChartFailure, "solved z coordinates must be distinct and in range");
  for (const auto& p : phi_) {
    std::vector<Expr> row;
    for (int j = 0; j < N_ + n1_; ++j) row.push_back(p.diff(j));
    dphi_.push_back(std::move(row));
  }
}

AnalyticGraph AnalyticGraph::parse(const std::vector<std::string>& phi, int N, int n1, std::vector<int> zsolve,
                                   const std::string& amplitude) {
  const auto names = graph_names(N, n1);
  std::vector<Expr> ex;
  for (const auto& s : phi) ex.push_back(Expr::parse(s, names));
  const int n = n1 + static_cast<int>(phi.size());
  return AnalyticGraph(std::move(ex), N, n1, std::move(zsolve), Expr::parse(amplitude, graph_names(N, n)));
}

AnalyticGraph AnalyticGraph::slope_intercept() { return parse({"z0 + z1*x0"}, 2, 1, {0}); }

CVec AnalyticGraph::phi(const CVec& z, const CVec& x1) const {
  const CVec a = join(z, x1);
  CVec out(k_);
  for (int i = 0; i < k_; ++i) out[i] = phi_[i].eval_complex(a);
  return out;
}

CMat AnalyticGraph::phi_z(const CVec& z, const CVec& x1) const {
  const CVec a = join(z, x1);
  CMat out(k_, N_);
  for (int i = 0; i < k_; ++i)
    for (int j = 0; j < N_; ++j) out(i, j) = dphi_[i][j].eval_complex(a);
  return out;
}

CMat AnalyticGraph::phi_x1(const CVec& z, const CVec& x1) const {
  const CVec a = join(z, x1);
  CMat out(k_, n1_);
  for (int i = 0; i < k_; ++i)
    for (int j = 0; j < n1_; ++j) out(i, j) = dphi_[i][N_ + j].eval_complex(a);
  return out;
}

double AnalyticGraph::amplitude(const Vec& z, const Vec& x) const {
  Vec a(z.size() + x.size());
  a << z, x;
  return amp_.eval(a);
}

CVec AnalyticGraph::free_part(const CVec& z) const {
  CVec out(zfree_.size());
  for (size_t i = 0; i < zfree_.size(); ++i) out[i] = z[zfree_[i]];
  return out;
}

CVec AnalyticGraph::z_of(const CVec& zp, const CVec& x, const CVec& seed) const {
  CVec z = seed;
  for (size_t i = 0; i < zfree_.size(); ++i) z[zfree_[i]] = zp[i];
  const CVec x1 = x.head(n1_), x2 = x.tail(k_);
  for (int it = 0; it < 60; ++it) {
    const CVec r = phi(z, x1) - x2;
    if (r.norm() < 1e-14 * (1 + x2.norm())) return z;
    const CMat J = phi_z(z, x1);
    CMat Js(k_, k_);
    for (int j = 0; j < k_; ++j) Js.col(j) = J.col(zsolve_[j]);
    Eigen::PartialPivLU<CMat> lu(Js);
    if (!(std::abs(lu.determinant()) > 1e-300))
      throw Error(ErrorKind::ChartFailure, "phi_z'' is singular");
    const CVec d = lu.solve(r);
    for (int j = 0; j < k_; ++j) z[zsolve_[j]] -= d[j];
    if (!z.allFinite()) break;
  }
  const CVec r = phi(z, x1) - x2;
  if (z.allFinite() && r.norm() < 1e-10 * (1 + x2.norm())) return z;
  throw Error(ErrorKind::ChartFailure, "no point of Z^x with the given chart coordinates");
}

CMat AnalyticGraph::z_zeta(const CVec& z, const CVec& x) const {
  const int m = N_ - k_;
  const CMat J = phi_z(z, x.head(n1_));
  CMat Js(k_, k_), Jf(k_, m);
  for (int j = 0; j < k_; ++j) Js.col(j) = J.col(zsolve_[j]);
  for (int j = 0; j < m; ++j) Jf.col(j) = J.col(zfree_[j]);
  const CMat dzs = -Js.partialPivLu().solve(Jf);
  CMat out = CMat::Zero(N_, m);
  for (int j = 0; j < m; ++j) out(zfree_[j], j) = 1;
  for (int i = 0; i < k_; ++i) out.row(zsolve_[i]) = dzs.row(i);
  return out;
}

Fibration AnalyticGraph::fibration(const Box& x_box, const Box& z_box) const {
  Fibration f;
  f.N = N_;
  f.n = n();
  f.k = k_;
  f.x_box = x_box;
  f.z_box = z_box;
  GraphMap gm;
  const AnalyticGraph self = *this;
  gm.phi = [self](const Vec& z, const Vec& x1) -> Vec { return self.phi(to_c(z), to_c(x1)).real(); };
  gm.phi_z = [self](const Vec& z, const Vec& x1) -> Mat { return self.phi_z(to_c(z), to_c(x1)).real(); };
  gm.phi_x1 = [self](const Vec& z, const Vec& x1) -> Mat { return self.phi_x1(to_c(z), to_c(x1)).real(); };
  f.graph = gm;
  double c = 0;
  if (!(amp_.is_constant(&c) && c == 1.0))
    f.kappa = [self](const Vec& z, const Vec& x) { return self.amplitude(z, x); };
  return f;
}

// ---------------------------------------------------------------------------------------
// chi and its right inverse

PhasePair chi_map(const AnalyticGraph& g, const Vec& v1, const Vec& v2, const ChiOptions& opt) {
  const int n1 = g.n1(), k = g.k(), N = g.N();
  if (v1.size() != N || v2.size() != N) throw Error(ErrorKind::NotInImage, "v has the wrong dimension");
  Box box = opt.x1_box;
  if (box.axes.empty()) box = cube(n1, -3, 3);
  const CVec cv1 = to_c(v1);

  auto residual = [&](const Vec& p) -> Vec {
    const Vec x1 = p.head(n1), e2 = p.tail(k);
    return v2 + g.phi_z(cv1, to_c(x1)).real().transpose() * e2;
  };
  // best eta'' for a fixed x' is a linear least-squares problem
  auto eta_for = [&](const Vec& x1) -> Vec {
    const Mat A = g.phi_z(cv1, to_c(x1)).real().transpose();
    return A.colPivHouseholderQr().solve(-v2);
  };

  std::mt19937 rng(opt.seed);
  const double scale = 1 + v2.norm();
  PhasePair best;
  best.residual = std::numeric_limits<double>::infinity();
  for (int s = 0; s < std::max(1, opt.starts); ++s) {
    Vec x1(n1);
    for (int i = 0; i < n1; ++i) {
      const auto [lo, hi] = box.axes[i];
      x1[i] = s == 0 ? 0.5 * (lo + hi) : std::uniform_real_distribution<double>(lo, hi)(rng);
    }
    Vec p(n1 + k);
    p << x1, eta_for(x1);
    double mu = 1e-3;
    Vec r = residual(p);
    for (int it = 0; it < 200 && r.norm() > 0.01 * opt.tol * scale; ++it) {
      const Mat J = jacobian_fd(residual, p, 1e-7);
      const Mat H = J.transpose() * J;
      const Vec gr = J.transpose() * r;
      bool stepped = false;
      for (int tries = 0; tries < 12; ++tries) {
        Mat D = H;
        D.diagonal() += mu * (H.diagonal().array() + 1e-12).matrix();
        const Vec q = p - D.ldlt().solve(gr);
        const Vec rq = residual(q);
        if (rq.allFinite() && rq.norm() < r.norm()) {
          p = q;
          r = rq;
          mu = std::max(mu / 3, 1e-12);
          stepped = true;
          break;
        }
        mu *= 4;
      }
      if (!stepped) break;
    }
    const double res = r.norm();
    const Vec xs = p.head(n1);
    bool inside = true;
    for (int i = 0; i < n1; ++i) inside = inside && xs[i] >= box.axes[i].first && xs[i] <= box.axes[i].second;
    if (inside && res < best.residual) {
      best.residual = res;
      const Vec e2 = p.tail(k);
      best.x.resize(n1 + k);
      best.x << xs, g.phi(cv1, to_c(xs)).real();
      best.eta.resize(n1 + k);
      best.eta << -g.phi_x1(cv1, to_c(xs)).real().transpose() * e2, e2;
    }
    if (best.residual < opt.tol * scale) return best;
  }
  throw Error(ErrorKind::NotInImage,
              fmt::format("no (x', eta'') solves the characterization (best residual {:.3g})", best.residual));
}

std::pair<Vec, Vec> chi_plus(const AnalyticGraph& g, const Vec& x, const Vec& eta, const Vec& zp_seed) {
  const int n1 = g.n1(), k = g.k(), N = g.N();
  const CVec cx = to_c(x);
  const Vec e1 = eta.head(n1), e2 = eta.tail(k);
  CVec zseed = CVec::Zero(N);
  auto z_at = [&](const Vec& zp) -> CVec {
    zseed = g.z_of(to_c(zp), cx, zseed);
    return zseed;
  };
  auto F = [&](const Vec& zp) -> Vec {
    const CVec z = z_at(zp);
    return e1 + g.phi_x1(z, cx.head(n1)).real().transpose() * e2;
  };
  Vec zp = zp_seed;
  double res = std::numeric_limits<double>::infinity();
  try {
    for (int it = 0; it < 80; ++it) {
      const Vec r = F(zp);
      res = r.norm();
      if (res < 1e-13 * (1 + eta.norm())) break;
      const Mat J = jacobian_fd(F, zp, 1e-7);
      const Vec step = J.completeOrthogonalDecomposition().solve(r);
      double t = 1;
      for (int ls = 0; ls < 30; ++ls, t *= 0.5) {
        const Vec q = zp - t * step;
        double rq;
        try {
          rq = F(q).norm();
        } catch (const Error&) {
          continue;
        }
        if (rq < res) {
          zp = q;
          break;
        }
      }
    }
    res = F(zp).norm();
  } catch (const Error& e) {
    throw Error(ErrorKind::NotInImage, std::string("chi_plus: ") + e.what());
  }
  if (!(res < 1e-9 * (1 + eta.norm()))) throw Error(ErrorKind::NotInImage, "no fibre through x carries eta");
  const CVec z = z_at(zp);
  const Vec v1 = z.real();
  const Vec v2 = -g.phi_z(z, cx.head(n1)).real().transpose() * e2;
  return {v1, v2};
}

// ---------------------------------------------------------------------------------------
// phase and critical points

cplx phase_Psi(const AnalyticGraph&, const CVec& z, const Vec& v1, const Vec& v2) {
  const CVec d = z - to_c(v1);
  return -(z.transpose() * to_c(v2))(0, 0) + cplx(0, 0.5) * (d.transpose() * d)(0, 0);
}

CVec phase_grad(const AnalyticGraph& g, const CVec& z, const Vec& x, const Vec& v1, const Vec& v2) {
  const CMat zz = g.z_zeta(z, to_c(x));
  return zz.transpose() * (-to_c(v2) + cplx(0, 1) * (z - to_c(v1)));
}

namespace {

struct Crit {
  CVec zeta, z;
  double residual = 0;
};

// Newton on the zeta' gradient; the Jacobian is a central difference of the holomorphic gradient.
bool newton(const AnalyticGraph& g, const Vec& x, const Vec& v1, const Vec& v2, Crit& c,
            const CriticalOptions& opt) {
  const CVec cx = to_c(x);
  const int m = g.m();
  try {
    c.z = g.z_of(c.zeta, cx, c.z);
    CVec gr = phase_grad(g, c.z, x, v1, v2);
    for (int it = 0; it < opt.max_newton; ++it) {
      c.residual = gr.norm();
      if (c.residual < opt.newton_tol) return true;
      CMat H(m, m);
      const double h = 1e-5 * (1 + c.zeta.norm());
      for (int j = 0; j < m; ++j) {
        CVec zp = c.zeta, zm = c.zeta;
        zp[j] += h;
        zm[j] -= h;
        const CVec gp = phase_grad(g, g.z_of(zp, cx, c.z), x, v1, v2);
        const CVec gm = phase_grad(g, g.z_of(zm, cx, c.z), x, v1, v2);
        H.col(j) = (gp - gm) / (2 * h);
      }
      const CVec step = H.fullPivLu().solve(gr);
      if (!step.allFinite()) return false;
      double t = 1;
      bool moved = false;
      for (int ls = 0; ls < 20; ++ls, t *= 0.5) {
        const CVec zeta = c.zeta - t * step;
        CVec z;
        try {
          z = g.z_of(zeta, cx, c.z);
        } catch (const Error&) {
          continue;
        }
        const CVec gz = phase_grad(g, z, x, v1, v2);
        if (gz.norm() < gr.norm() || gz.norm() < opt.newton_tol) {
          c.zeta = zeta;
          c.z = z;
          gr = gz;
          moved = true;
          break;
        }
      }
      if (!moved) {
        c.residual = gr.norm();
        return c.residual < 10 * opt.newton_tol;
      }
    }
    c.residual = gr.norm();
    return c.residual < opt.newton_tol;
  } catch (const Error&) {
    return false;
  }
}

// Continues the critical point from x0 to x, halving steps that fail.
Crit continue_to(const AnalyticGraph& g, const Vec& x0, const Vec& x, const Vec& v1, const Vec& v2,
                 const CriticalOptions& opt) {
  Crit c;
  c.z = to_c(v1);
  c.zeta = g.free_part(c.z);
  if (!newton(g, x0, v1, v2, c, opt))
    throw Error(ErrorKind::NewtonDiverged, "no real critical point at pi(chi(v))");
  double t = 0, dt = 1.0 / std::max(1, opt.homotopy_steps);
  int halvings = 0;
  while (t < 1) {
    const double t1 = std::min(1.0, t + dt);
    Crit trial = c;
    if (newton(g, x0 + t1 * (x - x0), v1, v2, trial, opt)) {
      c = trial;
      t = t1;
    } else {
      if (++halvings > 12) throw Error(ErrorKind::NewtonDiverged, "continuation in x stalled");
      dt *= 0.5;
    }
  }
  return c;
}

CMat hessian(const AnalyticGraph& g, const Vec& x, const Vec& v1, const Vec& v2, const Crit& c) {
  const int m = g.m();
  const CVec cx = to_c(x);
  CMat H(m, m);
  const double h = 1e-4 * (1 + c.zeta.norm());
  for (int j = 0; j < m; ++j) {
    CVec zp = c.zeta, zm = c.zeta;
    zp[j] += h;
    zm[j] -= h;
    const CVec gp = phase_grad(g, g.z_of(zp, cx, c.z), x, v1, v2);
    const CVec gm = phase_grad(g, g.z_of(zm, cx, c.z), x, v1, v2);
    H.col(j) = (gp - gm) / (2 * h);
  }
  return 0.5 * (H + H.transpose());
}

}  // namespace

PhaseDiagnostics critical_point_solve(const AnalyticGraph& g, const Vec& x, const Vec& v1, const Vec& v2,
                                      const CriticalOptions& opt) {
  PhaseDiagnostics d;
  d.v1 = v1;
  d.v2 = v2;
  d.x = x;
  const PhasePair ch = chi_map(g, v1, v2, opt.chi);
  d.x0 = ch.x;
  d.eta0 = ch.eta;

  const Crit c = continue_to(g, d.x0, x, v1, v2, opt);
  d.zeta_c = c.zeta;
  d.z_c = c.z;
  d.newton_residual = c.residual;
  d.psi = phase_Psi(g, c.z, v1, v2);
  d.hessian = hessian(g, x, v1, v2, c);
  d.hess_det = d.hessian.determinant();
  if (!(std::abs(d.hess_det) > opt.hess_tol))
    throw Error(ErrorKind::HessianDegenerate, fmt::format("|det Hessian| = {:.3g}", std::abs(d.hess_det)));

  // properties at x0: psi = -v1.v2 and d_x psi = eta
  const cplx psi0 = phase_psi(g, d.x0, v1, v2, opt);
  d.prop1 = std::abs(psi0 + v1.dot(v2));
  CVec grad(x.size());
  for (int i = 0; i < x.size(); ++i) {
    Vec xp = d.x0, xm = d.x0;
    xp[i] += opt.dx;
    xm[i] -= opt.dx;
    grad[i] = (phase_psi(g, xp, v1, v2, opt) - phase_psi(g, xm, v1, v2, opt)) / (2 * opt.dx);
  }
  d.prop2 = (grad - to_c(d.eta0)).norm();
  d.distance = (x - d.x0).norm();
  if (d.distance > 0) d.coercivity = d.psi.imag() / (d.distance * d.distance);

  // multi-start uniqueness
  std::mt19937 rng(opt.rng_seed);
  std::normal_distribution<double> nd;
  for (int s = 0; s < opt.seeds; ++s) {
    CVec dir(g.m());
    for (int j = 0; j < g.m(); ++j) dir[j] = cplx(nd(rng), nd(rng));
    const double r = opt.seed_radius * std::pow(std::uniform_real_distribution<double>()(rng), 1.0 / (2 * g.m()));
    Crit t = c;
    t.zeta = c.zeta + r * dir / dir.norm();
    if (newton(g, x, v1, v2, t, opt)) {
      ++d.seeds_converged;
      d.seed_spread = std::max(d.seed_spread, (t.zeta - c.zeta).norm());
    }
  }
  return d;
}

cplx phase_psi(const AnalyticGraph& g, const Vec& x, const Vec& v1, const Vec& v2, const CriticalOptions& opt) {
  const PhasePair ch = chi_map(g, v1, v2, opt.chi);
  const Crit c = continue_to(g, ch.x, x, v1, v2, opt);
  return phase_Psi(g, c.z, v1, v2);
}

std::string PhaseDiagnostics::to_json(int indent) const {
  using nlohmann::json;
  auto rv = [](const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  auto cv = [](const CVec& v) {
    json a = json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back({v[i].real(), v[i].imag()});
    return a;
  };
  json j;
  j["v1"] = rv(v1);
  j["v2"] = rv(v2);
  j["x"] = rv(x);
  j["x0"] = rv(x0);
  j["eta0"] = rv(eta0);
  j["zeta_c"] = cv(zeta_c);
  j["z_c"] = cv(z_c);
  j["psi"] = {psi.real(), psi.imag()};
  j["hess_det"] = {hess_det.real(), hess_det.imag()};
  j["newton_residual"] = newton_residual;
  j["prop1_residual"] = prop1;
  j["prop2_residual"] = prop2;
  j["distance"] = distance;
  j["coercivity"] = coercivity;
  j["seed_spread"] = seed_spread;
  j["seeds_converged"] = seeds_converged;
  return j.dump(indent);
}

// ---------------------------------------------------------------------------------------
// K_lambda

cplx kernel_K_lambda(const AnalyticGraph& g, const Vec& x, const Vec& v1, const Vec& v2, double lambda,
                     const KernelOptions& opt) {
  const int m = g.m(), N = g.N(), n1 = g.n1(), k = g.k();
  const CVec cx = to_c(x);
  const Vec centre = g.free_part(to_c(v1)).real();
  const double w = opt.window / std::sqrt(lambda);

  // seed the chart at the centre; z'' starts from v1
  CVec seed = to_c(v1);
  seed = g.z_of(to_c(centre), cx, seed);

  // oscillation of Re Psi = -z.v2 along the chart, sampled on a coarse grid
  double slope = 0;
  {
    const int s = m <= 2 ? 33 : 1;
    std::vector<int> idx(m, 0);
    CVec zs = seed;
    while (true) {
      Vec zp = centre;
      if (s > 1)
        for (int j = 0; j < m; ++j) zp[j] += -w + 2 * w * idx[j] / (s - 1);
      try {
        zs = g.z_of(to_c(zp), cx, zs);
        slope = std::max(slope, (g.z_zeta(zs, cx).real().transpose() * v2).norm());
      } catch (const Error&) {
      }
      int d = 0;
      while (d < m && ++idx[d] == s) idx[d++] = 0;
      if (d == m || s == 1) break;
    }
  }
  const double per_unit = std::max(opt.min_per_unit, 16 * lambda * slope / (4 * M_PI));

  std::vector<Rule> rules;
  for (int j = 0; j < m; ++j) rules.push_back(gauss_per_unit(centre[j] - w, centre[j] + w, per_unit));
  std::vector<size_t> idx(m, 0);
  cplx total = 0;
  CVec z = seed;
  while (true) {
    Vec zp(m);
    double wt = 1;
    for (int j = 0; j < m; ++j) {
      zp[j] = rules[j].x[idx[j]];
      wt *= rules[j].w[idx[j]];
    }
    z = g.z_of(to_c(zp), cx, z);
    const CMat J = g.phi_z(z, cx.head(n1));
    CMat Js(k, k);
    for (int j = 0; j < k; ++j) Js.col(j) = J.col(g.zsolve()[j]);
    const double det = std::abs(Js.determinant());
    if (!(det > 1e-12)) throw Error(ErrorKind::ChartFailure, "phi_z'' degenerates on the window");
    const Vec zr = z.real();
    const double amp = g.amplitude(zr, x) / det;
    total += wt * amp * std::exp(cplx(0, lambda) * phase_Psi(g, z, v1, v2));
    int d = 0;
    while (d < m && ++idx[d] == rules[d].size()) idx[d++] = 0;
    if (d == m) break;
  }
  return WavePacketFamily::c(N) * std::pow(lambda, 0.75 * N) * total;
}

}  // namespace dfib
