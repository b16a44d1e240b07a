#include "dfib/recovery.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/tools/minima.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <tbb/parallel_for.h>

#include "dfib/error.hpp"

namespace dfib {

Foliation Foliation::parse(const std::string& F, int dim, double s_min, double s_max, const Box& region,
                           const Vec& center) {
  Foliation f;
  f.dim = dim;
  f.F = Expr::parse(F, indexed_names("x", dim));
  f.s_min = s_min;
  f.s_max = s_max;
  f.region = region;
  f.center = center.size() == dim ? center : Vec(Vec::Zero(dim));
  for (int i = 0; i < dim; ++i) f.dF_.push_back(f.F.diff(i));
  return f;
}

double Foliation::value(const Vec& x) const { return F.eval(x); }

Vec Foliation::grad(const Vec& x) const {
  Vec g(dim);
  for (int i = 0; i < dim; ++i) g[i] = dF_.empty() ? F.diff(i).eval(x) : dF_[i].eval(x);
  return g;
}

std::vector<Vec> Foliation::level_points(double s, int count) const {
  if (sampler) return sampler(s, count);
  std::vector<Vec> dirs;
  if (dim == 2) {
    for (int i = 0; i < count; ++i) {
      const double a = 2 * M_PI * (i + 0.5) / count;
      dirs.push_back((Vec(2) << std::cos(a), std::sin(a)).finished());
    }
  } else {
    // Fibonacci points on the sphere, then padded with zeros for higher dimensions
    const double golden = M_PI * (3 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
      const double y = 1 - 2 * (i + 0.5) / count, r = std::sqrt(1 - y * y);
      Vec d = Vec::Zero(dim);
      d[0] = y;
      d[1] = r * std::cos(golden * i);
      d[2] = r * std::sin(golden * i);
      dirs.push_back(d);
    }
  }
  const Vec c = center.size() == dim ? center : Vec(Vec::Zero(dim));
  std::vector<Vec> out;
  for (const Vec& d : dirs) {
    // run to the edge of the region box
    double tmax = std::numeric_limits<double>::infinity();
    for (int i = 0; i < dim; ++i) {
      if (d[i] > 1e-12) tmax = std::min(tmax, (region.axes[i].second - c[i]) / d[i]);
      if (d[i] < -1e-12) tmax = std::min(tmax, (region.axes[i].first - c[i]) / d[i]);
    }
    if (!std::isfinite(tmax) || tmax <= 0) continue;
    std::vector<double> roots;
    scan_roots([&](double t) { return value(c + t * d) - s; }, 0.0, tmax, 128, roots);
    if (!roots.empty()) out.push_back(c + roots.front() * d);
  }
  return out;
}

// ---------------------------------------------------------------------------------------

FoliationReport foliation_validate(const Foliation& fol, const Symbol& p, const FoliationOptions& opt) {
  FoliationReport rep;
  const Symbol Fs = Symbol::from_expr(fol.F, fol.dim);
  const Symbol pF = poisson_bracket(p, Fs);
  const Symbol ppF = poisson_bracket(p, pF);
  const double range = fol.s_max - fol.s_min;
  rep.pass = true;
  for (int j = 0; j < opt.levels; ++j) {
    LevelCheck lc;
    lc.s = fol.s_max - range * j / opt.levels;
    const auto pts = fol.level_points(lc.s, opt.per_level);
    lc.samples = static_cast<int>(pts.size());
    lc.min_margin = std::numeric_limits<double>::infinity();
    std::vector<PvsResult> pv(pts.size());
    tbb::parallel_for(size_t(0), pts.size(), [&](size_t i) {
      pv[i] = pvs_membership(p, pts[i], fol.grad(pts[i]), opt.pvs_seeds);
    });
    for (size_t i = 0; i < pts.size(); ++i) {
      const Vec& x = pts[i];
      const Vec g = fol.grad(x);
      if (!(g.norm() > 1e-10)) {
        lc.failures.push_back(fmt::format("dF = 0 at ({:.6g}, {:.6g})", x[0], x[1]));
        continue;
      }
      // F increases along its gradient (levels nested)
      const double h = 1e-4 * std::max(range, 1e-3);
      if (!(fol.value(x + h * g.normalized()) > fol.value(x))) lc.nested = false;
      if (!pv[i].member) {
        lc.failures.push_back(fmt::format("dF not in PVS at ({:.6g}, {:.6g})", x[0], x[1]));
        continue;
      }
      ++lc.pvs_pass;
      const Vec& xi = pv[i].xi;
      const double m = ppF(x, xi) / (xi.squaredNorm() * g.norm());
      lc.min_margin = std::min(lc.min_margin, m);
      if (!(m > opt.margin))
        lc.failures.push_back(fmt::format("{{p,{{p,F}}}} = {:.3g} at ({:.6g}, {:.6g})", m, x[0], x[1]));
    }
    if (!lc.nested) lc.failures.push_back("levels not nested");
    lc.pass = lc.samples > 0 && lc.failures.empty();
    if (lc.samples == 0) lc.failures.push_back("no points on the level");
    rep.pass = rep.pass && lc.pass;
    rep.levels.push_back(std::move(lc));
  }
  return rep;
}

std::string FoliationReport::to_json(int indent) const {
  nlohmann::json j;
  j["pass"] = pass;
  j["levels"] = nlohmann::json::array();
  for (const auto& l : levels) {
    nlohmann::json e;
    e["s"] = l.s;
    e["samples"] = l.samples;
    e["pvs_pass"] = l.pvs_pass;
    e["min_margin"] = std::isfinite(l.min_margin) ? nlohmann::json(l.min_margin) : nlohmann::json();
    e["nested"] = l.nested;
    e["failures"] = l.failures;
    e["pass"] = l.pass;
    j["levels"].push_back(e);
  }
  return j.dump(indent);
}

// ---------------------------------------------------------------------------------------

namespace {

Vec fit_state(const Vec& y, int n) {
  Vec out(2 * n);
  out << y.head(n), y.tail(n).normalized();
  return out;
}

// z with start(z) on the same oriented characteristic as the boundary state yb.
std::optional<Vec> fit_parameter(const RayFamily& rays, const Vec& yb, int n) {
  const Vec target = fit_state(yb, n);
  auto res = [&](const Vec& z) -> Vec { return fit_state(rays.start(z), n) - target; };
  const int N = rays.N;
  const int per = N <= 2 ? 8 : (N == 3 ? 5 : 3);
  Vec best;
  double best_r = std::numeric_limits<double>::infinity();
  std::vector<int> idx(N, 0);
  while (true) {
    Vec z(N);
    for (int i = 0; i < N; ++i) {
      const auto [lo, hi] = rays.domain.axes[i];
      z[i] = lo + (hi - lo) * (idx[i] + 0.5) / per;
    }
    Vec r = res(z);
    double mu = 1e-3;
    for (int it = 0; it < 100 && r.norm() > 1e-14; ++it) {
      const Mat J = jacobian_fd(res, z, 1e-7);
      const Mat H = J.transpose() * J;
      const Vec g = J.transpose() * r;
      bool moved = false;
      for (int tries = 0; tries < 10; ++tries) {
        Mat D = H;
        D.diagonal() += mu * (H.diagonal().array() + 1e-12).matrix();
        const Vec q = z - D.ldlt().solve(g);
        const Vec rq = res(q);
        if (rq.allFinite() && rq.norm() < r.norm()) {
          z = q;
          r = rq;
          mu = std::max(mu / 3, 1e-12);
          moved = true;
          break;
        }
        mu *= 4;
      }
      if (!moved) break;
    }
    if (r.norm() < best_r) {
      best_r = r.norm();
      best = z;
    }
    if (best_r < 1e-11) break;
    int d = 0;
    while (d < N && ++idx[d] == per) idx[d++] = 0;
    if (d == N) break;
  }
  if (best_r < 1e-9) return best;
  return std::nullopt;
}

}  // namespace

TangentRay tangent_ray_at(const Foliation& fol, const RayFamily& rays, double s, const Vec& x,
                          const TangentOptions& opt) {
  if (!rays.symbol) throw Error(ErrorKind::SearchFailed, "the ray family has no symbol");
  const int n = fol.dim;
  const Vec g = fol.grad(x);
  const PvsResult pv = pvs_membership(*rays.symbol, x, g, opt.pvs_seeds);
  if (!pv.member) throw Error(ErrorKind::SearchFailed, "dF(x) is not in PVS(x)");

  TangentRay tr;
  std::optional<Vec> z;
  for (double sign : {1.0, -1.0}) {
    Vec y(2 * n);
    y << x, sign * pv.xi;
    Trajectory back;
    try {
      back = flow_integrate(rays.field, rays.chart, y, rays.flow);
    } catch (const Error&) {
      continue;
    }
    const Vec yb = back.state_at(-back.tau_minus);
    z = fit_parameter(rays, yb, n);
    if (z) {
      tr.xi = sign * pv.xi;
      break;
    }
  }
  if (!z) throw Error(ErrorKind::SearchFailed, "no ray of the family carries the tangent covector");
  tr.z = *z;

  const Trajectory traj = rays.trajectory(tr.z);
  auto dist2 = [&](double t) { return (traj.base_at(t) - x).squaredNorm(); };
  // the family may run at another speed than the backward flow, so scan the whole ray
  const int scan = 400;
  const double a = -traj.tau_minus, b = traj.tau_plus;
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= scan; ++i) {
    const double d = dist2(a + (b - a) * i / scan);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  const double lo = a + (b - a) * std::max(best - 1, 0) / scan, hi = a + (b - a) * std::min(best + 1, scan) / scan;
  const auto m = boost::math::tools::brent_find_minima(dist2, lo, hi, 50);
  tr.t = m.first;
  tr.distance = std::sqrt(m.second);
  tr.velocity = rays.field(traj.state_at(tr.t)).head(n);
  tr.tangency = std::abs(g.dot(tr.velocity)) / (g.norm() * tr.velocity.norm());

  // short segment: the largest symmetric window on which F stays below s + delta
  const double reach = std::min(tr.t + traj.tau_minus, traj.tau_plus - tr.t);
  double h = 0;
  for (int i = 1; i <= opt.window_samples; ++i) {
    const double hh = reach * i / opt.window_samples;
    if (fol.value(traj.base_at(tr.t - hh)) > s + opt.delta || fol.value(traj.base_at(tr.t + hh)) > s + opt.delta)
      break;
    h = hh;
  }
  tr.window_lo = tr.t - h;
  tr.window_hi = tr.t + h;
  if (h > 0) {
    std::vector<double> grid;
    for (int i = 0; i <= opt.window_samples; ++i) grid.push_back(tr.window_lo + 2 * h * i / opt.window_samples);
    tr.conjugate_free = conjugate_scan(rays, tr.z, grid).pairs.empty();
  }
  return tr;
}

// ---------------------------------------------------------------------------------------

DataModel radon_data(std::function<double(const Vec& z)> data) {
  DataModel m;
  m.fib = radon_fibration(8.0);
  m.data = std::move(data);
  m.curve_param = [](const Vec& x, const Vec& xdot) {
    const Vec th = (Vec(2) << -xdot[1], xdot[0]).finished().normalized();
    return (Vec(2) << std::atan2(th[1], th[0]), x.dot(th)).finished();
  };
  return m;
}

ScalarField local_data_field(const std::function<double(const Vec&)>& data, const Vec& z, double radius,
                             int samples) {
  const int N = static_cast<int>(z.size());
  const size_t S = std::max(samples, 2);
  const double h = 2 * radius / (S - 1);
  size_t total = 1;
  for (int i = 0; i < N; ++i) total *= S;
  std::vector<double> values(total);
  bool any = false;
  for (size_t flat = 0; flat < total; ++flat) {
    size_t r = flat;
    Vec p(N);
    for (int i = N - 1; i >= 0; --i) {
      p[i] = z[i] - radius + h * (r % S);
      r /= S;
    }
    values[flat] = data(p);
    any = any || values[flat] != 0.0;
  }
  Box box;
  for (int i = 0; i < N; ++i) box.axes.push_back({z[i] - radius, z[i] + radius});
  if (!any) {
    // identically zero: an empty support box lets the transform skip the quadrature
    Box empty;
    for (int i = 0; i < N; ++i) empty.axes.push_back({1.0, -1.0});
    return ScalarField::from_fn([](const Vec&) { return 0.0; }, empty);
  }
  const ScalarField interp = ScalarField::from_samples(std::move(values), std::vector<size_t>(N, S), box);
  const Vec zc = z;
  return ScalarField::from_fn(
      [interp, zc, radius](const Vec& y) {
        const double r2 = (y - zc).squaredNorm() / (radius * radius);
        if (r2 >= 1) return 0.0;
        return interp.smooth(y) * std::exp(1 - 1 / (1 - r2));
      },
      box);
}

RecoveryReport layer_strip(const Foliation& fol, const RayFamily& rays, const DataModel& model,
                           const LayerStripOptions& opt) {
  RecoveryReport rep;
  rep.s_max = fol.s_max;
  const double range = fol.s_max - fol.s_min;
  const double min_step = opt.min_step_frac * range;
  double certified = opt.s_start > 0 ? opt.s_start : fol.s_max;  // f = 0 on {F > certified}
  double step = opt.step;
  double s = certified;
  rep.stop_level = certified;

  while (true) {
    LevelVerdict lv;
    lv.s = s;
    lv.step = step;
    const auto pts = fol.level_points(s, opt.tangency_points);
    const size_t P = pts.size();
    std::vector<WfClass> cls(2 * P, WfClass::Inconclusive);
    std::vector<double> eps(2 * P, std::numeric_limits<double>::infinity());
    std::vector<std::string> errs(P);
    tbb::parallel_for(size_t(0), P, [&](size_t i) {
      const Vec& x = pts[i];
      try {
        const TangentRay tr = tangent_ray_at(fol, rays, s, x, opt.tangent);
        const Vec z = model.curve_param(x, tr.velocity);
        const ScalarField local = local_data_field(model.data, z, opt.local_radius, opt.local_samples);
        const Mat A = conormal_fiber(model.fib, z, x).A;
        const Vec eta = fol.grad(x);
        for (int sg = 0; sg < 2; ++sg) {
          Vec zeta = A * ((sg == 0 ? 1.0 : -1.0) * eta);
          zeta *= opt.covector_length / zeta.norm();
          const DecayEstimate e = decay_rate_estimate(local, z, zeta, opt.detector);
          cls[2 * i + sg] = e.cls;
          eps[2 * i + sg] = e.epsilon_hat;
        }
      } catch (const Error& e) {
        errs[i] = e.what();
      }
    });
    lv.verdicts = cls;
    bool all_regular = P > 0, any_singular = false;
    lv.margin = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < 2 * P; ++i) {
      all_regular = all_regular && cls[i] == WfClass::Regular;
      any_singular = any_singular || cls[i] == WfClass::Singular;
      lv.margin = std::min(lv.margin, eps[i] - opt.detector.eps_reg);
    }
    for (auto& e : errs)
      if (!e.empty()) {
        lv.errors.push_back(e);
        all_regular = false;
      }
    lv.certified = all_regular;
    rep.levels.push_back(lv);

    if (all_regular) {
      certified = s;
      rep.stop_level = s;
      if (s <= fol.s_min + 1e-12) {
        rep.reached_bottom = true;
        break;
      }
      s = std::max(fol.s_min, s - step);
      continue;
    }
    if (any_singular) break;
    // inconclusive: retry closer to the certified level
    step *= 0.5;
    if (step < min_step) break;
    s = std::max(fol.s_min, certified - step);
  }
  return rep;
}

std::string RecoveryReport::to_json(int indent) const {
  nlohmann::json j;
  j["levels"] = nlohmann::json::array();
  for (const auto& l : levels) {
    nlohmann::json e;
    e["s"] = l.s;
    e["step"] = l.step;
    std::vector<std::string> v;
    for (auto c : l.verdicts) v.push_back(class_name(c));
    e["verdicts"] = v;
    e["margin"] = std::isfinite(l.margin) ? nlohmann::json(l.margin) : nlohmann::json();
    e["certified"] = l.certified;
    if (!l.errors.empty()) e["errors"] = l.errors;
    j["levels"].push_back(e);
  }
  j["certified_interval"] = {stop_level, s_max};
  j["reached_bottom"] = reached_bottom;
  j["note"] = "vanishing is certified by the finite-lambda detector thresholds, not proved";
  return j.dump(indent);
}

}  // namespace dfib
