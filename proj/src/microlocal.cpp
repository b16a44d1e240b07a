#include "dfib/microlocal.hpp"

#include <fmt/format.h>
#include <tbb/parallel_for.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "dfib/error.hpp"

namespace dfib {

double WavePacketFamily::c(int n) { return std::pow(2.0, -0.5 * n) * std::pow(M_PI, -0.75 * n); }

cplx WavePacketFamily::operator()(const Vec& y, const Vec& u1, const Vec& u2, double lambda) const {
  const double amp = std::pow(lambda, 0.75 * dim) * c(dim) * std::exp(-0.5 * lambda * (y - u1).squaredNorm());
  return std::polar(amp, lambda * y.dot(u2));
}

double WavePacketFamily::self_pairing(double lambda) const {
  return std::pow(lambda / (2 * M_PI), dim);
}

namespace {

// Gauss panels on [p, q]. Ends that are cuts get the substitution
// y = p + (q - p)(3 tau^2 - 2 tau^3) (or its one-sided version), so square-root
// behaviour at the cut becomes smooth.
void piece_rule(double p, double q, bool lo_cut, bool hi_cut, double per_unit, Rule& out) {
  if (q - p < 1e-14 * (1 + std::abs(p))) return;
  const double stretch = lo_cut && hi_cut ? 1.5 : (lo_cut || hi_cut ? 2.0 : 1.0);
  const Rule r = gauss_per_unit(0.0, 1.0, (q - p) * per_unit * stretch);
  for (size_t j = 0; j < r.size(); ++j) {
    const double t = r.x[j];
    double s = t, ds = 1;
    if (lo_cut && hi_cut) {
      s = t * t * (3 - 2 * t);
      ds = 6 * t * (1 - t);
    } else if (lo_cut) {
      s = t * t;
      ds = 2 * t;
    } else if (hi_cut) {
      s = 1 - (1 - t) * (1 - t);
      ds = 2 * (1 - t);
    }
    out.x.push_back(p + (q - p) * s);
    out.w.push_back(r.w[j] * (q - p) * ds);
  }
}

std::vector<double> cut_points(double a, double b, std::vector<double> breaks) {
  std::sort(breaks.begin(), breaks.end());
  std::vector<double> cuts{a};
  for (double c : breaks)
    if (c > a && c < b) cuts.push_back(c);
  cuts.push_back(b);
  return cuts;
}

Rule piecewise_rule(double a, double b, const std::vector<double>& breaks, double per_unit) {
  const auto cuts = cut_points(a, b, breaks);
  Rule out;
  for (size_t i = 0; i + 1 < cuts.size(); ++i)
    piece_rule(cuts[i], cuts[i + 1], i > 0, i + 2 < cuts.size(), per_unit, out);
  return out;
}

double combined_level(const ScalarField& f, const Vec& y) {
  double l = f.support.axes.empty() ? -1.0 : box_level(f.support, y);
  if (f.level) l = std::max(l, f.level(y));
  return l;
}

bool window_inside_support(const ScalarField& f, const Vec& u1, double w) {
  if (f.support.axes.empty()) return true;
  for (int i = 0; i < u1.size(); ++i)
    if (u1[i] - w < f.support.axes[i].first || u1[i] + w > f.support.axes[i].second) return false;
  return true;
}

bool window_misses_support(const ScalarField& f, const Vec& u1, double w) {
  if (f.support.axes.empty()) return false;
  for (int i = 0; i < u1.size(); ++i)
    if (u1[i] + w < f.support.axes[i].first || u1[i] - w > f.support.axes[i].second) return true;
  return false;
}

struct Accum {
  cplx sum = 0;
  double mass = 0, fmax = 0;
  void add(double w, double fv, cplx conj_m) {
    const cplx t = w * fv * conj_m;
    sum += t;
    mass += std::abs(t);
    fmax = std::max(fmax, std::abs(fv));
  }
};

constexpr int kRootSamples = 64;

std::vector<double> line_breaks(const ScalarField& f, const std::function<Vec(double)>& line, double a,
                                double b) {
  std::vector<double> br;
  scan_roots([&](double t) { return combined_level(f, line(t)); }, a, b, kRootSamples, br);
  return br;
}

// Integral over a line segment, skipping pieces where the field vanishes identically.
void integrate_line(const ScalarField& f, const std::function<Vec(double)>& line, double a, double b,
                    bool split, double per_unit, const std::function<cplx(const Vec&)>& conj_m, double wo,
                    Accum& acc) {
  std::vector<double> br;
  if (split) br = line_breaks(f, line, a, b);
  if (!split) {
    const Rule r = piecewise_rule(a, b, {}, per_unit);
    for (size_t j = 0; j < r.size(); ++j) {
      const Vec y = line(r.x[j]);
      const double fv = f(y);
      if (fv != 0.0) acc.add(wo * r.w[j], fv, conj_m(y));
    }
    return;
  }
  const auto cuts = cut_points(a, b, br);
  for (size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double p = cuts[i], q = cuts[i + 1];
    if (q <= p || combined_level(f, line(0.5 * (p + q))) >= 0) continue;
    Rule r;
    piece_rule(p, q, i > 0, i + 2 < cuts.size(), per_unit, r);
    for (size_t j = 0; j < r.size(); ++j) {
      const Vec y = line(r.x[j]);
      const double fv = f(y);
      if (fv != 0.0) acc.add(wo * r.w[j], fv, conj_m(y));
    }
  }
}

// Orthonormal frame for the 2D rule: e1 along u2 carries the oscillation, e2 runs across it.
std::pair<Vec, Vec> plane_frame(const Vec& u2) {
  Vec e1(2), e2(2);
  if (u2.norm() > 0) e1 = u2 / u2.norm();
  else e1 << 1, 0;
  e2 << -e1[1], e1[0];
  return {e1, e2};
}

// Pieces of the outer range where the inner cut structure is constant. Depends only on the
// window, so both quadrature resolutions share it.
// (number of cuts, starts inside) of the inner line at outer offset b
std::pair<size_t, bool> inner_signature(const ScalarField& f, const Vec& u1, const Vec& e1, const Vec& e2,
                                        double W, double b) {
  auto line = [&](double a) -> Vec { return u1 + b * e1 + a * e2; };
  const auto br = line_breaks(f, line, -W, W);
  return {br.size(), combined_level(f, line(-W)) < 0};
}

std::vector<double> outer_breaks_2d(const ScalarField& f, const Vec& u1, const Vec& u2, double W) {
  const auto [e1, e2] = plane_frame(u2);
  auto signature = [&](double b) { return inner_signature(f, u1, e1, e2, W, b); };
  std::vector<double> out;
  const int samples = 2 * kRootSamples;
  double b0 = -W;
  auto s0 = signature(b0);
  for (int i = 1; i <= samples; ++i) {
    const double b1 = -W + 2 * W * i / samples;
    const auto s1 = signature(b1);
    if (s1 != s0) {
      double lo = b0, hi = b1;
      for (int it = 0; it < 48 && hi - lo > 1e-14; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (signature(mid) == s0) lo = mid;
        else hi = mid;
      }
      out.push_back(0.5 * (lo + hi));
    }
    b0 = b1;
    s0 = s1;
  }
  return out;
}

bool needs_split(const ScalarField& f, const Vec& u1, double W) {
  return f.piecewise() || !window_inside_support(f, u1, W);
}

FbiValue fbi_impl(const ScalarField& f, const Vec& u1, const Vec& u2, double lambda, double resolution,
                  const std::vector<double>* shared_breaks) {
  const int n = static_cast<int>(u1.size());
  const WavePacketFamily m{n};
  const double W = WavePacketFamily::window(lambda);
  Accum acc;
  if (window_misses_support(f, u1, W)) return {0.0, 0.0, 0.0};
  // cutting the packet off at the window edge costs about its edge height times the window volume
  auto finish = [&](const Accum& a) {
    const double edge = std::pow(lambda, 0.75 * n) * WavePacketFamily::c(n) * std::exp(-0.5 * lambda * W * W);
    return FbiValue{a.sum, a.mass, edge * a.fmax * std::pow(2 * W, n)};
  };
  auto conj_m = [&](const Vec& y) { return std::conj(m(y, u1, u2, lambda)); };
  const double gauss_pu = resolution * 40.0 / W;
  const double osc_pu = resolution * 16.0 * lambda * u2.norm() / (4 * M_PI);
  const double pu = std::max(gauss_pu, osc_pu);
  const bool split = needs_split(f, u1, W);

  if (n == 1) {
    auto line = [&](double t) {
      Vec y(1);
      y[0] = u1[0] + t;
      return y;
    };
    integrate_line(f, line, -W, W, split, pu, conj_m, 1.0, acc);
    return finish(acc);
  }

  if (n == 2) {
    // inner lines run across u2 (no oscillation); the outer variable along u2 carries the
    // oscillation, so cut points moving with it stay resolved
    const auto [e1, e2] = plane_frame(u2);
    const double outer_pu = pu;
    auto line_at = [&](double b) {
      return [&, b](double a) -> Vec { return u1 + b * e1 + a * e2; };
    };
    std::vector<double> outer_breaks;
    if (split) outer_breaks = shared_breaks ? *shared_breaks : outer_breaks_2d(f, u1, u2, W);
    const Rule outer = piecewise_rule(-W, W, outer_breaks, outer_pu);
    if (!split) {
      for (size_t i = 0; i < outer.size(); ++i)
        integrate_line(f, line_at(outer.x[i]), -W, W, false, gauss_pu, conj_m, outer.w[i], acc);
      return finish(acc);
    }
    // pieces whose inner lines have no cuts lie wholly inside or outside: no per-line scan
    const auto cuts = cut_points(-W, W, outer_breaks);
    std::vector<std::pair<size_t, bool>> piece_sig;
    for (size_t p = 0; p + 1 < cuts.size(); ++p)
      piece_sig.push_back(inner_signature(f, u1, e1, e2, W, 0.5 * (cuts[p] + cuts[p + 1])));
    for (size_t i = 0; i < outer.size(); ++i) {
      const size_t p = std::upper_bound(cuts.begin() + 1, cuts.end() - 1, outer.x[i]) - cuts.begin() - 1;
      const auto [count, inside] = piece_sig[p];
      if (count == 0 && !inside) continue;
      integrate_line(f, line_at(outer.x[i]), -W, W, count > 0, gauss_pu, conj_m, outer.w[i], acc);
    }
    return finish(acc);
  }

  // higher dimensions: tensor rule, no jump splitting
  const Rule r = piecewise_rule(-W, W, {}, pu);
  std::vector<size_t> idx(n, 0);
  Vec y(n);
  while (true) {
    double w = 1.0;
    for (int i = 0; i < n; ++i) {
      y[i] = u1[i] + r.x[idx[i]];
      w *= r.w[idx[i]];
    }
    const double fv = f(y);
    if (fv != 0.0) acc.add(w, fv, conj_m(y));
    int d = 0;
    while (d < n && ++idx[d] == r.size()) idx[d++] = 0;
    if (d == n) break;
  }
  return finish(acc);
}

}  // namespace

FbiValue fbi_transform_full(const ScalarField& f, const Vec& u1, const Vec& u2, double lambda,
                            double resolution) {
  return fbi_impl(f, u1, u2, lambda, resolution, nullptr);
}

cplx fbi_transform(const ScalarField& f, const Vec& u1, const Vec& u2, double lambda) {
  return fbi_transform_full(f, u1, u2, lambda).value;
}

FbiCoefficients fbi_coefficients(const ScalarField& f, const Grid& grid, double lambda) {
  FbiCoefficients c;
  c.grid = grid;
  c.lambda = lambda;
  c.values.resize(grid.size());
  const int n = c.dim();
  tbb::parallel_for(size_t(0), grid.size(), [&](size_t i) {
    const Vec p = grid.point(i);
    c.values[i] = fbi_transform(f, p.head(n), p.tail(n), lambda);
  });
  return c;
}

double fbi_max_spacing(double lambda) { return 0.5 / std::sqrt(lambda); }

namespace {

double cell_volume(const Grid& g, double max_spacing, bool allow_coarse) {
  double vol = 1.0;
  for (size_t a = 0; a < g.axes.size(); ++a) {
    const auto& ax = g.axes[a];
    if (ax.size() < 2) throw Error(ErrorKind::GridTooCoarse, "axis " + g.names[a] + " has fewer than 2 nodes");
    const double h = (ax.back() - ax.front()) / (ax.size() - 1);
    if (h > max_spacing * (1 + 1e-12) && !allow_coarse)
      throw Error(ErrorKind::GridTooCoarse,
                  fmt::format("spacing {:.4g} on {} exceeds {:.4g}", h, g.names[a], max_spacing));
    vol *= h;
  }
  return vol;
}

}  // namespace

ScalarField fbi_inverse(const FbiCoefficients& c, const Box& support, bool allow_coarse) {
  const double vol = cell_volume(c.grid, fbi_max_spacing(c.lambda), allow_coarse);
  const int n = c.dim();
  std::vector<Vec> u1, u2;
  std::vector<cplx> v;
  for (size_t i = 0; i < c.values.size(); ++i) {
    if (c.values[i] == 0.0) continue;
    const Vec p = c.grid.point(i);
    u1.push_back(p.head(n));
    u2.push_back(p.tail(n));
    v.push_back(c.values[i]);
  }
  const double lambda = c.lambda;
  return ScalarField::from_fn(
      [=](const Vec& x) {
        const WavePacketFamily m{n};
        cplx s = 0;
        for (size_t i = 0; i < v.size(); ++i) s += v[i] * m(x, u1[i], u2[i], lambda);
        return vol * s.real();
      },
      support);
}

double fbi_energy(const FbiCoefficients& c) {
  const double vol = cell_volume(c.grid, std::numeric_limits<double>::infinity(), true);
  double s = 0;
  for (const auto& v : c.values) s += std::norm(v);
  return vol * s;
}

const char* class_name(WfClass c) {
  switch (c) {
    case WfClass::Regular: return "regular";
    case WfClass::Singular: return "singular";
    case WfClass::Inconclusive: return "inconclusive";
  }
  return "?";
}

DecayEstimate classify_decay(const std::vector<double>& lambdas, const std::vector<double>& magnitudes,
                             const std::vector<double>& floors, const DetectorConfig& cfg) {
  DecayEstimate e;
  e.magnitudes = magnitudes;
  std::vector<double> t, y;
  size_t first_floored = lambdas.size();
  for (size_t i = 0; i < lambdas.size(); ++i) {
    // anything past the first floored value is noise
    if (magnitudes[i] > floors[i] && magnitudes[i] > 0) {
      t.push_back(lambdas[i]);
      y.push_back(std::log(magnitudes[i]));
    } else {
      first_floored = i;
      break;
    }
  }
  e.used = static_cast<int>(t.size());
  if (t.size() < 2) {
    e.below_floor = true;
    e.cls = WfClass::Regular;
    if (t.size() == 1 && first_floored < lambdas.size() && lambdas[first_floored] > t[0])
      e.epsilon_hat = (y[0] - std::log(std::max(floors[first_floored], 1e-300))) / (lambdas[first_floored] - t[0]);
    else
      e.epsilon_hat = std::numeric_limits<double>::infinity();
    return e;
  }
  const LineFit fit = fit_line(t, y);
  e.epsilon_hat = -fit.slope;
  e.residual = fit.rms;
  e.below_floor = first_floored < lambdas.size();
  if (e.epsilon_hat < cfg.eps_sing) e.cls = WfClass::Singular;
  else if (e.epsilon_hat > cfg.eps_reg && e.residual < cfg.max_residual) e.cls = WfClass::Regular;
  else e.cls = WfClass::Inconclusive;
  return e;
}

DecayEstimate decay_rate_estimate(const ScalarField& f, const Vec& u1, const Vec& u2,
                                  const DetectorConfig& cfg) {
  std::vector<double> mags, floors;
  for (double lam : cfg.lambdas) {
    std::vector<double> breaks;
    const double W = WavePacketFamily::window(lam);
    const bool share = u1.size() == 2 && needs_split(f, u1, W) && !window_misses_support(f, u1, W);
    if (share) breaks = outer_breaks_2d(f, u1, u2, W);
    const FbiValue v = fbi_impl(f, u1, u2, lam, 1.0, share ? &breaks : nullptr);
    // a coarser rerun bounds the quadrature error
    const FbiValue coarse = fbi_impl(f, u1, u2, lam, 0.75, share ? &breaks : nullptr);
    mags.push_back(std::abs(v.value));
    floors.push_back(
        std::max({cfg.floor_rel * v.abs_mass, std::abs(v.value - coarse.value), v.truncation, 1e-300}));
  }
  return classify_decay(cfg.lambdas, mags, floors, cfg);
}

std::vector<PhasePoint> phase_grid(const Grid& base, int directions, double magnitude) {
  std::vector<PhasePoint> out;
  const int n = static_cast<int>(base.axes.size());
  for (size_t i = 0; i < base.size(); ++i) {
    const Vec x = base.point(i);
    if (n == 1) {
      for (double s : {1.0, -1.0}) out.push_back({x, Vec::Constant(1, s * magnitude)});
    } else {
      for (int d = 0; d < directions; ++d) {
        const double a = 2 * M_PI * d / directions;
        Vec u2 = Vec::Zero(n);
        u2[0] = magnitude * std::cos(a);
        u2[1] = magnitude * std::sin(a);
        out.push_back({x, u2});
      }
    }
  }
  return out;
}

std::vector<size_t> WavefrontReport::singular() const {
  std::vector<size_t> s;
  for (size_t i = 0; i < estimates.size(); ++i)
    if (errors[i].empty() && estimates[i].cls == WfClass::Singular) s.push_back(i);
  return s;
}

size_t WavefrontReport::count(WfClass c) const {
  size_t k = 0;
  for (size_t i = 0; i < estimates.size(); ++i)
    if (errors[i].empty() && estimates[i].cls == c) ++k;
  return k;
}

std::string WavefrontReport::to_csv() const {
  std::string out = "# lambdas:";
  for (double l : config.lambdas) out += fmt::format(" {:.17g}", l);
  out += fmt::format("; eps_sing: {:.17g}; eps_reg: {:.17g}; max_residual: {:.17g}; floor_rel: {:.17g}\n",
                     config.eps_sing, config.eps_reg, config.max_residual, config.floor_rel);
  for (int i = 0; i < dim; ++i) out += fmt::format("u1_{},", i);
  for (int i = 0; i < dim; ++i) out += fmt::format("u2_{},", i);
  out += "epsilon_hat,residual,class\n";
  for (size_t i = 0; i < points.size(); ++i) {
    for (int j = 0; j < dim; ++j) out += fmt::format("{:.17g},", points[i].u1[j]);
    for (int j = 0; j < dim; ++j) out += fmt::format("{:.17g},", points[i].u2[j]);
    if (!errors[i].empty()) {
      out += "nan,nan,error\n";
      continue;
    }
    const auto& e = estimates[i];
    out += fmt::format("{:.17g},{:.17g},{}\n", e.epsilon_hat, e.residual, class_name(e.cls));
  }
  return out;
}

WavefrontReport wavefront_scan(const ScalarField& f, const std::vector<PhasePoint>& points,
                               const DetectorConfig& cfg) {
  WavefrontReport r;
  r.dim = points.empty() ? 0 : static_cast<int>(points[0].u1.size());
  r.points = points;
  r.config = cfg;
  r.estimates.resize(points.size());
  r.errors.resize(points.size());
  tbb::parallel_for(size_t(0), points.size(), [&](size_t i) {
    try {
      r.estimates[i] = decay_rate_estimate(f, points[i].u1, points[i].u2, cfg);
    } catch (const std::exception& ex) {
      r.errors[i] = ex.what();
    }
  });
  return r;
}

ScalarField support_split_field(ScalarFn fn, const Box& box, double floor) {
  // level and value share one evaluation of fn per point
  struct Memo {
    Vec x;
    double v = 0;
  };
  auto eval = [fn](const Vec& x) {
    thread_local Memo memo;
    if (memo.x.size() != x.size() || memo.x != x) {
      memo.x = x;
      memo.v = fn(x);
    }
    return memo.v;
  };
  return ScalarField::indicator([eval, floor](const Vec& x) { return floor - eval(x); }, box, eval);
}

std::vector<CanonicalPoint> propagate_wavefront(const Fibration& fib,
                                                const std::vector<std::pair<Vec, Vec>>& source,
                                                const PropagationOptions& opt) {
  if (!fib.defining) throw Error(ErrorKind::ChartFailure, "propagation needs a defining function");
  const int N = fib.N, n = fib.n, k = fib.k, m = N - k;
  if (m != 1 || k != n - 1)
    throw Error(ErrorKind::ChartFailure, "propagation supports hypersurface fibres with one free parameter");
  const auto& b = *fib.defining;
  const auto [lo, hi] = fib.z_box.axes[0];
  std::vector<CanonicalPoint> out;
  for (const auto& [x, eta] : source) {
    if (eta.norm() == 0) throw Error(ErrorKind::OffManifold, "zero covector in the source set");
    auto z_of = [&](double zp) {
      Vec z(N), p(1);
      p[0] = zp;
      z[0] = zp;
      z.tail(k) = b.b(x, p);
      return z;
    };
    bool incident = false;
    for (int i = 0; i <= opt.samples && !incident; ++i)
      incident = fib.z_box.contains(z_of(lo + (hi - lo) * i / opt.samples), 1e-12);
    if (!incident) throw Error(ErrorKind::NoIncidence, "no fibre through the source point meets the parameter box");
    // eta lies in the row space of b_x exactly when det[b_x^T | eta] vanishes
    auto g = [&](double zp) {
      Vec p(1);
      p[0] = zp;
      Mat M(n, n);
      M.leftCols(k) = b.jac_x(x, p).transpose();
      M.col(k) = eta / eta.norm();
      return M.determinant();
    };
    std::vector<double> roots;
    scan_roots(g, lo, hi, opt.samples, roots);
    if (std::abs(g(hi)) < 1e-14) roots.push_back(hi);
    std::sort(roots.begin(), roots.end());
    roots.erase(std::unique(roots.begin(), roots.end(), [](double a, double c) { return std::abs(a - c) < 1e-12; }),
                roots.end());
    for (double r : roots) {
      const Vec z = z_of(r);
      if (!fib.z_box.contains(z, 1e-12)) continue;
      const ConormalFiber cf = conormal_fiber(fib, z, x);
      out.push_back({z, cf.A * eta, x, eta});
    }
  }
  return out;
}

}  // namespace dfib
