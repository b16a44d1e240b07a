#include "dfib/transforms.hpp"

#include <tbb/parallel_for.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "dfib/error.hpp"

namespace dfib {

double ScalarField::operator()(const Vec& x) const {
  if (!support.axes.empty() && !support.contains(x)) return 0.0;
  if (level && level(x) >= 0.0) return 0.0;
  return smooth ? smooth(x) : 1.0;
}

ScalarField ScalarField::zero(int dim) {
  ScalarField f;
  f.smooth = [](const Vec&) { return 0.0; };
  f.support = cube(dim, -1.0, 1.0);
  return f;
}

ScalarField ScalarField::from_fn(ScalarFn fn, Box support) {
  ScalarField f;
  f.smooth = std::move(fn);
  f.support = std::move(support);
  return f;
}

ScalarField ScalarField::from_samples(std::vector<double> values, const std::vector<size_t>& shape, Box box) {
  const int N = static_cast<int>(shape.size());
  size_t total = 1;
  for (size_t s : shape) {
    if (s < 2) throw Error(ErrorKind::GridTooCoarse, "sampled field needs two nodes per axis");
    total *= s;
  }
  if (values.size() != total || static_cast<int>(box.axes.size()) != N)
    throw Error(ErrorKind::ParseError, "sample count does not match the grid shape");
  auto vals = std::make_shared<const std::vector<double>>(std::move(values));
  const Box b = box;
  ScalarFn fn = [vals, shape, b, N](const Vec& y) {
    std::vector<size_t> base(N);
    std::vector<double> frac(N);
    for (int i = 0; i < N; ++i) {
      const auto [lo, hi] = b.axes[i];
      const double last = static_cast<double>(shape[i] - 1);
      const double u = std::clamp((y[i] - lo) / (hi - lo) * last, 0.0, last);
      base[i] = std::min(static_cast<size_t>(u), shape[i] - 2);
      frac[i] = u - base[i];
    }
    double v = 0;
    for (int corner = 0; corner < (1 << N); ++corner) {
      double w = 1;
      size_t flat = 0;
      for (int i = 0; i < N; ++i) {
        const int bit = (corner >> i) & 1;
        w *= bit ? frac[i] : 1 - frac[i];
        flat = flat * shape[i] + base[i] + bit;
      }
      if (w != 0) v += w * (*vals)[flat];
    }
    return v;
  };
  return from_fn(std::move(fn), std::move(box));
}

ScalarField ScalarField::indicator(ScalarFn level, Box support, ScalarFn smooth) {
  ScalarField f;
  f.smooth = smooth ? std::move(smooth) : ScalarFn([](const Vec&) { return 1.0; });
  f.level = std::move(level);
  f.support = std::move(support);
  return f;
}

ScalarField ScalarField::gaussian(const Vec& center, double sigma) {
  Box b;
  for (int i = 0; i < center.size(); ++i) b.axes.push_back({center[i] - 12 * sigma, center[i] + 12 * sigma});
  const double s2 = 2 * sigma * sigma;
  return from_fn([center, s2](const Vec& x) { return std::exp(-(x - center).squaredNorm() / s2); }, b);
}

ScalarField ScalarField::ball(const Vec& center, double r) {
  Box b;
  for (int i = 0; i < center.size(); ++i) b.axes.push_back({center[i] - 1.5 * r, center[i] + 1.5 * r});
  return indicator([center, r](const Vec& x) { return (x - center).norm() - r; }, b);
}

namespace {

// `place(t, x)` writes the curve point into x, so the hot loops reuse one buffer
using Placer = std::function<void(double, Vec&)>;

double integrate_segment(const Placer& place, double a, double b, const ScalarField& f,
                         const std::function<double(const Vec&)>& weight, double per_unit, QuadRule rule,
                         bool scan_box) {
  if (!(b > a)) return 0.0;
  Vec x;
  auto integrand = [&](double t) {
    place(t, x);
    const double v = f(x);
    if (v == 0.0) return 0.0;
    return weight ? weight(x) * v : v;
  };
  double sum = 0.0;
  if (rule == QuadRule::Midpoint) {
    const int cells = std::max(1, static_cast<int>(std::ceil((b - a) * per_unit)));
    const Rule r = midpoint(a, b, cells);
    for (size_t i = 0; i < r.size(); ++i) sum += r.w[i] * integrand(r.x[i]);
    return sum;
  }
  std::vector<double> breaks;
  const int samples = std::max(64, static_cast<int>(std::ceil((b - a) * per_unit / 4)));
  if (scan_box && !f.support.axes.empty())
    scan_roots([&](double t) { place(t, x); return box_level(f.support, x); }, a, b, samples, breaks);
  if (f.level) scan_roots([&](double t) { place(t, x); return f.level(x); }, a, b, samples, breaks);
  const Rule r = gauss_with_breaks(a, b, breaks, per_unit);
  for (size_t i = 0; i < r.size(); ++i) sum += r.w[i] * integrand(r.x[i]);
  return sum;
}

}  // namespace

double integrate_curve(const std::function<Vec(double)>& curve, double a, double b, const ScalarField& f,
                       const std::function<double(const Vec&)>& weight, double per_unit, QuadRule rule) {
  return integrate_segment([&](double t, Vec& x) { x = curve(t); }, a, b, f, weight, per_unit, rule, true);
}

double euclidean_radon(const ScalarField& f, double w, double s, double per_unit, const Kappa& kappa,
                       QuadRule rule) {
  Vec th(2), perp(2);
  th << std::cos(w), std::sin(w);
  perp << -th[1], th[0];
  Vec z(2);
  z << w, s;
  std::function<double(const Vec&)> wt;
  if (kappa) wt = [&](const Vec& x) { return kappa(z, x); };
  auto line = [&](double t, Vec& x) { x.noalias() = s * th + t * perp; };
  if (f.support.axes.empty()) return integrate_segment(line, -1.0, 1.0, f, wt, per_unit, rule, true);
  // clip to the support box (slab method); the box scan is then unnecessary
  double a = -std::numeric_limits<double>::infinity(), b = -a;
  for (int i = 0; i < 2; ++i) {
    const auto [lo, hi] = f.support.axes[i];
    const double p = s * th[i];
    if (std::abs(perp[i]) < 1e-300) {
      if (p < lo || p > hi) return 0.0;
      continue;
    }
    double t1 = (lo - p) / perp[i], t2 = (hi - p) / perp[i];
    if (t1 > t2) std::swap(t1, t2);
    a = std::max(a, t1);
    b = std::min(b, t2);
  }
  return integrate_segment(line, a, b, f, wt, per_unit, rule, false);
}

double ray_forward(const RayFamily& rays, const Kappa& kappa, const ScalarField& f, const Vec& z,
                   double per_unit, QuadRule rule) {
  const Trajectory tr = rays.trajectory(z);
  if (tr.trapped()) throw Error(ErrorKind::Trapped, "ray does not exit the chart");
  std::function<double(const Vec&)> wt;
  if (kappa) wt = [&](const Vec& x) { return kappa(z, x); };
  return integrate_curve([&](double t) { return tr.base_at(t); }, -tr.tau_minus, tr.tau_plus, f, wt,
                         per_unit, rule);
}

double null_bichar_forward(const Symbol& p, const ChartGeometry& chart, const Kappa& kappa,
                           const ScalarField& f, const Vec& state, double per_unit,
                           const FlowOptions& opt) {
  const int n = p.dim();
  const Vec x = state.head(n), xi = state.tail(n);
  const double scale = std::max(1.0, xi.squaredNorm());
  if (std::abs(p(x, xi)) > 1e-8 * scale) throw Error(ErrorKind::NotOnCharacteristic, "p(z) != 0");
  if (p.grad_xi(x, xi).norm() < 1e-12 * std::sqrt(scale))
    throw Error(ErrorKind::NotOnCharacteristic, "grad_xi p vanishes");
  const Trajectory tr = flow_integrate(hamiltonian_vector_field(p), chart, state, opt);
  if (tr.trapped()) throw Error(ErrorKind::Trapped, "bicharacteristic does not exit the chart");
  std::function<double(const Vec&)> wt;
  if (kappa) wt = [&](const Vec& y) { return kappa(state, y); };
  return integrate_curve([&](double t) { return tr.base_at(t); }, -tr.tau_minus, tr.tau_plus, f, wt,
                         per_unit);
}

double codim_k_forward(const Fibration& fib, const Kappa& kappa, const ScalarField& f, const Vec& z,
                       double per_unit, bool* empty) {
  const FiberNodes nodes = induced_measure(fib, z, per_unit);
  if (empty) *empty = nodes.empty_level;
  double sum = 0.0;
  for (size_t i = 0; i < nodes.x.size(); ++i) {
    const double v = f(nodes.x[i]);
    if (v == 0.0) continue;
    sum += nodes.w[i] * (kappa ? kappa(z, nodes.x[i]) : fib.weight(z, nodes.x[i])) * v;
  }
  return sum;
}

double forward(const TransformSpec& spec, const ScalarField& f, const Vec& z) {
  const Fibration& fib = spec.fibration;
  Kappa kappa = fib.kappa;
  switch (spec.kind) {
    case TransformKind::EuclideanRadon:
      return euclidean_radon(f, z[0], z[1], spec.per_unit, kappa, spec.rule);
    case TransformKind::GeodesicXray:
    case TransformKind::NullBichar:
      if (!fib.rays) throw Error(ErrorKind::SchemaError, "ray transform needs a ray family");
      return ray_forward(*fib.rays, kappa, f, z, spec.per_unit, spec.rule);
    case TransformKind::CodimKRadon:
    case TransformKind::Generic:
      break;
  }
  return codim_k_forward(fib, kappa, f, z, spec.per_unit);
}

size_t Grid::size() const {
  size_t s = 1;
  for (const auto& a : axes) s *= a.size();
  return axes.empty() ? 0 : s;
}

std::vector<size_t> Grid::shape() const {
  std::vector<size_t> s;
  for (const auto& a : axes) s.push_back(a.size());
  return s;
}

Vec Grid::point(size_t flat) const {
  Vec p(static_cast<int>(axes.size()));
  for (int i = static_cast<int>(axes.size()) - 1; i >= 0; --i) {
    const size_t m = axes[i].size();
    p[i] = axes[i][flat % m];
    flat /= m;
  }
  return p;
}

std::vector<double> Grid::linspace(double a, double b, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = n == 1 ? a : a + (b - a) * i / (n - 1);
  return v;
}

std::vector<double> Grid::centers(double a, double b, int n) {
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i) v[i] = a + (b - a) * (i + 0.5) / n;
  return v;
}

size_t Sinogram::failures() const {
  return static_cast<size_t>(std::count_if(errors.begin(), errors.end(), [](const auto& e) { return !e.empty(); }));
}

Sinogram sinogram(const std::function<double(const Vec&)>& eval, const Grid& grid) {
  Sinogram out;
  out.grid = grid;
  const size_t m = grid.size();
  out.values.assign(m, 0.0);
  out.errors.assign(m, {});
  tbb::parallel_for(size_t{0}, m, [&](size_t i) {
    try {
      const double v = eval(grid.point(i));
      if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "non-finite transform value");
      out.values[i] = v;
    } catch (const std::exception& e) {
      out.values[i] = std::numeric_limits<double>::quiet_NaN();
      out.errors[i] = e.what();
    }
  });
  return out;
}

Sinogram sinogram(const TransformSpec& spec, const ScalarField& f, const Grid& grid) {
  return sinogram([&](const Vec& z) { return forward(spec, f, z); }, grid);
}

}  // namespace dfib
