#include "dfib/linalg.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>
#include <algorithm>
#include <cmath>
#include <limits>

namespace dfib {

bool Box::contains(const Vec& x, double slack) const {
  for (int i = 0; i < dim(); ++i)
    if (x[i] < axes[i].first - slack || x[i] > axes[i].second + slack) return false;
  return true;
}

double Box::diameter() const {
  double s = 0.0;
  for (const auto& [lo, hi] : axes) s += (hi - lo) * (hi - lo);
  return std::sqrt(s);
}

Vec Box::center() const {
  Vec c(dim());
  for (int i = 0; i < dim(); ++i) c[i] = 0.5 * (axes[i].first + axes[i].second);
  return c;
}

void scan_roots(const std::function<double(double)>& g, double a, double b, int samples,
                std::vector<double>& out) {
  boost::uintmax_t it = 100;
  auto tol = [](double u, double v) { return std::abs(u - v) < 1e-15 * (1 + std::abs(u)); };
  auto solve = [&](double lo, double hi, double glo, double ghi) {
    it = 100;
    const auto r = boost::math::tools::toms748_solve(g, lo, hi, glo, ghi, tol, it);
    out.push_back(0.5 * (r.first + r.second));
  };
  double tp = a, gp = std::numeric_limits<double>::quiet_NaN();
  double t0 = a, g0 = g(a);
  for (int i = 1; i <= samples; ++i) {
    const double t1 = a + (b - a) * i / samples;
    const double g1 = g(t1);
    if (g0 == 0.0) {
      out.push_back(t0);
    } else if ((g0 < 0) != (g1 < 0) && g1 != 0.0) {
      solve(t0, t1, g0, g1);
    } else if (i > 1 && (gp < 0) == (g0 < 0) && (g1 < 0) == (g0 < 0) && std::abs(g0) < std::abs(gp) &&
               std::abs(g0) <= std::abs(g1) && std::abs(g0) < std::abs(gp - g0) + std::abs(g1 - g0)) {
      // a dip toward zero between samples can hide a pair of close roots (grazing lines)
      const double sgn = g0 < 0 ? -1.0 : 1.0;
      const auto m = boost::math::tools::brent_find_minima([&](double t) { return sgn * g(t); }, tp, t1, 52);
      const double tm = m.first, gm = sgn * m.second;
      if (gm == 0.0) out.push_back(tm);
      else if ((gm < 0) != (g0 < 0) && tm > tp && tm < t1) {
        solve(tp, tm, gp, gm);
        solve(tm, t1, gm, g1);
      }
    }
    tp = t0;
    gp = g0;
    t0 = t1;
    g0 = g1;
  }
}

double box_level(const Box& b, const Vec& x) {
  double m = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < b.dim(); ++i) m = std::max({m, b.axes[i].first - x[i], x[i] - b.axes[i].second});
  return m;
}

Box cube(int dim, double lo, double hi) {
  Box b;
  b.axes.assign(dim, {lo, hi});
  return b;
}

namespace {

struct Gauss16 {
  std::vector<double> x, w;
  Gauss16() {
    using G = boost::math::quadrature::gauss<double, 16>;
    const auto& a = G::abscissa();
    const auto& wt = G::weights();
    for (size_t i = 0; i < a.size(); ++i) {
      x.push_back(-a[i]);
      w.push_back(wt[i]);
      x.push_back(a[i]);
      w.push_back(wt[i]);
    }
  }
};

const Gauss16& g16() {
  static const Gauss16 g;
  return g;
}

}  // namespace

Rule gauss_panels(double a, double b, int panels) {
  Rule r;
  if (panels < 1) panels = 1;
  const auto& g = g16();
  const double h = (b - a) / panels;
  r.x.reserve(panels * 16);
  r.w.reserve(panels * 16);
  for (int p = 0; p < panels; ++p) {
    const double mid = a + (p + 0.5) * h;
    for (size_t i = 0; i < g.x.size(); ++i) {
      r.x.push_back(mid + 0.5 * h * g.x[i]);
      r.w.push_back(0.5 * h * g.w[i]);
    }
  }
  return r;
}

Rule gauss_per_unit(double a, double b, double per_unit) {
  const int panels = std::max(1, static_cast<int>(std::ceil(std::abs(b - a) * per_unit / 16.0)));
  return gauss_panels(a, b, panels);
}

Rule gauss_with_breaks(double a, double b, const std::vector<double>& breaks, double per_unit,
                       int min_panels) {
  std::vector<double> cuts{a};
  std::vector<double> sorted = breaks;
  std::sort(sorted.begin(), sorted.end());
  for (double c : sorted)
    if (c > a && c < b) cuts.push_back(c);
  cuts.push_back(b);
  Rule r;
  for (size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double len = cuts[i + 1] - cuts[i];
    if (len <= 0) continue;
    const int panels = std::max(min_panels, static_cast<int>(std::ceil(len * per_unit / 16.0)));
    Rule p = gauss_panels(cuts[i], cuts[i + 1], panels);
    r.x.insert(r.x.end(), p.x.begin(), p.x.end());
    r.w.insert(r.w.end(), p.w.begin(), p.w.end());
  }
  return r;
}

Rule midpoint(double a, double b, int n) {
  Rule r;
  const double h = (b - a) / n;
  for (int i = 0; i < n; ++i) {
    r.x.push_back(a + (i + 0.5) * h);
    r.w.push_back(h);
  }
  return r;
}

Mat jacobian_fd(const VecFn& f, const Vec& x, double h) {
  Vec f0 = f(x);
  Mat j(f0.size(), x.size());
  Vec xp = x, xm = x;
  for (int i = 0; i < x.size(); ++i) {
    const double hi = h * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + hi;
    xm[i] = x[i] - hi;
    j.col(i) = (f(xp) - f(xm)) / (2.0 * hi);
    xp[i] = xm[i] = x[i];
  }
  return j;
}

Vec gradient_fd(const ScalarFn& f, const Vec& x, double h) {
  Vec g(x.size());
  Vec xp = x, xm = x;
  for (int i = 0; i < x.size(); ++i) {
    const double hi = h * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + hi;
    xm[i] = x[i] - hi;
    g[i] = (f(xp) - f(xm)) / (2.0 * hi);
    xp[i] = xm[i] = x[i];
  }
  return g;
}

RankReport rank_report(const Mat& a, double threshold) {
  RankReport r;
  Eigen::JacobiSVD<Mat> svd(a);
  r.singular_values = svd.singularValues();
  const auto& s = r.singular_values;
  if (s.size() == 0 || s[0] == 0.0) return r;
  r.ratio = s[s.size() - 1] / s[0];
  for (int i = 0; i < s.size(); ++i)
    if (s[i] / s[0] > threshold) ++r.rank;
  return r;
}

RankReport rank_report_normalized(const Mat& a, double threshold) {
  Mat b = a;
  for (int j = 0; j < b.cols(); ++j) {
    const double n = b.col(j).norm();
    if (n > 0) b.col(j) /= n;
  }
  return rank_report(b, threshold);
}

Mat null_space(const Mat& a, double rel_tol) {
  if (a.rows() == 0) return Mat::Identity(a.cols(), a.cols());
  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeFullV);
  const Vec& s = svd.singularValues();
  const double smax = s.size() ? s[0] : 0.0;
  int rank = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s[i] > rel_tol * std::max(smax, 1e-300)) ++rank;
  return svd.matrixV().rightCols(a.cols() - rank);
}

LineFit fit_line(const std::vector<double>& t, const std::vector<double>& y) {
  LineFit f;
  const size_t n = t.size();
  if (n == 0) return f;
  if (n == 1) {
    f.intercept = y[0];
    return f;
  }
  double mt = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mt += t[i];
    my += y[i];
  }
  mt /= n;
  my /= n;
  double stt = 0, sty = 0;
  for (size_t i = 0; i < n; ++i) {
    stt += (t[i] - mt) * (t[i] - mt);
    sty += (t[i] - mt) * (y[i] - my);
  }
  f.slope = stt > 0 ? sty / stt : 0.0;
  f.intercept = my - f.slope * mt;
  double ss = 0;
  for (size_t i = 0; i < n; ++i) {
    const double r = y[i] - f.intercept - f.slope * t[i];
    ss += r * r;
  }
  f.rms = std::sqrt(ss / n);
  return f;
}

}  // namespace dfib
