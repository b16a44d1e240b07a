#include "dfib/models.hpp"

#include <cmath>

#include <boost/math/tools/roots.hpp>

#include "dfib/error.hpp"

namespace dfib {

namespace {

Vec disk_start(const Vec& z, double radius, double speed_scale) {
  const double a = z[0], b = z[1];
  Vec s(4);
  s << radius * std::cos(a), radius * std::sin(a), -std::cos(a + b) * speed_scale,
      -std::sin(a + b) * speed_scale;
  return s;
}

RayFamily disk_family(double radius, const Symbol& p, double xi_scale) {
  RayFamily r;
  r.field = hamiltonian_vector_field(p);
  r.symbol = p;
  r.chart = disk_chart(radius);
  r.N = 2;
  r.domain.axes = {{0.0, 2 * M_PI}, {-M_PI / 2, M_PI / 2}};
  r.start = [radius, xi_scale](const Vec& z) { return disk_start(z, radius, xi_scale); };
  return r;
}

}  // namespace

RayFamily flat_disk_geodesics(double radius) {
  return disk_family(radius, Symbol::parse("(xi0^2 + xi1^2)/2", 2), 1.0);
}

RayFamily flat_disk_cosphere(double radius) {
  return disk_family(radius, Symbol::parse("xi0^2 + xi1^2 - 1", 2), 1.0);
}

RayFamily disk_bicharacteristics(const Symbol& p, double radius) {
  RayFamily r = disk_family(radius, p, 1.0);
  r.start = [p, radius](const Vec& z) {
    Vec s = disk_start(z, radius, 1.0);
    const Vec x = s.head(2), dir = s.tail(2);
    auto g = [&](double c) { return p(x, c * dir); };
    // first sign change on a log-spaced scan of the scale
    double a = 1e-3, ga = g(a);
    for (int i = 1; i <= 60; ++i) {
      const double b = 1e-3 * std::pow(10.0, i / 10.0), gb = g(b);
      if (ga == 0) break;
      if ((ga < 0) != (gb < 0)) {
        boost::uintmax_t iters = 100;
        const auto br = boost::math::tools::toms748_solve(g, a, b, ga, gb,
                                                          boost::math::tools::eps_tolerance<double>(50), iters);
        a = 0.5 * (br.first + br.second);
        ga = 0;
        break;
      }
      a = b;
      ga = gb;
    }
    if (ga != 0) throw Error(ErrorKind::NotOnCharacteristic, "no characteristic multiple of the entry direction");
    s.tail(2) = a * dir;
    return s;
  };
  return r;
}

Vec disk_params_from_line(double w, double s, double radius) {
  // entry point s*theta - sqrt(R^2 - s^2)*perp, direction perp
  const double c = std::cos(w), sn = std::sin(w);
  const double h = std::sqrt(std::max(radius * radius - s * s, 0.0));
  const double px = s * c + h * sn, py = s * sn - h * c;
  const double a = std::atan2(py, px);
  // direction perp = (-sin w, cos w) = -(cos(a+b), sin(a+b))
  double b = std::atan2(-c, sn) - a;
  b = std::remainder(b, 2 * M_PI);
  Vec z(2);
  z << a, b;
  return z;
}

Symbol sphere_energy() { return Symbol::parse("(1 + x0^2 + x1^2)^2 * (xi0^2 + xi1^2) / 8", 2); }

RayFamily sphere_geodesics(double t_max) {
  RayFamily r;
  r.symbol = sphere_energy();
  r.field = hamiltonian_vector_field(*r.symbol);
  r.chart.dim = 2;
  r.chart.box = cube(2, -20, 20);
  r.chart.metric = [](const Vec& x) {
    const double c = 4.0 / std::pow(1 + x.squaredNorm(), 2);
    return Mat(c * Mat::Identity(2, 2));
  };
  r.N = 2;
  r.domain.axes = {{0.0, 2 * M_PI}, {-1.2, 1.2}};
  r.flow.max_time = t_max;
  r.flow.max_step = 0.05;
  r.start = [](const Vec& z) {
    const double a = z[0], b = z[1];
    Vec s(4);
    // at |x| = 1 the metric is the identity, so xi = v
    s << std::cos(a), std::sin(a), -std::sin(a) * std::cos(b) + std::cos(a) * std::sin(b),
        std::cos(a) * std::cos(b) + std::sin(a) * std::sin(b);
    return s;
  };
  return r;
}

Symbol minkowski_symbol() { return Symbol::parse("-xi0^2 + xi1^2 + xi2^2", 3); }

RayFamily minkowski_light_rays(double radius, double time_half) {
  RayFamily r;
  r.symbol = minkowski_symbol();
  r.field = hamiltonian_vector_field(*r.symbol);
  r.chart.dim = 3;
  r.chart.box.axes = {{-time_half, time_half}, {-1.05 * radius, 1.05 * radius}, {-1.05 * radius, 1.05 * radius}};
  r.chart.boundary = [radius](const Vec& x) { return x[1] * x[1] + x[2] * x[2] - radius * radius; };
  r.chart.boundary_grad = [](const Vec& x) {
    Vec g(3);
    g << 0, 2 * x[1], 2 * x[2];
    return g;
  };
  r.N = 3;
  r.domain.axes = {{-time_half, time_half}, {0.0, 2 * M_PI}, {-M_PI / 2, M_PI / 2}};
  r.start = [radius](const Vec& z) {
    const double a = z[1], b = z[2];
    Vec s(6);
    s << z[0], radius * std::cos(a), radius * std::sin(a), -1.0, -std::cos(a + b), -std::sin(a + b);
    return s;
  };
  return r;
}

RayFamily minkowski_null_rays(double radius, double time_half) {
  RayFamily r = minkowski_light_rays(radius, time_half);
  r.N = 4;
  r.domain.axes.push_back({0.5, 2.0});
  r.start = [radius](const Vec& z) {
    const double a = z[1], b = z[2], k = z[3];
    Vec s(6);
    s << z[0], radius * std::cos(a), radius * std::sin(a), -k, -k * std::cos(a + b), -k * std::sin(a + b);
    return s;
  };
  return r;
}

}  // namespace dfib
