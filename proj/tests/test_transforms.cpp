#include "doctest.h"

#include <boost/math/special_functions/bessel.hpp>
#include <cmath>
#include <random>

#include "dfib/error.hpp"
#include "dfib/models.hpp"
#include "dfib/transforms.hpp"
#include "test_util.hpp"

using namespace dfib;

namespace {

const double kSqrt2Pi = std::sqrt(2 * M_PI);

ScalarField std_gaussian(int dim) { return ScalarField::gaussian(Vec::Zero(dim), 1.0); }

TransformSpec radon_spec(TransformKind kind = TransformKind::EuclideanRadon) {
  TransformSpec s;
  s.fibration = radon_fibration(12.0);
  s.kind = kind;
  return s;
}

// Radon line (w, s) of a disk-family ray entering at angle a with direction offset b
std::pair<double, double> line_of_ray(const Vec& z, double radius) {
  const double px = radius * std::cos(z[0]), py = radius * std::sin(z[0]);
  const double dx = -std::cos(z[0] + z[1]), dy = -std::sin(z[0] + z[1]);
  const double w = std::atan2(-dx, dy);
  return {w, px * std::cos(w) + py * std::sin(w)};
}

}  // namespace

TEST_CASE("zero field gives zero") {
  const ScalarField zero = ScalarField::zero(2);
  CHECK(forward(radon_spec(), zero, vec({0.3, 0.1})) == 0.0);
  CHECK(forward(radon_spec(TransformKind::Generic), zero, vec({0.3, 0.1})) == 0.0);
  CHECK(ray_forward(flat_disk_geodesics(1.0), nullptr, zero, vec({0.2, 0.4})) == 0.0);
  Grid g{{"w", "s"}, {Grid::linspace(0, 3, 4), Grid::linspace(-1, 1, 5)}};
  const Sinogram sg = sinogram(radon_spec(), zero, g);
  for (double v : sg.values) CHECK(v == 0.0);
}

TEST_CASE("Gaussian Radon transform over a 64x64 grid") {
  Grid g{{"w", "s"}, {Grid::centers(0, M_PI, 64), Grid::linspace(-4, 4, 64)}};
  for (auto kind : {TransformKind::EuclideanRadon, TransformKind::Generic}) {
    const Sinogram sg = sinogram(radon_spec(kind), std_gaussian(2), g);
    REQUIRE(sg.failures() == 0);
    double worst = 0, spread = 0;
    for (size_t i = 0; i < g.size(); ++i) {
      const double s = g.point(i)[1];
      const double exact = kSqrt2Pi * std::exp(-s * s / 2);
      worst = std::max(worst, std::abs(sg.values[i] - exact) / exact);
      const size_t j = i % 64;  // same s in the first row
      spread = std::max(spread, std::abs(sg.values[i] - sg.values[j]) / exact);
    }
    CHECK(worst < 1e-6);
    CHECK(spread < 1e-6);
  }
}

TEST_CASE("disk indicator chord lengths") {
  const ScalarField disk = ScalarField::ball(Vec::Zero(2), 0.5);
  for (double s : {0.0, 0.2, 0.45, -0.3}) {
    const double exact = 2 * std::sqrt(0.25 - s * s);
    CHECK(std::abs(euclidean_radon(disk, 0.7, s) - exact) / exact < 1e-3);
  }
  // grazing lines: the chord is far shorter than the root-scan spacing
  for (double gap : {1e-4, 1e-7}) {
    const double s = 0.5 - gap;
    const double exact = 2 * std::sqrt(0.25 - s * s);
    CHECK(std::abs(euclidean_radon(disk, 0.7, s) - exact) / exact < 1e-9);
  }
  // midpoint rule is first order at the kinks
  const double exact = 2 * std::sqrt(0.25 - 0.04);
  const double e1 = std::abs(euclidean_radon(disk, 0.7, 0.2, 256, nullptr, QuadRule::Midpoint) - exact);
  const double e2 = std::abs(euclidean_radon(disk, 0.7, 0.2, 4096, nullptr, QuadRule::Midpoint) - exact);
  CHECK(e2 < 1e-3);
  CHECK(e2 < e1);
}

TEST_CASE("disk phantom sinogram support") {
  const double r = 0.5;
  Grid g{{"w", "s"}, {Grid::centers(0, M_PI, 4), Grid::linspace(-1, 1, 41)}};
  const Sinogram sg = sinogram(radon_spec(), ScalarField::ball(Vec::Zero(2), r), g);
  const double ds = 0.05;
  for (size_t i = 0; i < g.size(); ++i) {
    const double s = std::abs(g.point(i)[1]);
    if (s < r - ds) CHECK(sg.values[i] > 0);
    if (s > r + ds) CHECK(sg.values[i] == 0);
  }
}

TEST_CASE("ray transforms on the flat disk") {
  const RayFamily geo = flat_disk_geodesics(1.0);
  SUBCASE("constant field gives the interval length") {
    const ScalarField one = ScalarField::from_fn([](const Vec&) { return 1.0; }, cube(2, -2, 2));
    for (double b : {0.0, 0.5, -1.2}) {
      const Vec z = vec({0.4, b});
      const Trajectory tr = geo.trajectory(z);
      CHECK(ray_forward(geo, nullptr, one, z) == doctest::Approx(tr.tau_minus + tr.tau_plus).epsilon(1e-12));
      CHECK(tr.tau_plus == doctest::Approx(2 * std::cos(b)).epsilon(1e-9));
    }
  }
  SUBCASE("geodesic X-ray of a radial Gaussian matches the Euclidean Radon transform") {
    const RayFamily big = flat_disk_geodesics(8.0);
    const ScalarField f = ScalarField::gaussian(Vec::Zero(2), 0.7);
    for (double b : {0.0, 0.3, -0.9, 1.3}) {
      const Vec z = vec({1.1, b});
      const auto [w, s] = line_of_ray(z, 8.0);
      const double ref = euclidean_radon(f, w, s);
      CHECK(std::abs(ray_forward(big, nullptr, f, z) - ref) < 1e-6 * std::max(ref, 1e-3));
    }
  }
  SUBCASE("cosphere flow reproduces the geodesic transform with the speed factor") {
    const RayFamily cos = flat_disk_cosphere(8.0);
    const ScalarField f = std_gaussian(2);
    // |s| <= 4 keeps the truncation at the disk edge below 1e-10
    for (double b : {0.0, 0.3, -0.45}) {
      const Vec z = vec({2.0, b});
      const auto [w, s] = line_of_ray(z, 8.0);
      const double exact = kSqrt2Pi * std::exp(-s * s / 2);
      CHECK(std::abs(2 * ray_forward(cos, nullptr, f, z) - exact) / exact < 1e-6);
      const Vec state = cos.start(z);
      CHECK(std::abs(2 * null_bichar_forward(Symbol::parse("xi0^2 + xi1^2 - 1", 2), cos.chart, nullptr, f, state) -
                     exact) / exact < 1e-6);
    }
  }
  SUBCASE("parametrization consistency with the generic forward") {
    const RayFamily big = flat_disk_geodesics(8.0);
    TransformSpec spec;
    spec.fibration = from_ray_family(big, {});
    spec.kind = TransformKind::Generic;
    const ScalarField f = ScalarField::gaussian(vec({0.5, -0.2}), 0.8);
    for (double b : {0.0, 0.4, -1.1}) {
      const Vec z = vec({0.3, b});
      CHECK(std::abs(forward(spec, f, z) - ray_forward(big, nullptr, f, z)) < 1e-8);
    }
  }
}

TEST_CASE("light rays on Minkowski space") {
  SUBCASE("null ray through the origin is a straight line of constant speed") {
    const Symbol p = minkowski_symbol();
    ChartGeometry chart = minkowski_light_rays(1.0, 5.0).chart;
    const Vec state = vec({0, -1, 0, -1, 1, 0});
    const ScalarField one = ScalarField::from_fn([](const Vec&) { return 1.0; }, cube(3, -10, 10));
    CHECK(null_bichar_forward(p, chart, nullptr, one, state) == doctest::Approx(1.0).epsilon(1e-9));
    const Trajectory tr = flow_integrate(hamiltonian_vector_field(p), chart, state);
    const Vec mid = tr.base_at(0.5);
    CHECK((mid - vec({1, 0, 0})).norm() < 1e-9);
    CHECK(ScalarField::zero(3)(mid) == 0.0);
    CHECK(null_bichar_forward(p, chart, nullptr, ScalarField::zero(3), state) == 0.0);
  }
  SUBCASE("off the characteristic set") {
    const Vec state = vec({0, -1, 0, -2, 1, 0});
    CHECK_THROWS_AS(null_bichar_forward(minkowski_symbol(), minkowski_light_rays(1.0, 5.0).chart, nullptr,
                                        std_gaussian(3), state),
                    Error);
  }
  SUBCASE("time-independent field reduces to the planar Radon transform") {
    const RayFamily rays = minkowski_light_rays(1.0, 5.0);
    const Vec c = vec({0.1, -0.2});
    const ScalarField gauss = ScalarField::gaussian(c, 0.25);
    // the planar oracle sees g cut off at the cylinder wall
    const ScalarField g = ScalarField::indicator([](const Vec& x) { return x.norm() - 1.0; }, cube(2, -1.5, 1.5), gauss.smooth);
    Box sup;
    sup.axes = {{-50.0, 50.0}, {-1.5, 1.5}, {-1.5, 1.5}};
    const ScalarField f = ScalarField::from_fn([&](const Vec& x) { return gauss(x.tail(2)); }, sup);
    for (double b : {0.0, 0.3, -0.8}) {
      const Vec z = vec({0.5, 2.3, b});
      const auto [w, s] = line_of_ray(z.tail(2), 1.0);
      const double ref = euclidean_radon(g, w, s);
      CHECK(std::abs(2 * ray_forward(rays, nullptr, f, z) - ref) < 1e-5 * std::max(ref, 1e-2));
    }
  }
}

TEST_CASE("trapped rays are reported") {
  CHECK_THROWS_AS(ray_forward(sphere_geodesics(30.0), nullptr, std_gaussian(2), vec({0.0, 0.2})), Error);
}

TEST_CASE("codim-k transforms") {
  SUBCASE("coordinate line in R^3") {
    DefiningMap d;
    d.b = [](const Vec& x, const Vec&) { return vec({x[0], x[1]}); };
    Fibration fib = from_defining_function(d, 3, 2, 2, cube(3, -10, 10), cube(2, -1, 1), {});
    CHECK(codim_k_forward(fib, nullptr, std_gaussian(3), vec({0, 0})) ==
          doctest::Approx(kSqrt2Pi).epsilon(1e-8));
  }
  SUBCASE("circles against the spherical-means oracle") {
    DefiningMap d;
    d.b = [](const Vec& x, const Vec& zp) { return vec({(x - zp).norm()}); };
    d.b_x = [](const Vec& x, const Vec& zp) { return Mat((x - zp).normalized().transpose()); };
    Fibration fib = from_defining_function(d, 2, 3, 1, cube(2, -10, 10), cube(3, -2, 2), {});
    for (auto [cx, cy, r] : {std::tuple{0.3, -0.4, 0.8}, std::tuple{0.0, 0.0, 1.5}, std::tuple{1.0, 0.5, 0.3}}) {
      const double d0 = std::hypot(cx, cy);
      const double exact = 2 * M_PI * r * std::exp(-(d0 * d0 + r * r) / 2) * boost::math::cyl_bessel_i(0, r * d0);
      const double got = codim_k_forward(fib, nullptr, std_gaussian(2), vec({cx, cy, r}));
      CHECK(std::abs(got - exact) / exact < 1e-4);
    }
    bool empty = false;
    CHECK(codim_k_forward(fib, nullptr, std_gaussian(2), vec({0, 0, 30}), 64, &empty) == 0.0);
    CHECK(empty);
  }
}

TEST_CASE("linearity and weight covariance") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-1, 1);
  Box sup;
  sup.axes = {{-9, 9}, {-9, 9}};
  const ScalarField f = ScalarField::from_fn(ScalarField::gaussian(vec({0.2, 0.1}), 0.6).smooth, sup);
  const ScalarField g = ScalarField::indicator(ScalarField::ball(vec({-0.3, 0.2}), 0.4).level, sup);
  const double a = 1.7, b = -0.4;
  const ScalarField h = ScalarField::from_fn([&](const Vec& x) { return a * f(x) + b * g(x); }, sup);
  for (int i = 0; i < 10; ++i) {
    const double w = M_PI * (U(rng) + 1) / 2, s = U(rng);
    // combined field uses the union of break sets, so compare on a common rule
    const double lhs = euclidean_radon(h, w, s, 512, nullptr, QuadRule::Midpoint);
    const double rhs = a * euclidean_radon(f, w, s, 512, nullptr, QuadRule::Midpoint) +
                       b * euclidean_radon(g, w, s, 512, nullptr, QuadRule::Midpoint);
    CHECK(std::abs(lhs - rhs) < 1e-12 * std::max(1.0, std::abs(lhs)));
    const double base = euclidean_radon(f, w, s);
    // powers of two make the scaling exact in floating point
    const double scaled = euclidean_radon(f, w, s, 64, [](const Vec&, const Vec&) { return 4.0; });
    CHECK(scaled == 4 * base);
  }
}

TEST_CASE("quadrature convergence on the Gaussian phantom") {
  const double s = 0.7, exact = kSqrt2Pi * std::exp(-s * s / 2);
  double prev = std::abs(euclidean_radon(std_gaussian(2), 0.4, s, 1.0) - exact) / exact;
  CHECK(prev > 1e-10);
  for (double pu : {2.0, 4.0, 8.0}) {
    const double err = std::abs(euclidean_radon(std_gaussian(2), 0.4, s, pu) - exact) / exact;
    CHECK((err <= prev / 4 || err < 1e-10));
    prev = err;
  }
}

TEST_CASE("grid indexing is row major") {
  Grid g{{"a", "b"}, {{1, 2}, {10, 20, 30}}};
  CHECK(g.size() == 6);
  CHECK(g.point(0) == vec({1, 10}));
  CHECK(g.point(2) == vec({1, 30}));
  CHECK(g.point(3) == vec({2, 10}));
}
