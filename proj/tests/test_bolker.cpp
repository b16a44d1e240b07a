#include "doctest.h"

#include <cmath>
#include <nlohmann/json.hpp>
#include <random>

#include "dfib/bolker.hpp"
#include "dfib/error.hpp"
#include "dfib/models.hpp"
#include "test_util.hpp"

using namespace dfib;

namespace {

Fibration ray_fibration(const RayFamily& rays, int n) {
  Fibration f;
  f.N = rays.N;
  f.n = n;
  f.k = n - 1;
  f.rays = rays;
  f.x_box = rays.chart.box;
  return f;
}

CanonicalPoint ray_point(const Fibration& fib, const Vec& z, double t, const Vec& eta) {
  CanonicalPoint p;
  p.z = z;
  p.x = fib.rays->trajectory(z).base_at(t);
  p.eta = eta;
  p.zeta = Vec::Zero(fib.N);
  return p;
}

std::vector<double> grid(double a, double b, int n) {
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = a + (b - a) * i / n;
  return g;
}

CanonicalPoint random_radon_point(const Fibration& fib, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0, 1);
  const Vec z = vec({M_PI * U(rng), 2 * U(rng) - 1});
  const double t = 2 * U(rng) - 1;
  const Vec x = vec({z[1] * std::cos(z[0]) - t * std::sin(z[0]), z[1] * std::sin(z[0]) + t * std::cos(z[0])});
  const double c = (U(rng) < 0.5 ? -1 : 1) * (0.2 + 2 * U(rng));
  return canonical_point(fib, z, x, vec({c}));
}

}  // namespace

TEST_CASE("variation fields on the flat disk") {
  const RayFamily rays = flat_disk_geodesics(1.0);
  const Vec z = vec({0.7, 0.3});
  const std::vector<double> ts = {0.0, 0.25, 0.8, 1.5};
  const VariationField v = variation_field(rays, z, vec({0, 1}), ts);
  const Vec perp = vec({std::sin(1.0), -std::cos(1.0)});
  for (size_t i = 0; i < ts.size(); ++i) CHECK((v.J[i] - ts[i] * perp).norm() < 1e-8);
  const VariationField zero = variation_field(rays, z, vec({0, 0}), ts);
  for (const Vec& J : zero.J) CHECK(J.norm() == 0.0);
  SUBCASE("linearity in w") {
    const Vec w1 = vec({1, 0}), w2 = vec({0.3, -2});
    const VariationField a = variation_field(rays, z, w1, ts), b = variation_field(rays, z, w2, ts);
    const VariationField c = variation_field(rays, z, 2 * w1 - 0.5 * w2, ts);
    for (size_t i = 0; i < ts.size(); ++i) CHECK((c.J[i] - 2 * a.J[i] + 0.5 * b.J[i]).norm() < 1e-8);
  }
  SUBCASE("difference quotients agree with the linearized flow") {
    const VariationField a = variation_field(rays, z, vec({1, 0.4}), ts);
    const VariationField b = variation_field_ode(rays, z, vec({1, 0.4}), ts);
    for (size_t i = 0; i < ts.size(); ++i) CHECK((a.J[i] - b.J[i]).norm() < 1e-5);
  }
}

TEST_CASE("sphere variation fields follow sin t") {
  const RayFamily rays = sphere_geodesics(7.0);
  const std::vector<double> ts = grid(0.0, 2 * M_PI, 40);
  for (double b : {0.0, 0.5}) {
    const VariationField v = variation_field(rays, vec({0.4, b}), vec({0, 1}), ts);
    const VariationField o = variation_field_ode(rays, vec({0.4, b}), vec({0, 1}), ts);
    const Trajectory tr = rays.trajectory(vec({0.4, b}));
    for (size_t i = 0; i < ts.size(); ++i) {
      const Vec x = tr.base_at(ts[i]);
      const double g = 2.0 / (1 + x.squaredNorm());
      CHECK(std::abs(g * v.J[i].norm() - std::abs(std::sin(ts[i]))) < 1e-5);
      CHECK((v.J[i] - o.J[i]).norm() < 1e-5);
    }
  }
}

TEST_CASE("conjugate scans") {
  SUBCASE("flat disk has none") {
    const RayFamily rays = flat_disk_geodesics(1.0);
    for (double b : {0.0, 0.6, -1.1}) {
      const Trajectory tr = rays.trajectory(vec({0.2, b}));
      const ConjugateScan s = conjugate_scan(rays, vec({0.2, b}), grid(0.0, tr.tau_plus, 128));
      CHECK(s.pairs.empty());
    }
  }
  SUBCASE("antipodal points on the sphere") {
    const RayFamily rays = sphere_geodesics(7.0);
    const std::vector<double> ts = grid(0.0, 2 * M_PI, 128);
    const double dt = ts[1] - ts[0];
    const ConjugateScan s = conjugate_scan(rays, vec({1.0, 0.3}), ts);
    REQUIRE(!s.pairs.empty());
    for (const auto& p : s.pairs) CHECK(std::abs(std::abs(p.t - p.s) - M_PI) <= dt);
    // every s with its antipode inside the window is flagged
    size_t expected = 0;
    for (double t : ts) expected += (t + M_PI < 2 * M_PI - dt) + (t - M_PI > dt);
    CHECK(s.pairs.size() >= expected);
  }
  SUBCASE("null bicharacteristics in Minkowski space") {
    const RayFamily rays = minkowski_null_rays(1.0, 5.0);
    const Vec z = vec({0.0, 0.5, 0.4, 1.0});
    const Trajectory tr = rays.trajectory(z);
    ConjugateOptions opt;
    opt.modulo_tangent = false;
    const ConjugateScan s = conjugate_scan(rays, z, grid(0.0, tr.tau_plus, 64), opt);
    CHECK(s.pairs.empty());
    // xi(t) annihilates V_z(t, 0) and xdot(t) lies in it
    const std::vector<double> ts = {0.1, 0.3, 0.6};
    const auto Js = variation_matrices(rays, z, ts);
    const Mat J0 = variation_matrix(rays, z, 0.0);
    const Vec xd0 = rays.field(tr.state_at(0)).head(3);
    Mat P = Mat::Identity(3, 3) - xd0 * xd0.transpose() / xd0.squaredNorm();
    Eigen::JacobiSVD<Mat> svd(P * J0, Eigen::ComputeFullV);
    const Mat W = svd.matrixV().rightCols(2);
    for (size_t i = 0; i < ts.size(); ++i) {
      const Vec st = tr.state_at(ts[i]);
      const Vec xi = st.tail(3), xd = rays.field(st).head(3);
      const Mat V = Js[i] * W;
      for (int c = 0; c < V.cols(); ++c) CHECK(std::abs(xi.dot(V.col(c))) < 1e-6 * xi.norm() * Js[i].norm());
      const Vec coef = V.completeOrthogonalDecomposition().solve(xd);
      CHECK((V * coef - xd).norm() < 1e-6 * xd.norm());
    }
  }
}

TEST_CASE("injectivity") {
  SUBCASE("Radon fibration") {
    const Fibration fib = radon_fibration(3.0);
    std::mt19937_64 rng(3);
    for (int i = 0; i < 10; ++i) {
      CanonicalPoint p = random_radon_point(fib, rng);
      const InjectivityResult a = injectivity_check(fib, p);
      CHECK(a.pass);
      CHECK(a.tested > 10);
      p.eta *= 2;
      p.zeta *= 2;
      CHECK(injectivity_check(fib, p).pass == a.pass);
    }
  }
  SUBCASE("flat disk rays") {
    const Fibration fib = ray_fibration(flat_disk_geodesics(1.0), 2);
    const Vec z = vec({0.3, 0.5});
    const Trajectory tr = fib.rays->trajectory(z);
    const Vec xd = tr.state_at(0.4).tail(2);
    const CanonicalPoint p = ray_point(fib, z, 0.4, vec({-xd[1], xd[0]}));
    CHECK(injectivity_check(fib, p).pass);
  }
  SUBCASE("antipodal witness on the sphere") {
    const Fibration fib = ray_fibration(sphere_geodesics(7.0), 2);
    const Vec z = vec({0.2, 0.1});
    const Trajectory tr = fib.rays->trajectory(z);
    const Vec v = fib.rays->field(tr.state_at(0.5)).head(2);
    const CanonicalPoint p = ray_point(fib, z, 0.5, vec({-v[1], v[0]}));
    const InjectivityResult r = injectivity_check(fib, p, 128);
    CHECK_FALSE(r.pass);
    REQUIRE(!r.witnesses.empty());
    const Vec antipode = tr.base_at(0.5 + M_PI);
    double best = 1e300;
    for (const Vec& y : r.witnesses) best = std::min(best, (y - antipode).norm());
    CHECK(best < 1e-3);
    CanonicalPoint q = p;
    q.eta *= 2;
    CHECK(injectivity_check(fib, q, 128).pass == r.pass);
  }
}

TEST_CASE("immersion checks") {
  SUBCASE("Radon: graph and defining forms agree") {
    const Fibration fib = radon_fibration(3.0);
    std::mt19937_64 rng(5);
    for (int i = 0; i < 20; ++i) {
      CanonicalPoint p = random_radon_point(fib, rng);
      const ImmersionResult g = immersion_check(fib, p, ImmersionMethod::Graph);
      const ImmersionResult d = immersion_check(fib, p, ImmersionMethod::Defining);
      CHECK(g.verdict == Verdict::Pass);
      CHECK(d.verdict == Verdict::Pass);
      CHECK(g.margin / d.margin < 10);
      CHECK(d.margin / g.margin < 10);
      p.eta *= 3;
      p.zeta *= 3;
      CHECK(immersion_check(fib, p, ImmersionMethod::Graph).margin == doctest::Approx(g.margin).epsilon(1e-6));
    }
  }
  SUBCASE("Radon at zeta'' = 0 is not a canonical point and fails the rank test") {
    const Fibration fib = radon_fibration(3.0);
    CanonicalPoint p = canonical_point(fib, vec({0.3, 0.2}), vec({0.2 * std::cos(0.3), 0.2 * std::sin(0.3)}), vec({1.0}));
    p.zeta.setZero();
    CHECK(immersion_check(fib, p, ImmersionMethod::Defining).verdict == Verdict::Fail);
  }
  SUBCASE("inconclusive band") {
    const Fibration fib = radon_fibration(3.0);
    std::mt19937_64 rng(9);
    const CanonicalPoint p = random_radon_point(fib, rng);
    CHECK(immersion_check(fib, p, ImmersionMethod::Defining, 1e-10, 10.0).verdict == Verdict::Inconclusive);
  }
  SUBCASE("Minkowski: eta parallel to xi fails, spacelike conormal passes") {
    const Fibration fib = ray_fibration(minkowski_null_rays(1.0, 5.0), 3);
    for (double b : {0.0, 0.5, -0.9}) {
      const Vec z = vec({0.0, 1.3, b, 1.0});
      const double t = 0.3;
      const Vec st = fib.rays->trajectory(z).state_at(t);
      const Vec xi = st.tail(3);
      const CanonicalPoint par = ray_point(fib, z, t, xi);
      const CanonicalPoint spc = ray_point(fib, z, t, vec({0, -xi[2], xi[1]}));
      CHECK(immersion_check(fib, par).verdict == Verdict::Fail);
      CHECK(immersion_check(fib, spc).verdict == Verdict::Pass);
      CHECK(immersion_check(fib, par).method == ImmersionMethod::FiberHessian);
    }
  }
  SUBCASE("flat disk: fiber-Hessian and ray-variation forms pass") {
    const Fibration fib = ray_fibration(flat_disk_geodesics(1.0), 2);
    const Vec z = vec({0.3, -0.4});
    const Vec v = fib.rays->trajectory(z).state_at(0.7).tail(2);
    const CanonicalPoint p = ray_point(fib, z, 0.7, vec({-v[1], v[0]}));
    CHECK(immersion_check(fib, p, ImmersionMethod::FiberHessian).verdict == Verdict::Pass);
    CHECK(immersion_check(fib, p, ImmersionMethod::RayVariation).verdict == Verdict::Pass);
  }
}

TEST_CASE("potentially visible singularities") {
  const Symbol mink = minkowski_symbol();
  const Vec x = vec({0.1, 0.2, -0.3});
  CHECK(pvs_membership(mink, x, vec({0.2, 1.0, 0.3})).member);
  CHECK_FALSE(pvs_membership(mink, x, vec({1.0, 0.2, 0.3})).member);
  CHECK(is_homogeneous(mink, x));
  const Symbol riem = Symbol::parse("xi0^2 + xi1^2 - 1", 2);
  CHECK_FALSE(is_homogeneous(riem, vec({0, 0})));
  for (double a : {0.0, 1.0, 2.5}) CHECK(pvs_membership(riem, vec({0.3, 0.1}), vec({std::cos(a), std::sin(a)})).member);
  CHECK_THROWS_AS(pvs_membership(Symbol::parse("xi0^2 + xi1^2 + 1", 2), vec({0, 0}), vec({1, 0})), Error);
}

TEST_CASE("strict pseudoconvexity") {
  const Box box = cube(2, -1, 1);
  auto annulus = [](const Vec& x) {
    const double r = x.norm();
    return std::max(0.3 - r, r - 0.9);
  };
  PseudoconvexityOptions lvl;
  lvl.level = 1.0;
  const Symbol p = Symbol::parse("xi0^2 + xi1^2", 2);
  const auto vars = phase_space_names(2);
  const PseudoconvexityResult ok = pseudoconvexity_check(p, Expr::parse("x0^2 + x1^2", vars), box, annulus, lvl);
  CHECK(ok.pass);
  CHECK(ok.worst == doctest::Approx(8.0).epsilon(1e-9));
  const PseudoconvexityResult lin = pseudoconvexity_check(p, Expr::parse("x0 + 2*x1", vars), box, annulus, lvl);
  CHECK_FALSE(lin.pass);
  CHECK(std::abs(lin.worst) < 1e-9);
  const PseudoconvexityResult mk = pseudoconvexity_check(minkowski_symbol(), Expr::parse("x1^2 + x2^2", phase_space_names(3)),
                                                         cube(3, -1, 1), [](const Vec& x) { return 0.2 - x.tail(2).norm(); });
  CHECK(mk.pass);
  CHECK(mk.worst == doctest::Approx(4.0).epsilon(1e-8));
  const PseudoconvexityResult none =
      pseudoconvexity_check(Symbol::parse("xi0^2 + xi1^2 + 1", 2), Expr::parse("x0^2", vars), box);
  CHECK(none.empty);
  CHECK_FALSE(none.pass);
}

TEST_CASE("report serialization") {
  const Fibration fib = radon_fibration(3.0);
  std::mt19937_64 rng(1);
  BolkerReport r = bolker_report(fib, random_radon_point(fib, rng));
  const auto j = nlohmann::json::parse(to_json(r));
  CHECK(j["immersion"]["pass"].get<bool>());
  CHECK(j["injectivity"]["pass"].get<bool>());
  CHECK(j["point"]["eta"].size() == 2);
  CHECK(j["pvs"].is_null());
}
