#include "doctest.h"

#include <cmath>

#include "dfib/error.hpp"
#include "dfib/fibration.hpp"
#include "dfib/microlocal.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dfib;

namespace {

ScalarField part_of_packet(const Vec& u1, const Vec& u2, double lambda, bool imag) {
  const WavePacketFamily m{static_cast<int>(u1.size())};
  const double w = WavePacketFamily::window(lambda) * 1.5;
  Box b;
  for (int i = 0; i < u1.size(); ++i) b.axes.push_back({u1[i] - w, u1[i] + w});
  return ScalarField::from_fn(
      [=](const Vec& y) {
        const cplx v = m(y, u1, u2, lambda);
        return imag ? v.imag() : v.real();
      },
      b);
}

ScalarField bump_1d(double center) {
  return ScalarField::gaussian(vec({center}), 1.0);
}

Grid inversion_grid(double lambda, double u1_half, double u2_half) {
  const double h = fbi_max_spacing(lambda);
  Grid g;
  g.names = {"u1_0", "u2_0"};
  const int n1 = static_cast<int>(std::ceil(2 * u1_half / h)), n2 = static_cast<int>(std::ceil(2 * u2_half / h));
  g.axes = {Grid::linspace(-n1 * h / 2, n1 * h / 2, n1 + 1), Grid::linspace(-n2 * h / 2, n2 * h / 2, n2 + 1)};
  return g;
}

double rel_l2(const ScalarField& a, const ScalarField& b, double lo, double hi) {
  double num = 0, den = 0;
  const Rule r = gauss_per_unit(lo, hi, 32);
  for (size_t i = 0; i < r.size(); ++i) {
    const Vec y = vec({r.x[i]});
    num += r.w[i] * std::pow(a(y) - b(y), 2);
    den += r.w[i] * std::pow(b(y), 2);
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST_CASE("packet self-pairing matches the Gaussian integral") {
  for (int n : {1, 2}) {
    for (double lambda : {4.0, 64.0}) {
      const Vec u1 = Vec::Constant(n, 0.3), u2 = Vec::Constant(n, -0.7);
      const cplx re = fbi_transform(part_of_packet(u1, u2, lambda, false), u1, u2, lambda);
      const cplx im = fbi_transform(part_of_packet(u1, u2, lambda, true), u1, u2, lambda);
      const cplx pairing = re + cplx(0, 1) * im;
      const double expect = oracle::packet_self_pairing(n, lambda);
      CHECK(std::abs(pairing - expect) / expect < 1e-10);
      CHECK(std::abs(WavePacketFamily{n}.self_pairing(lambda) - expect) / expect < 1e-13);
    }
  }
}

TEST_CASE("FBI of zero and of a Gaussian") {
  CHECK(fbi_transform(ScalarField::zero(2), vec({0.1, 0.2}), vec({1, 0}), 16) == cplx(0));
  for (double lambda : {8.0, 64.0, 512.0}) {
    for (const auto& [u1, u2] : {std::pair{vec({0.4, -0.3}), vec({0, 0})}, std::pair{vec({0.1, 0.2}), vec({0.3, -0.2})}}) {
      // far out in u2 the true value is e^-33 or so; compare against the integrand scale there
      const FbiValue got = fbi_transform_full(oracle::smooth_field(), u1, u2, lambda);
      const cplx want = oracle::gaussian_fbi(u1, u2, lambda);
      CHECK(std::abs(got.value - want) < 1e-8 * std::abs(want) + 1e-13 * got.abs_mass);
    }
    const cplx g1 = fbi_transform(bump_1d(0.0), vec({0.2}), vec({0.0}), lambda);
    CHECK(std::abs(g1 - oracle::gaussian_fbi(vec({0.2}), vec({0.0}), lambda)) / std::abs(g1) < 1e-8);
  }
}

TEST_CASE("inversion and energy at lambda 64") {
  const double lambda = 64;
  const Grid g = inversion_grid(lambda, 9.0, 1.6);
  const ScalarField f = bump_1d(0.0);
  const FbiCoefficients c = fbi_coefficients(f, g, lambda);
  const ScalarField rec = fbi_inverse(c, cube(1, -6, 6));
  CHECK(rel_l2(rec, f, -5, 5) < 0.01);
  CHECK(std::abs(fbi_energy(c) / std::sqrt(M_PI) - 1) < 0.02);

  // translation covariance
  const FbiCoefficients ct = fbi_coefficients(bump_1d(0.5), g, lambda);
  const ScalarField rect = fbi_inverse(ct, cube(1, -6, 6));
  const ScalarField back = ScalarField::from_fn([&](const Vec& y) { return rect(y + vec({0.5})); }, cube(1, -6, 6));
  CHECK(rel_l2(back, rec, -4, 4) < 1e-3);

  const ScalarField zero = fbi_inverse(fbi_coefficients(ScalarField::zero(1), g, lambda), cube(1, -6, 6));
  CHECK(zero(vec({0.3})) == 0.0);

  Grid coarse = g;
  coarse.axes[1] = Grid::linspace(-1.6, 1.6, 9);
  CHECK_THROWS_AS(fbi_inverse(fbi_coefficients(f, coarse, lambda), cube(1, -6, 6)), Error);
}

TEST_CASE("decay estimates on the oracle fields") {
  const DetectorConfig cfg;
  // compact bump, centre 0.5 outside its support
  const ScalarField bump = ScalarField::from_fn(
      [](const Vec& y) {
        const double r2 = y.squaredNorm();
        return r2 < 1 ? std::exp(-1 / (1 - r2)) : 0.0;
      },
      cube(2, -1, 1));
  const DecayEstimate far = decay_rate_estimate(bump, vec({1.5, 0}), vec({1, 0}), cfg);
  CHECK(far.cls == WfClass::Regular);
  CHECK(far.epsilon_hat >= 0.25 * 0.25);

  const ScalarField edge = oracle::edge_field();
  const DecayEstimate normal = decay_rate_estimate(edge, vec({0, 0}), vec({1, 0}), cfg);
  CHECK(normal.cls == WfClass::Singular);
  CHECK(std::abs(normal.epsilon_hat) < 0.01);
  const DecayEstimate tangent = decay_rate_estimate(edge, vec({0, 0}), vec({0, 1}), cfg);
  CHECK(tangent.cls == WfClass::Regular);
  const DecayEstimate smooth = decay_rate_estimate(oracle::smooth_field(), vec({0.2, 0.1}), vec({0.6, 0.8}), cfg);
  CHECK(smooth.cls == WfClass::Regular);
  CHECK(smooth.epsilon_hat > 0.3);

  const DecayEstimate none = decay_rate_estimate(ScalarField::zero(2), vec({0, 0}), vec({1, 0}), cfg);
  CHECK(none.below_floor);
  CHECK(none.cls == WfClass::Regular);
}

TEST_CASE("detector benchmark subset") {
  const auto pts = oracle::detector_benchmark(40, 7);
  const ScalarField edge = oracle::edge_field(), smooth = oracle::smooth_field();
  int correct = 0, confident_wrong = 0;
  for (const auto& p : pts) {
    const DecayEstimate e = decay_rate_estimate(p.edge ? edge : smooth, p.u1, p.u2);
    const bool sing = e.cls == WfClass::Singular;
    if (sing == p.singular && e.cls != WfClass::Inconclusive) ++correct;
    else if (e.residual < 0.1) ++confident_wrong;
  }
  CHECK(correct >= 36);
  CHECK(confident_wrong == 0);
}

TEST_CASE("disk wavefront on a ring of points") {
  const double r = 0.6;
  const ScalarField disk = ScalarField::ball(Vec::Zero(2), r);
  std::vector<PhasePoint> pts;
  for (double a : {0.3, 2.0, 4.4}) {
    const Vec dir = vec({std::cos(a), std::sin(a)});
    pts.push_back({r * dir, dir});            // outward normal
    pts.push_back({r * dir, -dir});           // inward normal
    pts.push_back({r * dir, vec({-dir[1], dir[0]})});  // tangent
    pts.push_back({(r + 0.45) * dir, dir});   // off the circle, rate about 0.45^2 / 2
    pts.push_back({0.2 * dir, dir});          // interior
  }
  const WavefrontReport rep = wavefront_scan(disk, pts);
  for (size_t i = 0; i < pts.size(); ++i) {
    CHECK(rep.errors[i].empty());
    const bool want = i % 5 < 2;
    CHECK((rep.estimates[i].cls == WfClass::Singular) == want);
    if (!want) CHECK(rep.estimates[i].cls == WfClass::Regular);
  }
  const std::string csv = rep.to_csv();
  CHECK(csv.find("u1_0,u1_1,u2_0,u2_1,epsilon_hat,residual,class") != std::string::npos);
  CHECK(csv.rfind("# lambdas: 8 16", 0) == 0);
}

TEST_CASE("Radon propagation matches the hand formula") {
  const Fibration fib = radon_fibration(8.0);
  const Vec x = vec({0.3, -0.2});
  const double w0 = 0.7;
  const Vec eta = vec({std::cos(w0), std::sin(w0)});
  const auto out = propagate_wavefront(fib, {{x, eta}});
  REQUIRE(out.size() == 1);
  CHECK(std::abs(out[0].z[0] - w0) < 1e-10);
  CHECK(std::abs(out[0].z[1] - x.dot(eta)) < 1e-10);
  const Vec perp = vec({-eta[1], eta[0]});
  CHECK((out[0].zeta - vec({x.dot(perp), -1})).norm() < 1e-8);

  // the opposite covector sees the same line with the opposite zeta
  const auto neg = propagate_wavefront(fib, {{x, -eta}});
  REQUIRE(neg.size() == 1);
  CHECK((neg[0].zeta + out[0].zeta).norm() < 1e-8);

  Fibration narrow = fib;
  narrow.z_box.axes[0] = {0.0, 0.5};
  CHECK(propagate_wavefront(narrow, {{x, eta}}).empty());
  try {
    propagate_wavefront(narrow, {{vec({100, 100}), eta}});
    FAIL("expected NoIncidence");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoIncidence);
  }
}
