#pragma once

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <utility>
#include <vector>

namespace dfib {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

using VecFn = std::function<Vec(const Vec&)>;
using ScalarFn = std::function<double(const Vec&)>;

struct Box {
  std::vector<std::pair<double, double>> axes;

  int dim() const { return static_cast<int>(axes.size()); }
  bool contains(const Vec& x, double slack = 0.0) const;
  double diameter() const;
  Vec center() const;
};

Box cube(int dim, double lo, double hi);
/// Max over axes of the distance outside the box: negative inside, zero on the faces.
double box_level(const Box& b, const Vec& x);

/// Appends the roots of g on [a, b] found by sign changes over `samples` cells (TOMS 748),
/// plus root pairs hidden in a dip between samples.
void scan_roots(const std::function<double(double)>& g, double a, double b, int samples,
                std::vector<double>& out);

/// Nodes and weights of a 1D quadrature rule.
struct Rule {
  std::vector<double> x;
  std::vector<double> w;
  size_t size() const { return x.size(); }
};

/// Composite 16-point Gauss-Legendre on [a,b] with the given number of panels.
Rule gauss_panels(double a, double b, int panels);
/// Composite Gauss-Legendre with roughly `per_unit` nodes per unit length.
Rule gauss_per_unit(double a, double b, double per_unit);
/// Composite Gauss-Legendre split at the given interior break points.
Rule gauss_with_breaks(double a, double b, const std::vector<double>& breaks, double per_unit,
                       int min_panels = 1);
/// Uniform composite midpoint rule with n cells.
Rule midpoint(double a, double b, int n);

/// Central-difference Jacobian of f at x.
Mat jacobian_fd(const VecFn& f, const Vec& x, double h = 1e-6);
Vec gradient_fd(const ScalarFn& f, const Vec& x, double h = 1e-6);

struct RankReport {
  Vec singular_values;
  double ratio = 0.0;  // sigma_min / sigma_max
  int rank = 0;
};

/// Singular values and numerical rank with threshold on sigma_min/sigma_max.
RankReport rank_report(const Mat& a, double threshold = 1e-8);
/// Same, after scaling each column to unit length (zero columns stay zero).
RankReport rank_report_normalized(const Mat& a, double threshold = 1e-8);

/// Orthonormal basis of the null space of a (columns), using a relative threshold.
Mat null_space(const Mat& a, double rel_tol = 1e-10);

/// Least-squares line fit y = a + b*t; returns (a, b, rms residual).
struct LineFit {
  double intercept = 0.0;
  double slope = 0.0;
  double rms = 0.0;
};
LineFit fit_line(const std::vector<double>& t, const std::vector<double>& y);

}  // namespace dfib
