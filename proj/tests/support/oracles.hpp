#pragma once

// Finite-difference reference derivatives and small shared helpers for the
// test suites. Everything here is deliberately independent of the library's
// own derivative code paths.

#include <Eigen/Core>
#include <cmath>
#include <functional>

namespace testsup {

using ScalarFn = std::function<double(const Eigen::VectorXd&)>;

inline Eigen::VectorXd fd_gradient(const ScalarFn& f, const Eigen::VectorXd& x,
                                   double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd xp = x, xm = x;
    const double hi = h * std::max(1.0, std::abs(x[i]));
    xp[i] += hi;
    xm[i] -= hi;
    g[i] = (f(xp) - f(xm)) / (2.0 * hi);
  }
  return g;
}

// h balances O(h^2) truncation against eps/h^2 cancellation.
inline Eigen::MatrixXd fd_hessian(const ScalarFn& f, const Eigen::VectorXd& x,
                                  double h = 1e-4) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd H(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double hi = h * std::max(1.0, std::abs(x[i]));
      const double hj = h * std::max(1.0, std::abs(x[j]));
      Eigen::VectorXd xpp = x, xpm = x, xmp = x, xmm = x;
      xpp[i] += hi; xpp[j] += hj;
      xpm[i] += hi; xpm[j] -= hj;
      xmp[i] -= hi; xmp[j] += hj;
      xmm[i] -= hi; xmm[j] -= hj;
      H(i, j) = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4.0 * hi * hj);
    }
  }
  return H;
}

inline double rel_err(double got, double want) {
  return std::abs(got - want) / std::max({1.0, std::abs(got), std::abs(want)});
}

// Closed-form solution of the two-generator dispatch problem:
//   min 20 g1 + 30 g2 + 0.2 g1^2 + 0.1 g2^2 + 1000 phi
//   s.t. g1 + g2 + phi = d, 0 <= g1 <= 150, 0 <= g2 <= 80, phi >= 0.
// Marginal costs 20 + 0.4 g1 and 30 + 0.2 g2 equalize once both units run;
// regime breakpoints are d = 25 (g2 enters), 145 (g2 hits 80), 230 (g1 hits
// 150, unserved demand phi starts, priced at 1000).
struct DispatchSolution {
  double g1, g2, phi, lambda;  // lambda = marginal cost of demand
};

inline DispatchSolution dispatch_closed_form(double d) {
  if (d <= 25.0) return {d, 0.0, 0.0, 20.0 + 0.4 * d};
  if (d <= 145.0) {
    const double g1 = 50.0 / 3.0 + d / 3.0;
    const double g2 = 2.0 * d / 3.0 - 50.0 / 3.0;
    return {g1, g2, 0.0, 20.0 + 0.4 * g1};
  }
  if (d <= 230.0) return {d - 80.0, 80.0, 0.0, 20.0 + 0.4 * (d - 80.0)};
  return {150.0, 80.0, d - 230.0, 1000.0};
}

inline double dispatch_objective(const DispatchSolution& s) {
  return 20.0 * s.g1 + 30.0 * s.g2 + 0.2 * s.g1 * s.g1 + 0.1 * s.g2 * s.g2 +
         1000.0 * s.phi;
}

// d g / d demand per regime.
inline void dispatch_tangents(double d, double* dg1, double* dg2, double* dphi) {
  if (d < 25.0) { *dg1 = 1.0; *dg2 = 0.0; *dphi = 0.0; }
  else if (d < 145.0) { *dg1 = 1.0 / 3.0; *dg2 = 2.0 / 3.0; *dphi = 0.0; }
  else if (d < 230.0) { *dg1 = 1.0; *dg2 = 0.0; *dphi = 0.0; }
  else { *dg1 = 0.0; *dg2 = 0.0; *dphi = 1.0; }
}

}  // namespace testsup
