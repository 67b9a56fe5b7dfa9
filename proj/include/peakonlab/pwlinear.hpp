#pragma once

#include "peakonlab/grid.hpp"

namespace peakonlab {

// Exact integrals of the piecewise-linear interpolant of a sampled field
// against peakon profiles a e^{-|x-xi|}. Everything is evaluated in the
// shifted variable y = x - xi so no exponential ever exceeds 1.

namespace pwl {

// int_{y0}^{y1} (f0 + s (y - y0)) e^{-y} dy  for 0 <= y0 <= y1
inline double lin_against_exp_right(double f0, double s, double y0,
                                    double y1) {
  // antiderivative of (alpha + beta y) e^{-y} is -(alpha + beta + beta y) e^{-y}
  double alpha = f0 - s * y0, beta = s;
  auto F = [&](double y) { return -(alpha + beta + beta * y) * std::exp(-y); };
  return F(y1) - F(y0);
}

// int_{y0}^{y1} (f0 + s (y - y0)) e^{+y} dy  for y0 <= y1 <= 0
inline double lin_against_exp_left(double f0, double s, double y0, double y1) {
  double alpha = f0 - s * y0, beta = s;
  auto F = [&](double y) { return (alpha - beta + beta * y) * std::exp(y); };
  return F(y1) - F(y0);
}

// int of the linear piece against e^{-|y|} over [y0, y1] (any signs, split at 0)
inline double lin_against_kernel(double f0, double s, double y0, double y1) {
  if (y0 >= 0.0) return lin_against_exp_right(f0, s, y0, y1);
  if (y1 <= 0.0) return lin_against_exp_left(f0, s, y0, y1);
  double fmid = f0 + s * (0.0 - y0);
  return lin_against_exp_left(f0, s, y0, 0.0) +
         lin_against_exp_right(fmid, s, 0.0, y1);
}

// int of the linear piece against sign(y) e^{-|y|} over [y0, y1]
inline double lin_against_signed_kernel(double f0, double s, double y0,
                                        double y1) {
  if (y0 >= 0.0) return lin_against_exp_right(f0, s, y0, y1);
  if (y1 <= 0.0) return -lin_against_exp_left(f0, s, y0, y1);
  double fmid = f0 + s * (0.0 - y0);
  return -lin_against_exp_left(f0, s, y0, 0.0) +
         lin_against_exp_right(fmid, s, 0.0, y1);
}

// int e^{-2|y|} over [y0, y1]
inline double kernel_sq(double y0, double y1) {
  auto F = [](double y) {
    return y >= 0.0 ? -0.5 * std::exp(-2.0 * y) : 0.5 * std::exp(2.0 * y) - 1.0;
  };
  // F continuous at 0 with F(0) = -0.5 on both branches up to the constant;
  // use a split to stay exact
  if (y0 >= 0.0 || y1 <= 0.0) return F(y1) - F(y0);
  return (F(0.0) - F(y0)) + (-0.5 * std::exp(-2.0 * y1) - (-0.5));
}

// int (f0 + s(y-y0))^2 over [y0, y1]
inline double lin_sq(double f0, double s, double y0, double y1) {
  double h = y1 - y0;
  double f1 = f0 + s * h;
  return h * (f0 * f0 + f0 * f1 + f1 * f1) / 3.0;
}

}  // namespace pwl

/// H^1 quantities of the piecewise-linear interpolant of `f`, exact to
/// round-off: returns integral of (I f)^2 + (I f)'^2 over the grid span.
inline double pw_h1_energy(const Field& f) {
  const Grid& g = f.grid;
  double acc = 0.0;
  for (int k = 0; k + 1 < g.n; ++k) {
    double s = (f.v[k + 1] - f.v[k]) / g.dx;
    acc += pwl::lin_sq(f.v[k], s, 0.0, g.dx) + s * s * g.dx;
  }
  return acc;
}

/// Exact H^1 pairing of the interpolant of `f` with the peakon a e^{-|x-xi|}:
/// integral of (I f) phi + (I f)' phi'.
inline double pw_h1_pair_peakon(const Field& f, double a, double xi) {
  const Grid& g = f.grid;
  double acc0 = 0.0, acc1 = 0.0;
  for (int k = 0; k + 1 < g.n; ++k) {
    double y0 = g.node(k) - xi, y1 = g.node(k + 1) - xi;
    double s = (f.v[k + 1] - f.v[k]) / g.dx;
    acc0 += pwl::lin_against_kernel(f.v[k], s, y0, y1);
    // phi' = -a sign(y) e^{-|y|}; the interpolant derivative is the cell slope
    acc1 -= s * pwl::lin_against_signed_kernel(1.0, 0.0, y0, y1);
  }
  return a * (acc0 + acc1);
}

/// Exact value of the interpolant at xi.
inline double pw_value(const Field& f, double xi) {
  const Grid& g = f.grid;
  if (xi < g.x_left || xi > g.x_right)
    throw std::invalid_argument("pw_value: point outside grid");
  double r = (xi - g.x_left) / g.dx;
  int k = std::min(static_cast<int>(r), g.n - 2);
  double w = r - k;
  return (1.0 - w) * f.v[k] + w * f.v[k + 1];
}

/// Exact squared H^1 norm of (I f) - a e^{-|.-xi|} over the grid span.
inline double pw_h1_dist_sq_peakon(const Field& f, double a, double xi) {
  const Grid& g = f.grid;
  double ephi = a * a * (pwl::kernel_sq(g.x_left - xi, g.x_right - xi)) * 2.0;
  return pw_h1_energy(f) + ephi - 2.0 * pw_h1_pair_peakon(f, a, xi);
}

}  // namespace peakonlab
