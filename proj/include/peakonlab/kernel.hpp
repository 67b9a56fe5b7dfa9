#pragma once

#include "peakonlab/grid.hpp"

namespace peakonlab {

/// Scratch space for the O(N) exponential-kernel sweeps. One workspace per
/// worker: it must not be shared by two convolutions running concurrently.
struct KernelWorkspace {
  Grid grid;
  std::vector<double> left_acc;
  std::vector<double> right_acc;

  explicit KernelWorkspace(const Grid& g)
      : grid(g), left_acc(g.n), right_acc(g.n) {}
};

namespace detail {

// Left and right sweeps of the trapezoid-weighted kernel quadrature.
// left[k]  = e^{-x_k} * trapz_{x<=x_k} e^{y} f(y) dy   (shifted recurrence)
// right[k] = e^{+x_k} * trapz_{x>=x_k} e^{-y} f(y) dy
// The shifted form keeps every intermediate bounded by max|f| * O(1).
inline void kernel_sweeps(const Field& f, KernelWorkspace& ws) {
  if (f.grid != ws.grid)
    throw std::invalid_argument("kernel_sweeps: workspace grid mismatch");
  const int n = f.size();
  const double dx = f.grid.dx;
  const double e = std::exp(-dx);
  const double h = 0.5 * dx;
  auto& L = ws.left_acc;
  auto& R = ws.right_acc;
  L[0] = 0.0;
  for (int k = 1; k < n; ++k)
    L[k] = e * L[k - 1] + h * (f.v[k] + e * f.v[k - 1]);
  R[n - 1] = 0.0;
  for (int k = n - 2; k >= 0; --k)
    R[k] = e * R[k + 1] + h * (f.v[k] + e * f.v[k + 1]);
}

}  // namespace detail

/// P*f with P(x) = e^{-|x|}/2, f treated as zero outside the grid.
/// Equals the trapezoid quadrature of the convolution integral exactly,
/// at O(N) cost.
inline Field convolve_P(const Field& f, KernelWorkspace& ws) {
  detail::kernel_sweeps(f, ws);
  Field out(f.grid);
  for (int k = 0; k < f.size(); ++k)
    out.v[k] = 0.5 * (ws.left_acc[k] + ws.right_acc[k]);
  return out;
}

/// P_x*f with kernel -sign(x-y) e^{-|x-y|}/2 (sign(0) = 0).
inline Field convolve_Px(const Field& f, KernelWorkspace& ws) {
  detail::kernel_sweeps(f, ws);
  Field out(f.grid);
  for (int k = 0; k < f.size(); ++k)
    out.v[k] = 0.5 * (ws.right_acc[k] - ws.left_acc[k]);
  return out;
}

/// Discrete Helmholtz operator m = u - u_xx.
///
/// Interior stencil (2 cosh(dx) u_k - u_{k+1} - u_{k-1}) / (dx sinh(dx)):
/// this is the exact inverse of convolve_P on interior nodes, so momentum
/// densities recovered from kernel-generated fields keep their sign to
/// round-off, and it annihilates pure exponential tails exactly. Consistent
/// with u - u_xx to O(dx^2). Boundary nodes copy their nearest interior
/// value.
inline Field helmholtz_forward(const Field& u) {
  const int n = u.size();
  const double dx = u.grid.dx;
  const double a = 2.0 * std::cosh(dx);
  const double s = dx * std::sinh(dx);
  Field m(u.grid);
  for (int k = 1; k + 1 < n; ++k)
    m.v[k] = (a * u.v[k] - u.v[k + 1] - u.v[k - 1]) / s;
  m.v[0] = m.v[1];
  m.v[n - 1] = m.v[n - 2];
  return m;
}

/// Inverse Helmholtz operator u = P*m.
inline Field helmholtz_inverse(const Field& m, KernelWorkspace& ws) {
  return convolve_P(m, ws);
}

}  // namespace peakonlab
