#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace peakonlab {

/// Uniform grid on a truncated interval [x_left, x_right] with n nodes.
/// Node coordinates are always computed from the index so they carry no
/// accumulated rounding.
struct Grid {
  double x_left = 0.0;
  double x_right = 0.0;
  int n = 0;
  double dx = 0.0;

  double node(int k) const { return x_left + dx * k; }

  bool operator==(const Grid& o) const {
    return x_left == o.x_left && x_right == o.x_right && n == o.n;
  }
  bool operator!=(const Grid& o) const { return !(*this == o); }
};

inline Grid make_grid(double x_left, double x_right, int n) {
  if (!std::isfinite(x_left) || !std::isfinite(x_right))
    throw std::invalid_argument("make_grid: endpoints must be finite");
  if (!(x_right > x_left))
    throw std::invalid_argument("make_grid: x_right must exceed x_left");
  if (n < 64)
    throw std::invalid_argument("make_grid: need at least 64 nodes, got " +
                                std::to_string(n));
  Grid g;
  g.x_left = x_left;
  g.x_right = x_right;
  g.n = n;
  g.dx = (x_right - x_left) / (n - 1);
  return g;
}

/// Sampled real field on a grid.
struct Field {
  Grid grid;
  std::vector<double> v;

  Field() = default;
  explicit Field(const Grid& g, double fill = 0.0) : grid(g), v(g.n, fill) {}

  double& operator[](int k) { return v[k]; }
  double operator[](int k) const { return v[k]; }
  int size() const { return grid.n; }
};

inline bool all_finite(const Field& f) {
  for (double x : f.v)
    if (!std::isfinite(x)) return false;
  return true;
}

/// Solution pair (u, v) at time t. The two fields share one grid.
struct State {
  Field u;
  Field v;
  double t = 0.0;
};

inline void require_same_grid(const Field& a, const Field& b,
                              const char* where) {
  if (a.grid != b.grid)
    throw std::invalid_argument(std::string(where) + ": grid mismatch");
}

/// Second-order first derivative: central at interior nodes, one-sided
/// three-point stencils at the two boundary nodes.
inline Field derivative(const Field& f) {
  const int n = f.size();
  const double dx = f.grid.dx;
  Field d(f.grid);
  for (int k = 1; k + 1 < n; ++k) d.v[k] = (f.v[k + 1] - f.v[k - 1]) / (2 * dx);
  d.v[0] = (-3 * f.v[0] + 4 * f.v[1] - f.v[2]) / (2 * dx);
  d.v[n - 1] = (3 * f.v[n - 1] - 4 * f.v[n - 2] + f.v[n - 3]) / (2 * dx);
  return d;
}

/// Trapezoid rule over the whole grid.
inline double integrate(const Field& f) {
  const int n = f.size();
  double s = 0.5 * (f.v[0] + f.v[n - 1]);
  for (int k = 1; k + 1 < n; ++k) s += f.v[k];
  return s * f.grid.dx;
}

/// H^1 inner product: integral of f g + f' g' with grid derivatives.
inline double h1_inner(const Field& f, const Field& g) {
  require_same_grid(f, g, "h1_inner");
  Field fx = derivative(f);
  Field gx = derivative(g);
  Field prod(f.grid);
  for (int k = 0; k < f.size(); ++k)
    prod.v[k] = f.v[k] * g.v[k] + fx.v[k] * gx.v[k];
  return integrate(prod);
}

inline double h1_norm(const Field& f) { return std::sqrt(h1_inner(f, f)); }

struct ProductMax {
  int index = 0;
  double xi = 0.0;  // node coordinate
  double M = 0.0;   // u(xi) v(xi)
};

/// Node maximizing u*v; ties broken by the smallest index.
inline ProductMax argmax_product(const State& s) {
  require_same_grid(s.u, s.v, "argmax_product");
  ProductMax out;
  out.index = 0;
  out.M = s.u.v[0] * s.v.v[0];
  for (int k = 1; k < s.u.size(); ++k) {
    double p = s.u.v[k] * s.v.v[k];
    if (p > out.M) {
      out.M = p;
      out.index = k;
    }
  }
  out.xi = s.u.grid.node(out.index);
  return out;
}

}  // namespace peakonlab
