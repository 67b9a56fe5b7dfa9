#pragma once

#include "peakonlab/evolution.hpp"
#include "peakonlab/functionals.hpp"
#include "peakonlab/grid.hpp"
#include "peakonlab/profiles.hpp"
#include "peakonlab/pwlinear.hpp"

namespace peakonlab {

// ---------------------------------------------------------------------------
// Orbital distance to the peakon orbit (single shared shift for both
// components).
// ---------------------------------------------------------------------------

struct OrbitalDistance {
  double dist_u = 0.0;
  double dist_v = 0.0;
  double best_shift = 0.0;
  double total() const { return dist_u + dist_v; }
};

namespace detail {

// H^1 distance of the sampled state to the shifted peakon pair, grid
// derivatives on the difference. exp(+-x_k) is precomputed by the caller so
// a shift costs two exponentials.
struct OrbitObjective {
  const State* s;
  double a, b;
  std::vector<double> epos, eneg;

  OrbitObjective(const State& st, double a_, double b_)
      : s(&st), a(a_), b(b_), epos(st.u.grid.n), eneg(st.u.grid.n) {
    const Grid& g = st.u.grid;
    for (int k = 0; k < g.n; ++k) {
      epos[k] = std::exp(g.node(k) - g.x_left);   // bounded on the grid span
      eneg[k] = 1.0 / epos[k];
    }
  }

  // dist_u, dist_v at shift x0
  std::pair<double, double> eval(double x0) const {
    const Grid& g = s->u.grid;
    Field du(g), dv(g);
    double cneg = std::exp(-(x0 - g.x_left));  // e^{-x0} relative to x_left
    double cpos = 1.0 / cneg;
    for (int k = 0; k < g.n; ++k) {
      // e^{-|x_k - x0|} without per-node exponentials
      double e = g.node(k) >= x0 ? eneg[k] * cpos : epos[k] * cneg;
      du.v[k] = s->u.v[k] - a * e;
      dv.v[k] = s->v.v[k] - b * e;
    }
    return {h1_norm(du), h1_norm(dv)};
  }
  double total(double x0) const {
    auto [du, dv] = eval(x0);
    return du + dv;
  }
};

}  // namespace detail

/// Minimizes |u - phi_c(.-x0)|_{H^1} + |v - psi_c(.-x0)|_{H^1} over the
/// shift: coarse scan at dx resolution in a window around the u*v argmax,
/// then golden-section refinement to 1e-4 dx.
inline OrbitalDistance orbital_distance(const State& s, double a, double b) {
  if (!(a > 0.0 && b > 0.0))
    throw std::invalid_argument("orbital_distance: amplitudes must be positive");
  const Grid& g = s.u.grid;
  detail::OrbitObjective obj(s, a, b);
  ProductMax pm = argmax_product(s);
  // shifts need ~10 units of tail room: closer to the boundary the truncated
  // norm of the target shrinks and fakes a minimum
  double margin = std::min(10.0, 0.25 * (g.x_right - g.x_left));
  double xi = std::min(std::max(pm.xi, g.x_left + margin), g.x_right - margin);
  double lo = std::max(g.x_left + margin, xi - 15.0);
  double hi = std::min(g.x_right - margin, xi + 15.0);

  double best = obj.total(lo), best_x = lo;
  for (double x0 = lo; x0 <= hi + 1e-12; x0 += g.dx) {
    double d = obj.total(x0);
    if (d < best) {
      best = d;
      best_x = x0;
    }
  }
  double xa = std::max(lo, best_x - g.dx), xb = std::min(hi, best_x + g.dx);
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double c1 = xb - gr * (xb - xa), c2 = xa + gr * (xb - xa);
  double f1 = obj.total(c1), f2 = obj.total(c2);
  while (xb - xa > 1e-12 * std::max(1.0, std::abs(xa))) {
    if (f1 < f2) {
      xb = c2;
      c2 = c1;
      f2 = f1;
      c1 = xb - gr * (xb - xa);
      f1 = obj.total(c1);
    } else {
      xa = c1;
      c1 = c2;
      f1 = f2;
      c2 = xa + gr * (xb - xa);
      f2 = obj.total(c2);
    }
  }
  double x0 = 0.5 * (xa + xb);
  OrbitalDistance out;
  auto [du, dv] = obj.eval(x0);
  if (du + dv <= best) {
    out.dist_u = du;
    out.dist_v = dv;
    out.best_shift = x0;
  } else {  // golden refinement never worsens the coarse optimum
    auto [cu, cv] = obj.eval(best_x);
    out.dist_u = cu;
    out.dist_v = cv;
    out.best_shift = best_x;
  }
  return out;
}

/// One time-sample of the orbital-stability scalars.
struct StabilityRecord {
  double t = 0.0;
  double xi = 0.0;
  double M = 0.0;
  double u_at_xi = 0.0;
  double v_at_xi = 0.0;
  double dist_u = 0.0;
  double dist_v = 0.0;
  double dist_total = 0.0;
  double best_shift = 0.0;
};

inline StabilityRecord stability_record(const State& s, double a, double b) {
  StabilityRecord r;
  r.t = s.t;
  ProductMax pm = argmax_product(s);
  r.xi = pm.xi;
  r.M = pm.M;
  r.u_at_xi = s.u.v[pm.index];
  r.v_at_xi = s.v.v[pm.index];
  OrbitalDistance od = orbital_distance(s, a, b);
  r.dist_u = od.dist_u;
  r.dist_v = od.dist_v;
  r.dist_total = od.total();
  r.best_shift = od.best_shift;
  return r;
}

// ---------------------------------------------------------------------------
// Pointwise energy identity:
//   E_u[u] - 2a^2 = |u - phi_c(.-xi)|_{H^1}^2 + 4a (u(xi) - a)
// holds for every H^1 function and every xi. Both sides are evaluated
// exactly for the piecewise-linear interpolant of the sampled state, so the
// residual is round-off, not quadrature error.
// ---------------------------------------------------------------------------

struct PointwiseIdentityResidual {
  double residual_u = 0.0;
  double residual_v = 0.0;
};

inline PointwiseIdentityResidual pointwise_energy_identity(const State& s,
                                                           double a, double b,
                                                           double xi) {
  if (!(a > 0.0 && b > 0.0))
    throw std::invalid_argument("pointwise_energy_identity: bad amplitudes");
  auto one = [&](const Field& f, double amp) {
    double lhs = pw_h1_energy(f) - 2.0 * amp * amp;
    double rhs = pw_h1_dist_sq_peakon(f, amp, xi) +
                 4.0 * amp * (pw_value(f, xi) - amp);
    return std::abs(lhs - rhs);
  };
  return {one(s.u, a), one(s.v, b)};
}

// ---------------------------------------------------------------------------
// One-sided diagnostic fields of the energy identities
// ---------------------------------------------------------------------------

struct DiagnosticFields {
  Field g1;
  Field g2;
  Field h;
  double split_point = 0.0;
  int split_index = 0;
};

namespace detail {

// derivative with central stencils except one-sided next to the split node,
// so no stencil crosses the crest; side < 0 gives the field left of the
// split (valid on [0, kc]), side > 0 right of it (valid on [kc, n-1]).
inline Field one_sided_derivative(const Field& f, int kc, int side) {
  const int n = f.size();
  const double dx = f.grid.dx;
  Field d(f.grid, 0.0);
  auto back2 = [&](int k) {
    return (3 * f.v[k] - 4 * f.v[k - 1] + f.v[k - 2]) / (2 * dx);
  };
  auto fwd2 = [&](int k) {
    return (-3 * f.v[k] + 4 * f.v[k + 1] - f.v[k + 2]) / (2 * dx);
  };
  if (side < 0) {
    for (int k = 1; k < kc; ++k) d.v[k] = (f.v[k + 1] - f.v[k - 1]) / (2 * dx);
    if (kc >= 2) d.v[kc] = back2(kc);
    if (kc >= 1 && kc - 1 >= 2) d.v[kc - 1] = back2(kc - 1);
    if (n >= 3) d.v[0] = fwd2(0);
  } else {
    for (int k = kc + 1; k + 1 < n; ++k)
      d.v[k] = (f.v[k + 1] - f.v[k - 1]) / (2 * dx);
    if (kc + 2 < n) d.v[kc] = fwd2(kc);
    if (kc + 3 < n) d.v[kc + 1] = fwd2(kc + 1);
    if (n >= 3) d.v[n - 1] = back2(n - 1);
  }
  return d;
}

}  // namespace detail

/// g1 = u -+ u_x, g2 = v -+ v_x (sign flips across the split) and
/// h = uv -+ (uv)_x/3 - u_x v_x / 3, split at the node nearest xi.
/// At the split node the two one-sided evaluations are averaged.
inline DiagnosticFields build_diagnostic_fields(const State& s, double xi) {
  const Grid& g = s.u.grid;
  int kc = static_cast<int>(std::lround((xi - g.x_left) / g.dx));
  kc = std::max(2, std::min(g.n - 3, kc));
  Field uxl = detail::one_sided_derivative(s.u, kc, -1);
  Field uxr = detail::one_sided_derivative(s.u, kc, +1);
  Field vxl = detail::one_sided_derivative(s.v, kc, -1);
  Field vxr = detail::one_sided_derivative(s.v, kc, +1);
  Field uv(g);
  for (int k = 0; k < g.n; ++k) uv.v[k] = s.u.v[k] * s.v.v[k];
  Field uvxl = detail::one_sided_derivative(uv, kc, -1);
  Field uvxr = detail::one_sided_derivative(uv, kc, +1);

  DiagnosticFields out;
  out.g1 = Field(g);
  out.g2 = Field(g);
  out.h = Field(g);
  out.split_point = xi;
  out.split_index = kc;
  for (int k = 0; k < g.n; ++k) {
    double U = s.u.v[k], V = s.v.v[k];
    double left_g1 = U - uxl.v[k], right_g1 = U + uxr.v[k];
    double left_g2 = V - vxl.v[k], right_g2 = V + vxr.v[k];
    double left_h = U * V - uvxl.v[k] / 3.0 - uxl.v[k] * vxl.v[k] / 3.0;
    double right_h = U * V + uvxr.v[k] / 3.0 - uxr.v[k] * vxr.v[k] / 3.0;
    if (k < kc) {
      out.g1.v[k] = left_g1;
      out.g2.v[k] = left_g2;
      out.h.v[k] = left_h;
    } else if (k > kc) {
      out.g1.v[k] = right_g1;
      out.g2.v[k] = right_g2;
      out.h.v[k] = right_h;
    } else {
      out.g1.v[k] = 0.5 * (left_g1 + right_g1);
      out.g2.v[k] = 0.5 * (left_g2 + right_g2);
      out.h.v[k] = 0.5 * (left_h + right_h);
    }
  }
  return out;
}

struct IdentityCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double residual() const { return std::abs(lhs - rhs); }
};

namespace detail {

// trapezoid of a product of one-sided fields split at kc: the split node
// enters both half-integrals with its side-consistent value.
template <typename LeftF, typename RightF>
double split_trapz(const Grid& g, int kc, LeftF left, RightF right) {
  double acc = 0.5 * (left(0) + left(kc));
  for (int k = 1; k < kc; ++k) acc += left(k);
  acc += 0.5 * (right(kc) + right(g.n - 1));
  for (int k = kc + 1; k + 1 < g.n; ++k) acc += right(k);
  return acc * g.dx;
}

struct SidedFields {
  Field uxl, uxr, vxl, vxr, uvxl, uvxr;
  int kc;
};

inline SidedFields make_sided(const State& s, int kc) {
  SidedFields sf;
  sf.kc = kc;
  sf.uxl = one_sided_derivative(s.u, kc, -1);
  sf.uxr = one_sided_derivative(s.u, kc, +1);
  sf.vxl = one_sided_derivative(s.v, kc, -1);
  sf.vxr = one_sided_derivative(s.v, kc, +1);
  Field uv(s.u.grid);
  for (int k = 0; k < s.u.size(); ++k) uv.v[k] = s.u.v[k] * s.v.v[k];
  sf.uvxl = one_sided_derivative(uv, kc, -1);
  sf.uvxr = one_sided_derivative(uv, kc, +1);
  return sf;
}

}  // namespace detail

/// Lemma-style identity: integral of g1 g2 equals H[u,v] - 2M, with the
/// split at the argmax of u v.
inline IdentityCheck identity_g1g2(const State& s) {
  ProductMax pm = argmax_product(s);
  const Grid& g = s.u.grid;
  int kc = std::max(2, std::min(g.n - 3, pm.index));
  detail::SidedFields sf = detail::make_sided(s, kc);
  auto left = [&](int k) {
    return (s.u.v[k] - sf.uxl.v[k]) * (s.v.v[k] - sf.vxl.v[k]);
  };
  auto right = [&](int k) {
    return (s.u.v[k] + sf.uxr.v[k]) * (s.v.v[k] + sf.vxr.v[k]);
  };
  IdentityCheck out;
  out.lhs = detail::split_trapz(g, kc, left, right);
  out.rhs = cross_H(s) - 2.0 * pm.M;
  return out;
}

/// Companion identity: integral of h g1 g2 equals F[u,v] - 4 M^2 / 3.
inline IdentityCheck identity_h(const State& s) {
  ProductMax pm = argmax_product(s);
  const Grid& g = s.u.grid;
  int kc = std::max(2, std::min(g.n - 3, pm.index));
  detail::SidedFields sf = detail::make_sided(s, kc);
  auto left = [&](int k) {
    double U = s.u.v[k], V = s.v.v[k];
    double h = U * V - sf.uvxl.v[k] / 3.0 - sf.uxl.v[k] * sf.vxl.v[k] / 3.0;
    return h * (U - sf.uxl.v[k]) * (V - sf.vxl.v[k]);
  };
  auto right = [&](int k) {
    double U = s.u.v[k], V = s.v.v[k];
    double h = U * V + sf.uvxr.v[k] / 3.0 - sf.uxr.v[k] * sf.vxr.v[k] / 3.0;
    return h * (U + sf.uxr.v[k]) * (V + sf.vxr.v[k]);
  };
  IdentityCheck out;
  out.lhs = detail::split_trapz(g, kc, left, right);
  out.rhs = quartic_F(s) - 4.0 / 3.0 * pm.M * pm.M;
  return out;
}

/// Left-hand side of the key inequality F - 4MH/3 + 4M^2/3 <= 0.
inline double key_inequality(const State& s) {
  ProductMax pm = argmax_product(s);
  double H = cross_H(s);
  double F = quartic_F(s);
  return F - 4.0 / 3.0 * pm.M * H + 4.0 / 3.0 * pm.M * pm.M;
}

struct PeakGap {
  double gap = 0.0;    // |M - ab|
  double bound = 0.0;  // mechanism bound from the polynomial comparison
};

/// |M - ab| together with the bound sqrt(|H - 2ab| M + 3|F - 4a^2b^2/3|/4)
/// that the polynomial comparison yields whenever the key inequality holds.
inline PeakGap peak_gap(const State& s, double a, double b) {
  ProductMax pm = argmax_product(s);
  double H = cross_H(s);
  double F = quartic_F(s);
  PeakGap out;
  out.gap = std::abs(pm.M - a * b);
  out.bound = std::sqrt(std::abs(H - 2.0 * a * b) * pm.M +
                        0.75 * std::abs(F - 4.0 / 3.0 * a * a * b * b));
  return out;
}

// ---------------------------------------------------------------------------
// Modulation
// ---------------------------------------------------------------------------

struct ModulationState {
  std::vector<double> x_tilde;
  double residual_norm = 0.0;
  int iterations = 0;
};

namespace detail {

// Orthogonality residuals Y^i and the analytic Jacobian of the modulation
// system. dY^i/dx_i = int (u_x - sum_{j!=i} phi_j') phi_i' + (v analog),
// dY^i/dx_j = int phi_j' phi_i' + psi_j' psi_i'.
struct ModulationSystem {
  const State* s;
  const TrainSpec* ts;
  Field ux, vx;

  ModulationSystem(const State& st, const TrainSpec& t)
      : s(&st), ts(&t), ux(derivative(st.u)), vx(derivative(st.v)) {}

  void residual(const std::vector<double>& xt, std::vector<double>& Y) const {
    const Grid& g = s->u.grid;
    const int N = static_cast<int>(xt.size());
    Field ru(g), sv(g);
    for (int j = 0; j < N; ++j)
      for (int k = 0; k < g.n; ++k) {
        double x = g.node(k);
        ru.v[k] += peakon_shape(ts->peakons[j].a, xt[j], x);
        sv.v[k] += peakon_shape(ts->peakons[j].b, xt[j], x);
      }
    Y.assign(N, 0.0);
    for (int i = 0; i < N; ++i) {
      Field integrand(g);
      for (int k = 0; k < g.n; ++k) {
        double x = g.node(k);
        integrand.v[k] =
            (s->u.v[k] - ru.v[k]) * peakon_slope(ts->peakons[i].a, xt[i], x) +
            (s->v.v[k] - sv.v[k]) * peakon_slope(ts->peakons[i].b, xt[i], x);
      }
      Y[i] = integrate(integrand);
    }
  }

  void jacobian(const std::vector<double>& xt,
                std::vector<std::vector<double>>& J) const {
    const Grid& g = s->u.grid;
    const int N = static_cast<int>(xt.size());
    J.assign(N, std::vector<double>(N, 0.0));
    for (int i = 0; i < N; ++i) {
      for (int j = 0; j < N; ++j) {
        Field integrand(g);
        if (i == j) {
          for (int k = 0; k < g.n; ++k) {
            double x = g.node(k);
            double su = ux.v[k], sv2 = vx.v[k];
            for (int l = 0; l < N; ++l) {
              if (l == i) continue;
              su -= peakon_slope(ts->peakons[l].a, xt[l], x);
              sv2 -= peakon_slope(ts->peakons[l].b, xt[l], x);
            }
            integrand.v[k] =
                su * peakon_slope(ts->peakons[i].a, xt[i], x) +
                sv2 * peakon_slope(ts->peakons[i].b, xt[i], x);
          }
        } else {
          for (int k = 0; k < g.n; ++k) {
            double x = g.node(k);
            integrand.v[k] =
                peakon_slope(ts->peakons[j].a, xt[j], x) *
                    peakon_slope(ts->peakons[i].a, xt[i], x) +
                peakon_slope(ts->peakons[j].b, xt[j], x) *
                    peakon_slope(ts->peakons[i].b, xt[i], x);
          }
        }
        J[i][j] = integrate(integrand);
      }
    }
  }
};

inline void solve_dense(std::vector<std::vector<double>> A,
                        std::vector<double>& b) {
  const int n = static_cast<int>(b.size());
  for (int c = 0; c < n; ++c) {
    int p = c;
    for (int r = c + 1; r < n; ++r)
      if (std::abs(A[r][c]) > std::abs(A[p][c])) p = r;
    std::swap(A[c], A[p]);
    std::swap(b[c], b[p]);
    if (A[c][c] == 0.0) throw std::runtime_error("modulation: singular Jacobian");
    for (int r = c + 1; r < n; ++r) {
      double f = A[r][c] / A[c][c];
      for (int k = c; k < n; ++k) A[r][k] -= f * A[c][k];
      b[r] -= f * b[c];
    }
  }
  for (int r = n - 1; r >= 0; --r) {
    for (int k = r + 1; k < n; ++k) b[r] -= A[r][k] * b[k];
    b[r] /= A[r][r];
  }
}

}  // namespace detail

/// Damped Newton iteration on the orthogonality system. Converges when the
/// residual 1-norm drops below 1e-8 (a_1^2 + b_1^2). Throws if the
/// iteration diverges or the fitted positions cross.
inline ModulationState modulation_solve(const State& s, const TrainSpec& ts,
                                        const std::vector<double>& x_init) {
  if (x_init.size() != ts.peakons.size())
    throw std::invalid_argument("modulation_solve: size mismatch");
  for (size_t i = 1; i < x_init.size(); ++i)
    if (!(x_init[i] - x_init[i - 1] > 4.0))
      throw std::invalid_argument(
          "modulation_solve: initial positions must increase with gap > 4");
  const double tol =
      1e-8 * std::min(1.0, ts.peakons[0].a * ts.peakons[0].a +
                               ts.peakons[0].b * ts.peakons[0].b);
  detail::ModulationSystem sys(s, ts);
  ModulationState out;
  out.x_tilde = x_init;
  std::vector<double> Y;
  for (int it = 0; it < 60; ++it) {
    sys.residual(out.x_tilde, Y);
    double rn = 0.0;
    for (double y : Y) rn += std::abs(y);
    out.residual_norm = rn;
    out.iterations = it;
    if (rn <= tol) return out;
    std::vector<std::vector<double>> J;
    sys.jacobian(out.x_tilde, J);
    std::vector<double> step = Y;
    detail::solve_dense(J, step);
    double damp = 1.0;
    for (double d : step) damp = std::min(damp, 1.0 / std::abs(d));
    if (damp < 1.0) damp = std::max(damp, 0.1);  // cap steps at ~1 unit
    std::vector<double> trial(out.x_tilde);
    for (size_t i = 0; i < trial.size(); ++i) trial[i] -= damp * step[i];
    for (size_t i = 1; i < trial.size(); ++i)
      if (!(trial[i] > trial[i - 1]))
        throw std::runtime_error("modulation_solve: positions crossed");
    out.x_tilde = trial;
  }
  throw std::runtime_error("modulation_solve: no convergence in 60 iterations");
}

// ---------------------------------------------------------------------------
// Train diagnostics
// ---------------------------------------------------------------------------

struct TrainGeometry {
  double t = 0.0;
  std::vector<double> x_tilde;     // fitted positions
  std::vector<double> y;           // midpoints y_2..y_N
  std::vector<double> x_max;       // per-interval argmax positions
  std::vector<double> M;           // per-interval maxima of u v
  std::vector<double> u_at_max;    // u at the interval argmax
  std::vector<double> v_at_max;
  std::vector<LocalizedFunctionals> local;  // against the partition Phi_i
  std::vector<double> local_inequality;     // 4M_i^2/3 - 4M_iH_i/3 + F_i
  std::vector<RightEnergies> J;             // at each midpoint y_j
  double modulation_residual = 0.0;
  double global_identity_residual_u = 0.0;  // train version of the pointwise
  double global_identity_residual_v = 0.0;  // energy identity
};

struct TrainDiagnostics {
  std::vector<TrainGeometry> geometry;
  std::vector<double> fitted_speeds;        // least-squares over t >= fit_start
  double fit_start = 2.0;
  double max_modulation_residual = 0.0;
  double worst_local_inequality = -std::numeric_limits<double>::max();
  std::vector<double> max_J_increase;       // per midpoint: max over t and over
                                            // the three J functionals
  double min_separation_slack =
      std::numeric_limits<double>::max();     // vs 3L/4 + (c_i - c_{i-1}) t / 2
};

/// Runs the modulation chain over a trajectory (warm-started snapshot to
/// snapshot with a continuity guard) and collects the train observables.
inline TrainDiagnostics train_diagnostics(const Trajectory& traj,
                                          const TrainSpec& ts,
                                          const WeightFamily& wf,
                                          double fit_start = 2.0) {
  validate(ts);
  const int N = static_cast<int>(ts.peakons.size());
  const Grid& g = traj.states.at(0).u.grid;
  TrainDiagnostics out;
  out.fit_start = fit_start;
  out.max_J_increase.assign(std::max(N - 1, 0),
                            -std::numeric_limits<double>::max());

  double cmax = ts.peakons.back().speed();
  std::vector<double> warm(N);
  for (int i = 0; i < N; ++i) warm[i] = ts.peakons[i].x0;

  std::vector<std::vector<RightEnergies>> j_series;
  for (size_t si = 0; si < traj.states.size(); ++si) {
    const State& s = traj.states[si];
    ModulationState ms = modulation_solve(s, ts, warm);
    if (si > 0) {
      double dt_snap = s.t - traj.states[si - 1].t;
      double guard = 5.0 * dt_snap * cmax + 1e-9;
      for (int i = 0; i < N; ++i)
        if (std::abs(ms.x_tilde[i] - warm[i]) > guard)
          throw std::runtime_error(
              "train_diagnostics: modulation position jumped at t = " +
              std::to_string(s.t));
    }
    warm = ms.x_tilde;
    out.max_modulation_residual =
        std::max(out.max_modulation_residual, ms.residual_norm);

    TrainGeometry tg;
    tg.t = s.t;
    tg.x_tilde = ms.x_tilde;
    tg.modulation_residual = ms.residual_norm;
    for (int i = 1; i < N; ++i)
      tg.y.push_back(0.5 * (ms.x_tilde[i - 1] + ms.x_tilde[i]));

    // per-interval argmax of u*v on J_i = [y_i, y_{i+1}]
    Field uv(g);
    for (int k = 0; k < g.n; ++k) uv.v[k] = s.u.v[k] * s.v.v[k];
    for (int i = 0; i < N; ++i) {
      double lo = i == 0 ? g.x_left : tg.y[i - 1];
      double hi = i == N - 1 ? g.x_right : tg.y[i];
      int klo = std::max(0, static_cast<int>(std::ceil((lo - g.x_left) / g.dx)));
      int khi = std::min(g.n - 1,
                         static_cast<int>(std::floor((hi - g.x_left) / g.dx)));
      int kbest = klo;
      for (int k = klo + 1; k <= khi; ++k)
        if (uv.v[k] > uv.v[kbest]) kbest = k;
      tg.x_max.push_back(g.node(kbest));
      tg.M.push_back(uv.v[kbest]);
      tg.u_at_max.push_back(s.u.v[kbest]);
      tg.v_at_max.push_back(s.v.v[kbest]);
    }

    tg.local = localized_functionals(s, partition_phi(wf, tg.y, g));
    for (int i = 0; i < N; ++i) {
      double Mi = tg.M[i];
      tg.local_inequality.push_back(4.0 / 3.0 * Mi * Mi -
                                    4.0 / 3.0 * Mi * tg.local[i].H +
                                    tg.local[i].F);
      out.worst_local_inequality =
          std::max(out.worst_local_inequality, tg.local_inequality.back());
    }
    for (double yj : tg.y) tg.J.push_back(right_energy_J(s, yj, wf));
    j_series.push_back(tg.J);

    // global identity residual at the fitted train, exact for the
    // piecewise-linear interpolant: the leftover is the peakon interaction
    // term, expected O(e^{-L/4})
    auto global_residual = [&](const Field& f, bool u_component) {
      double amp_sq_sum = 0.0, self = pw_h1_energy(f);
      double dist_sq = self, point_terms = 0.0;
      for (int i = 0; i < N; ++i) {
        double ai = u_component ? ts.peakons[i].a : ts.peakons[i].b;
        amp_sq_sum += 2.0 * ai * ai;
        dist_sq -= 2.0 * pw_h1_pair_peakon(f, ai, ms.x_tilde[i]);
        point_terms += 4.0 * ai * (pw_value(f, ms.x_tilde[i]) - ai);
        for (int j = 0; j < N; ++j) {
          double aj = u_component ? ts.peakons[j].a : ts.peakons[j].b;
          double d = std::abs(ms.x_tilde[i] - ms.x_tilde[j]);
          dist_sq += i == j ? 2.0 * ai * ai : 2.0 * ai * aj * std::exp(-d);
        }
      }
      return std::abs((self - amp_sq_sum) - dist_sq - point_terms);
    };
    tg.global_identity_residual_u = global_residual(s.u, true);
    tg.global_identity_residual_v = global_residual(s.v, false);

    for (int i = 1; i < N; ++i) {
      double slack =
          (ms.x_tilde[i] - ms.x_tilde[i - 1]) -
          (0.75 * ts.L +
           0.5 * (ts.peakons[i].speed() - ts.peakons[i - 1].speed()) * s.t);
      out.min_separation_slack = std::min(out.min_separation_slack, slack);
    }
    out.geometry.push_back(std::move(tg));
  }

  // J increases relative to t = 0
  for (int j = 0; j + 1 < N; ++j) {
    const RightEnergies& j0 = j_series.front()[j];
    for (const auto& row : j_series) {
      out.max_J_increase[j] = std::max(
          {out.max_J_increase[j], row[j].J_u - j0.J_u, row[j].J_v - j0.J_v,
           row[j].J_uv - j0.J_uv});
    }
  }

  // least-squares speeds over t >= fit_start
  out.fitted_speeds.assign(N, 0.0);
  for (int i = 0; i < N; ++i) {
    double st = 0, sx = 0, stt = 0, stx = 0;
    int cnt = 0;
    for (const auto& tg : out.geometry) {
      if (tg.t < fit_start) continue;
      st += tg.t;
      sx += tg.x_tilde[i];
      stt += tg.t * tg.t;
      stx += tg.t * tg.x_tilde[i];
      ++cnt;
    }
    if (cnt >= 2)
      out.fitted_speeds[i] = (cnt * stx - st * sx) / (cnt * stt - st * st);
  }
  return out;
}

struct MonotonicityReport {
  // max over time of J(t) - J(0), per midpoint and per functional
  std::vector<double> max_increase_u;
  std::vector<double> max_increase_v;
  std::vector<double> max_increase_uv;
  double tolerance = 0.0;  // C exp(-sigma0 L / (8K)) with frozen C
};

inline MonotonicityReport monotonicity_report(const TrainDiagnostics& td,
                                              const TrainSpec& ts,
                                              const WeightFamily& wf) {
  MonotonicityReport rep;
  const int half = static_cast<int>(ts.peakons.size()) - 1;
  rep.max_increase_u.assign(half, -std::numeric_limits<double>::max());
  rep.max_increase_v.assign(half, -std::numeric_limits<double>::max());
  rep.max_increase_uv.assign(half, -std::numeric_limits<double>::max());
  for (int j = 0; j < half; ++j) {
    const RightEnergies& j0 = td.geometry.front().J[j];
    for (const auto& tg : td.geometry) {
      rep.max_increase_u[j] = std::max(rep.max_increase_u[j], tg.J[j].J_u - j0.J_u);
      rep.max_increase_v[j] = std::max(rep.max_increase_v[j], tg.J[j].J_v - j0.J_v);
      rep.max_increase_uv[j] =
          std::max(rep.max_increase_uv[j], tg.J[j].J_uv - j0.J_uv);
    }
  }
  const double C = 1.0;  // frozen scale of the decay estimate
  rep.tolerance = C * std::exp(-ts.sigma0() * ts.L / (8.0 * wf.K));
  return rep;
}

}  // namespace peakonlab
