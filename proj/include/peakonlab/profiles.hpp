#pragma once

#include <algorithm>
#include <random>
#include <utility>

#include "peakonlab/grid.hpp"
#include "peakonlab/kernel.hpp"

namespace peakonlab {

/// One peakon pair (a e^{-|x-x0|}, b e^{-|x-x0|}) traveling at speed c = a*b.
struct PeakonSpec {
  double a = 1.0;
  double b = 1.0;
  double x0 = 0.0;

  double speed() const { return a * b; }
};

inline void validate(const PeakonSpec& p) {
  if (!(p.a > 0.0) || !(p.b > 0.0))
    throw std::invalid_argument("PeakonSpec: amplitudes must be positive");
  if (!std::isfinite(p.x0))
    throw std::invalid_argument("PeakonSpec: position must be finite");
}

/// Ordered peakon train. Amplitudes strictly increasing in both components,
/// positions separated by at least L.
struct TrainSpec {
  std::vector<PeakonSpec> peakons;
  double L = 0.0;

  double sigma0() const {
    // sigma0 = min(c_1, c_2 - c_1, ..., c_N - c_{N-1}) / 4
    double m = peakons[0].speed();
    for (size_t i = 1; i < peakons.size(); ++i)
      m = std::min(m, peakons[i].speed() - peakons[i - 1].speed());
    return 0.25 * m;
  }
};

inline void validate(const TrainSpec& ts) {
  if (ts.peakons.empty()) throw std::invalid_argument("TrainSpec: empty train");
  if (!(ts.L > 0.0)) throw std::invalid_argument("TrainSpec: L must be positive");
  for (const auto& p : ts.peakons) validate(p);
  for (size_t i = 1; i < ts.peakons.size(); ++i) {
    if (!(ts.peakons[i].a > ts.peakons[i - 1].a) ||
        !(ts.peakons[i].b > ts.peakons[i - 1].b))
      throw std::invalid_argument("TrainSpec: amplitudes must be increasing");
    if (!(ts.peakons[i].x0 - ts.peakons[i - 1].x0 >= ts.L))
      throw std::invalid_argument("TrainSpec: positions closer than L");
  }
}

struct MollifierSpec {
  double w = 0.2;  // bump width of the momentum density
};

inline void validate(const MollifierSpec& m) {
  if (!(m.w > 0.0)) throw std::invalid_argument("MollifierSpec: w must be positive");
}

inline double peakon_shape(double a, double x0, double x) {
  return a * std::exp(-std::abs(x - x0));
}

inline double peakon_slope(double a, double x0, double x) {
  double d = x - x0;
  if (d == 0.0) return 0.0;
  return (d > 0 ? -a : a) * std::exp(-std::abs(d));
}

/// Exact peakon pair sampled on the grid at t = 0.
inline State exact_peakon_pair(const PeakonSpec& spec, const Grid& g) {
  validate(spec);
  State s;
  s.u = Field(g);
  s.v = Field(g);
  s.t = 0.0;
  for (int k = 0; k < g.n; ++k) {
    double x = g.node(k);
    s.u.v[k] = peakon_shape(spec.a, spec.x0, x);
    s.v.v[k] = peakon_shape(spec.b, spec.x0, x);
  }
  return s;
}

/// Closed-form derivatives of the exact pair sampled at the nodes.
/// Functional checks against closed-form peakon values use these instead of
/// grid stencils, which smear the crest over one cell.
inline std::pair<Field, Field> exact_peakon_derivatives(const PeakonSpec& spec,
                                                        const Grid& g) {
  Field ux(g), vx(g);
  for (int k = 0; k < g.n; ++k) {
    double x = g.node(k);
    ux.v[k] = peakon_slope(spec.a, spec.x0, x);
    vx.v[k] = peakon_slope(spec.b, spec.x0, x);
  }
  return {ux, vx};
}

/// Truncated Gaussian bump (support 8w) normalized so its discrete integral
/// equals `mass` exactly.
inline Field momentum_bump(const Grid& g, double x0, double w, double mass) {
  Field b(g);
  for (int k = 0; k < g.n; ++k) {
    double d = g.node(k) - x0;
    b.v[k] = std::abs(d) > 8.0 * w ? 0.0 : std::exp(-0.5 * (d / w) * (d / w));
  }
  double s = integrate(b);
  if (!(s > 0.0))
    throw std::invalid_argument("momentum_bump: bump not resolved on grid");
  for (auto& x : b.v) x *= mass / s;
  return b;
}

/// H^3-class near-peakon data: nonnegative momentum bumps of total mass 2a
/// (resp. 2b) pushed through the inverse Helmholtz operator.
inline State mollified_peakon_pair(const PeakonSpec& spec,
                                   const MollifierSpec& moll, const Grid& g) {
  validate(spec);
  validate(moll);
  KernelWorkspace ws(g);
  State s;
  s.u = convolve_P(momentum_bump(g, spec.x0, moll.w, 2.0 * spec.a), ws);
  s.v = convolve_P(momentum_bump(g, spec.x0, moll.w, 2.0 * spec.b), ws);
  s.t = 0.0;
  return s;
}

/// Mollified train: momentum densities of all bumps added, then one
/// Helmholtz inversion per component.
inline State train(const TrainSpec& ts, const MollifierSpec& moll,
                   const Grid& g) {
  validate(ts);
  validate(moll);
  Field m(g), n(g);
  for (const auto& p : ts.peakons) {
    Field bm = momentum_bump(g, p.x0, moll.w, 2.0 * p.a);
    Field bn = momentum_bump(g, p.x0, moll.w, 2.0 * p.b);
    for (int k = 0; k < g.n; ++k) {
      m.v[k] += bm.v[k];
      n.v[k] += bn.v[k];
    }
  }
  KernelWorkspace ws(g);
  State s;
  s.u = convolve_P(m, ws);
  s.v = convolve_P(n, ws);
  s.t = 0.0;
  return s;
}

namespace detail {

// Portable uniform double in [lo, hi) from the raw 64-bit stream, so runs
// reproduce bit-identically on any libstdc++/libc++.
class UniformSource {
 public:
  explicit UniformSource(std::uint64_t seed) : eng_(seed) {}
  double next(double lo, double hi) {
    double u = (eng_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace detail

/// Adds a seeded superposition of narrow nonnegative bumps to the momentum
/// densities of `s`, scaled so the H^1 distance of (u, v) to the input state
/// equals `amplitude`. The perturbation is linear in momentum, so the scale
/// is exact up to round-off. Momentum nonnegativity is preserved.
inline State perturb_momentum(const State& s, double amplitude,
                              std::uint64_t seed) {
  if (!(amplitude >= 0.0))
    throw std::invalid_argument("perturb_momentum: amplitude must be >= 0");
  Field m = helmholtz_forward(s.u);
  Field n = helmholtz_forward(s.v);
  {
    double floor_m = -1e-9 * (1.0 + *std::max_element(m.v.begin(), m.v.end()));
    for (int k = 0; k < m.size(); ++k)
      if (m.v[k] < floor_m || n.v[k] < floor_m)
        throw std::invalid_argument(
            "perturb_momentum: input state has negative momentum density");
  }
  if (amplitude == 0.0) return s;

  const Grid& g = s.u.grid;
  ProductMax pm = argmax_product(s);
  // bump centers drawn from a band around the support of the state
  double span = 0.0;
  for (int k = 0; k < g.n; ++k)
    if (s.u.v[k] + s.v.v[k] > 1e-3) span = std::max(span, std::abs(g.node(k) - pm.xi));
  double lo = std::max(g.x_left + 2.0, pm.xi - span);
  double hi = std::min(g.x_right - 2.0, pm.xi + span);

  detail::UniformSource rng(seed);
  Field dm(g), dn(g);
  const int bumps = 10;
  for (int i = 0; i < bumps; ++i) {
    double c = rng.next(lo, hi);
    double w = rng.next(0.1, 0.3);
    double amp = rng.next(0.2, 1.0);
    Field b = momentum_bump(g, c, w, amp);
    for (int k = 0; k < g.n; ++k) dm.v[k] += b.v[k];
    c = rng.next(lo, hi);
    w = rng.next(0.1, 0.3);
    amp = rng.next(0.2, 1.0);
    b = momentum_bump(g, c, w, amp);
    for (int k = 0; k < g.n; ++k) dn.v[k] += b.v[k];
  }
  KernelWorkspace ws(g);
  Field du = convolve_P(dm, ws);
  Field dv = convolve_P(dn, ws);
  double d0 = h1_norm(du) + h1_norm(dv);
  if (!(d0 > 0.0))
    throw std::runtime_error("perturb_momentum: degenerate perturbation");
  double scale = amplitude / d0;

  // Linear update keeps the H^1 distance exact and, since the sweeps invert
  // the forward stencil at interior nodes, shifts the momentum densities by
  // exactly scale*dm, scale*dn >= 0.
  State out;
  out.u = s.u;
  out.v = s.v;
  out.t = s.t;
  for (int k = 0; k < g.n; ++k) {
    out.u.v[k] += scale * du.v[k];
    out.v.v[k] += scale * dv.v[k];
  }
  Field m2 = helmholtz_forward(out.u);
  Field n2 = helmholtz_forward(out.v);
  double tol = -1e-9 * (1.0 + *std::max_element(m2.v.begin(), m2.v.end()));
  for (int k = 0; k < g.n; ++k)
    if (m2.v[k] < tol || n2.v[k] < tol)
      throw std::runtime_error(
          "perturb_momentum: requested amplitude breaks momentum sign");
  return out;
}

}  // namespace peakonlab
