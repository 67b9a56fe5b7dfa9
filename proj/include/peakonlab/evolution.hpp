#pragma once

#include "peakonlab/functionals.hpp"
#include "peakonlab/grid.hpp"
#include "peakonlab/kernel.hpp"

namespace peakonlab {

/// Discretization of the transport derivative in the advection term.
/// The smoothing convolutions always use central stencils; this only
/// selects the stencil multiplying the local transport speed u*v.
enum class TransportScheme {
  central,        // plain second-order central
  upwind_first,   // first-order, biased by sign(u*v)
  upwind_second,  // second-order fully one-sided, biased
  upwind_third,   // third-order four-point, biased
};

struct StepControl {
  double cfl = 0.3;
  double dt_max = 0.02;
  double t_end = 10.0;
  int record_every = 10;
  TransportScheme scheme = TransportScheme::central;
};

inline void validate(const StepControl& c) {
  if (!(c.cfl > 0.0 && c.cfl <= 1.0))
    throw std::invalid_argument("StepControl: cfl must be in (0,1]");
  if (!(c.dt_max > 0.0))
    throw std::invalid_argument("StepControl: dt_max must be positive");
  if (!(c.t_end >= 0.0))
    throw std::invalid_argument("StepControl: t_end must be nonnegative");
  if (c.record_every < 1)
    throw std::invalid_argument("StepControl: record_every must be >= 1");
}

/// Thrown when a step produces non-finite values (blow-up or CFL violation).
struct BlowupError : std::runtime_error {
  double t;
  explicit BlowupError(double time)
      : std::runtime_error("solution lost finiteness at t = " +
                           std::to_string(time)),
        t(time) {}
};

namespace detail {

inline Field transport_derivative(const Field& f, const Field& speed,
                                  TransportScheme scheme) {
  if (scheme == TransportScheme::central) return derivative(f);
  const int n = f.size();
  const double dx = f.grid.dx;
  Field d(f.grid);
  auto up1 = [&](int k, int s) { return s * (f.v[k] - f.v[k - s]) / dx; };
  auto up2 = [&](int k, int s) {
    return s * (3 * f.v[k] - 4 * f.v[k - s] + f.v[k - 2 * s]) / (2 * dx);
  };
  auto up3 = [&](int k, int s) {
    return s *
           (2 * f.v[k + s] + 3 * f.v[k] - 6 * f.v[k - s] + f.v[k - 2 * s]) /
           (6 * dx);
  };
  for (int k = 0; k < n; ++k) {
    int s = speed.v[k] >= 0.0 ? 1 : -1;  // stencil reaches against the flow
    int room_back = s > 0 ? k : n - 1 - k;
    int room_fwd = s > 0 ? n - 1 - k : k;
    switch (scheme) {
      case TransportScheme::upwind_first:
        d.v[k] = room_back >= 1 ? up1(k, s) : up1(k, -s);
        break;
      case TransportScheme::upwind_second:
        if (room_back >= 2)
          d.v[k] = up2(k, s);
        else if (room_back >= 1)
          d.v[k] = up1(k, s);
        else
          d.v[k] = up1(k, -s);
        break;
      case TransportScheme::upwind_third:
        if (room_back >= 2 && room_fwd >= 1)
          d.v[k] = up3(k, s);
        else if (room_back >= 2)
          d.v[k] = up2(k, s);
        else if (room_back >= 1)
          d.v[k] = up1(k, s);
        else
          d.v[k] = up1(k, -s);
        break;
      default:
        d.v[k] = 0.0;
    }
  }
  return d;
}

}  // namespace detail

/// Semi-discrete right-hand side of the weak-form system:
///   u_t = -(uv) u_x - P_x*(u_x^2 v / 2 + u u_x v_x + u^2 v) - P*(u_x^2 v_x)/2
/// and the u<->v mirror image. Central derivatives feed the convolution
/// integrands; `scheme` selects the stencil of the advective derivative.
inline std::pair<Field, Field> rhs(const State& s, KernelWorkspace& ws,
                                   TransportScheme scheme =
                                       TransportScheme::central) {
  require_same_grid(s.u, s.v, "rhs");
  const Grid& g = s.u.grid;
  const int n = g.n;
  Field ux = derivative(s.u);
  Field vx = derivative(s.v);
  Field uv(g);
  for (int k = 0; k < n; ++k) uv.v[k] = s.u.v[k] * s.v.v[k];
  Field du = detail::transport_derivative(s.u, uv, scheme);
  Field dv = detail::transport_derivative(s.v, uv, scheme);

  Field qu(g), ru(g), qv(g), rv(g);
  for (int k = 0; k < n; ++k) {
    double U = s.u.v[k], V = s.v.v[k], Ux = ux.v[k], Vx = vx.v[k];
    qu.v[k] = 0.5 * Ux * Ux * V + U * Ux * Vx + U * U * V;
    ru.v[k] = Ux * Ux * Vx;
    qv.v[k] = 0.5 * Vx * Vx * U + V * Vx * Ux + V * V * U;
    rv.v[k] = Vx * Vx * Ux;
  }
  Field px_qu = convolve_Px(qu, ws);
  Field p_ru = convolve_P(ru, ws);
  Field px_qv = convolve_Px(qv, ws);
  Field p_rv = convolve_P(rv, ws);

  Field dudt(g), dvdt(g);
  for (int k = 0; k < n; ++k) {
    dudt.v[k] = -uv.v[k] * du.v[k] - px_qu.v[k] - 0.5 * p_ru.v[k];
    dvdt.v[k] = -uv.v[k] * dv.v[k] - px_qv.v[k] - 0.5 * p_rv.v[k];
  }
  return {dudt, dvdt};
}

/// Classical four-stage Runge-Kutta step. Throws BlowupError if the result
/// loses finiteness.
inline State step_rk4(const State& s, double dt, KernelWorkspace& ws,
                      TransportScheme scheme = TransportScheme::central) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_rk4: dt must be positive");
  const Grid& g = s.u.grid;
  const int n = g.n;
  auto axpy = [&](const State& base, double c, const Field& fu,
                  const Field& fv) {
    State r;
    r.u = Field(g);
    r.v = Field(g);
    r.t = base.t;
    for (int k = 0; k < n; ++k) {
      r.u.v[k] = base.u.v[k] + c * fu.v[k];
      r.v.v[k] = base.v.v[k] + c * fv.v[k];
    }
    return r;
  };
  auto [k1u, k1v] = rhs(s, ws, scheme);
  State s2 = axpy(s, 0.5 * dt, k1u, k1v);
  auto [k2u, k2v] = rhs(s2, ws, scheme);
  State s3 = axpy(s, 0.5 * dt, k2u, k2v);
  auto [k3u, k3v] = rhs(s3, ws, scheme);
  State s4 = axpy(s, dt, k3u, k3v);
  auto [k4u, k4v] = rhs(s4, ws, scheme);

  State out;
  out.u = Field(g);
  out.v = Field(g);
  out.t = s.t + dt;
  const double c = dt / 6.0;
  for (int k = 0; k < n; ++k) {
    out.u.v[k] =
        s.u.v[k] + c * (k1u.v[k] + 2 * k2u.v[k] + 2 * k3u.v[k] + k4u.v[k]);
    out.v.v[k] =
        s.v.v[k] + c * (k1v.v[k] + 2 * k2v.v[k] + 2 * k3v.v[k] + k4v.v[k]);
  }
  if (!all_finite(out.u) || !all_finite(out.v)) throw BlowupError(out.t);
  return out;
}

/// CFL-limited step size from the transport speed u*v.
inline double cfl_dt(const State& s, const StepControl& ctl) {
  double m = 0.0;
  for (int k = 0; k < s.u.size(); ++k)
    m = std::max(m, std::abs(s.u.v[k] * s.v.v[k]));
  m = std::max(m, 1e-12);
  return std::min(ctl.dt_max, ctl.cfl * s.u.grid.dx / m);
}

struct Trajectory {
  std::vector<State> states;
  std::vector<FunctionalRecord> records;
};

/// Advances the state to t_end, snapshotting every record_every accepted
/// steps and always at t_end. A blow-up propagates with its failure time;
/// the snapshots taken so far stay valid.
inline Trajectory simulate(const State& initial, const StepControl& ctl) {
  validate(ctl);
  require_same_grid(initial.u, initial.v, "simulate");
  Trajectory traj;
  KernelWorkspace ws(initial.u.grid);
  State s = initial;
  s.t = 0.0;
  traj.states.push_back(s);
  traj.records.push_back(functional_record(s));
  if (ctl.t_end <= 0.0) return traj;
  long step = 0;
  while (s.t < ctl.t_end - 1e-12) {
    double dt = std::min(cfl_dt(s, ctl), ctl.t_end - s.t);
    s = step_rk4(s, dt, ws, ctl.scheme);
    ++step;
    if (step % ctl.record_every == 0 || s.t >= ctl.t_end - 1e-12) {
      traj.states.push_back(s);
      traj.records.push_back(functional_record(s));
    }
  }
  return traj;
}

struct CharacteristicPath {
  double x_seed = 0.0;
  std::vector<double> times;
  std::vector<double> q;       // positions
  std::vector<double> qx_fd;   // stretch by differencing companion paths
  std::vector<double> qx_exp;  // stretch by the exponential formula
};

namespace detail {

inline double interp(const Field& f, double x) {
  const Grid& g = f.grid;
  if (x < g.x_left || x > g.x_right)
    throw std::runtime_error("characteristic left the grid at x = " +
                             std::to_string(x));
  double r = (x - g.x_left) / g.dx;
  int k = std::min(static_cast<int>(r), g.n - 2);
  double w = r - k;
  return (1.0 - w) * f.v[k] + w * f.v[k + 1];
}

}  // namespace detail

/// Integrates dq/dt = (uv)(t, q) through the trajectory snapshots with
/// linear interpolation in x and t. The stretch factor q_x is computed two
/// ways: finite differences of companion paths seeded at x_seed +- dx/2,
/// and the exponential of the accumulated (uv)_x integral.
inline std::vector<CharacteristicPath> characteristics(
    const Trajectory& traj, const std::vector<double>& x_seeds) {
  if (traj.states.size() < 2)
    throw std::invalid_argument("characteristics: need at least 2 snapshots");
  const Grid& g = traj.states[0].u.grid;
  const size_t ns = traj.states.size();

  std::vector<Field> uv(ns, Field(g)), uvx(ns, Field(g));
  for (size_t i = 0; i < ns; ++i) {
    for (int k = 0; k < g.n; ++k)
      uv[i].v[k] = traj.states[i].u.v[k] * traj.states[i].v.v[k];
    uvx[i] = derivative(uv[i]);
  }
  auto speed = [&](size_t i0, double theta, double x) {
    double a = detail::interp(uv[i0], x);
    double b = detail::interp(uv[i0 + 1], x);
    return (1.0 - theta) * a + theta * b;
  };
  auto speed_x = [&](size_t i0, double theta, double x) {
    double a = detail::interp(uvx[i0], x);
    double b = detail::interp(uvx[i0 + 1], x);
    return (1.0 - theta) * a + theta * b;
  };

  std::vector<CharacteristicPath> out;
  for (double seed : x_seeds) {
    CharacteristicPath cp;
    cp.x_seed = seed;
    const double h = 0.5 * g.dx;
    double q = seed, qm = seed - h, qp = seed + h;
    double logqx = 0.0;
    cp.times.push_back(traj.states[0].t);
    cp.q.push_back(q);
    cp.qx_fd.push_back(1.0);
    cp.qx_exp.push_back(1.0);
    for (size_t i = 0; i + 1 < ns; ++i) {
      double t0 = traj.states[i].t, t1 = traj.states[i + 1].t;
      double dt = t1 - t0;
      auto rk4_pos = [&](double x0) {
        double k1 = speed(i, 0.0, x0);
        double k2 = speed(i, 0.5, x0 + 0.5 * dt * k1);
        double k3 = speed(i, 0.5, x0 + 0.5 * dt * k2);
        double k4 = speed(i, 1.0, x0 + dt * k3);
        return x0 + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
      };
      double gx0 = speed_x(i, 0.0, q);
      q = rk4_pos(q);
      qm = rk4_pos(qm);
      qp = rk4_pos(qp);
      double gx1 = speed_x(i, 1.0, q);
      logqx += 0.5 * dt * (gx0 + gx1);
      cp.times.push_back(t1);
      cp.q.push_back(q);
      cp.qx_fd.push_back((qp - qm) / (2.0 * h));
      cp.qx_exp.push_back(std::exp(logqx));
    }
    out.push_back(std::move(cp));
  }
  return out;
}

struct FlowMomentumReport {
  double max_deviation = 0.0;  // of m(t,q) / prediction from 1
  double min_m_along = 0.0;
  std::vector<double> skipped_seeds;  // |m0| too small at the seed
};

/// Checks m(t, q(t,x)) against the exponential-integral prediction
/// exp(-int (2 v u_x + u v_x) ds) m_0 along each path.
inline FlowMomentumReport momentum_along_flow(
    const Trajectory& traj, const std::vector<CharacteristicPath>& paths) {
  const Grid& g = traj.states[0].u.grid;
  const size_t ns = traj.states.size();
  std::vector<Field> m(ns, Field(g)), decay(ns, Field(g));
  for (size_t i = 0; i < ns; ++i) {
    m[i] = helmholtz_forward(traj.states[i].u);
    Field ux = derivative(traj.states[i].u);
    Field vx = derivative(traj.states[i].v);
    for (int k = 0; k < g.n; ++k)
      decay[i].v[k] = 2.0 * traj.states[i].v.v[k] * ux.v[k] +
                      traj.states[i].u.v[k] * vx.v[k];
  }
  double m_scale = 0.0;
  for (int k = 0; k < g.n; ++k) m_scale = std::max(m_scale, std::abs(m[0].v[k]));

  FlowMomentumReport rep;
  rep.min_m_along = std::numeric_limits<double>::max();
  for (const auto& cp : paths) {
    double m0 = detail::interp(m[0], cp.x_seed);
    if (std::abs(m0) < 1e-6 * m_scale) {
      rep.skipped_seeds.push_back(cp.x_seed);
      continue;
    }
    double acc = 0.0;
    for (size_t i = 0; i < cp.times.size(); ++i) {
      if (i > 0) {
        double dt = cp.times[i] - cp.times[i - 1];
        double d0 = detail::interp(decay[i - 1], cp.q[i - 1]);
        double d1 = detail::interp(decay[i], cp.q[i]);
        acc += 0.5 * dt * (d0 + d1);
      }
      double mi = detail::interp(m[i], cp.q[i]);
      rep.min_m_along = std::min(rep.min_m_along, mi);
      double pred = std::exp(-acc) * m0;
      rep.max_deviation = std::max(rep.max_deviation, std::abs(mi / pred - 1.0));
    }
  }
  if (rep.min_m_along == std::numeric_limits<double>::max())
    rep.min_m_along = 0.0;
  return rep;
}

}  // namespace peakonlab
