// Acceptance suite: one pass/fail line per criterion, exit code 0 iff all
// pass. Criteria 3 and 4 monitor conservation and momentum positivity at the
// desk-scale resolution; peakon formation concentrates the momentum below
// grid scale there, so those two are expected to run red until the
// resolution grows by orders of magnitude (see README, "known limits").

#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "peakonlab/experiment.hpp"

using namespace peakonlab;

namespace {

struct Criterion {
  std::string name;
  bool pass;
  std::string detail;
};

std::vector<Criterion> g_results;

void report(const std::string& name, bool pass, const std::string& detail) {
  g_results.push_back({name, pass, detail});
  std::printf("[%s] %s: %s\n", pass ? "PASS" : "FAIL", name.c_str(),
              detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", x);
  return buf;
}

double rel_drift(const std::vector<FunctionalRecord>& rec) {
  const FunctionalRecord& r0 = rec.front();
  double d = 0.0;
  for (const auto& r : rec) {
    d = std::max(d, std::abs(r.E_u - r0.E_u) / std::abs(r0.E_u));
    d = std::max(d, std::abs(r.E_v - r0.E_v) / std::abs(r0.E_v));
    d = std::max(d, std::abs(r.H - r0.H) / std::abs(r0.H));
    d = std::max(d, std::abs(r.F - r0.F) / std::abs(r0.F));
  }
  return d;
}

// ---------------------------------------------------------------------------

void criterion1_closed_form() {
  Grid g = make_grid(-40.0, 40.0, 8193);
  double worst = 0.0;
  for (auto [a, b] : {std::pair{1.0, 1.0}, {1.0, 2.0}, {2.0, 3.0}}) {
    PeakonSpec spec{a, b, 0.3};
    State s = exact_peakon_pair(spec, g);
    auto [ux, vx] = exact_peakon_derivatives(spec, g);
    double Eu = energy_with(s.u, ux), Ev = energy_with(s.v, vx);
    double H = cross_H_with(s.u, ux, s.v, vx);
    double F = quartic_F_with(s.u, ux, s.v, vx);
    worst = std::max(worst, std::abs(Eu - 2 * a * a) / (2 * a * a));
    worst = std::max(worst, std::abs(Ev - 2 * b * b) / (2 * b * b));
    worst = std::max(worst, std::abs(H - 2 * a * b) / (2 * a * b));
    double F0 = 4.0 / 3.0 * a * a * b * b;
    worst = std::max(worst, std::abs(F - F0) / F0);
  }
  report("C1 closed-form functionals", worst <= 5e-3,
         "max rel err " + fmt(worst) + " (tol 5e-3)");
}

void criterion2_kernel_oracle() {
  Grid g = make_grid(-40.0, 40.0, 1025);
  KernelWorkspace ws(g);
  double worst = 0.0;
  for (int seed = 0; seed < 20; ++seed) {
    detail::UniformSource rng(1000 + seed);
    Field f(g);
    for (int b = 0; b < 5; ++b) {
      double c = rng.next(-20.0, 20.0), w = rng.next(0.5, 3.0),
             a = rng.next(-2.0, 2.0);
      for (int k = 0; k < g.n; ++k) {
        double d = (g.node(k) - c) / w;
        f.v[k] += a * std::exp(-0.5 * d * d);
      }
    }
    Field p = convolve_P(f, ws), q = convolve_Px(f, ws);
    double sup_p = 0.0, sup_q = 0.0, err_p = 0.0, err_q = 0.0;
    for (int k = 0; k < g.n; ++k) {
      double accp = 0.0, accq = 0.0;
      for (int j = 0; j < g.n; ++j) {
        double w2 = (j == 0 || j == g.n - 1) ? 0.5 : 1.0;
        double d = g.node(k) - g.node(j);
        double e = std::exp(-std::abs(d));
        double sgn = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
        accp += w2 * 0.5 * e * f.v[j];
        accq += w2 * -0.5 * sgn * e * f.v[j];
      }
      accp *= g.dx;
      accq *= g.dx;
      sup_p = std::max(sup_p, std::abs(accp));
      sup_q = std::max(sup_q, std::abs(accq));
      err_p = std::max(err_p, std::abs(p.v[k] - accp));
      err_q = std::max(err_q, std::abs(q.v[k] - accq));
    }
    worst = std::max({worst, err_p / sup_p, err_q / sup_q});
  }

  Grid g8 = make_grid(-40.0, 40.0, 8193);
  KernelWorkspace ws8(g8);
  Field e(g8);
  for (int k = 0; k < g8.n; ++k) e.v[k] = std::exp(-std::abs(g8.node(k)));
  Field pe = convolve_P(e, ws8);
  double id_err = 0.0;
  for (int k = 0; k < g8.n; ++k) {
    double x = std::abs(g8.node(k));
    id_err = std::max(id_err,
                      std::abs(pe.v[k] - 0.5 * (1.0 + x) * std::exp(-x)));
  }
  report("C2 kernel oracle equivalence", worst <= 1e-10 && id_err <= 1e-4,
         "sweep vs direct rel " + fmt(worst) + " (tol 1e-10), e^-|x| id " +
             fmt(id_err) + " (tol 1e-4)");
}

// runs shared across criteria
struct Runs {
  Trajectory mollified;        // n = 4097, w = 0.2
  Trajectory perturbed;        // delta = 0.05
  Trajectory refined;          // n = 8193
  std::vector<Trajectory> ladder;  // deltas 0.02 / 0.04 / 0.08
  std::vector<double> ladder_deltas{0.02, 0.04, 0.08};
  Trajectory train_traj;
  TrainSpec train_spec;
  TrainDiagnostics train_td;
  double train_K = 0.0;
};

Trajectory run_single(int n, double w, double delta, std::uint64_t seed) {
  Grid g = make_grid(-40.0, 40.0, n);
  State s = mollified_peakon_pair({1.0, 1.0, 0.0}, {w}, g);
  if (delta > 0.0) s = perturb_momentum(s, delta, seed);
  StepControl ctl;
  ctl.t_end = 10.0;
  ctl.record_every = 10;
  return simulate(s, ctl);
}

void criterion3_conservation(Runs& runs) {
  runs.mollified = run_single(4097, 0.2, 0.0, 0);
  runs.perturbed = run_single(4097, 0.2, 0.05, 1);
  runs.refined = run_single(8193, 0.2, 0.0, 0);
  double dA = rel_drift(runs.mollified.records);
  double dB = rel_drift(runs.perturbed.records);
  double dC = rel_drift(runs.refined.records);
  bool pass = dA <= 1e-3 && dB <= 1e-3 && dA / dC >= 4.0;
  report("C3 conservation", pass,
         "drift mollified " + fmt(dA) + ", perturbed " + fmt(dB) +
             " (tol 1e-3); refinement ratio " + fmt(dA / dC) + " (need >= 4)");
}

void criterion4_sign_and_slope(const Runs& runs) {
  double worst_m = 0.0;   // most negative min m relative to max m(0)
  double worst_sl = 0.0;  // worst slope excess relative to max u
  for (const Trajectory* traj : {&runs.mollified, &runs.perturbed}) {
    KernelWorkspace ws(traj->states[0].u.grid);
    Field m0 = helmholtz_forward(traj->states[0].u);
    double m0max = *std::max_element(m0.v.begin(), m0.v.end());
    for (const State& s : traj->states) {
      Field m = helmholtz_forward(s.u);
      Field n = helmholtz_forward(s.v);
      double mn = std::min(*std::min_element(m.v.begin(), m.v.end()),
                           *std::min_element(n.v.begin(), n.v.end()));
      worst_m = std::max(worst_m, -mn / m0max);
      double umax = *std::max_element(s.u.v.begin(), s.u.v.end());
      Field urec = convolve_P(m, ws);
      Field uxk = convolve_Px(m, ws);
      double ex = 0.0;
      for (int k = 0; k < s.u.size(); ++k)
        ex = std::max(ex, std::abs(uxk.v[k]) - urec.v[k]);
      worst_sl = std::max(worst_sl, ex / umax);
    }
  }
  bool pass = worst_m <= 1e-6 && worst_sl <= 1e-6;
  report("C4 sign invariance & slope bound", pass,
         "min m dip " + fmt(worst_m) + " of max m(0), slope excess " +
             fmt(worst_sl) + " of max u (tol 1e-6 each)");
}

void criterion5_identity_fuzz() {
  Grid g = make_grid(-40.0, 40.0, 4097);
  detail::UniformSource xi_rng(777);
  double worst_pw = 0.0, worst_g = 0.0, worst_h = 0.0;
  for (int si = 0; si < 100; ++si) {
    State s = random_cone_state(g, 5000 + si);
    for (int xi_i = 0; xi_i < 100; ++xi_i) {
      double xi = xi_rng.next(-20.0, 20.0);
      double a = 1.0, b = 2.0;
      // residual scaled by 1 + |RHS| with RHS the distance-plus-point side
      double rhs_u = pw_h1_dist_sq_peakon(s.u, a, xi) +
                     4.0 * a * (pw_value(s.u, xi) - a);
      double rhs_v = pw_h1_dist_sq_peakon(s.v, b, xi) +
                     4.0 * b * (pw_value(s.v, xi) - b);
      PointwiseIdentityResidual r = pointwise_energy_identity(s, a, b, xi);
      worst_pw = std::max(worst_pw, r.residual_u / (1.0 + std::abs(rhs_u)));
      worst_pw = std::max(worst_pw, r.residual_v / (1.0 + std::abs(rhs_v)));
    }
    IdentityCheck ig = identity_g1g2(s);
    IdentityCheck ih = identity_h(s);
    worst_g = std::max(worst_g, ig.residual() / (1.0 + std::abs(ig.rhs)));
    worst_h = std::max(worst_h, ih.residual() / (1.0 + std::abs(ih.rhs)));
  }
  // refinement order on a handful of fixed states
  double min_order = 10.0;
  for (int si = 0; si < 5; ++si) {
    double prev_g = 0.0, prev_h = 0.0;
    double order_g = 10.0, order_h = 10.0;
    for (int n : {1025, 2049, 4097}) {
      Grid gn = make_grid(-40.0, 40.0, n);
      State s = random_cone_state(gn, 9000 + si);
      double rg = identity_g1g2(s).residual();
      double rh = identity_h(s).residual();
      if (prev_g > 0.0) {
        order_g = std::min(order_g, std::log2(prev_g / rg));
        order_h = std::min(order_h, std::log2(prev_h / rh));
      }
      prev_g = rg;
      prev_h = rh;
    }
    min_order = std::min({min_order, order_g, order_h});
  }
  bool pass = worst_pw <= 1e-6 && worst_g <= 5e-3 && worst_h <= 5e-3 &&
              min_order >= 1.0;
  report("C5 identity fuzzing", pass,
         "pointwise " + fmt(worst_pw) + " (tol 1e-6), split " +
             fmt(std::max(worst_g, worst_h)) + " (tol 5e-3), order " +
             fmt(min_order) + " (need >= 1)");
}

void criterion6_key_inequality(const Runs& runs) {
  double worst = -1e300;
  long count = 0;
  auto scan = [&](const Trajectory& traj) {
    for (const State& s : traj.states) {
      double F = quartic_F(s);
      worst = std::max(worst, key_inequality(s) / (1.0 + std::abs(F)));
      ++count;
    }
  };
  scan(runs.mollified);
  scan(runs.perturbed);
  scan(runs.refined);
  for (const auto& t : runs.ladder) scan(t);
  scan(runs.train_traj);

  Grid g = make_grid(-40.0, 40.0, 8193);
  PeakonSpec spec{1.0, 1.0, 0.3};
  State p = exact_peakon_pair(spec, g);
  auto [ux, vx] = exact_peakon_derivatives(spec, g);
  double H = cross_H_with(p.u, ux, p.v, vx);
  double F = quartic_F_with(p.u, ux, p.v, vx);
  double M = argmax_product(p).M;
  double eq = std::abs(F - 4.0 / 3.0 * M * H + 4.0 / 3.0 * M * M);

  bool pass = worst <= 1e-6 && eq <= 5e-3;
  report("C6 key inequality", pass,
         "max P(M)/(1+|F|) " + fmt(worst) + " over " + std::to_string(count) +
             " snapshots (tol 1e-6), peakon equality " + fmt(eq) +
             " (tol 5e-3)");
}

void criterion7_scaling(Runs& runs) {
  std::vector<double> sup_dist, sup_ugap, sup_vgap;
  bool gap_ok = true;
  for (double delta : runs.ladder_deltas) {
    Trajectory traj = run_single(4097, 0.2, delta, 1);  // shared seed
    double sd = 0.0, su = 0.0, sv = 0.0;
    for (size_t i = 0; i < traj.states.size(); ++i) {
      const State& s = traj.states[i];
      OrbitalDistance od = orbital_distance(s, 1.0, 1.0);
      sd = std::max(sd, od.total());
      const FunctionalRecord& r = traj.records[i];
      su = std::max(su, std::abs(pw_value(s.u, r.xi) - 1.0));
      sv = std::max(sv, std::abs(pw_value(s.v, r.xi) - 1.0));
      PeakGap pg = peak_gap(s, 1.0, 1.0);
      if (pg.gap > pg.bound + 1e-6) gap_ok = false;
    }
    sup_dist.push_back(sd);
    sup_ugap.push_back(su);
    sup_vgap.push_back(sv);
    runs.ladder.push_back(std::move(traj));
  }
  bool monotone =
      sup_dist[0] <= sup_dist[1] && sup_dist[1] <= sup_dist[2];
  auto spread = [&](const std::vector<double>& sup, double expo) {
    double lo = 1e300, hi = 0.0;
    for (size_t i = 0; i < sup.size(); ++i) {
      double r = sup[i] / std::pow(runs.ladder_deltas[i], expo);
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    return hi / lo;
  };
  double s_quarter = spread(sup_dist, 0.25);
  double s_half_u = spread(sup_ugap, 0.5);
  double s_half_v = spread(sup_vgap, 0.5);
  bool pass = monotone && s_quarter < 3.0 && s_half_u < 3.0 &&
              s_half_v < 3.0 && gap_ok;
  report("C7 perturbation scaling", pass,
         std::string("sup dist ") +
             (monotone ? "monotone" : "NOT monotone") + ", delta^1/4 spread " +
             fmt(s_quarter) + ", delta^1/2 spreads " + fmt(s_half_u) + "/" +
             fmt(s_half_v) + " (each < 3), peak gap " +
             (gap_ok ? "within" : "outside") + " mechanism bound");
}

void criterion10_train(Runs& runs) {
  TrainSpec ts;
  ts.peakons = {{1.0, 1.0, -28.0}, {2.0, 2.0, -3.0}};
  ts.L = 25.0;
  runs.train_spec = ts;
  runs.train_K = std::sqrt(ts.L) / 8.0;

  Grid g = make_grid(-40.0, 40.0, 16385);
  State s0 = train(ts, {0.02}, g);
  State s = perturb_momentum(s0, 0.05, 4);
  StepControl ctl;
  ctl.t_end = 10.0;
  ctl.record_every = 68;  // snapshot spacing ~0.05 at the train CFL step
  runs.train_traj = simulate(s, ctl);

  WeightFamily wf = make_weight(runs.train_K);
  runs.train_td = train_diagnostics(runs.train_traj, ts, wf, 2.0);
  const TrainDiagnostics& td = runs.train_td;

  double speed_err = 0.0;
  for (size_t i = 0; i < ts.peakons.size(); ++i)
    speed_err = std::max(
        speed_err, std::abs(td.fitted_speeds[i] - ts.peakons[i].speed()));
  double mc_err = 0.0, amp_err = 0.0;
  for (const auto& tg : td.geometry) {
    for (size_t i = 0; i < ts.peakons.size(); ++i) {
      mc_err = std::max(mc_err, std::abs(tg.M[i] - ts.peakons[i].speed()));
      amp_err = std::max(amp_err, std::abs(tg.u_at_max[i] - ts.peakons[i].a));
      amp_err = std::max(amp_err, std::abs(tg.v_at_max[i] - ts.peakons[i].b));
    }
  }
  double jinc = 0.0;
  for (double v : td.max_J_increase) jinc = std::max(jinc, v);

  bool p_res = td.max_modulation_residual <= 1e-8;
  bool p_speed = speed_err <= 0.15;
  bool p_sep = td.min_separation_slack >= 0.0;
  bool p_j = jinc <= 1e-2;
  bool p_mc = mc_err <= 0.3 && amp_err <= 0.3;
  bool p_loc = td.worst_local_inequality <= 0.1;
  report("C10 train experiment", p_res && p_speed && p_sep && p_j && p_mc && p_loc,
         "modulation residual " + fmt(td.max_modulation_residual) +
             " (tol 1e-8); speed err " + fmt(speed_err) +
             " (tol 0.15); separation slack " +
             fmt(td.min_separation_slack) + " (need >= 0); J increase " +
             fmt(jinc) + " (tol 1e-2); |M-c| " + fmt(mc_err) + ", amp err " +
             fmt(amp_err) + " (tol 0.3); local inequality " +
             fmt(td.worst_local_inequality) + " (tol 0.1)");
}

void criterion8_virial(const Runs& runs) {
  const Trajectory& traj = runs.train_traj;
  WeightFamily wf = build_weight(4.0);
  Grid g = traj.states[0].u.grid;
  KernelWorkspace ws(g);

  // fixed weights frozen at the modulation midpoints criterion 10 tracked;
  // probes sit in the first third of the run, where the flux through the
  // midpoint is O(0.1) and not yet buried under the kink-cell noise floor
  // of the perturbation's small-amplitude peakons
  double worst = 0.0;
  size_t nprobe = 5;
  for (size_t p = 1; p <= nprobe; ++p) {
    size_t i = p * traj.states.size() / 16;
    if (i == 0 || i + 1 >= traj.states.size()) continue;
    double y2 = runs.train_td.geometry.at(i).y.at(0);
    Field gw(g), gp(g);
    for (int k = 0; k < g.n; ++k) {
      gw.v[k] = wf.psi(g.node(k) - y2);
      gp.v[k] = wf.psi_prime(g.node(k) - y2);
    }
    const State& sm = traj.states[i - 1];
    const State& sp = traj.states[i + 1];
    double dt2 = sp.t - sm.t;
    auto weighted = [&](const State& s) {
      Field ux = derivative(s.u), vx = derivative(s.v);
      double uu = 0.0, vv = 0.0, uv = 0.0;
      Field a(g), b(g), c(g);
      for (int k = 0; k < g.n; ++k) {
        a.v[k] = (s.u.v[k] * s.u.v[k] + ux.v[k] * ux.v[k]) * gw.v[k];
        b.v[k] = (s.v.v[k] * s.v.v[k] + vx.v[k] * vx.v[k]) * gw.v[k];
        c.v[k] = (s.u.v[k] * s.v.v[k] + ux.v[k] * vx.v[k]) * gw.v[k];
      }
      uu = integrate(a);
      vv = integrate(b);
      uv = integrate(c);
      return std::array<double, 3>{uu, vv, uv};
    };
    auto jm = weighted(sm), jp = weighted(sp);
    VirialRates vr = virial_rates(traj.states[i], gp, ws);
    double fd_uu = (jp[0] - jm[0]) / dt2;
    double fd_vv = (jp[1] - jm[1]) / dt2;
    double fd_uv = (jp[2] - jm[2]) / dt2;
    worst = std::max(worst, std::abs(fd_uu - vr.uu) / std::abs(vr.uu));
    worst = std::max(worst, std::abs(fd_vv - vr.vv) / std::abs(vr.vv));
    worst = std::max(worst, std::abs(fd_uv - vr.uv) / std::abs(vr.uv));
  }
  report("C8 Virial identity", worst <= 1e-3,
         "max rel residual " + fmt(worst) + " over " +
             std::to_string(nprobe) + " probes x 3 identities (tol 1e-3)");
}

void criterion9_weights(const Runs& runs) {
  WeightCertificate c = certify_weight();
  bool pass = c.pass;
  for (double K : {4.0, 8.0, 5.0}) {
    try {
      build_weight(K);
    } catch (...) {
      pass = false;
    }
  }
  Grid g = make_grid(-40.0, 40.0, 4097);
  WeightFamily wf = make_weight(runs.train_K > 0 ? runs.train_K : 0.625);
  auto phi = partition_phi(wf, {-15.5}, g);
  double sum_err = 0.0;
  for (int k = 0; k < g.n; ++k) {
    double s = 0.0;
    for (const auto& p : phi) s += p.v[k];
    sum_err = std::max(sum_err, std::abs(s - 1.0));
  }
  pass = pass && sum_err <= 1e-12;
  report("C9 weight certification", pass,
         "monotone slope min " + fmt(c.min_slope) + ", |Psi'''|/|Psi'| max " +
             fmt(c.max_third_ratio) + " (tol 10), partition sum err " +
             fmt(sum_err) + " (tol 1e-12)");
}

void criterion11_determinism(const std::string& outdir) {
  RunConfig c;
  c.grid.n = 4097;
  c.initial.kind = "perturbed";
  c.initial.amplitude = 0.05;
  c.initial.seed = 1;
  c.step.t_end = 10.0;
  c.out_dir = outdir + "/det_a";
  RunOutput a = run(c);
  c.out_dir = outdir + "/det_b";
  RunOutput b = run(c);
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  std::string fa = slurp(a.timeseries_path), fb = slurp(b.timeseries_path);
  bool pass = a.ok && b.ok && !fa.empty() && fa == fb;
  report("C11 determinism", pass,
         "re-run time series " + std::string(pass ? "bit-identical" : "DIFFERS") +
             " (" + std::to_string(fa.size()) + " bytes)");
}

}  // namespace

int main(int argc, char** argv) {
  std::string outdir = "acceptance_out";
  for (int i = 1; i + 1 < argc; ++i)
    if (std::strcmp(argv[i], "--out") == 0) outdir = argv[i + 1];
  std::filesystem::create_directories(outdir);

  auto t0 = std::chrono::steady_clock::now();
  Runs runs;
  criterion1_closed_form();
  criterion2_kernel_oracle();
  criterion5_identity_fuzz();
  criterion3_conservation(runs);
  criterion4_sign_and_slope(runs);
  criterion7_scaling(runs);
  criterion10_train(runs);
  criterion8_virial(runs);
  criterion9_weights(runs);
  criterion6_key_inequality(runs);
  criterion11_determinism(outdir);

  // keep the spec's numbering in the printed order summary
  int passed = 0;
  for (const auto& r : g_results) passed += r.pass ? 1 : 0;
  double wall = std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  std::printf("---\n%d/%zu criteria passed in %.0f s\n", passed,
              g_results.size(), wall);

  std::ofstream sj(outdir + "/acceptance_summary.json");
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : g_results)
    j.push_back({{"name", r.name}, {"pass", r.pass}, {"detail", r.detail}});
  sj << j.dump(2) << "\n";
  return passed == static_cast<int>(g_results.size()) ? 0 : 1;
}
