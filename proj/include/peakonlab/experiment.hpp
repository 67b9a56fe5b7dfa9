#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "peakonlab/evolution.hpp"
#include "peakonlab/stability.hpp"

namespace peakonlab {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct GridConfig {
  double x_left = -40.0;
  double x_right = 40.0;
  int n = 4097;
};

struct InitialConfig {
  std::string kind = "mollified";  // exact | mollified | train | perturbed
  double a = 1.0;
  double b = 1.0;
  double x0 = 0.0;
  double w = 0.2;
  std::vector<PeakonSpec> peakons;  // train / perturbed-train
  double L = 0.0;
  double amplitude = 0.0;  // perturbed
  std::uint64_t seed = 1;
};

struct DiagnosticsConfig {
  bool orbital = false;  // track distance to the (target_a, target_b) orbit
  double target_a = 1.0;
  double target_b = 1.0;
  bool train = false;  // modulation chain + localized functionals
  double K = 0.0;      // 0 = sqrt(L)/8
  double fit_start = 2.0;
};

struct RunConfig {
  GridConfig grid;
  InitialConfig initial;
  StepControl step;
  DiagnosticsConfig diagnostics;
  std::string out_dir = "out";
  bool write_snapshots = false;
};

namespace cfg_detail {

inline void require_keys(const json& j, const std::string& where,
                         std::initializer_list<const char*> allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed)
      if (it.key() == a) ok = true;
    if (!ok)
      throw std::invalid_argument("config: unknown key '" + where + "." +
                                  it.key() + "'");
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

inline const char* scheme_name(TransportScheme s) {
  switch (s) {
    case TransportScheme::central: return "central";
    case TransportScheme::upwind_first: return "upwind1";
    case TransportScheme::upwind_second: return "upwind2";
    case TransportScheme::upwind_third: return "upwind3";
  }
  return "central";
}

inline TransportScheme scheme_from(const std::string& s) {
  if (s == "central") return TransportScheme::central;
  if (s == "upwind1") return TransportScheme::upwind_first;
  if (s == "upwind2") return TransportScheme::upwind_second;
  if (s == "upwind3") return TransportScheme::upwind_third;
  throw std::invalid_argument("config: unknown scheme '" + s + "'");
}

}  // namespace cfg_detail

inline RunConfig config_from_json(const json& j) {
  using namespace cfg_detail;
  require_keys(j, "", {"grid", "initial", "step", "diagnostics", "out_dir",
                       "write_snapshots"});
  RunConfig c;
  if (j.contains("grid")) {
    const json& g = j.at("grid");
    require_keys(g, "grid", {"x_left", "x_right", "n"});
    c.grid.x_left = get_or(g, "x_left", c.grid.x_left);
    c.grid.x_right = get_or(g, "x_right", c.grid.x_right);
    c.grid.n = get_or(g, "n", c.grid.n);
  }
  if (j.contains("initial")) {
    const json& i = j.at("initial");
    require_keys(i, "initial",
                 {"kind", "a", "b", "x0", "w", "peakons", "L", "amplitude",
                  "seed"});
    c.initial.kind = get_or<std::string>(i, "kind", c.initial.kind);
    c.initial.a = get_or(i, "a", c.initial.a);
    c.initial.b = get_or(i, "b", c.initial.b);
    c.initial.x0 = get_or(i, "x0", c.initial.x0);
    c.initial.w = get_or(i, "w", c.initial.w);
    c.initial.L = get_or(i, "L", c.initial.L);
    c.initial.amplitude = get_or(i, "amplitude", c.initial.amplitude);
    c.initial.seed = get_or<std::uint64_t>(i, "seed", c.initial.seed);
    if (i.contains("peakons")) {
      for (const json& p : i.at("peakons")) {
        require_keys(p, "initial.peakons[]", {"a", "b", "x0"});
        c.initial.peakons.push_back(
            {p.at("a").get<double>(), p.at("b").get<double>(),
             p.at("x0").get<double>()});
      }
    }
  }
  if (j.contains("step")) {
    const json& s = j.at("step");
    require_keys(s, "step", {"cfl", "dt_max", "t_end", "record_every",
                             "scheme"});
    c.step.cfl = get_or(s, "cfl", c.step.cfl);
    c.step.dt_max = get_or(s, "dt_max", c.step.dt_max);
    c.step.t_end = get_or(s, "t_end", c.step.t_end);
    c.step.record_every = get_or(s, "record_every", c.step.record_every);
    c.step.scheme =
        scheme_from(get_or<std::string>(s, "scheme", "central"));
  }
  if (j.contains("diagnostics")) {
    const json& d = j.at("diagnostics");
    require_keys(d, "diagnostics",
                 {"orbital", "target_a", "target_b", "train", "K",
                  "fit_start"});
    c.diagnostics.orbital = get_or(d, "orbital", c.diagnostics.orbital);
    c.diagnostics.target_a = get_or(d, "target_a", c.diagnostics.target_a);
    c.diagnostics.target_b = get_or(d, "target_b", c.diagnostics.target_b);
    c.diagnostics.train = get_or(d, "train", c.diagnostics.train);
    c.diagnostics.K = get_or(d, "K", c.diagnostics.K);
    c.diagnostics.fit_start = get_or(d, "fit_start", c.diagnostics.fit_start);
  }
  c.out_dir = get_or<std::string>(j, "out_dir", c.out_dir);
  c.write_snapshots = get_or(j, "write_snapshots", c.write_snapshots);

  // cross-field validation happens where the objects are built, but the
  // cheap ordering checks belong here so errors carry the field name
  if (c.initial.kind != "exact" && c.initial.kind != "mollified" &&
      c.initial.kind != "train" && c.initial.kind != "perturbed")
    throw std::invalid_argument("config: initial.kind '" + c.initial.kind +
                                "' is not one of exact|mollified|train|perturbed");
  for (size_t i = 1; i < c.initial.peakons.size(); ++i)
    if (!(c.initial.peakons[i].a > c.initial.peakons[i - 1].a))
      throw std::invalid_argument(
          "config: initial.peakons amplitudes must increase (entry " +
          std::to_string(i) + ")");
  validate(c.step);
  return c;
}

inline json config_to_json(const RunConfig& c) {
  json j;
  j["grid"] = {{"x_left", c.grid.x_left},
               {"x_right", c.grid.x_right},
               {"n", c.grid.n}};
  json ini = {{"kind", c.initial.kind}, {"a", c.initial.a},
              {"b", c.initial.b},       {"x0", c.initial.x0},
              {"w", c.initial.w},       {"L", c.initial.L},
              {"amplitude", c.initial.amplitude},
              {"seed", c.initial.seed}};
  if (!c.initial.peakons.empty()) {
    json ps = json::array();
    for (const auto& p : c.initial.peakons)
      ps.push_back({{"a", p.a}, {"b", p.b}, {"x0", p.x0}});
    ini["peakons"] = ps;
  }
  j["initial"] = ini;
  j["step"] = {{"cfl", c.step.cfl},
               {"dt_max", c.step.dt_max},
               {"t_end", c.step.t_end},
               {"record_every", c.step.record_every},
               {"scheme", cfg_detail::scheme_name(c.step.scheme)}};
  j["diagnostics"] = {{"orbital", c.diagnostics.orbital},
                      {"target_a", c.diagnostics.target_a},
                      {"target_b", c.diagnostics.target_b},
                      {"train", c.diagnostics.train},
                      {"K", c.diagnostics.K},
                      {"fit_start", c.diagnostics.fit_start}};
  j["out_dir"] = c.out_dir;
  j["write_snapshots"] = c.write_snapshots;
  return j;
}

inline RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config file not found: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config parse error in " + path + ": " +
                                e.what());
  }
  return config_from_json(j);
}

inline std::uint64_t config_hash(const RunConfig& c) {
  std::string s = config_to_json(c).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

namespace io_detail {

inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

}  // namespace io_detail

/// Builds the initial data requested by the config.
inline State build_initial(const RunConfig& c, const Grid& g) {
  const InitialConfig& i = c.initial;
  auto base = [&]() -> State {
    if (!i.peakons.empty()) {
      TrainSpec ts;
      ts.peakons = i.peakons;
      ts.L = i.L;
      return train(ts, {i.w}, g);
    }
    return mollified_peakon_pair({i.a, i.b, i.x0}, {i.w}, g);
  };
  if (i.kind == "exact") return exact_peakon_pair({i.a, i.b, i.x0}, g);
  if (i.kind == "mollified") return mollified_peakon_pair({i.a, i.b, i.x0}, {i.w}, g);
  if (i.kind == "train") {
    TrainSpec ts;
    ts.peakons = i.peakons;
    ts.L = i.L;
    return train(ts, {i.w}, g);
  }
  return perturb_momentum(base(), i.amplitude, i.seed);
}

struct RunOutput {
  RunConfig config;
  bool ok = true;
  std::string failure;
  double failure_time = 0.0;
  Trajectory trajectory;
  json summary;
  std::string timeseries_path;
};

namespace run_detail {

struct MonitorRow {
  double min_m = 0.0, min_n = 0.0;
  double slope_excess = 0.0;  // max over nodes of |u_x| - u, kernel route
  double key_ineq = 0.0;
};

inline MonitorRow monitors(const State& s, KernelWorkspace& ws) {
  MonitorRow r;
  Field m = helmholtz_forward(s.u);
  Field n = helmholtz_forward(s.v);
  r.min_m = *std::min_element(m.v.begin(), m.v.end());
  r.min_n = *std::min_element(n.v.begin(), n.v.end());
  Field urec = convolve_P(m, ws);
  Field uxk = convolve_Px(m, ws);
  Field vrec = convolve_P(n, ws);
  Field vxk = convolve_Px(n, ws);
  double ex = -std::numeric_limits<double>::max();
  for (int k = 0; k < s.u.size(); ++k) {
    ex = std::max(ex, std::abs(uxk.v[k]) - urec.v[k]);
    ex = std::max(ex, std::abs(vxk.v[k]) - vrec.v[k]);
  }
  r.slope_excess = ex;
  r.key_ineq = key_inequality(s);
  return r;
}

inline const char* csv_header(bool orbital) {
  return orbital
             ? "t,E_u,E_v,H,F,E0,xi,M,min_m,min_n,slope_excess,key_ineq,"
               "dist_u,dist_v,dist_total,best_shift,u_at_xi,v_at_xi"
             : "t,E_u,E_v,H,F,E0,xi,M,min_m,min_n,slope_excess,key_ineq";
}

}  // namespace run_detail

/// Executes the configured pipeline: initial data, time stepping with the
/// time-series streamed to disk, diagnostics, and a summary document that is
/// written even when the run fails.
inline RunOutput run(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  RunOutput out;
  out.config = cfg;
  auto t_wall0 = std::chrono::steady_clock::now();

  fs::create_directories(cfg.out_dir);
  std::string csv_path = cfg.out_dir + "/timeseries.csv";
  std::ofstream csv(csv_path);
  csv << run_detail::csv_header(cfg.diagnostics.orbital) << "\n";
  out.timeseries_path = csv_path;

  Grid g = make_grid(cfg.grid.x_left, cfg.grid.x_right, cfg.grid.n);
  KernelWorkspace ws(g);
  json assertions = json::array();
  int snap_counter = 0;

  auto emit = [&](const State& s) {
    FunctionalRecord fr = functional_record(s);
    run_detail::MonitorRow mr = run_detail::monitors(s, ws);
    out.trajectory.states.push_back(s);
    out.trajectory.records.push_back(fr);
    using io_detail::fmt17;
    csv << fmt17(fr.t) << ',' << fmt17(fr.E_u) << ',' << fmt17(fr.E_v) << ','
        << fmt17(fr.H) << ',' << fmt17(fr.F) << ',' << fmt17(fr.E0) << ','
        << fmt17(fr.xi) << ',' << fmt17(fr.M) << ',' << fmt17(mr.min_m) << ','
        << fmt17(mr.min_n) << ',' << fmt17(mr.slope_excess) << ','
        << fmt17(mr.key_ineq);
    if (cfg.diagnostics.orbital) {
      OrbitalDistance od =
          orbital_distance(s, cfg.diagnostics.target_a, cfg.diagnostics.target_b);
      double uxi = pw_value(s.u, fr.xi);
      double vxi = pw_value(s.v, fr.xi);
      csv << ',' << fmt17(od.dist_u) << ',' << fmt17(od.dist_v) << ','
          << fmt17(od.total()) << ',' << fmt17(od.best_shift) << ','
          << fmt17(uxi) << ',' << fmt17(vxi);
    }
    csv << '\n';
    csv.flush();
    if (cfg.write_snapshots) {
      char name[32];
      std::snprintf(name, sizeof(name), "snap_%05d", snap_counter);
      std::ofstream bin(cfg.out_dir + "/" + name + ".bin", std::ios::binary);
      bin.write(reinterpret_cast<const char*>(s.u.v.data()),
                static_cast<std::streamsize>(s.u.v.size() * sizeof(double)));
      bin.write(reinterpret_cast<const char*>(s.v.v.data()),
                static_cast<std::streamsize>(s.v.v.size() * sizeof(double)));
      json side = {{"t", s.t},
                   {"grid",
                    {{"x_left", g.x_left}, {"x_right", g.x_right}, {"n", g.n}}},
                   {"fields", {"u", "v"}},
                   {"layout", "f64 u[n] then f64 v[n]"}};
      std::ofstream sj(cfg.out_dir + "/" + name + ".json");
      sj << side.dump(2) << "\n";
    }
    ++snap_counter;
  };

  try {
    State s = build_initial(cfg, g);
    s.t = 0.0;
    emit(s);
    long step = 0;
    while (s.t < cfg.step.t_end - 1e-12) {
      double dt = std::min(cfl_dt(s, cfg.step), cfg.step.t_end - s.t);
      s = step_rk4(s, dt, ws, cfg.step.scheme);
      ++step;
      if (step % cfg.step.record_every == 0 || s.t >= cfg.step.t_end - 1e-12)
        emit(s);
    }
  } catch (const BlowupError& e) {
    out.ok = false;
    out.failure = e.what();
    out.failure_time = e.t;
  } catch (const std::exception& e) {
    out.ok = false;
    out.failure = e.what();
    out.failure_time =
        out.trajectory.states.empty() ? 0.0 : out.trajectory.states.back().t;
  }

  json summary;
  summary["config"] = config_to_json(cfg);
  summary["config_hash"] = config_hash(cfg);
  summary["rows"] = out.trajectory.records.size();
  summary["ok"] = out.ok;
  if (!out.ok) {
    summary["failure"] = out.failure;
    summary["failure_time"] = out.failure_time;
  }

  if (!out.trajectory.records.empty()) {
    const FunctionalRecord& r0 = out.trajectory.records.front();
    double dEu = 0, dEv = 0, dH = 0, dF = 0, dE0 = 0;
    for (const auto& r : out.trajectory.records) {
      dEu = std::max(dEu, std::abs(r.E_u - r0.E_u) / std::max(1e-300, std::abs(r0.E_u)));
      dEv = std::max(dEv, std::abs(r.E_v - r0.E_v) / std::max(1e-300, std::abs(r0.E_v)));
      dH = std::max(dH, std::abs(r.H - r0.H) / std::max(1e-300, std::abs(r0.H)));
      dF = std::max(dF, std::abs(r.F - r0.F) / std::max(1e-300, std::abs(r0.F)));
      dE0 = std::max(dE0, std::abs(r.E0 - r0.E0) / std::max(1e-300, std::abs(r0.E0)));
    }
    summary["drift"] = {{"E_u", dEu}, {"E_v", dEv}, {"H", dH}, {"F", dF},
                        {"E0", dE0}};
  }

  if (out.ok && cfg.diagnostics.train && !cfg.initial.peakons.empty()) {
    TrainSpec ts;
    ts.peakons = cfg.initial.peakons;
    ts.L = cfg.initial.L;
    double K = cfg.diagnostics.K > 0.0 ? cfg.diagnostics.K
                                       : std::sqrt(ts.L) / 8.0;
    WeightFamily wf = make_weight(K);
    try {
      TrainDiagnostics td =
          train_diagnostics(out.trajectory, ts, wf, cfg.diagnostics.fit_start);
      MonotonicityReport mono = monotonicity_report(td, ts, wf);
      json jt;
      jt["K"] = K;
      jt["max_modulation_residual"] = td.max_modulation_residual;
      jt["fitted_speeds"] = td.fitted_speeds;
      jt["worst_local_inequality"] = td.worst_local_inequality;
      jt["min_separation_slack"] = td.min_separation_slack;
      jt["max_J_increase_u"] = mono.max_increase_u;
      jt["max_J_increase_v"] = mono.max_increase_v;
      jt["max_J_increase_uv"] = mono.max_increase_uv;
      summary["train"] = jt;

      std::ofstream tcsv(cfg.out_dir + "/train.csv");
      tcsv << "t";
      const int N = static_cast<int>(ts.peakons.size());
      for (int i = 1; i <= N; ++i) tcsv << ",x_tilde_" << i;
      for (int i = 2; i <= N; ++i) tcsv << ",y_" << i;
      for (int i = 1; i <= N; ++i) tcsv << ",M_" << i;
      for (int i = 1; i <= N; ++i) tcsv << ",loc_ineq_" << i;
      for (int i = 2; i <= N; ++i)
        tcsv << ",J_u_" << i << ",J_v_" << i << ",J_uv_" << i;
      tcsv << "\n";
      using io_detail::fmt17;
      for (const auto& tg : td.geometry) {
        tcsv << fmt17(tg.t);
        for (double x : tg.x_tilde) tcsv << ',' << fmt17(x);
        for (double y : tg.y) tcsv << ',' << fmt17(y);
        for (double M : tg.M) tcsv << ',' << fmt17(M);
        for (double q : tg.local_inequality) tcsv << ',' << fmt17(q);
        for (const auto& J : tg.J)
          tcsv << ',' << fmt17(J.J_u) << ',' << fmt17(J.J_v) << ','
               << fmt17(J.J_uv);
        tcsv << '\n';
      }
    } catch (const std::exception& e) {
      summary["train"] = {{"error", e.what()}};
      out.ok = false;
      out.failure = e.what();
    }
  }

  auto t_wall1 = std::chrono::steady_clock::now();
  summary["wall_seconds"] =
      std::chrono::duration<double>(t_wall1 - t_wall0).count();
  out.summary = summary;
  std::ofstream sj(cfg.out_dir + "/summary.json");
  sj << summary.dump(2) << "\n";
  return out;
}

/// Independent runs over the axis values; a failure in one member never
/// corrupts another member's output.
inline std::vector<RunOutput> sweep(const RunConfig& base,
                                    const std::string& axis,
                                    const std::vector<double>& values) {
  std::vector<RunOutput> out;
  int idx = 0;
  for (double v : values) {
    RunConfig c = base;
    char sub[64];
    std::snprintf(sub, sizeof(sub), "%s/sweep_%02d", base.out_dir.c_str(), idx);
    c.out_dir = sub;
    if (axis == "delta") {
      c.initial.kind = "perturbed";
      c.initial.amplitude = v;
    } else if (axis == "grid_n") {
      c.grid.n = static_cast<int>(v);
    } else if (axis == "seed") {
      c.initial.seed = static_cast<std::uint64_t>(v);
    } else {
      throw std::invalid_argument("sweep: unknown axis '" + axis + "'");
    }
    try {
      out.push_back(run(c));
    } catch (const std::exception& e) {
      RunOutput failed;
      failed.config = c;
      failed.ok = false;
      failed.failure = e.what();
      out.push_back(std::move(failed));
    }
    ++idx;
  }
  return out;
}

/// Seeded state in the nonnegative-momentum cone: a few momentum bumps per
/// component through the inverse Helmholtz operator. The fuzzing harness and
/// the acceptance suite draw their test states from this generator.
inline State random_cone_state(const Grid& g, std::uint64_t seed) {
  detail::UniformSource rng(seed);
  Field m(g), n(g);
  int bumps = 2 + static_cast<int>(rng.next(0.0, 3.0));
  for (int b = 0; b < bumps; ++b) {
    Field bm = momentum_bump(g, rng.next(-18.0, 18.0), rng.next(0.15, 0.5),
                             rng.next(0.3, 2.5));
    Field bn = momentum_bump(g, rng.next(-18.0, 18.0), rng.next(0.15, 0.5),
                             rng.next(0.3, 2.5));
    for (int k = 0; k < g.n; ++k) {
      m.v[k] += bm.v[k];
      n.v[k] += bn.v[k];
    }
  }
  KernelWorkspace ws(g);
  State s;
  s.u = convolve_P(m, ws);
  s.v = convolve_P(n, ws);
  return s;
}

}  // namespace peakonlab
