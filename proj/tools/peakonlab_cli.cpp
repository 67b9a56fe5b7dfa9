// Command-line driver: single runs, identity fuzzing, stability sweeps,
// train experiments, and weight certification. Exit code 0 iff every
// enabled assertion passes.

#include <CLI11.hpp>

#include "peakonlab/experiment.hpp"

using namespace peakonlab;

namespace {

struct CommonFlags {
  std::string out;
  std::int64_t seed = -1;
  bool quiet = false;
};

RunConfig load(const std::string& path, const CommonFlags& f) {
  RunConfig c = parse_config(path);
  if (!f.out.empty()) c.out_dir = f.out;
  if (f.seed >= 0) c.initial.seed = static_cast<std::uint64_t>(f.seed);
  return c;
}

void say(const CommonFlags& f, const std::string& msg) {
  if (!f.quiet) std::printf("%s\n", msg.c_str());
}

int run_simulate(const std::string& cfg_path, const CommonFlags& f) {
  RunConfig c = load(cfg_path, f);
  RunOutput out = run(c);
  say(f, "time series: " + out.timeseries_path);
  if (!out.ok) {
    say(f, "run failed: " + out.failure);
    return 1;
  }
  say(f, "drift E_u = " + out.summary["drift"]["E_u"].dump() +
             ", rows = " + out.summary["rows"].dump());
  return 0;
}

int run_identities(const std::string& cfg_path, const CommonFlags& f) {
  RunConfig c = load(cfg_path, f);
  std::filesystem::create_directories(c.out_dir);
  Grid g = make_grid(c.grid.x_left, c.grid.x_right, c.grid.n);

  const int n_states = 100, n_xis = 100;
  const double tol_pointwise = 1e-6, tol_split = 5e-3;
  std::ofstream csv(c.out_dir + "/identity_residuals.csv");
  csv << "state,xi,residual_u,residual_v\n";
  double worst_pw = 0.0, worst_g = 0.0, worst_h = 0.0;
  detail::UniformSource xi_rng(c.initial.seed ^ 0x9e3779b97f4a7c15ull);
  for (int si = 0; si < n_states; ++si) {
    State s = random_cone_state(g, c.initial.seed + si);
    for (int xi_i = 0; xi_i < n_xis; ++xi_i) {
      double xi = xi_rng.next(-20.0, 20.0);
      PointwiseIdentityResidual r =
          pointwise_energy_identity(s, 1.0, 2.0, xi);
      csv << si << ',' << io_detail::fmt17(xi) << ','
          << io_detail::fmt17(r.residual_u) << ','
          << io_detail::fmt17(r.residual_v) << "\n";
      worst_pw = std::max({worst_pw, r.residual_u, r.residual_v});
    }
    IdentityCheck ig = identity_g1g2(s);
    IdentityCheck ih = identity_h(s);
    worst_g = std::max(worst_g, ig.residual() / (1.0 + std::abs(ig.rhs)));
    worst_h = std::max(worst_h, ih.residual() / (1.0 + std::abs(ih.rhs)));
  }
  json summary = {{"states", n_states},
                  {"xis_per_state", n_xis},
                  {"max_pointwise_residual", worst_pw},
                  {"max_g1g2_relative_residual", worst_g},
                  {"max_h_relative_residual", worst_h},
                  {"tol_pointwise", tol_pointwise},
                  {"tol_split", tol_split}};
  bool pass = worst_pw <= tol_pointwise && worst_g <= tol_split &&
              worst_h <= tol_split;
  summary["pass"] = pass;
  std::ofstream sj(c.out_dir + "/summary.json");
  sj << summary.dump(2) << "\n";
  say(f, "max pointwise residual " + std::to_string(worst_pw) +
             ", max split residual " +
             std::to_string(std::max(worst_g, worst_h)));
  return pass ? 0 : 1;
}

int run_stability_sweep(const std::string& cfg_path, const CommonFlags& f) {
  RunConfig c = load(cfg_path, f);
  c.diagnostics.orbital = true;
  const std::vector<double> deltas = {0.02, 0.04, 0.08};
  auto outs = sweep(c, "delta", deltas);

  json ladder = json::array();
  std::vector<double> sup_dist, sup_ugap;
  bool all_ok = true;
  for (size_t i = 0; i < outs.size(); ++i) {
    if (!outs[i].ok) {
      all_ok = false;
      continue;
    }
    double sd = 0.0, su = 0.0;
    // distances are streamed in the CSV; recompute from the records we hold
    for (size_t k = 0; k < outs[i].trajectory.states.size(); ++k) {
      const State& s = outs[i].trajectory.states[k];
      OrbitalDistance od =
          orbital_distance(s, c.diagnostics.target_a, c.diagnostics.target_b);
      sd = std::max(sd, od.total());
      const FunctionalRecord& r = outs[i].trajectory.records[k];
      su = std::max(su, std::abs(pw_value(s.u, r.xi) - c.diagnostics.target_a));
    }
    sup_dist.push_back(sd);
    sup_ugap.push_back(su);
    ladder.push_back({{"delta", deltas[i]},
                      {"sup_dist", sd},
                      {"sup_ugap", su},
                      {"ratio_quarter", sd / std::pow(deltas[i], 0.25)},
                      {"ratio_half", su / std::sqrt(deltas[i])}});
  }
  bool monotone = sup_dist.size() == 3 && sup_dist[0] <= sup_dist[1] &&
                  sup_dist[1] <= sup_dist[2];
  double rq_min = 1e300, rq_max = 0.0;
  for (size_t i = 0; i < sup_dist.size(); ++i) {
    double r = sup_dist[i] / std::pow(deltas[i], 0.25);
    rq_min = std::min(rq_min, r);
    rq_max = std::max(rq_max, r);
  }
  bool scaling = sup_dist.size() == 3 && rq_max / rq_min < 3.0;
  json summary = {{"ladder", ladder},
                  {"monotone", monotone},
                  {"quarter_ratio_spread", rq_max / rq_min},
                  {"pass", all_ok && monotone && scaling}};
  std::filesystem::create_directories(c.out_dir);
  std::ofstream sj(c.out_dir + "/sweep_summary.json");
  sj << summary.dump(2) << "\n";
  say(f, "delta ladder monotone: " + std::string(monotone ? "yes" : "no") +
             ", quarter-ratio spread " + std::to_string(rq_max / rq_min));
  return summary["pass"].get<bool>() ? 0 : 1;
}

int run_train(const std::string& cfg_path, const CommonFlags& f) {
  RunConfig c = load(cfg_path, f);
  c.diagnostics.train = true;
  if (c.initial.peakons.empty()) {
    say(f, "train-experiment: config has no initial.peakons");
    return 2;
  }
  RunOutput out = run(c);
  if (!out.ok) {
    say(f, "train run failed: " + out.failure);
    return 1;
  }
  const json& jt = out.summary["train"];
  bool pass = true;
  double tol_scale =
      std::min(1.0, c.initial.peakons[0].a * c.initial.peakons[0].a +
                        c.initial.peakons[0].b * c.initial.peakons[0].b);
  pass &= jt["max_modulation_residual"].get<double>() <= 1e-8 * tol_scale;
  for (size_t i = 0; i < c.initial.peakons.size(); ++i) {
    double ci = c.initial.peakons[i].speed();
    pass &= std::abs(jt["fitted_speeds"][i].get<double>() - ci) <= 0.15;
  }
  pass &= jt["min_separation_slack"].get<double>() >= -1.0;
  for (const auto& v : jt["max_J_increase_u"]) pass &= v.get<double>() <= 1e-2;
  for (const auto& v : jt["max_J_increase_v"]) pass &= v.get<double>() <= 1e-2;
  for (const auto& v : jt["max_J_increase_uv"]) pass &= v.get<double>() <= 1e-2;
  pass &= jt["worst_local_inequality"].get<double>() <= 0.1;
  say(f, "train summary: " + jt.dump());
  return pass ? 0 : 1;
}

int run_check_weights(double K, const CommonFlags& f) {
  WeightCertificate c = certify_weight();
  say(f, "min slope " + std::to_string(c.min_slope) + ", max |Psi'''|/|Psi'| " +
             std::to_string(c.max_third_ratio) + ", seam gap " +
             std::to_string(c.seam_gap));
  if (!c.pass) return 1;
  try {
    WeightFamily wf = build_weight(K);
    say(f, "Psi_K(-2K) = " + std::to_string(wf.psi(-2.0 * K)) +
               " (expect e^-2), Psi_K(2K) = " + std::to_string(wf.psi(2.0 * K)) +
               " (expect 1 - e^-2)");
  } catch (const std::exception& e) {
    say(f, std::string("build_weight: ") + e.what());
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-component peakon laboratory"};
  app.require_subcommand(1);
  CommonFlags flags;
  app.add_option("--out", flags.out, "override the output directory");
  app.add_option("--seed", flags.seed, "override the config seed");
  app.add_flag("--quiet", flags.quiet, "suppress progress output");

  std::string cfg;
  double K = 4.0;
  auto* sim = app.add_subcommand("simulate", "run one configured simulation");
  sim->add_option("config", cfg, "config file")->required();
  auto* ver = app.add_subcommand("verify-identities",
                                 "fuzz the pointwise and split identities");
  ver->add_option("config", cfg, "config file")->required();
  auto* swp = app.add_subcommand("stability-sweep",
                                 "perturbation ladder with scaling fits");
  swp->add_option("config", cfg, "config file")->required();
  auto* trn = app.add_subcommand("train-experiment",
                                 "two-bump train run with modulation");
  trn->add_option("config", cfg, "config file")->required();
  auto* chk = app.add_subcommand("check-weights", "certify the cutoff family");
  chk->add_option("K", K, "weight scale")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return run_simulate(cfg, flags);
    if (ver->parsed()) return run_identities(cfg, flags);
    if (swp->parsed()) return run_stability_sweep(cfg, flags);
    if (trn->parsed()) return run_train(cfg, flags);
    if (chk->parsed()) return run_check_weights(K, flags);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
