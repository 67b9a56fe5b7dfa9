#include <catch2/catch_amalgamated.hpp>

#include "peakonlab/functionals.hpp"
#include "peakonlab/profiles.hpp"

using namespace peakonlab;

TEST_CASE("closed-form peakon functionals across amplitude pairs") {
  Grid g = make_grid(-40.0, 40.0, 8193);
  struct Case {
    double a, b;
  };
  for (Case c : {Case{1.0, 1.0}, Case{1.0, 2.0}, Case{2.0, 3.0}}) {
    PeakonSpec spec{c.a, c.b, 0.3};
    State s = exact_peakon_pair(spec, g);
    auto [ux, vx] = exact_peakon_derivatives(spec, g);
    double Eu = energy_with(s.u, ux);
    double Ev = energy_with(s.v, vx);
    double H = cross_H_with(s.u, ux, s.v, vx);
    double F = quartic_F_with(s.u, ux, s.v, vx);
    CHECK(std::abs(Eu - 2 * c.a * c.a) / (2 * c.a * c.a) <= 2e-3);
    CHECK(std::abs(Ev - 2 * c.b * c.b) / (2 * c.b * c.b) <= 2e-3);
    CHECK(std::abs(H - 2 * c.a * c.b) / (2 * c.a * c.b) <= 2e-3);
    double F0 = 4.0 / 3.0 * c.a * c.a * c.b * c.b;
    CHECK(std::abs(F - F0) / F0 <= 5e-3);
  }
}

TEST_CASE("zero state has zero functionals") {
  Grid g = make_grid(-40.0, 40.0, 257);
  State z;
  z.u = Field(g);
  z.v = Field(g);
  CHECK(energy_u(z) == 0.0);
  CHECK(cross_H(z) == 0.0);
  CHECK(quartic_F(z) == 0.0);
  CHECK(cubic_E0(z) == 0.0);
}

TEST_CASE("symmetric states reduce the functionals to the scalar case") {
  Grid g = make_grid(-40.0, 40.0, 2049);
  State s = mollified_peakon_pair({1.3, 1.3, 0.5}, {0.25}, g);
  CHECK(cross_H(s) == Catch::Approx(energy_u(s)).epsilon(1e-14));

  // F[u,u] has the same integrand as the scalar quartic invariant
  Field ux = derivative(s.u);
  Field nov(g);
  for (int k = 0; k < g.n; ++k) {
    double U = s.u.v[k], Ux = ux.v[k];
    nov.v[k] = U * U * U * U + 2.0 * U * U * Ux * Ux -
               Ux * Ux * Ux * Ux / 3.0;
  }
  CHECK(quartic_F(s) == Catch::Approx(integrate(nov)).epsilon(1e-13));
}

TEST_CASE("refined-grid quadrature agrees on smooth states") {
  State coarse = mollified_peakon_pair({1.0, 1.0, 0.0}, {0.2},
                                       make_grid(-40.0, 40.0, 4097));
  State fine = mollified_peakon_pair({1.0, 1.0, 0.0}, {0.2},
                                     make_grid(-40.0, 40.0, 16385));
  CHECK(std::abs(energy_u(coarse) - energy_u(fine)) / energy_u(fine) <= 1e-4);
  CHECK(std::abs(quartic_F(coarse) - quartic_F(fine)) /
            std::abs(quartic_F(fine)) <=
        2e-4);
}

TEST_CASE("cubic_E0 on flat and mollified states") {
  Grid g = make_grid(-40.0, 40.0, 2049);
  State flat;
  flat.u = Field(g, 1.0);
  flat.v = Field(g, 1.0);
  CHECK(std::abs(cubic_E0(flat) - 80.0) <= 0.01);

  State s = mollified_peakon_pair({1.0, 2.0, 0.0}, {0.2}, g);
  CHECK(cubic_E0(s) > 0.0);
}

TEST_CASE("weight certification") {
  WeightCertificate c = certify_weight();
  CHECK(c.pass);
  CHECK(c.min_slope > 0.0);
  CHECK(c.max_third_ratio <= 10.0);
  CHECK(c.max_third_ratio >= 9.0);  // the frozen blend sits just inside
  CHECK(c.seam_gap <= 1e-12);

  for (double K : {4.0, 8.0, 5.0}) {
    WeightFamily wf = build_weight(K);
    CHECK(wf.psi(-2.0 * K) == Catch::Approx(std::exp(-2.0)).margin(1e-15));
    CHECK(wf.psi(2.0 * K) ==
          Catch::Approx(1.0 - std::exp(-2.0)).margin(1e-15));
    CHECK(wf.psi(-K) == Catch::Approx(std::exp(-1.0)).margin(1e-13));
    CHECK(wf.psi(K) == Catch::Approx(1.0 - std::exp(-1.0)).margin(1e-13));
  }
  CHECK_THROWS_AS(build_weight(2.0), std::invalid_argument);
}

TEST_CASE("weight is strictly increasing across the seams") {
  WeightFamily wf = make_weight(1.0);
  double prev = -1.0;
  for (int i = 0; i <= 4000; ++i) {
    double x = -3.0 + 6.0 * i / 4000.0;
    double val = wf.psi(x);
    CHECK(val > prev);
    CHECK(val > 0.0);
    CHECK(val < 1.0);
    prev = val;
  }
}

TEST_CASE("partition of unity telescopes") {
  Grid g = make_grid(-40.0, 40.0, 4097);
  WeightFamily wf = make_weight(0.625);

  auto phi1 = partition_phi(wf, {}, g);
  REQUIRE(phi1.size() == 1);
  for (double x : phi1[0].v) CHECK(x == 1.0);

  auto phi = partition_phi(wf, {-12.5, 5.0}, g);
  REQUIRE(phi.size() == 3);
  for (int k = 0; k < g.n; ++k) {
    double sum = 0.0;
    for (const auto& p : phi) {
      CHECK(p.v[k] >= 0.0);
      CHECK(p.v[k] <= 1.0);
      sum += p.v[k];
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
  CHECK_THROWS_AS(partition_phi(wf, {5.0, -12.5}, g), std::invalid_argument);
}

TEST_CASE("partition is flat near each bump at the train geometry") {
  // |1 - Phi_i| <= 4 e^{-L/(8K)} on [x_i - L/4, x_i + L/4]
  Grid g = make_grid(-40.0, 40.0, 4097);
  double L = 25.0, K = std::sqrt(L) / 8.0;
  WeightFamily wf = make_weight(K);
  std::vector<double> xt = {-25.0, 0.0};
  auto phi = partition_phi(wf, {0.5 * (xt[0] + xt[1])}, g);
  double bound = 4.0 * std::exp(-L / (8.0 * K));
  for (int i = 0; i < 2; ++i) {
    for (int k = 0; k < g.n; ++k) {
      double x = g.node(k);
      if (std::abs(x - xt[i]) <= L / 4.0)
        CHECK(std::abs(1.0 - phi[i].v[k]) <= bound);
    }
  }
}

TEST_CASE("localized functionals reduce to global ones for flat weight") {
  Grid g = make_grid(-40.0, 40.0, 2049);
  State s = mollified_peakon_pair({1.0, 2.0, 1.0}, {0.2}, g);
  std::vector<Field> flat{Field(g, 1.0)};
  auto loc = localized_functionals(s, flat);
  REQUIRE(loc.size() == 1);
  CHECK(loc[0].E_u == Catch::Approx(energy_u(s)).epsilon(1e-13));
  CHECK(loc[0].E_v == Catch::Approx(energy_v(s)).epsilon(1e-13));
  CHECK(loc[0].H == Catch::Approx(cross_H(s)).epsilon(1e-13));
  CHECK(loc[0].F == Catch::Approx(quartic_F(s)).epsilon(1e-13));

  State z;
  z.u = Field(g);
  z.v = Field(g);
  auto zl = localized_functionals(z, flat);
  CHECK(zl[0].E_u == 0.0);
  CHECK(zl[0].F == 0.0);
}

TEST_CASE("localized energies of a separated exact train") {
  Grid g = make_grid(-40.0, 40.0, 8193);
  TrainSpec ts;
  ts.peakons = {{1.0, 1.0, -25.0}, {2.0, 2.0, 0.0}};
  ts.L = 25.0;
  State s;
  s.u = Field(g);
  s.v = Field(g);
  for (int k = 0; k < g.n; ++k) {
    double x = g.node(k);
    for (const auto& p : ts.peakons) {
      s.u.v[k] += peakon_shape(p.a, p.x0, x);
      s.v.v[k] += peakon_shape(p.b, p.x0, x);
    }
  }
  WeightFamily wf = make_weight(std::sqrt(ts.L) / 8.0);
  auto phi = partition_phi(wf, {-12.5}, g);
  auto loc = localized_functionals(s, phi);
  // grid derivatives smear each crest; tolerance covers that plus the tails
  CHECK(std::abs(loc[0].E_u - 2.0) <= 0.05);
  CHECK(std::abs(loc[1].E_u - 8.0) <= 0.1);
}

TEST_CASE("right energies see the peakon only on the correct side") {
  Grid g = make_grid(-40.0, 40.0, 8193);
  WeightFamily wf = build_weight(4.0);
  State z;
  z.u = Field(g);
  z.v = Field(g);
  RightEnergies none = right_energy_J(z, 0.0, wf);
  CHECK(none.J_u == 0.0);
  CHECK(none.J_uv == 0.0);

  State s = exact_peakon_pair({1.0, 1.0, -30.0}, g);
  RightEnergies left = right_energy_J(s, 0.0, wf);
  CHECK(left.J_u <= 2.0 * std::exp(-5.0));

  State sr = exact_peakon_pair({1.0, 1.0, 30.0}, g);
  RightEnergies right = right_energy_J(sr, 0.0, wf);
  CHECK(right.J_u >= 2.0 * (1.0 - std::exp(-5.0)) - 0.02);

  // J + complementary part recovers the full energy exactly
  Field ux = derivative(sr.u);
  Field compl_(g);
  for (int k = 0; k < g.n; ++k)
    compl_.v[k] = (sr.u.v[k] * sr.u.v[k] + ux.v[k] * ux.v[k]) *
                  (1.0 - wf.psi(g.node(k) - 0.0));
  CHECK(right.J_u + integrate(compl_) ==
        Catch::Approx(energy_u(sr)).epsilon(1e-12));
}
