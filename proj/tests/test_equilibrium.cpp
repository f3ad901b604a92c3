#include <cmath>
#include <optional>

#include "doctest.h"
#include "oracles.hpp"
#include "rt/equilibrium.hpp"
#include "rt/errors.hpp"

using rt::EquilibriumOptions;
using rt::EquilibriumReduction;
using rt::Mat;
using rt::Vec;

namespace {

EquilibriumOptions tight() {
  EquilibriumOptions o;
  o.tol = 1e-13;
  return o;
}

void check_reduction_invariants(const EquilibriumReduction& red) {
  const auto& sys = red.system();
  const int nk = sys.n_totals();

  // Orthonormal kernel annihilating the reaction rows.
  CHECK((red.Q2().transpose() * red.Q2() - Mat::Identity(nk, nk))
            .cwiseAbs()
            .maxCoeff() < 1e-13);
  if (sys.n_reactions() > 0) {
    CHECK((sys.S() * red.Q2()).cwiseAbs().maxCoeff() < 1e-12);
    // b1 is a particular mass action solution: S b1 = logk.
    CHECK((sys.S() * red.b1() - sys.logk()).cwiseAbs().maxCoeff() < 1e-10);
  }
  CHECK((red.U() - red.Q2().transpose()).cwiseAbs().maxCoeff() == 0.0);

  // Triangular structure: immobile rows of U carry no mobile species, and
  // the conversion G maps tableau totals onto U rows exactly.
  if (sys.n_immobile_totals() > 0 && sys.n_mobile_species() > 0) {
    CHECK(red.U()
              .bottomLeftCorner(sys.n_immobile_totals(),
                                sys.n_mobile_species())
              .cwiseAbs()
              .maxCoeff() < 1e-13);
    CHECK(red.totals_map()
              .bottomLeftCorner(sys.n_immobile_totals(),
                                sys.n_mobile_totals())
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
  CHECK((red.totals_map() * sys.totals() - red.U()).cwiseAbs().maxCoeff() <
        1e-10);

  // to_reduced is exactly the linear map G.
  const Vec tau = Vec::LinSpaced(nk, 0.5, 2.0);
  CHECK((red.to_reduced(tau) - red.totals_map() * tau).cwiseAbs().maxCoeff() ==
        0.0);
}

}  // namespace

TEST_SUITE_BEGIN("equilibrium");

TEST_CASE("reductions satisfy the kernel and conversion identities") {
  check_reduction_invariants(EquilibriumReduction(oracle::sorption_system()));
  check_reduction_invariants(
      EquilibriumReduction(oracle::aqueous_pair_system()));
  check_reduction_invariants(EquilibriumReduction(oracle::momas_system()));
  check_reduction_invariants(EquilibriumReduction(oracle::valocchi_system()));
}

TEST_CASE("one-site sorption equilibrium matches the quadratic closed form") {
  const EquilibriumReduction red(oracle::sorption_system());
  const auto opts = tight();

  SUBCASE("the unit point") {
    Vec tau(2);
    tau << 2.0, 2.0;
    const auto st = rt::solve_equilibrium(tau, std::nullopt, red, opts);
    REQUIRE(st.converged);
    CHECK(st.residual_norm <= opts.tol);
    CHECK(st.xi(0) == doctest::Approx(1.0).epsilon(1e-11));
    CHECK(st.xi(1) == doctest::Approx(1.0).epsilon(1e-11));
    CHECK(st.xi(2) == doctest::Approx(1.0).epsilon(1e-11));
  }

  SUBCASE("generic totals against the closed form") {
    const double cases[][2] = {{0.5, 2.0}, {3.0, 0.25}, {1e-3, 2.0},
                               {7.0, 7.0}};
    for (const auto& c : cases) {
      Vec T(1), Tb(1);
      T << c[0];
      Tb << c[1];
      auto [cbar, st] = rt::psi_C(T, Tb, red, std::nullopt, opts);
      REQUIRE(st.converged);
      const double cs = oracle::sorbed_cs(c[0], c[1]);
      CHECK(cbar(0) == doctest::Approx(cs).epsilon(1e-10));
      CHECK(st.xi(2) == doctest::Approx(cs).epsilon(1e-10));
      CHECK(st.xi(0) == doctest::Approx(c[0] - cs).epsilon(1e-9));
      CHECK(st.xi(1) == doctest::Approx(c[1] - cs).epsilon(1e-9));

      const Mat d = rt::d_psi_C(st, red, opts);
      CHECK(d(0, 0) ==
            doctest::Approx(oracle::sorbed_cs_dT(c[0], c[1])).epsilon(1e-8));
    }
  }

  SUBCASE("derivative at the unit point is exactly one third") {
    Vec T(1), Tb(1);
    T << 2.0;
    Tb << 2.0;
    auto [cbar, st] = rt::psi_C(T, Tb, red, std::nullopt, opts);
    REQUIRE(st.converged);
    const Mat d = rt::d_psi_C(st, red, opts);
    CHECK(d(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-11));
  }
}

TEST_CASE("residual and jacobian definitions agree with finite differences") {
  const EquilibriumReduction red(oracle::valocchi_system());
  Vec tau(5);
  tau << 382.0, 360.0, 280.0, 161.0, 750.0;
  const Vec tau_red = red.to_reduced(tau);

  Vec y2 = Vec::Constant(5, 1.5);
  const auto F = [&](const Vec& y) { return rt::residual_H(y, tau_red, red); };
  const Mat J = rt::jacobian_H(y2, red);
  const Mat Jfd = oracle::fd_jacobian(F, y2, 5, 1e-5);
  CHECK((J - Jfd).cwiseAbs().maxCoeff() / J.cwiseAbs().maxCoeff() < 1e-6);

  // SPD whenever the clamp is inactive.
  Eigen::SelfAdjointEigenSolver<Mat> es(J);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("boundary-pinned column equilibria match the 60-digit solutions") {
  const EquilibriumReduction red(oracle::momas_system());
  const auto opts = tight();

  SUBCASE("leaching water") {
    Vec tau(5);
    tau << 0.0, -2.0, 0.0, 2.0, 1.0;
    const auto st = rt::solve_equilibrium(tau, std::nullopt, red, opts);
    REQUIRE(st.converged);
    using L = oracle::MomasLeach;
    CHECK(st.xi(oracle::kX2) == doctest::Approx(L::X2).epsilon(1e-9));
    CHECK(st.xi(oracle::kX4) == doctest::Approx(L::X4).epsilon(1e-9));
    CHECK(st.xi(oracle::kS) == doctest::Approx(L::S).epsilon(1e-9));
    CHECK(st.xi(oracle::kC1) == doctest::Approx(L::C1).epsilon(1e-8));
    CHECK(st.xi(oracle::kC3) == doctest::Approx(L::C3).epsilon(1e-9));
    CHECK(st.xi(oracle::kCS2) == doctest::Approx(L::CS2).epsilon(1e-9));
    // Species pinned by zero totals sit at numerical zero (bounded by the
    // residual tolerance), strictly positive.
    CHECK(st.xi(oracle::kX1) < 1e-12);
    CHECK(st.xi(oracle::kX3) < 1e-12);
    CHECK((st.xi.array() > 0.0).all());
    // Tableau-convention totals are recovered.
    CHECK((red.system().totals() * st.xi - tau).cwiseAbs().maxCoeff() < 1e-9);
  }

  SUBCASE("injected water") {
    Vec tau(5);
    tau << 0.3, 0.3, 0.3, 0.0, 1.0;
    const auto st = rt::solve_equilibrium(tau, std::nullopt, red, opts);
    REQUIRE(st.converged);
    using I = oracle::MomasInject;
    CHECK(st.xi(oracle::kX1) == doctest::Approx(I::X1).epsilon(1e-9));
    CHECK(st.xi(oracle::kX2) == doctest::Approx(I::X2).epsilon(1e-9));
    CHECK(st.xi(oracle::kX3) == doctest::Approx(I::X3).epsilon(1e-9));
    CHECK(st.xi(oracle::kS) == doctest::Approx(I::S).epsilon(1e-9));
    CHECK(st.xi(oracle::kC1) == doctest::Approx(I::C1).epsilon(1e-8));
    CHECK(st.xi(oracle::kC2) == doctest::Approx(I::C2).epsilon(1e-9));
    CHECK(st.xi(oracle::kCS1) == doctest::Approx(I::CS1).epsilon(1e-9));
    CHECK(st.xi(oracle::kX4) < 1e-12);
  }
}

TEST_CASE("exchange-site equilibration matches the 50-digit site balance") {
  const EquilibriumReduction red(oracle::valocchi_system());
  Vec logs(4);
  logs << std::log(248.0), std::log(165.0), std::log(168.0), std::log(161.0);
  Vec tbar(1);
  tbar << 750.0;
  const Vec imm = rt::equilibrate_immobile(logs, tbar, red, tight());
  REQUIRE(imm.size() == 4);
  using V = oracle::ValocchiNative;
  CHECK(imm(0) == doctest::Approx(V::S).epsilon(1e-10));
  CHECK(imm(1) == doctest::Approx(V::SNa).epsilon(1e-10));
  CHECK(imm(2) == doctest::Approx(V::S2Ca).epsilon(1e-10));
  CHECK(imm(3) == doctest::Approx(V::S2Mg).epsilon(1e-10));

  // Toy variant with a closed form: fixed C = 1, Tbar = 2 gives S = CS = 1.
  const EquilibriumReduction toy(oracle::sorption_system());
  Vec one_log(1);
  one_log << 0.0;
  Vec tb2(1);
  tb2 << 2.0;
  const Vec si = rt::equilibrate_immobile(one_log, tb2, toy, tight());
  CHECK(si(0) == doctest::Approx(1.0).epsilon(1e-11));
  CHECK(si(1) == doctest::Approx(1.0).epsilon(1e-11));
}

TEST_CASE("sorbed-total derivative agrees with finite differences") {
  const EquilibriumReduction red(oracle::valocchi_system());
  // Totals are O(100), so the absolute residual tolerance must leave
  // headroom above 750 * machine epsilon.
  EquilibriumOptions opts;
  opts.tol = 1e-10;
  Vec T(4), Tb(1);
  T << 382.0, 360.0, 280.0, 161.0;
  Tb << 750.0;

  auto [cbar, st] = rt::psi_C(T, Tb, red, std::nullopt, opts);
  REQUIRE(st.converged);
  const Mat d = rt::d_psi_C(st, red, opts);

  const auto F = [&](const Vec& t) {
    return rt::psi_C(t, Tb, red, std::nullopt, opts).first;
  };
  const Mat dfd = oracle::fd_jacobian(F, T, 4, 1e-4);
  CHECK((d - dfd).cwiseAbs().maxCoeff() / d.cwiseAbs().maxCoeff() < 1e-6);

  // The tracer column is inert: no sorbed response to T(Cl).
  CHECK(d.col(3).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(d.row(3).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(rt::d_psi_C(rt::CellChemState{}, red, opts),
                  rt::EvalFailure);
}

TEST_CASE("the retry ladder recovers from hopeless warm starts") {
  const EquilibriumReduction red(oracle::momas_system());
  Vec tau(5);
  tau << 0.3, 0.3, 0.3, 0.0, 1.0;

  const Vec bad_high = Vec::Constant(5, 1e3);   // exp overflow territory
  const Vec bad_low = Vec::Constant(5, -1e3);   // everything underflows
  for (const Vec& guess : {bad_high, bad_low}) {
    const auto st = rt::solve_equilibrium(tau, guess, red, tight());
    CHECK(st.converged);
    CHECK(st.xi(oracle::kX2) ==
          doctest::Approx(oracle::MomasInject::X2).epsilon(1e-8));
  }

  // A converged warm start is accepted with zero further iterations.
  const auto st0 = rt::solve_equilibrium(tau, std::nullopt, red, tight());
  const auto st1 = rt::solve_equilibrium(tau, st0.y2, red, tight());
  CHECK(st1.converged);
  CHECK(st1.newton_iters == 0);
}

TEST_CASE("cell batches reproduce the per-cell solves in both exec modes") {
  const EquilibriumReduction red(oracle::sorption_system());
  const int nh = 7;
  rt::Field T(1, nh);
  Mat Tb(1, nh);
  for (int j = 0; j < nh; ++j) {
    T(0, j) = 0.3 + 0.4 * j;
    Tb(0, j) = 2.0;
  }

  const auto serial =
      rt::psi_C_cells(T, Tb, red, nullptr, rt::Exec::Serial, tight());
  const auto parallel =
      rt::psi_C_cells(T, Tb, red, nullptr, rt::Exec::Parallel, tight());
  REQUIRE(serial.cells_failed == 0);
  REQUIRE(parallel.cells_failed == 0);
  CHECK((serial.cbar.array() == parallel.cbar.array()).all());

  for (int j = 0; j < nh; ++j) {
    CHECK(serial.cbar(0, j) ==
          doctest::Approx(oracle::sorbed_cs(T(0, j), 2.0)).epsilon(1e-10));
    CHECK((serial.states[j].y2.array() == parallel.states[j].y2.array())
              .all());
  }

  const auto jc =
      rt::d_psi_C_cells(serial.states, red, rt::Exec::Serial, tight());
  const auto jp =
      rt::d_psi_C_cells(serial.states, red, rt::Exec::Parallel, tight());
  REQUIRE(jc.size() == static_cast<size_t>(nh));
  for (int j = 0; j < nh; ++j) {
    CHECK(jc[j](0, 0) ==
          doctest::Approx(oracle::sorbed_cs_dT(T(0, j), 2.0)).epsilon(1e-8));
    CHECK(jc[j](0, 0) == jp[j](0, 0));
  }

  // Failures are counted and located, not thrown.
  EquilibriumOptions hopeless;
  hopeless.max_iters = 0;
  const auto failed =
      rt::psi_C_cells(T, Tb, red, nullptr, rt::Exec::Serial, hopeless);
  CHECK(failed.cells_failed == nh);
  CHECK(failed.first_failed_cell == 0);
}

TEST_CASE("condition tracking reports a finite condition number") {
  const EquilibriumReduction red(oracle::sorption_system());
  EquilibriumOptions opts = tight();
  opts.track_condition = true;
  Vec tau(2);
  tau << 2.0, 2.0;
  const auto st = rt::solve_equilibrium(tau, std::nullopt, red, opts);
  REQUIRE(st.converged);
  CHECK(std::isfinite(st.jacobian_cond));
  CHECK(st.jacobian_cond >= 1.0);
}

TEST_SUITE_END();
