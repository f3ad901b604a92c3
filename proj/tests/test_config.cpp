#include <functional>
#include <string>

#include "doctest.h"
#include "rt/config.hpp"
#include "rt/errors.hpp"

using rt::ConfigError;
using rt::Json;

namespace {

Json toy_config() {
  return Json::parse(R"json({
    "problem": {
      "name": "toy-sorption",
      "species": [
        {"name": "C", "mobile": true},
        {"name": "S", "mobile": false},
        {"name": "CS", "mobile": false}
      ],
      "reactions": [
        {"coefficients": {"C": -1, "S": -1, "CS": 1}, "log10_k": 0.0}
      ],
      "mesh": {"segments": [
        {"length": 4.0, "cells": 4, "porosity": 0.5, "diffusion": 0.01}
      ]},
      "darcy_flux": 0.3,
      "boundary": {
        "mode": "inflow_dirichlet",
        "windows": [{"until": 10.0, "totals": {"T(C)": 1.0}}]
      },
      "initial": {
        "kind": "totals",
        "zones": [{
          "x_min": 0.0, "x_max": 4.0,
          "totals": {"T(C)": 0.1},
          "immobile_totals": {"Tbar(S)": 2.0}
        }]
      },
      "time": {"t_end": 10.0, "schedule": [{"until": 10.0, "dt": 0.5}]}
    },
    "solver": {},
    "output": {"elution": false, "checkpoint": false}
  })json");
}

// Message of the ConfigError a callable raises ("" if it does not raise).
std::string config_error(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

bool mentions(const std::string& msg, const std::string& needle) {
  return msg.find(needle) != std::string::npos;
}

}  // namespace

TEST_SUITE_BEGIN("config");

TEST_CASE("builtin generators validate their parameters") {
  CHECK_THROWS_AS(rt::builtin_config("no-such-problem", Json::object()),
                  ConfigError);
  CHECK(mentions(config_error([] {
          rt::builtin_config("momas-easy-1d", Json{{"n", 100}});
        }),
        "multiple of 96"));
  CHECK_THROWS_AS(rt::builtin_config("momas-easy-1d", Json{{"bogus", 1}}),
                  ConfigError);
  CHECK_THROWS_AS(
      rt::builtin_config("ion-exchange-valocchi", Json{{"n", -5}}),
      ConfigError);
}

TEST_CASE("the benchmark column refuses to invent a dispersion coefficient") {
  const Json cfg{{"problem", {{"builtin", "momas-easy-1d"}}}};
  const std::string msg =
      config_error([&] { (void)rt::parse_config(cfg); });
  CHECK(mentions(msg, "no value chosen"));
  CHECK(mentions(msg, "diffusion"));
}

TEST_CASE("the heterogeneous benchmark column is generated as documented") {
  Json cfg{{"problem",
            {{"builtin", "momas-easy-1d"},
             {"params",
              {{"n", 192}, {"diffusion_a", 5.5e-5}, {"diffusion_b", 5.5e-4}}}}}};
  const rt::RunConfig rc = rt::parse_config(cfg);

  CHECK(rc.problem.name == "momas-easy-1d");
  REQUIRE(rc.problem.segments.size() == 3);
  CHECK(rc.problem.segments[0].n_cells == 80);
  CHECK(rc.problem.segments[1].n_cells == 32);
  CHECK(rc.problem.segments[1].porosity == 0.5);
  CHECK(rc.problem.segments[1].diffusion == 5.5e-4);
  CHECK(rc.problem.darcy_flux == 5.5e-3);
  CHECK(rc.problem.reduction->n_species() == 12);
  CHECK(rc.problem.reduction->n_mobile_totals() == 4);
  CHECK(rc.problem.reduction->n_immobile_totals() == 1);
  CHECK(rc.problem.t_end == 6000.0);
  REQUIRE(rc.problem.schedule.size() == 1);
  CHECK(rc.problem.schedule[0].is_cfl);
  CHECK(rc.problem.schedule[0].value == 1.0);
  REQUIRE(rc.problem.windows.size() == 2);
  CHECK(rc.problem.windows[0].until == 5000.0);
  CHECK(rc.problem.windows[1].totals(1) == -2.0);  // reducing feed in T(X2)
  REQUIRE(rc.problem.zones.size() == 3);
  CHECK(rc.problem.zones[1].immobile_totals(0) == 10.0);
  CHECK(rc.solver.controls.formulation == rt::Formulation::H);
  CHECK(rc.solver.scheme == rt::Scheme::FullyImplicit);
  CHECK(rc.output.directory == "momas-easy-1d");
  CHECK(rc.output.snapshot_times == std::vector<double>{10.0, 5010.0});

  // The staged step ladder tightens around the feed switch.
  Json var = cfg;
  var["problem"]["params"]["schedule"] = "variable";
  const rt::RunConfig rv = rt::parse_config(var);
  REQUIRE(rv.problem.schedule.size() == 7);
  CHECK(rv.problem.schedule[0].until == 20.0);
  CHECK(rv.problem.schedule[0].value == 1.0);
  CHECK(rv.problem.schedule[4].value == 40.0);
  CHECK(rv.problem.schedule[5].until == 5100.0);
  CHECK(rv.problem.schedule[5].value == 1.0);
  CHECK(rv.problem.schedule.back().until == 6000.0);
}

TEST_CASE("the ion exchange column is generated as documented") {
  const Json cfg{{"problem", {{"builtin", "ion-exchange-valocchi"}}}};
  const rt::RunConfig rc = rt::parse_config(cfg);

  REQUIRE(rc.problem.segments.size() == 1);
  CHECK(rc.problem.segments[0].n_cells == 200);
  CHECK(rc.problem.segments[0].length == 16.0);
  CHECK(rc.problem.darcy_flux == 0.2525);
  CHECK(rc.problem.reduction->n_mobile_totals() == 4);
  CHECK(rc.problem.initial_is_aqueous);
  REQUIRE(rc.problem.zones.size() == 1);
  CHECK(rc.problem.zones[0].mobile(0) == 248.0);
  CHECK(rc.problem.zones[0].immobile_totals(0) == 750.0);
  REQUIRE(rc.problem.schedule.size() == 1);
  CHECK(!rc.problem.schedule[0].is_cfl);
  CHECK(rc.problem.schedule[0].value == 0.11089);
  CHECK(rc.problem.t_end == 5000.0);
  CHECK(rc.problem.windows[0].totals(3) == 9.03);

  // The normalized solver echo spells out every default.
  CHECK(rc.solver_json["formulation"] == "h");
  CHECK(rc.solver_json["preconditioner"] == "none");
  CHECK(rc.solver_json["newton"]["rtol"] == 1e-8);
  CHECK(rc.solver_json["gmres"]["max_iters"] == 40);
  CHECK(rc.solver_json["chemistry"]["tol"] == 1e-10);
  CHECK(rc.solver_json["parallel"] == false);
  CHECK(rc.solver.dt_retry_max == 5);
}

TEST_CASE("user keys survive the expansion of a built-in") {
  Json cfg{{"problem",
            {{"builtin", "ion-exchange-valocchi"}, {"params", {{"t_end", 100.0}}}}},
           {"solver", {{"newton", {{"rtol", 1e-6}}}}},
           {"output", {{"directory", "elsewhere"}}}};
  const Json full = rt::expand_builtins(cfg);

  CHECK(!full["problem"].contains("builtin"));
  CHECK(!full["problem"].contains("params"));
  CHECK(full["problem"]["time"]["t_end"] == 100.0);
  CHECK(full["solver"]["newton"]["rtol"] == 1e-6);
  CHECK(full["solver"]["formulation"] == "h");  // generated default kept
  CHECK(full["output"]["directory"] == "elsewhere");

  const rt::RunConfig rc = rt::parse_config(cfg);
  CHECK(rc.problem.t_end == 100.0);
  CHECK(rc.solver.controls.newton.rtol == 1e-6);
  CHECK(rc.output.directory == "elsewhere");
}

TEST_CASE("dotted overrides create paths and parse values as json") {
  Json cfg = Json::object();
  rt::apply_override(cfg, "solver.gmres.max_iters=300");
  CHECK(cfg["solver"]["gmres"]["max_iters"] == 300);
  rt::apply_override(cfg, "solver.parallel=true");
  CHECK(cfg["solver"]["parallel"] == true);
  rt::apply_override(cfg, "output.snapshot_times=[1.5, 2]");
  CHECK(cfg["output"]["snapshot_times"] == Json::array({1.5, 2}));
  rt::apply_override(cfg, "output.directory=runs/a");
  CHECK(cfg["output"]["directory"] == "runs/a");
  rt::apply_override(cfg, "output.snapshot_times.1=7.25");
  CHECK(cfg["output"]["snapshot_times"] == Json::array({1.5, 7.25}));

  CHECK_THROWS_AS(rt::apply_override(cfg, "no-equals-sign"), ConfigError);
  CHECK_THROWS_AS(rt::apply_override(cfg, "=5"), ConfigError);
  CHECK_THROWS_AS(rt::apply_override(cfg, "solver..x=1"), ConfigError);
  CHECK_THROWS_AS(rt::apply_override(cfg, "output.snapshot_times.9=1"),
                  ConfigError);
}

TEST_CASE("unknown keys are rejected with their path") {
  Json cfg = toy_config();
  cfg["extra"] = 1;
  CHECK(mentions(config_error([&] { (void)rt::parse_config(cfg); }),
                 "unknown key 'extra'"));

  cfg = toy_config();
  cfg["solver"]["bogus"] = 1;
  CHECK(mentions(config_error([&] { (void)rt::parse_config(cfg); }),
                 "solver: unknown key 'bogus'"));

  cfg = toy_config();
  cfg["problem"]["species"][0]["charge"] = 1;
  CHECK(mentions(config_error([&] { (void)rt::parse_config(cfg); }),
                 "species[0]"));

  cfg = toy_config();
  cfg["problem"]["reactions"][0]["coefficients"]["Xx"] = 1;
  CHECK(mentions(config_error([&] { (void)rt::parse_config(cfg); }),
                 "unknown species 'Xx'"));
}

TEST_CASE("solver combinations are checked up front") {
  Json cfg = toy_config();
  cfg["solver"]["preconditioner"] = "jacobi";
  const std::string msg = config_error([&] { (void)rt::parse_config(cfg); });
  CHECK(mentions(msg, "formulation f only"));

  for (const char* alias : {"jacobi", "block_jacobi", "gauss_seidel",
                            "gauss-seidel", "block_gauss_seidel"}) {
    Json ok = toy_config();
    ok["solver"]["formulation"] = "f";
    ok["solver"]["preconditioner"] = alias;
    CHECK_NOTHROW((void)rt::parse_config(ok));
  }

  Json bad = toy_config();
  bad["solver"]["scheme"] = "leapfrog";
  CHECK(mentions(config_error([&] { (void)rt::parse_config(bad); }),
                 "unknown scheme"));
  bad = toy_config();
  bad["solver"]["formulation"] = "q";
  CHECK(mentions(config_error([&] { (void)rt::parse_config(bad); }),
                 "unknown formulation"));
}

TEST_CASE("time and boundary coverage is validated") {
  Json cfg = toy_config();
  cfg["problem"]["darcy_flux"] = 0.0;
  cfg["problem"]["time"]["schedule"][0] = Json{{"until", 10.0}, {"cfl", 1.0}};
  cfg["problem"]["boundary"] =
      Json{{"mode", "closed_box"}};  // no flux, no inflow values
  CHECK(mentions(config_error([&] { (void)rt::parse_config(cfg); }),
                 "cfl-based steps need a positive darcy_flux"));

  cfg = toy_config();
  cfg["problem"]["time"]["schedule"][0]["until"] = 8.0;
  CHECK(mentions(config_error([&] { (void)rt::parse_config(cfg); }),
                 "cover the horizon"));

  cfg = toy_config();
  cfg["problem"]["time"]["schedule"][0]["cfl"] = 1.0;  // dt already present
  CHECK(mentions(config_error([&] { (void)rt::parse_config(cfg); }),
                 "exactly one of 'cfl' or 'dt'"));

  cfg = toy_config();
  cfg["problem"]["boundary"]["windows"][0]["until"] = 3.0;
  CHECK(mentions(config_error([&] { (void)rt::parse_config(cfg); }),
                 "boundary.windows"));

  cfg = toy_config();
  cfg["problem"]["boundary"]["mode"] = "closed_box";
  CHECK(mentions(config_error([&] { (void)rt::parse_config(cfg); }),
                 "closed box takes no boundary values"));

  cfg = toy_config();
  cfg["problem"]["time"]["t_end"] = -1.0;
  CHECK_THROWS_AS((void)rt::parse_config(cfg), ConfigError);
}

TEST_CASE("totals maps must name every entry exactly") {
  Json cfg = toy_config();
  cfg["problem"]["initial"]["zones"][0]["totals"] = Json{{"T(X)", 1.0}};
  CHECK(mentions(config_error([&] { (void)rt::parse_config(cfg); }),
                 "missing entry 'T(C)'"));

  cfg = toy_config();
  cfg["problem"]["initial"]["zones"][0]["totals"]["T(Q)"] = 0.0;
  CHECK(mentions(config_error([&] { (void)rt::parse_config(cfg); }),
                 "unknown entry 'T(Q)'"));

  cfg = toy_config();
  cfg["problem"]["initial"]["zones"][0].erase("immobile_totals");
  CHECK(mentions(config_error([&] { (void)rt::parse_config(cfg); }),
                 "immobile_totals"));

  cfg = toy_config();
  cfg["problem"]["initial"]["kind"] = "guess";
  CHECK(mentions(config_error([&] { (void)rt::parse_config(cfg); }),
                 "unknown kind"));
}

TEST_CASE("the problem hash ignores free text but not physics") {
  const Json a = toy_config()["problem"];
  Json b = a;
  b["name"] = "renamed";
  b["notes"] = Json::array({"anything"});
  Json c = a;
  c["darcy_flux"] = 0.31;

  const std::string ha = rt::problem_hash(a);
  CHECK(ha.rfind("fnv1a:", 0) == 0);
  CHECK(ha.size() == 6 + 16);
  CHECK(rt::problem_hash(b) == ha);
  CHECK(rt::problem_hash(c) != ha);

  const rt::RunConfig rc = rt::parse_config(toy_config());
  CHECK(rc.problem_hash == ha);
  CHECK(rc.output.directory == "toy-sorption");  // falls back to the name
}

TEST_SUITE_END();
