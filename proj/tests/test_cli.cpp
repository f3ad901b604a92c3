#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

// Each test case gets its own output root so artifacts never collide.
struct CliEnv {
  fs::path root;
  int seq = 0;

  explicit CliEnv(const std::string& tag)
      : root(fs::temp_directory_path() / ("rtsolve-cli-" + tag)) {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~CliEnv() { fs::remove_all(root); }

  CliResult run(const std::string& args) {
    const fs::path of = root / ("out" + std::to_string(seq));
    const fs::path ef = root / ("err" + std::to_string(seq));
    ++seq;
    const std::string cmd = "RTSOLVE_OUTPUT_ROOT='" + root.string() + "' '" +
                            RTSOLVE_BIN + "' " + args + " >'" + of.string() +
                            "' 2>'" + ef.string() + "'";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(of);
    r.err = slurp(ef);
    return r;
  }

  fs::path write_toy(const std::string& name = "toy.json",
                     double t_end = 10.0) {
    json cfg = json::parse(R"json({
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
      }
    })json");
    cfg["problem"]["time"]["t_end"] = t_end;
    const fs::path p = root / name;
    std::ofstream f(p);
    f << cfg.dump(2);
    return p;
  }
};

json load(const fs::path& p) {
  std::ifstream f(p);
  REQUIRE(f.good());
  return json::parse(f);
}

}  // namespace

TEST_SUITE_BEGIN("cli");

TEST_CASE("run executes a config file and writes the artifact set") {
  CliEnv env("run");
  const fs::path cfg = env.write_toy();
  const CliResult r =
      env.run("run " + cfg.string() + " --set output.snapshot_times=[10]");

  CHECK(r.code == 0);
  CHECK(r.out.find("toy-sorption: t=10 in 20 steps") != std::string::npos);
  CHECK(r.err.empty());

  const fs::path dir = env.root / "toy-sorption";
  CHECK(fs::exists(dir / "elution.csv"));
  CHECK(fs::exists(dir / "checkpoint.json"));
  CHECK(fs::exists(dir / "profile_t10.csv"));
  const json report = load(dir / "report.json");
  CHECK(report["completed"] == true);
  CHECK(report["time_reached"] == 10.0);
  CHECK(report["aggregates"]["steps"] == 20);
  CHECK(report["solver"]["formulation"] == "h");
}

TEST_CASE("built-in names and dotted overrides work from the shell") {
  CliEnv env("builtin");
  const CliResult r =
      env.run("run ion-exchange-valocchi --set problem.params.n=20"
              " --set problem.params.t_end=0.4 --formulation sia");
  CHECK(r.code == 0);

  const fs::path dir = env.root / "ion-exchange-valocchi";
  const json report = load(dir / "report.json");
  CHECK(report["completed"] == true);
  CHECK(report["solver"]["formulation"] == "sia");
  CHECK(report["mesh"]["cells"] == 20);
  CHECK(fs::exists(dir / "profile_t0.4.csv"));
}

TEST_CASE("configuration problems exit with code 1 and a clear message") {
  CliEnv env("cfgerr");

  const CliResult missing = env.run("run does-not-exist.json");
  CHECK(missing.code == 1);
  CHECK(missing.err.find("config error") != std::string::npos);
  CHECK(missing.err.find("cannot open") != std::string::npos);

  // The benchmark column has no default dispersion: running it bare fails.
  const CliResult bare = env.run("run momas-easy-1d");
  CHECK(bare.code == 1);
  CHECK(bare.err.find("no value chosen") != std::string::npos);

  const CliResult combo = env.run(
      "run ion-exchange-valocchi --set solver.preconditioner=jacobi");
  CHECK(combo.code == 1);
  CHECK(combo.err.find("formulation f only") != std::string::npos);
}

TEST_CASE("solver breakdowns exit with code 2 and keep partial artifacts") {
  CliEnv env("solverr");
  const fs::path cfg = env.write_toy();
  const CliResult r = env.run("run " + cfg.string() +
                              " --set solver.newton.max_iters=0"
                              " --set solver.dt_retry_max=0");
  CHECK(r.code == 2);
  CHECK(r.err.find("FAILED at t=") != std::string::npos);

  const json report = load(env.root / "toy-sorption" / "report.json");
  CHECK(report["completed"] == false);
  CHECK(report["failure"].get<std::string>().find("time step failed") !=
        std::string::npos);
}

TEST_CASE("checkpoints restart the same problem and refuse another") {
  CliEnv env("restart");
  const fs::path cfg = env.write_toy("half.json", 5.0);
  CHECK(env.run("run " + cfg.string()).code == 0);
  const fs::path ckpt = env.root / "toy-sorption" / "checkpoint.json";
  REQUIRE(fs::exists(ckpt));

  // Same problem: resuming at the horizon is a no-op run.
  const CliResult same =
      env.run("run " + cfg.string() + " --restart " + ckpt.string() +
              " --set output.directory=resumed");
  CHECK(same.code == 0);
  CHECK(same.out.find("t=5 in 0 steps") != std::string::npos);

  // Different horizon means a different problem: the hash guards the restart.
  const fs::path other = env.write_toy("full.json", 10.0);
  const CliResult bad =
      env.run("run " + other.string() + " --restart " + ckpt.string());
  CHECK(bad.code == 1);
  CHECK(bad.err.find("different problem") != std::string::npos);
}

TEST_CASE("a study sweeps one key into per-value run directories") {
  CliEnv env("study");
  const CliResult r =
      env.run("run ion-exchange-valocchi --set problem.params.t_end=0.3"
              " --study mesh n=10,20");
  CHECK(r.code == 0);
  CHECK(r.out.find("study 'mesh' over problem.params.n: 2 runs") !=
        std::string::npos);

  const fs::path base = env.root / "ion-exchange-valocchi" / "study-mesh";
  const json summary = load(base / "study.json");
  CHECK(summary["key"] == "problem.params.n");
  REQUIRE(summary["runs"].size() == 2);
  CHECK(summary["runs"][0]["completed"] == true);
  CHECK(load(base / "10" / "report.json")["mesh"]["cells"] == 10);
  CHECK(load(base / "20" / "report.json")["mesh"]["cells"] == 20);
}

TEST_CASE("compare tabulates reports and rejects mixed problems") {
  CliEnv env("compare");
  const fs::path cfg = env.write_toy();
  CHECK(env.run("run " + cfg.string()).code == 0);
  CHECK(env.run("run " + cfg.string() + " --formulation sia"
                " --set output.directory=toy-sia").code == 0);
  CHECK(env.run("run ion-exchange-valocchi --set problem.params.n=10"
                " --set problem.params.t_end=0.3").code == 0);

  const std::string a = (env.root / "toy-sorption" / "report.json").string();
  const std::string b = (env.root / "toy-sia" / "report.json").string();
  const std::string c =
      (env.root / "ion-exchange-valocchi" / "report.json").string();

  const CliResult ok = env.run("compare " + a + " " + b);
  CHECK(ok.code == 0);
  CHECK(ok.out.find("method") != std::string::npos);
  CHECK(ok.out.find("sia") != std::string::npos);

  const CliResult mixed = env.run("compare " + a + " " + c);
  CHECK(mixed.code == 1);
  CHECK(mixed.err.find("different problems") != std::string::npos);
}

TEST_CASE("help text lists the subcommands") {
  CliEnv env("help");
  const CliResult r = env.run("--help");
  CHECK(r.code == 0);
  CHECK(r.out.find("run") != std::string::npos);
  CHECK(r.out.find("compare") != std::string::npos);
}

TEST_SUITE_END();
