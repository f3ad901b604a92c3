// Command line front end: run configurations (inline or built-in), apply
// overrides, restart from checkpoints, sweep one parameter, and compare run
// reports.  Exit codes: 0 ok, 1 configuration error, 2 solver failure.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "rt/config.hpp"
#include "rt/errors.hpp"
#include "rt/report.hpp"
#include "rt/scenarios.hpp"

namespace fs = std::filesystem;
using rt::Json;

namespace {

Json load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw rt::ConfigError("cannot open '" + path + "'");
  try {
    return Json::parse(f);
  } catch (const Json::parse_error& e) {
    throw rt::ConfigError("failed to parse '" + path + "': " + e.what());
  }
}

fs::path output_root() {
  if (const char* env = std::getenv("RTSOLVE_OUTPUT_ROOT"))
    if (*env) return env;
  return ".";
}

std::string time_tag(double t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", t);
  return buf;
}

// Runs one parsed configuration, writing every requested artifact into
// outdir (partial artifacts are still written when the march fails early).
// Returns the report with completed==true/false.
Json run_one(const rt::RunConfig& cfg, const rt::SystemState* restart,
             const fs::path& outdir) {
  fs::create_directories(outdir);
  const rt::RunOutput out = rt::run_simulation(cfg, restart);

  const auto& sys = cfg.problem.reduction->system();
  const std::vector<std::string> mobile_names(
      sys.total_names().begin(),
      sys.total_names().begin() + sys.n_mobile_totals());
  const rt::Mesh1D mesh = rt::build_mesh(cfg.problem.segments);

  std::vector<std::string> files;
  for (const auto& snap : out.snapshots) {
    const std::string name = "profile_t" + time_tag(snap.t) + ".csv";
    rt::write_profile_csv((outdir / name).string(), mesh, snap, mobile_names);
    files.push_back(name);
  }
  if (cfg.output.elution) {
    rt::write_elution_csv((outdir / "elution.csv").string(), out,
                          mobile_names);
    files.push_back("elution.csv");
  }
  if (cfg.output.steps_log) {
    rt::write_steps_jsonl((outdir / "steps.jsonl").string(), out);
    files.push_back("steps.jsonl");
  }
  if (cfg.output.checkpoint) {
    std::ofstream f(outdir / "checkpoint.json");
    f << rt::checkpoint_json(cfg, out.final_state).dump() << "\n";
    files.push_back("checkpoint.json");
  }
  files.push_back("report.json");

  const Json report = rt::run_report(cfg, out, files);
  std::ofstream rf(outdir / "report.json");
  rf << report.dump(2) << "\n";

  if (out.completed) {
    std::printf("%s: t=%g in %zu steps, %.3fs -> %s\n",
                cfg.problem.name.c_str(), out.final_state.time,
                out.steps.size(), out.wall_seconds,
                (outdir / "report.json").c_str());
  } else {
    std::fprintf(stderr, "%s: FAILED at t=%g: %s\n", cfg.problem.name.c_str(),
                 out.final_state.time, out.failure.c_str());
  }
  return report;
}

Json build_raw_config(const std::string& config_arg,
                      const std::vector<std::string>& overrides) {
  Json raw;
  if (fs::exists(config_arg)) {
    raw = load_json(config_arg);
  } else if (config_arg.find('.') == std::string::npos &&
             config_arg.find('/') == std::string::npos) {
    // Bare name: treat as a built-in problem reference.
    raw = Json{{"problem", {{"builtin", config_arg}}}};
  } else {
    throw rt::ConfigError("cannot open '" + config_arg + "'");
  }
  for (const auto& o : overrides) rt::apply_override(raw, o);
  return raw;
}

int cmd_run(const std::string& config_arg,
            const std::vector<std::string>& overrides,
            const std::string& restart_path,
            const std::vector<std::string>& study) {
  const Json raw = build_raw_config(config_arg, overrides);

  if (!study.empty()) {
    if (!restart_path.empty())
      throw rt::ConfigError("--study cannot be combined with --restart");
    const std::string& name = study[0];
    const std::string& spec = study[1];
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
      throw rt::ConfigError("--study expects key=v1,v2,... , got '" + spec +
                            "'");
    std::string key = spec.substr(0, eq);
    if (key.find('.') == std::string::npos) key = "problem.params." + key;
    std::vector<std::string> values;
    for (size_t at = eq + 1; at <= spec.size();) {
      const size_t comma = spec.find(',', at);
      values.push_back(spec.substr(at, comma - at));
      if (comma == std::string::npos) break;
      at = comma + 1;
    }

    bool all_ok = true;
    fs::path base;
    Json summary{{"study", name}, {"key", key}, {"runs", Json::array()}};
    std::vector<Json> reports;
    for (const auto& v : values) {
      Json cfg_json = raw;
      rt::apply_override(cfg_json, key + "=" + v);
      const rt::RunConfig cfg = rt::parse_config(cfg_json);
      if (base.empty())
        base = output_root() / cfg.output.directory / ("study-" + name);
      std::string leaf = v;
      for (char& c : leaf)
        if (c == '/' || c == ' ') c = '_';
      const Json report = run_one(cfg, nullptr, base / leaf);
      all_ok = all_ok && report.at("completed").get<bool>();
      summary["runs"].push_back(Json{{"value", v},
                                     {"directory", leaf},
                                     {"completed", report.at("completed")},
                                     {"aggregates", report.at("aggregates")}});
      reports.push_back(report);
    }
    std::ofstream sf(base / "study.json");
    sf << summary.dump(2) << "\n";
    std::printf("study '%s' over %s: %zu runs -> %s\n", name.c_str(),
                key.c_str(), values.size(), (base / "study.json").c_str());
    return all_ok ? 0 : 2;
  }

  const rt::RunConfig cfg = rt::parse_config(raw);
  rt::SystemState restart_state;
  const rt::SystemState* restart = nullptr;
  if (!restart_path.empty()) {
    restart_state = rt::state_from_checkpoint(load_json(restart_path), cfg);
    restart = &restart_state;
  }
  const Json report =
      run_one(cfg, restart, output_root() / cfg.output.directory);
  return report.at("completed").get<bool>() ? 0 : 2;
}

int cmd_compare(const std::vector<std::string>& paths) {
  std::vector<Json> reports;
  for (const auto& p : paths) reports.push_back(load_json(p));
  std::cout << rt::compare_table(reports);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"1-D reactive transport column solver"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run a configuration to its horizon");
  std::string config_arg;
  run->add_option("config", config_arg,
                  "JSON config file, or a built-in problem name")
      ->required();
  std::vector<std::string> overrides;
  run->add_option("--set", overrides, "override one key: dotted.path=value")
      ->take_all()
      ->expected(1);
  std::string restart_path;
  run->add_option("--restart", restart_path, "resume from a checkpoint.json");
  std::vector<std::string> study;
  run->add_option("--study", study, "sweep one key: NAME key=v1,v2,...")
      ->expected(2);
  std::string formulation, preconditioner, scheme;
  run->add_option("--formulation", formulation,
                  "shorthand for --set solver.formulation=...");
  run->add_option("--preconditioner", preconditioner,
                  "shorthand for --set solver.preconditioner=...");
  run->add_option("--scheme", scheme, "shorthand for --set solver.scheme=...");

  auto* cmp = app.add_subcommand("compare", "tabulate run reports side by side");
  std::vector<std::string> report_paths;
  cmp->add_option("reports", report_paths, "report.json files")
      ->required()
      ->expected(-1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);  // also handles --help
  }

  try {
    if (cmp->parsed()) return cmd_compare(report_paths);

    std::vector<std::string> all_overrides;
    if (!formulation.empty())
      all_overrides.push_back("solver.formulation=" + formulation);
    if (!preconditioner.empty())
      all_overrides.push_back("solver.preconditioner=" + preconditioner);
    if (!scheme.empty()) all_overrides.push_back("solver.scheme=" + scheme);
    all_overrides.insert(all_overrides.end(), overrides.begin(),
                         overrides.end());
    return cmd_run(config_arg, all_overrides, restart_path, study);
  } catch (const rt::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const rt::TableauError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const rt::AssemblyError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "solver failure: %s\n", e.what());
    return 2;
  }
}
