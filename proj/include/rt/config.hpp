#pragma once

#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "rt/coupling.hpp"
#include "rt/mesh.hpp"
#include "rt/transport.hpp"

namespace rt {

using Json = nlohmann::json;

// One window of the piecewise-constant time step control: applies on
// [previous until, until).  Exactly one of cfl / dt is set; cfl converts to
// the largest dt with per-cell advective CFL below the given value.
struct ScheduleEntry {
  double until = 0.0;
  double value = 0.0;
  bool is_cfl = true;
};

// Inflow boundary totals on [previous until, until).
struct TimeWindow {
  double until = 0.0;
  Vec totals;  // one per mobile total
};

// Initial condition on a span of the column (matched by cell centers).
struct InitialZone {
  double x_min = 0.0, x_max = 0.0;
  Vec mobile;           // total concentrations, or aqueous components
  Vec immobile_totals;  // one per immobile total
};

struct ProblemConfig {
  std::string name;
  std::shared_ptr<const EquilibriumReduction> reduction;
  std::vector<MeshSegment> segments;
  double darcy_flux = 0.0;
  BoundaryMode mode = BoundaryMode::InflowDirichlet;
  std::vector<TimeWindow> windows;
  bool initial_is_aqueous = false;
  std::vector<InitialZone> zones;
  double t_end = 0.0;
  std::vector<ScheduleEntry> schedule;
};

struct SolverConfig {
  Scheme scheme = Scheme::FullyImplicit;
  SolveControls controls;
  int dt_retry_max = 5;
};

struct OutputConfig {
  std::string directory;
  std::vector<double> snapshot_times;
  bool elution = true;
  bool steps_log = false;
  bool checkpoint = true;
};

struct RunConfig {
  ProblemConfig problem;
  SolverConfig solver;
  OutputConfig output;
  Json problem_json;        // expanded problem section (identity of the run)
  Json solver_json;         // echoed into reports
  std::string problem_hash;
};

// Full default configuration of a built-in problem (problem + solver +
// output sections), ready to run or to merge user overrides into.
// Recognized names: "momas-easy-1d", "ion-exchange-valocchi".
Json builtin_config(const std::string& name, const Json& params);

// Apply one "dotted.path=json_value" override (value falls back to a string
// when it does not parse as JSON).  Intermediate objects are created.
void apply_override(Json& config, const std::string& assignment);

// Resolve {"problem": {"builtin": name, "params": {...}}} into the full
// inline form; the rest of the user config wins over generated defaults.
Json expand_builtins(Json config);

// Strict parse: unknown keys, missing totals, bad ranges all raise
// ConfigError with the offending path in the message.
RunConfig parse_config(const Json& config);

// Stable identity of the physical problem (FNV-1a over the canonical dump,
// ignoring free-text fields).
std::string problem_hash(const Json& problem_node);

}  // namespace rt
