#pragma once

#include <string>
#include <vector>

#include "rt/config.hpp"

namespace rt {

// Built-in problem generators.  Both emit the same config format a user
// would write by hand, so generated setups can be inspected and edited.
//
// momas-easy-1d params: n (cells, multiple of 96), diffusion_a, diffusion_b
// (required, no benchmark default), cfl (fixed target) or schedule
// ("variable" for the published step ladder), t_end.
Json momas_easy_1d(const Json& params);
// ion-exchange-valocchi params: n (cells), dt, t_end.
Json ion_exchange_valocchi(const Json& params);

struct StepRecord {
  double t = 0.0;   // time reached by the step
  double dt = 0.0;
  int outer_iters = 0;
  long gmres_iters = 0;
  long chem_iters = 0;
  int retries = 0;
  double residual_initial = 0.0;
  double residual_final = 0.0;
};

struct Snapshot {
  double t = 0.0;
  Field C;
  Field Cbar;
};

struct RunOutput {
  SystemState final_state;
  bool completed = false;
  std::string failure;
  double wall_seconds = 0.0;
  std::vector<StepRecord> steps;
  std::vector<double> elution_times;
  std::vector<Vec> elution;  // outlet aqueous totals, one entry per record
  std::vector<Snapshot> snapshots;
  long total_newton = 0;
  long total_gmres = 0;
  long total_chem = 0;
  long total_retries = 0;
};

// Equilibrated initial state of the configured problem.
SystemState initial_state(const RunConfig& cfg);

// March the configured problem from its initial state (or from a restart
// state) to t_end.  Time steps follow the schedule, are capped so that
// schedule boundaries, boundary-condition switches and snapshot times are
// hit exactly, and are halved up to dt_retry_max times on step failure.
// A failed step after all retries ends the run with completed=false and the
// partial records intact.
RunOutput run_simulation(const RunConfig& cfg,
                         const SystemState* restart = nullptr);

}  // namespace rt
