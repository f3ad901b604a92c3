#pragma once

#include <string>
#include <vector>

#include "rt/config.hpp"
#include "rt/scenarios.hpp"

namespace rt {

// Full round-trip precision (17 significant digits).
std::string format_g17(double v);

// Profile at one time: columns x, then total:NAME, mobile:NAME,
// immobile:NAME for every mobile total (total = mobile + immobile).
void write_profile_csv(const std::string& path, const Mesh1D& mesh,
                       const Snapshot& snap,
                       const std::vector<std::string>& total_names);

// Outlet time series: columns t, C[name]...
void write_elution_csv(const std::string& path, const RunOutput& out,
                       const std::vector<std::string>& total_names);

// Structured run record: problem identity, solver echo, per-step iteration
// counts, aggregates, wall time, produced files.
Json run_report(const RunConfig& cfg, const RunOutput& out,
                const std::vector<std::string>& output_files);

// One JSON object per accepted step, for streaming consumption.
void write_steps_jsonl(const std::string& path, const RunOutput& out);

// Checkpoints persist the state exactly: concentrations, immobile totals,
// time, step index and the per-cell reduced chemistry unknowns, from which
// the cached cell states are rebuilt bit-for-bit.
Json checkpoint_json(const RunConfig& cfg, const SystemState& state);
SystemState state_from_checkpoint(const Json& ckpt, const RunConfig& cfg);

// Text table over run reports (method/mesh vs iteration counts and wall
// time).  Reports from different problems (hash mismatch) raise ConfigError.
std::string compare_table(const std::vector<Json>& reports);

}  // namespace rt
