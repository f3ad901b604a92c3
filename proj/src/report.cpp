#include "rt/report.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rt/errors.hpp"

#ifndef RT_VERSION
#define RT_VERSION "dev"
#endif

namespace rt {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open '" + path + "' for writing");
  return f;
}

}  // namespace

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_profile_csv(const std::string& path, const Mesh1D& mesh,
                       const Snapshot& snap,
                       const std::vector<std::string>& total_names) {
  std::ofstream f = open_out(path);
  f << "x";
  for (const auto& n : total_names) f << ",total:" << n;
  for (const auto& n : total_names) f << ",mobile:" << n;
  for (const auto& n : total_names) f << ",immobile:" << n;
  f << "\n";
  const int nc = static_cast<int>(total_names.size());
  for (int j = 0; j < mesh.n_cells(); ++j) {
    f << format_g17(mesh.x_center(j));
    for (int k = 0; k < nc; ++k)
      f << "," << format_g17(snap.C(k, j) + snap.Cbar(k, j));
    for (int k = 0; k < nc; ++k) f << "," << format_g17(snap.C(k, j));
    for (int k = 0; k < nc; ++k) f << "," << format_g17(snap.Cbar(k, j));
    f << "\n";
  }
}

void write_elution_csv(const std::string& path, const RunOutput& out,
                       const std::vector<std::string>& total_names) {
  std::ofstream f = open_out(path);
  f << "t";
  for (const auto& n : total_names) f << "," << n;
  f << "\n";
  for (size_t i = 0; i < out.elution_times.size(); ++i) {
    f << format_g17(out.elution_times[i]);
    for (int k = 0; k < out.elution[i].size(); ++k)
      f << "," << format_g17(out.elution[i](k));
    f << "\n";
  }
}

Json run_report(const RunConfig& cfg, const RunOutput& out,
                const std::vector<std::string>& output_files) {
  const Mesh1D mesh = build_mesh(cfg.problem.segments);
  const auto& sys = cfg.problem.reduction->system();
  const auto& names = sys.total_names();
  const std::vector<std::string> mobile(names.begin(),
                                        names.begin() + sys.n_mobile_totals());
  const std::vector<std::string> immobile(
      names.begin() + sys.n_mobile_totals(), names.end());

  Json steps{{"t", Json::array()},        {"dt", Json::array()},
             {"newton", Json::array()},   {"gmres", Json::array()},
             {"chemistry", Json::array()}, {"retries", Json::array()},
             {"residual_initial", Json::array()},
             {"residual_final", Json::array()}};
  for (const auto& s : out.steps) {
    steps["t"].push_back(s.t);
    steps["dt"].push_back(s.dt);
    steps["newton"].push_back(s.outer_iters);
    steps["gmres"].push_back(s.gmres_iters);
    steps["chemistry"].push_back(s.chem_iters);
    steps["retries"].push_back(s.retries);
    steps["residual_initial"].push_back(s.residual_initial);
    steps["residual_final"].push_back(s.residual_final);
  }

  const auto n_steps = static_cast<long>(out.steps.size());
  Json aggregates{
      {"steps", n_steps},
      {"newton_total", out.total_newton},
      {"gmres_total", out.total_gmres},
      {"chemistry_total", out.total_chem},
      {"retries_total", out.total_retries},
      {"newton_per_step_mean",
       n_steps > 0 ? double(out.total_newton) / double(n_steps) : 0.0},
      {"gmres_per_newton_mean",
       out.total_newton > 0 ? double(out.total_gmres) / double(out.total_newton)
                            : 0.0},
      {"chemistry_per_step_mean",
       n_steps > 0 ? double(out.total_chem) / double(n_steps) : 0.0},
      {"wall_seconds", out.wall_seconds},
  };

  return Json{
      {"code_version", RT_VERSION},
      {"problem_name", cfg.problem.name},
      {"problem_hash", cfg.problem_hash},
      {"conventions",
       {{"equilibrium_constants", "log10 in configs, natural log internally"},
        {"cfl", "dt * max over cells of q / (porosity * cell width)"},
        {"csv_precision", "%.17g"},
        {"profile_columns", "total = mobile + immobile per mobile total"}}},
      {"solver", cfg.solver_json},
      {"mesh",
       {{"cells", mesh.n_cells()},
        {"length", mesh.length()},
        {"segments", static_cast<int>(cfg.problem.segments.size())}}},
      {"totals", {{"mobile", mobile}, {"immobile", immobile}}},
      {"completed", out.completed},
      {"failure", out.failure},
      {"time_reached", out.final_state.time},
      {"steps", std::move(steps)},
      {"aggregates", std::move(aggregates)},
      {"outputs", output_files},
  };
}

void write_steps_jsonl(const std::string& path, const RunOutput& out) {
  std::ofstream f = open_out(path);
  for (const auto& s : out.steps) {
    const Json line{{"t", s.t},
                    {"dt", s.dt},
                    {"newton", s.outer_iters},
                    {"gmres", s.gmres_iters},
                    {"chemistry", s.chem_iters},
                    {"retries", s.retries},
                    {"residual_initial", s.residual_initial},
                    {"residual_final", s.residual_final}};
    f << line.dump() << "\n";
  }
}

Json checkpoint_json(const RunConfig& cfg, const SystemState& state) {
  const auto& red = *cfg.problem.reduction;
  const int nh = static_cast<int>(state.C.cols());
  const int nc = static_cast<int>(state.C.rows());
  const int nbar = static_cast<int>(state.Tbar.rows());
  const int n2 = static_cast<int>(red.Q2().cols());

  auto flat = [](const Mat& m) {
    std::vector<double> v(m.size());
    Eigen::Map<Mat>(v.data(), m.rows(), m.cols()) = m;
    return v;
  };
  std::vector<double> y2(static_cast<size_t>(n2) * nh);
  for (int j = 0; j < nh; ++j)
    Eigen::Map<Vec>(y2.data() + static_cast<size_t>(j) * n2, n2) =
        state.cell_states[j].y2;

  return Json{{"format", "rtsolve-checkpoint-1"},
              {"problem_hash", cfg.problem_hash},
              {"time", state.time},
              {"step_index", state.step_index},
              {"n_cells", nh},
              {"mobile_totals", nc},
              {"immobile_totals", nbar},
              {"reduced_dim", n2},
              {"C", flat(state.C)},
              {"Cbar", flat(state.Cbar)},
              {"Tbar", flat(state.Tbar)},
              {"y2", y2}};
}

SystemState state_from_checkpoint(const Json& ckpt, const RunConfig& cfg) {
  if (ckpt.value("format", "") != "rtsolve-checkpoint-1")
    throw ConfigError("not a checkpoint file (missing format tag)");
  const std::string h = ckpt.value("problem_hash", "");
  if (h != cfg.problem_hash)
    throw ConfigError("checkpoint was produced for a different problem (" + h +
                      " vs " + cfg.problem_hash + ")");

  const auto& red = *cfg.problem.reduction;
  const Mesh1D mesh = build_mesh(cfg.problem.segments);
  const int nh = ckpt.at("n_cells").get<int>();
  const int nc = ckpt.at("mobile_totals").get<int>();
  const int nbar = ckpt.at("immobile_totals").get<int>();
  const int n2 = ckpt.at("reduced_dim").get<int>();
  if (nh != mesh.n_cells() || nc != red.system().n_mobile_totals() ||
      nbar != red.system().n_immobile_totals() ||
      n2 != static_cast<int>(red.Q2().cols()))
    throw ConfigError("checkpoint dimensions do not match the configuration");

  auto unflat = [&](const char* key, int rows, int cols) {
    const auto v = ckpt.at(key).get<std::vector<double>>();
    if (static_cast<int>(v.size()) != rows * cols)
      throw ConfigError(std::string("checkpoint field '") + key +
                        "' has the wrong size");
    return Mat(Eigen::Map<const Mat>(v.data(), rows, cols));
  };

  SystemState st;
  st.C = unflat("C", nc, nh);
  st.Cbar = unflat("Cbar", nc, nh);
  st.Tbar = unflat("Tbar", nbar, nh);
  st.time = ckpt.at("time").get<double>();
  st.step_index = ckpt.at("step_index").get<long>();

  const Mat y2 = unflat("y2", n2, nh);
  const double clamp = cfg.solver.controls.chemistry.exp_clamp;
  st.cell_states.resize(nh);
  for (int j = 0; j < nh; ++j) {
    auto& cs = st.cell_states[j];
    cs.y2 = y2.col(j);
    cs.z = (red.b1() + red.Q2() * cs.y2).cwiseMin(clamp).cwiseMax(-clamp);
    cs.xi = cs.z.array().exp();
    Vec tau(nc + nbar);
    tau << st.C.col(j) + st.Cbar.col(j), st.Tbar.col(j);
    cs.tau_reduced = red.to_reduced(tau);
    cs.converged = true;
    cs.newton_iters = 0;
    cs.residual_norm =
        (red.Q2().transpose() * cs.xi - cs.tau_reduced).lpNorm<Eigen::Infinity>();
  }
  return st;
}

std::string compare_table(const std::vector<Json>& reports) {
  if (reports.empty()) throw ConfigError("no reports to compare");
  const std::string hash0 = reports[0].value("problem_hash", "");
  for (const auto& r : reports) {
    const std::string h = r.value("problem_hash", "");
    if (h != hash0)
      throw ConfigError("reports describe different problems: " + hash0 +
                        " vs " + h);
  }

  std::vector<std::array<std::string, 8>> rows;
  rows.push_back({"method", "scheme", "cells", "steps", "newton", "gmres",
                  "chemistry", "wall_s"});
  for (const auto& r : reports) {
    const Json& s = r.at("solver");
    std::string method = s.value("formulation", "?");
    const std::string pc = s.value("preconditioner", "none");
    if (pc != "none") method += "+" + pc;
    const Json& a = r.at("aggregates");
    char wall[32];
    std::snprintf(wall, sizeof wall, "%.3f", a.value("wall_seconds", 0.0));
    rows.push_back({method, s.value("scheme", "?"),
                    std::to_string(r.at("mesh").value("cells", 0)),
                    std::to_string(a.value("steps", 0L)),
                    std::to_string(a.value("newton_total", 0L)),
                    std::to_string(a.value("gmres_total", 0L)),
                    std::to_string(a.value("chemistry_total", 0L)), wall});
  }

  std::array<size_t, 8> width{};
  for (const auto& row : rows)
    for (size_t c = 0; c < row.size(); ++c)
      width[c] = std::max(width[c], row[c].size());

  std::ostringstream os;
  for (size_t i = 0; i < rows.size(); ++i) {
    for (size_t c = 0; c < rows[i].size(); ++c) {
      os << rows[i][c] << std::string(width[c] - rows[i][c].size(), ' ');
      os << (c + 1 < rows[i].size() ? "  " : "");
    }
    os << "\n";
    if (i == 0) {
      for (size_t c = 0; c < width.size(); ++c)
        os << std::string(width[c], '-') << (c + 1 < width.size() ? "  " : "");
      os << "\n";
    }
  }
  return os.str();
}

}  // namespace rt
