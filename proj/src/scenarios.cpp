#include "rt/scenarios.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <sstream>

#include "rt/errors.hpp"

namespace rt {

namespace {

void check_params(const Json& params, const std::string& name,
                  std::initializer_list<const char*> allowed) {
  if (!params.is_object())
    throw ConfigError("problem.params for '" + name + "': expected an object");
  for (const auto& item : params.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || item.key() == a;
    if (!ok)
      throw ConfigError("problem.params for '" + name + "': unknown param '" +
                        item.key() + "'");
  }
}

Json species_entry(const char* name, bool mobile) {
  return Json{{"name", name}, {"mobile", mobile}};
}

Json reaction(Json coefficients, double log10_k) {
  return Json{{"coefficients", std::move(coefficients)}, {"log10_k", log10_k}};
}

}  // namespace

Json momas_easy_1d(const Json& params) {
  check_params(params, "momas-easy-1d",
               {"n", "diffusion_a", "diffusion_b", "cfl", "schedule", "t_end"});
  const int n = params.value("n", 96);
  if (n <= 0 || n % 96 != 0)
    throw ConfigError("momas-easy-1d: n must be a positive multiple of 96, got " +
                      std::to_string(n));
  const int k = n / 96;
  const double t_end = params.value("t_end", 6000.0);

  const Json da = params.contains("diffusion_a") ? params["diffusion_a"]
                                                 : Json(nullptr);
  const Json db = params.contains("diffusion_b") ? params["diffusion_b"]
                                                 : Json(nullptr);

  Json schedule;
  if (params.value("schedule", "") == "variable") {
    static const double untils[] = {20, 100, 2500, 3200, 5000, 5100, 6000};
    static const double cfls[] = {1, 5, 10, 5, 40, 1, 40};
    schedule = Json::array();
    for (int i = 0; i < 7; ++i)
      schedule.push_back(Json{{"until", untils[i]}, {"cfl", cfls[i]}});
  } else {
    schedule = Json::array(
        {Json{{"until", std::max(t_end, 6000.0)},
              {"cfl", params.value("cfl", 1.0)}}});
  }

  const Json inject{{"T(X1)", 0.3}, {"T(X2)", 0.3}, {"T(X3)", 0.3},
                    {"T(X4)", 0.0}};
  const Json leach{{"T(X1)", 0.0}, {"T(X2)", -2.0}, {"T(X3)", 0.0},
                   {"T(X4)", 2.0}};

  Json problem{
      {"name", "momas-easy-1d"},
      {"notes",
       Json::array(
           {"Heterogeneous 2.1-long column: a 0.1-long high-porosity, "
            "strongly sorbing band sits on [1.0, 1.1] between two identical "
            "coarse segments; the mesh refines the band (16/96 of the cells "
            "on 1/21 of the length).",
            "No default dispersion is shipped: the segment 'diffusion' "
            "fields stay null until diffusion_a (outer segments) and "
            "diffusion_b (band) are given explicitly.",
            "cfl fixes the step so the worst cell's advective Courant "
            "number equals it; schedule='variable' selects a staged ladder "
            "that tightens around the feed switch at t=5000."})},
      {"species",
       Json::array({species_entry("X1", true), species_entry("X2", true),
                    species_entry("X3", true), species_entry("X4", true),
                    species_entry("C1", true), species_entry("C2", true),
                    species_entry("C3", true), species_entry("C4", true),
                    species_entry("C5", true), species_entry("S", false),
                    species_entry("CS1", false), species_entry("CS2", false)})},
      {"reactions",
       Json::array(
           {reaction(Json{{"X2", 1}, {"C1", 1}}, -12.0),
            reaction(Json{{"X2", -1}, {"X3", -1}, {"C2", 1}}, 0.0),
            reaction(Json{{"X2", 1}, {"X4", -1}, {"C3", 1}}, 0.0),
            reaction(Json{{"X2", 4}, {"X3", -1}, {"X4", -3}, {"C4", 1}}, -1.0),
            reaction(Json{{"X2", -4}, {"X3", -3}, {"X4", -1}, {"C5", 1}}, 35.0),
            reaction(Json{{"X2", -3}, {"X3", -1}, {"S", -1}, {"CS1", 1}}, 6.0),
            reaction(Json{{"X2", 3}, {"X4", -1}, {"S", -2}, {"CS2", 1}},
                     -1.0)})},
      {"mesh",
       {{"segments",
         Json::array({Json{{"length", 1.0},
                           {"cells", 40 * k},
                           {"porosity", 0.25},
                           {"diffusion", da}},
                      Json{{"length", 0.1},
                           {"cells", 16 * k},
                           {"porosity", 0.5},
                           {"diffusion", db}},
                      Json{{"length", 1.0},
                           {"cells", 40 * k},
                           {"porosity", 0.25},
                           {"diffusion", da}}})}}},
      {"darcy_flux", 5.5e-3},
      {"boundary",
       {{"mode", "inflow_dirichlet"},
        {"windows",
         Json::array({Json{{"until", 5000.0}, {"totals", inject}},
                      Json{{"until", std::max(t_end, 6000.0)},
                           {"totals", leach}}})}}},
      {"initial",
       {{"kind", "totals"},
        {"zones",
         Json::array({Json{{"x_min", 0.0},
                           {"x_max", 1.0},
                           {"totals", leach},
                           {"immobile_totals", {{"Tbar(S)", 1.0}}}},
                      Json{{"x_min", 1.0},
                           {"x_max", 1.1},
                           {"totals", leach},
                           {"immobile_totals", {{"Tbar(S)", 10.0}}}},
                      Json{{"x_min", 1.1},
                           {"x_max", 2.1},
                           {"totals", leach},
                           {"immobile_totals", {{"Tbar(S)", 1.0}}}}})}}},
      {"time", {{"t_end", t_end}, {"schedule", schedule}}},
  };

  return Json{{"problem", std::move(problem)},
              {"solver", {{"formulation", "h"}, {"scheme", "fully_implicit"}}},
              {"output",
               {{"directory", "momas-easy-1d"},
                {"snapshot_times", Json::array({10.0, 5010.0})},
                {"elution", true}}}};
}

Json ion_exchange_valocchi(const Json& params) {
  check_params(params, "ion-exchange-valocchi", {"n", "dt", "t_end"});
  const int n = params.value("n", 200);
  if (n <= 0)
    throw ConfigError("ion-exchange-valocchi: n must be positive");
  const double dt = params.value("dt", 0.11089);
  const double t_end = params.value("t_end", 5000.0);

  Json problem{
      {"name", "ion-exchange-valocchi"},
      {"notes",
       Json::array(
           {"Injection of a dilute four-ion water into a column whose "
            "exchange sites start in equilibrium with the native water; "
            "chloride passes through as a tracer while the cations trade "
            "places on the sites.",
            "The native water is prescribed as aqueous concentrations; the "
            "initially sorbed amounts follow from equilibrium with it at "
            "total site capacity Tbar(S)=750.",
            "The default dt=0.11089 puts the advective Courant number at 1 "
            "on the default 200-cell mesh."})},
      {"species",
       Json::array({species_entry("Na", true), species_entry("Ca", true),
                    species_entry("Mg", true), species_entry("Cl", true),
                    species_entry("S", false), species_entry("SNa", false),
                    species_entry("S2Ca", false),
                    species_entry("S2Mg", false)})},
      {"reactions",
       Json::array({reaction(Json{{"Na", -1}, {"S", -1}, {"SNa", 1}}, 4.0),
                    reaction(Json{{"Ca", -1}, {"S", -2}, {"S2Ca", 1}}, 8.602),
                    reaction(Json{{"Mg", -1}, {"S", -2}, {"S2Mg", 1}},
                             8.355)})},
      {"mesh",
       {{"segments", Json::array({Json{{"length", 16.0},
                                       {"cells", n},
                                       {"porosity", 0.35},
                                       {"diffusion", 0.74235}}})}}},
      {"darcy_flux", 0.2525},
      {"boundary",
       {{"mode", "inflow_dirichlet"},
        {"windows", Json::array({Json{{"until", t_end},
                                      {"totals",
                                       {{"T(Na)", 9.4},
                                        {"T(Ca)", 2.12},
                                        {"T(Mg)", 0.494},
                                        {"T(Cl)", 9.03}}}}})}}},
      {"initial",
       {{"kind", "aqueous_components"},
        {"zones", Json::array({Json{{"x_min", 0.0},
                                    {"x_max", 16.0},
                                    {"components",
                                     {{"Na", 248.0},
                                      {"Ca", 165.0},
                                      {"Mg", 168.0},
                                      {"Cl", 161.0}}},
                                    {"immobile_totals", {{"Tbar(S)", 750.0}}}}})}}},
      {"time",
       {{"t_end", t_end},
        {"schedule", Json::array({Json{{"until", t_end}, {"dt", dt}}})}}},
  };

  return Json{{"problem", std::move(problem)},
              {"solver", {{"formulation", "h"}, {"scheme", "fully_implicit"}}},
              {"output",
               {{"directory", "ion-exchange-valocchi"},
                {"snapshot_times", Json::array({t_end})},
                {"elution", true}}}};
}

SystemState initial_state(const RunConfig& cfg) {
  const Mesh1D mesh = build_mesh(cfg.problem.segments);
  const auto& red = *cfg.problem.reduction;
  const auto& sys = red.system();
  const int nh = mesh.n_cells();
  const int nc = sys.n_mobile_totals();
  const int nbar = sys.n_immobile_totals();

  Field mobile(nc, nh);
  Mat tbar(nbar, nh);
  for (int j = 0; j < nh; ++j) {
    const double x = mesh.x_center(j);
    const InitialZone* zone = nullptr;
    for (const auto& z : cfg.problem.zones)
      if (z.x_min <= x && x <= z.x_max) {
        zone = &z;
        break;
      }
    if (!zone) {
      std::ostringstream os;
      os << "initial zones do not cover the cell centered at x=" << x;
      throw ConfigError(os.str());
    }
    mobile.col(j) = zone->mobile;
    if (nbar > 0) tbar.col(j) = zone->immobile_totals;
  }

  const auto& opts = cfg.solver.controls.chemistry;
  const Exec exec = cfg.solver.controls.exec;
  return cfg.problem.initial_is_aqueous
             ? make_state_from_aqueous(red, mobile, tbar, exec, opts)
             : make_state_from_totals(red, mobile, tbar, exec, opts);
}

RunOutput run_simulation(const RunConfig& cfg, const SystemState* restart) {
  const auto& prob = cfg.problem;
  const Mesh1D mesh = build_mesh(prob.segments);
  const TransportAssembly asmb =
      assemble_transport(mesh, prob.darcy_flux, prob.mode);
  const auto& red = *prob.reduction;
  const int nc = red.system().n_mobile_totals();
  const double t_end = prob.t_end;

  RunOutput out;
  SystemState state = restart ? *restart : initial_state(cfg);
  const int outlet = mesh.n_cells() - 1;

  // Times the march must land on exactly: schedule and boundary switches,
  // snapshot times, and the horizon itself.
  std::vector<double> events;
  for (const auto& e : prob.schedule) events.push_back(e.until);
  for (const auto& w : prob.windows) events.push_back(w.until);
  for (double s : cfg.output.snapshot_times) events.push_back(s);
  events.push_back(t_end);
  std::sort(events.begin(), events.end());
  events.erase(std::unique(events.begin(), events.end()), events.end());
  events.erase(std::remove_if(events.begin(), events.end(),
                              [&](double e) {
                                return e <= state.time || e > t_end;
                              }),
               events.end());

  const double worst_rate =
      asmb.cfl_scale.size() > 0 ? asmb.cfl_scale.maxCoeff() : 0.0;
  auto nominal_dt = [&](double t) {
    for (const auto& e : prob.schedule)
      if (t < e.until) return e.is_cfl ? e.value / worst_rate : e.value;
    const auto& e = prob.schedule.back();
    return e.is_cfl ? e.value / worst_rate : e.value;
  };
  auto inflow_totals = [&](double t) -> Vec {
    if (prob.mode == BoundaryMode::ClosedBox || prob.windows.empty())
      return Vec::Zero(nc);
    for (const auto& w : prob.windows)
      if (t < w.until) return w.totals;
    return prob.windows.back().totals;
  };
  auto is_snapshot_time = [&](double t) {
    return std::find(cfg.output.snapshot_times.begin(),
                     cfg.output.snapshot_times.end(),
                     t) != cfg.output.snapshot_times.end();
  };

  std::map<double, std::unique_ptr<StepOperators>> ops_cache;
  auto ops_for = [&](double dt) -> const StepOperators& {
    auto it = ops_cache.find(dt);
    if (it == ops_cache.end())
      it = ops_cache
               .emplace(dt, std::make_unique<StepOperators>(asmb, dt,
                                                            cfg.solver.scheme))
               .first;
    return *it->second;
  };

  out.elution_times.push_back(state.time);
  out.elution.push_back(state.C.col(outlet));
  if (is_snapshot_time(state.time))
    out.snapshots.push_back({state.time, state.C, state.Cbar});

  const auto t_start = std::chrono::steady_clock::now();
  while (state.time < t_end) {
    const double t = state.time;
    const double ev = *std::upper_bound(events.begin(), events.end(), t);
    const double dtn = nominal_dt(t);
    double dt = dtn;
    bool hits_event = dtn >= ev - t;
    if (hits_event) dt = ev - t;

    const Vec cd = inflow_totals(t);
    int retries = 0;
    StepOutcome oc;
    for (;;) {
      oc = step_newton_krylov(red, ops_for(dt), state, cd,
                              cfg.solver.controls);
      if (oc.converged) break;
      if (retries == cfg.solver.dt_retry_max) {
        std::ostringstream os;
        os << "time step failed at t=" << t << " after " << retries
           << " halvings (dt=" << dt << "): " << oc.failure;
        out.failure = os.str();
        out.completed = false;
        out.final_state = std::move(state);
        out.wall_seconds = std::chrono::duration<double>(
                               std::chrono::steady_clock::now() - t_start)
                               .count();
        return out;
      }
      ++retries;
      dt *= 0.5;
      hits_event = false;
    }

    state = std::move(oc.next);
    if (hits_event) state.time = ev;

    out.steps.push_back({state.time, dt, oc.newton_iters, oc.gmres_iters,
                         oc.chem_iters, retries, oc.residual_initial,
                         oc.residual_final});
    out.total_newton += oc.newton_iters;
    out.total_gmres += oc.gmres_iters;
    out.total_chem += oc.chem_iters;
    out.total_retries += retries;

    out.elution_times.push_back(state.time);
    out.elution.push_back(state.C.col(outlet));
    if (hits_event && is_snapshot_time(ev))
      out.snapshots.push_back({ev, state.C, state.Cbar});
  }
  out.wall_seconds = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - t_start)
                         .count();

  out.completed = true;
  out.final_state = std::move(state);
  return out;
}

}  // namespace rt
