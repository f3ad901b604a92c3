#include "rt/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "rt/errors.hpp"
#include "rt/scenarios.hpp"

namespace rt {

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ConfigError(path + ": " + what);
}

void require_object(const Json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
}

void check_keys(const Json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
  require_object(obj, path);
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || item.key() == a;
    if (!ok) fail(path, "unknown key '" + item.key() + "'");
  }
}

const Json& get(const Json& obj, const std::string& path, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(path, std::string("missing key '") + key + "'");
  return *it;
}

double get_num(const Json& obj, const std::string& path, const char* key) {
  const Json& v = get(obj, path, key);
  if (!v.is_number()) fail(path + "." + key, "expected a number");
  return v.get<double>();
}

double num_or(const Json& obj, const std::string& path, const char* key,
              double dflt) {
  auto it = obj.find(key);
  if (it == obj.end()) return dflt;
  if (!it->is_number()) fail(path + "." + key, "expected a number");
  return it->get<double>();
}

int int_or(const Json& obj, const std::string& path, const char* key,
           int dflt) {
  auto it = obj.find(key);
  if (it == obj.end()) return dflt;
  if (!it->is_number_integer()) fail(path + "." + key, "expected an integer");
  return it->get<int>();
}

bool bool_or(const Json& obj, const std::string& path, const char* key,
             bool dflt) {
  auto it = obj.find(key);
  if (it == obj.end()) return dflt;
  if (!it->is_boolean()) fail(path + "." + key, "expected a boolean");
  return it->get<bool>();
}

std::string str_or(const Json& obj, const std::string& path, const char* key,
                   const std::string& dflt) {
  auto it = obj.find(key);
  if (it == obj.end()) return dflt;
  if (!it->is_string()) fail(path + "." + key, "expected a string");
  return it->get<std::string>();
}

// Values keyed by exact names: every name required, nothing else allowed.
Vec named_values(const Json& obj, const std::string& path,
                 const std::vector<std::string>& names) {
  require_object(obj, path);
  Vec v(names.size());
  for (size_t i = 0; i < names.size(); ++i) {
    auto it = obj.find(names[i]);
    if (it == obj.end()) fail(path, "missing entry '" + names[i] + "'");
    if (!it->is_number()) fail(path + "." + names[i], "expected a number");
    v(static_cast<int>(i)) = it->get<double>();
  }
  if (obj.size() != names.size())
    for (const auto& item : obj.items())
      if (std::find(names.begin(), names.end(), item.key()) == names.end())
        fail(path, "unknown entry '" + item.key() + "'");
  return v;
}

std::shared_ptr<const EquilibriumReduction> parse_system(const Json& prob) {
  const Json& jsp = get(prob, "problem", "species");
  if (!jsp.is_array() || jsp.empty())
    fail("problem.species", "expected a non-empty array");
  std::vector<Species> species;
  for (size_t i = 0; i < jsp.size(); ++i) {
    const std::string path = "problem.species[" + std::to_string(i) + "]";
    check_keys(jsp[i], path, {"name", "mobile"});
    Species s;
    s.name = get(jsp[i], path, "name").get<std::string>();
    const Json& m = get(jsp[i], path, "mobile");
    if (!m.is_boolean()) fail(path + ".mobile", "expected a boolean");
    s.mobile = m.get<bool>();
    species.push_back(std::move(s));
  }

  const Json& jrx = get(prob, "problem", "reactions");
  if (!jrx.is_array()) fail("problem.reactions", "expected an array");
  const int ns = static_cast<int>(species.size());
  const int nr = static_cast<int>(jrx.size());
  Mat S = Mat::Zero(nr, ns);
  Vec logk(nr);
  for (int r = 0; r < nr; ++r) {
    const std::string path = "problem.reactions[" + std::to_string(r) + "]";
    check_keys(jrx[r], path, {"coefficients", "log10_k"});
    logk(r) = get_num(jrx[r], path, "log10_k") * std::log(10.0);
    const Json& co = get(jrx[r], path, "coefficients");
    require_object(co, path + ".coefficients");
    for (const auto& item : co.items()) {
      int idx = -1;
      for (int j = 0; j < ns; ++j)
        if (species[j].name == item.key()) idx = j;
      if (idx < 0)
        fail(path + ".coefficients", "unknown species '" + item.key() + "'");
      if (!item.value().is_number())
        fail(path + ".coefficients." + item.key(), "expected a number");
      S(r, idx) = item.value().get<double>();
    }
  }
  return std::make_shared<EquilibriumReduction>(
      StoichiometricSystem(std::move(species), std::move(S), std::move(logk)));
}

std::vector<MeshSegment> parse_mesh(const Json& prob) {
  const Json& jm = get(prob, "problem", "mesh");
  check_keys(jm, "problem.mesh", {"segments"});
  const Json& segs = get(jm, "problem.mesh", "segments");
  if (!segs.is_array() || segs.empty())
    fail("problem.mesh.segments", "expected a non-empty array");
  std::vector<MeshSegment> out;
  for (size_t i = 0; i < segs.size(); ++i) {
    const std::string path = "problem.mesh.segments[" + std::to_string(i) + "]";
    check_keys(segs[i], path, {"length", "cells", "porosity", "diffusion"});
    MeshSegment s;
    s.length = get_num(segs[i], path, "length");
    const Json& c = get(segs[i], path, "cells");
    if (!c.is_number_integer()) fail(path + ".cells", "expected an integer");
    s.n_cells = c.get<int>();
    s.porosity = get_num(segs[i], path, "porosity");
    const Json& d = get(segs[i], path, "diffusion");
    if (d.is_null())
      fail(path + ".diffusion",
           "no value chosen: this problem's datum does not fix a diffusion "
           "coefficient, supply one explicitly (built-ins take diffusion_a / "
           "diffusion_b params)");
    if (!d.is_number()) fail(path + ".diffusion", "expected a number");
    s.diffusion = d.get<double>();
    out.push_back(s);
  }
  return out;
}

Scheme parse_scheme(const std::string& s, const std::string& path) {
  if (s == "fully_implicit") return Scheme::FullyImplicit;
  if (s == "explicit_advection") return Scheme::ExplicitAdvection;
  if (s == "splitting") return Scheme::Splitting;
  fail(path, "unknown scheme '" + s +
                 "' (fully_implicit | explicit_advection | splitting)");
}

Formulation parse_formulation(const std::string& s, const std::string& path) {
  if (s == "f") return Formulation::F;
  if (s == "g") return Formulation::G;
  if (s == "h") return Formulation::H;
  if (s == "sia") return Formulation::SIA;
  fail(path, "unknown formulation '" + s + "' (f | g | h | sia)");
}

PrecondKind parse_precond(const std::string& s, const std::string& path) {
  if (s == "none") return PrecondKind::None;
  if (s == "block_jacobi" || s == "jacobi") return PrecondKind::BlockJacobi;
  if (s == "block_gauss_seidel" || s == "gauss_seidel" || s == "gauss-seidel")
    return PrecondKind::BlockGaussSeidel;
  fail(path, "unknown preconditioner '" + s +
                 "' (none | block_jacobi | block_gauss_seidel)");
}

}  // namespace

Json builtin_config(const std::string& name, const Json& params) {
  if (name == "momas-easy-1d") return momas_easy_1d(params);
  if (name == "ion-exchange-valocchi") return ion_exchange_valocchi(params);
  throw ConfigError("unknown built-in problem '" + name +
                    "' (momas-easy-1d | ion-exchange-valocchi)");
}

void apply_override(Json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not of form path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);

  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::parse_error&) {
    value = text;  // bare strings need no quotes
  }

  Json* cur = &config;
  size_t at = 0;
  while (true) {
    const size_t dot = path.find('.', at);
    const std::string key = path.substr(at, dot - at);
    if (key.empty())
      throw ConfigError("override '" + assignment + "' has an empty path part");
    const bool last = dot == std::string::npos;
    if (cur->is_array()) {
      char* end = nullptr;
      const long idx = std::strtol(key.c_str(), &end, 10);
      if (*end != '\0' || idx < 0 ||
          idx >= static_cast<long>(cur->size()))
        throw ConfigError("override '" + assignment + "': bad array index '" +
                          key + "'");
      cur = &(*cur)[idx];
    } else {
      if (!cur->is_object()) *cur = Json::object();
      cur = &(*cur)[key];
    }
    if (last) {
      *cur = value;
      return;
    }
    at = dot + 1;
  }
}

Json expand_builtins(Json config) {
  if (!config.is_object()) throw ConfigError("config root must be an object");
  auto pit = config.find("problem");
  if (pit == config.end() || !pit->is_object() || !pit->contains("builtin"))
    return config;

  const Json& b = (*pit)["builtin"];
  if (!b.is_string()) throw ConfigError("problem.builtin: expected a string");
  const Json params = pit->value("params", Json::object());

  Json full = builtin_config(b.get<std::string>(), params);
  pit->erase("builtin");
  pit->erase("params");
  if (pit->empty()) config.erase("problem");
  full.merge_patch(config);  // user keys win over generated defaults
  return full;
}

std::string problem_hash(const Json& problem_node) {
  Json canon = problem_node;
  canon.erase("name");
  canon.erase("notes");
  const std::string s = canon.dump();
  unsigned long long h = 1469598103934665603ULL;  // FNV-1a 64
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a:%016llx", h);
  return buf;
}

RunConfig parse_config(const Json& raw) {
  const Json config = expand_builtins(raw);
  check_keys(config, "config", {"problem", "solver", "output"});

  RunConfig rc;
  const Json& prob = get(config, "config", "problem");
  check_keys(prob, "problem",
             {"name", "notes", "species", "reactions", "mesh", "darcy_flux",
              "boundary", "initial", "time"});
  rc.problem_json = prob;
  rc.problem_hash = problem_hash(prob);
  rc.problem.name = str_or(prob, "problem", "name", "unnamed");
  rc.problem.reduction = parse_system(prob);
  const auto& sys = rc.problem.reduction->system();
  const auto& names = sys.total_names();
  const std::vector<std::string> mobile_names(
      names.begin(), names.begin() + sys.n_mobile_totals());
  const std::vector<std::string> immobile_names(
      names.begin() + sys.n_mobile_totals(), names.end());

  rc.problem.segments = parse_mesh(prob);
  rc.problem.darcy_flux = get_num(prob, "problem", "darcy_flux");
  if (rc.problem.darcy_flux < 0.0)
    fail("problem.darcy_flux", "must be non-negative (flow runs left to right)");

  // time + schedule
  {
    const Json& jt = get(prob, "problem", "time");
    check_keys(jt, "problem.time", {"t_end", "schedule"});
    rc.problem.t_end = get_num(jt, "problem.time", "t_end");
    if (rc.problem.t_end < 0.0) fail("problem.time.t_end", "must be >= 0");
    const Json& js = get(jt, "problem.time", "schedule");
    if (!js.is_array() || js.empty())
      fail("problem.time.schedule", "expected a non-empty array");
    double prev = 0.0;
    for (size_t i = 0; i < js.size(); ++i) {
      const std::string path =
          "problem.time.schedule[" + std::to_string(i) + "]";
      check_keys(js[i], path, {"until", "cfl", "dt"});
      ScheduleEntry e;
      e.until = get_num(js[i], path, "until");
      if (e.until <= prev)
        fail(path + ".until", "schedule times must be strictly increasing");
      prev = e.until;
      const bool has_cfl = js[i].contains("cfl");
      const bool has_dt = js[i].contains("dt");
      if (has_cfl == has_dt)
        fail(path, "exactly one of 'cfl' or 'dt' must be given");
      e.is_cfl = has_cfl;
      e.value = get_num(js[i], path, has_cfl ? "cfl" : "dt");
      if (e.value <= 0.0)
        fail(path, "step control value must be positive");
      if (e.is_cfl && rc.problem.darcy_flux == 0.0)
        fail(path, "cfl-based steps need a positive darcy_flux");
      rc.problem.schedule.push_back(e);
    }
    if (prev < rc.problem.t_end)
      fail("problem.time.schedule", "must cover the horizon: last until " +
                                        std::to_string(prev) + " < t_end");
  }

  // boundary
  {
    const Json& jb = get(prob, "problem", "boundary");
    check_keys(jb, "problem.boundary", {"mode", "windows"});
    const std::string mode = str_or(jb, "problem.boundary", "mode",
                                    "inflow_dirichlet");
    if (mode == "inflow_dirichlet")
      rc.problem.mode = BoundaryMode::InflowDirichlet;
    else if (mode == "closed_box")
      rc.problem.mode = BoundaryMode::ClosedBox;
    else
      fail("problem.boundary.mode",
           "unknown mode '" + mode + "' (inflow_dirichlet | closed_box)");

    if (rc.problem.mode == BoundaryMode::InflowDirichlet) {
      const Json& jw = get(jb, "problem.boundary", "windows");
      if (!jw.is_array() || jw.empty())
        fail("problem.boundary.windows", "expected a non-empty array");
      double prev = 0.0;
      for (size_t i = 0; i < jw.size(); ++i) {
        const std::string path =
            "problem.boundary.windows[" + std::to_string(i) + "]";
        check_keys(jw[i], path, {"until", "totals"});
        TimeWindow w;
        w.until = get_num(jw[i], path, "until");
        if (w.until <= prev)
          fail(path + ".until", "window times must be strictly increasing");
        prev = w.until;
        w.totals =
            named_values(get(jw[i], path, "totals"), path + ".totals",
                         mobile_names);
        rc.problem.windows.push_back(std::move(w));
      }
      if (prev < rc.problem.t_end)
        fail("problem.boundary.windows",
             "must cover the horizon: last until " + std::to_string(prev) +
                 " < t_end");
    } else if (jb.contains("windows")) {
      fail("problem.boundary.windows",
           "a closed box takes no boundary values");
    }
  }

  // initial state
  {
    const Json& ji = get(prob, "problem", "initial");
    check_keys(ji, "problem.initial", {"kind", "zones"});
    const std::string kind = str_or(ji, "problem.initial", "kind", "totals");
    if (kind == "totals")
      rc.problem.initial_is_aqueous = false;
    else if (kind == "aqueous_components")
      rc.problem.initial_is_aqueous = true;
    else
      fail("problem.initial.kind",
           "unknown kind '" + kind + "' (totals | aqueous_components)");

    std::vector<std::string> comp_names;
    for (int i : sys.component_species())
      if (sys.species()[i].mobile) comp_names.push_back(sys.species()[i].name);

    const Json& jz = get(ji, "problem.initial", "zones");
    if (!jz.is_array() || jz.empty())
      fail("problem.initial.zones", "expected a non-empty array");
    for (size_t i = 0; i < jz.size(); ++i) {
      const std::string path =
          "problem.initial.zones[" + std::to_string(i) + "]";
      const char* mobile_key =
          rc.problem.initial_is_aqueous ? "components" : "totals";
      check_keys(jz[i], path,
                 {"x_min", "x_max", "totals", "components", "immobile_totals"});
      InitialZone z;
      z.x_min = get_num(jz[i], path, "x_min");
      z.x_max = get_num(jz[i], path, "x_max");
      if (!(z.x_max > z.x_min)) fail(path, "x_max must exceed x_min");
      z.mobile = named_values(
          get(jz[i], path, mobile_key), path + "." + mobile_key,
          rc.problem.initial_is_aqueous ? comp_names : mobile_names);
      if (!immobile_names.empty())
        z.immobile_totals =
            named_values(get(jz[i], path, "immobile_totals"),
                         path + ".immobile_totals", immobile_names);
      else
        z.immobile_totals = Vec();
      rc.problem.zones.push_back(std::move(z));
    }
  }

  // solver
  {
    Json jso = config.value("solver", Json::object());
    check_keys(jso, "solver",
               {"formulation", "preconditioner", "scheme", "newton", "gmres",
                "forcing", "line_search", "chemistry", "sia", "dt_retry_max",
                "parallel"});
    auto& ctl = rc.solver.controls;
    ctl.formulation =
        parse_formulation(str_or(jso, "solver", "formulation", "h"),
                          "solver.formulation");
    ctl.precond = parse_precond(
        str_or(jso, "solver", "preconditioner", "none"),
        "solver.preconditioner");
    if (ctl.precond != PrecondKind::None && ctl.formulation != Formulation::F)
      fail("solver.preconditioner",
           std::string("invalid combination: block preconditioners apply to "
                       "formulation f only, not '") +
               formulation_name(ctl.formulation) + "'");
    rc.solver.scheme = parse_scheme(
        str_or(jso, "solver", "scheme", "fully_implicit"), "solver.scheme");

    const Json jn = jso.value("newton", Json::object());
    check_keys(jn, "solver.newton", {"rtol", "atol", "max_iters"});
    ctl.newton.rtol = num_or(jn, "solver.newton", "rtol", 1e-8);
    ctl.newton.atol = num_or(jn, "solver.newton", "atol", 1e-10);
    ctl.newton.max_iters = int_or(jn, "solver.newton", "max_iters", 50);

    const Json jg = jso.value("gmres", Json::object());
    check_keys(jg, "solver.gmres", {"max_iters"});
    ctl.newton.gmres_max_iters = int_or(jg, "solver.gmres", "max_iters", 40);

    const Json jf = jso.value("forcing", Json::object());
    check_keys(jf, "solver.forcing",
               {"eta0", "gamma", "alpha", "eta_max", "safeguard_threshold"});
    ctl.newton.forcing.eta0 = num_or(jf, "solver.forcing", "eta0", 0.9);
    ctl.newton.forcing.gamma = num_or(jf, "solver.forcing", "gamma", 0.9);
    ctl.newton.forcing.alpha = num_or(jf, "solver.forcing", "alpha", 2.0);
    ctl.newton.forcing.eta_max = num_or(jf, "solver.forcing", "eta_max", 0.9);
    ctl.newton.forcing.safeguard_threshold =
        num_or(jf, "solver.forcing", "safeguard_threshold", 0.1);

    const Json jl = jso.value("line_search", Json::object());
    check_keys(jl, "solver.line_search", {"armijo", "backtrack", "min_step"});
    ctl.newton.armijo_c = num_or(jl, "solver.line_search", "armijo", 1e-4);
    ctl.newton.backtrack = num_or(jl, "solver.line_search", "backtrack", 0.5);
    ctl.newton.min_step = num_or(jl, "solver.line_search", "min_step", 1e-12);

    const Json jc = jso.value("chemistry", Json::object());
    check_keys(jc, "solver.chemistry", {"tol", "max_iters", "exp_clamp"});
    ctl.chemistry.tol = num_or(jc, "solver.chemistry", "tol", 1e-10);
    ctl.chemistry.max_iters = int_or(jc, "solver.chemistry", "max_iters", 200);
    ctl.chemistry.exp_clamp =
        num_or(jc, "solver.chemistry", "exp_clamp", 200.0);

    const Json jsia = jso.value("sia", Json::object());
    check_keys(jsia, "solver.sia", {"tol", "max_sweeps"});
    ctl.sia.tol = num_or(jsia, "solver.sia", "tol", 1e-8);
    ctl.sia.max_sweeps = int_or(jsia, "solver.sia", "max_sweeps", 200);

    rc.solver.dt_retry_max = int_or(jso, "solver", "dt_retry_max", 5);
    ctl.exec = bool_or(jso, "solver", "parallel", false) ? Exec::Parallel
                                                         : Exec::Serial;

    // Normalized echo (defaults made explicit) for reports and comparisons.
    rc.solver_json = Json{
        {"formulation", formulation_name(ctl.formulation)},
        {"preconditioner", precond_name(ctl.precond)},
        {"scheme", scheme_name(rc.solver.scheme)},
        {"newton",
         {{"rtol", ctl.newton.rtol},
          {"atol", ctl.newton.atol},
          {"max_iters", ctl.newton.max_iters}}},
        {"gmres", {{"max_iters", ctl.newton.gmres_max_iters}}},
        {"forcing",
         {{"eta0", ctl.newton.forcing.eta0},
          {"gamma", ctl.newton.forcing.gamma},
          {"alpha", ctl.newton.forcing.alpha},
          {"eta_max", ctl.newton.forcing.eta_max},
          {"safeguard_threshold", ctl.newton.forcing.safeguard_threshold}}},
        {"line_search",
         {{"armijo", ctl.newton.armijo_c},
          {"backtrack", ctl.newton.backtrack},
          {"min_step", ctl.newton.min_step}}},
        {"chemistry",
         {{"tol", ctl.chemistry.tol},
          {"max_iters", ctl.chemistry.max_iters},
          {"exp_clamp", ctl.chemistry.exp_clamp}}},
        {"sia", {{"tol", ctl.sia.tol}, {"max_sweeps", ctl.sia.max_sweeps}}},
        {"dt_retry_max", rc.solver.dt_retry_max},
        {"parallel", ctl.exec == Exec::Parallel},
    };
  }

  // output
  {
    const Json jo = config.value("output", Json::object());
    check_keys(jo, "output",
               {"directory", "snapshot_times", "elution", "steps_log",
                "checkpoint"});
    rc.output.directory = str_or(jo, "output", "directory", rc.problem.name);
    if (jo.contains("snapshot_times")) {
      const Json& st = jo["snapshot_times"];
      if (!st.is_array()) fail("output.snapshot_times", "expected an array");
      for (const auto& v : st) {
        if (!v.is_number())
          fail("output.snapshot_times", "expected numbers");
        rc.output.snapshot_times.push_back(v.get<double>());
      }
    }
    rc.output.elution = bool_or(jo, "output", "elution", true);
    rc.output.steps_log = bool_or(jo, "output", "steps_log", false);
    rc.output.checkpoint = bool_or(jo, "output", "checkpoint", true);
  }

  return rc;
}

}  // namespace rt
