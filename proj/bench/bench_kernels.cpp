// Serial vs OpenMP timings of the per-cell and per-species kernels that
// dominate a coupled step, plus the full step itself.
#include <benchmark/benchmark.h>

#include <map>
#include <memory>

#include "rt/config.hpp"
#include "rt/coupling.hpp"
#include "rt/scenarios.hpp"
#include "rt/transport.hpp"

namespace {

struct Setup {
  rt::RunConfig cfg;
  rt::Mesh1D mesh;
  rt::TransportAssembly assembly;
  rt::StepOperators ops;
  rt::SystemState state;
  rt::Vec cd;

  explicit Setup(int n)
      : cfg(rt::parse_config(rt::Json{
            {"problem",
             {{"builtin", "momas-easy-1d"},
              {"params",
               {{"n", n},
                {"diffusion_a", 5.5e-5},
                {"diffusion_b", 5.5e-4},
                {"cfl", 1.0},
                {"t_end", 10.0}}}}}})),
        mesh(rt::build_mesh(cfg.problem.segments)),
        assembly(rt::assemble_transport(mesh, cfg.problem.darcy_flux,
                                        cfg.problem.mode)),
        ops(assembly, assembly.max_advective_dt(), rt::Scheme::FullyImplicit),
        state(rt::initial_state(cfg)),
        cd(cfg.problem.windows.front().totals) {}
};

const Setup& setup(int n) {
  static std::map<int, std::unique_ptr<Setup>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<Setup>(n);
  return *slot;
}

void bm_chemistry_sweep(benchmark::State& st, rt::Exec exec) {
  const Setup& b = setup(static_cast<int>(st.range(0)));
  const rt::StepContext ctx(*b.cfg.problem.reduction, b.ops, b.state, b.cd,
                            {}, exec);
  const rt::Field T0 = b.state.C + b.state.Cbar;
  double sign = 1.0;
  for (auto _ : st) {
    sign = -sign;
    rt::Field psi = ctx.sweep_psi(T0 * (1.0 + 1e-3 * sign));
    benchmark::DoNotOptimize(psi.data());
  }
  st.counters["cells"] = static_cast<double>(st.range(0));
}

void bm_transport_solves(benchmark::State& st, rt::Exec exec) {
  const Setup& b = setup(static_cast<int>(st.range(0)));
  for (auto _ : st) {
    rt::Field x = b.ops.apply_A_inverse_all(b.state.C, exec);
    benchmark::DoNotOptimize(x.data());
  }
}

void bm_reduced_jvp(benchmark::State& st, rt::Exec exec) {
  const Setup& b = setup(static_cast<int>(st.range(0)));
  const rt::StepContext ctx(*b.cfg.problem.reduction, b.ops, b.state, b.cd,
                            {}, exec);
  const auto Jc = ctx.sweep_jacobians(b.state.C + b.state.Cbar);
  const int m = rt::n_unknowns(ctx, rt::Formulation::H);
  const rt::Vec v = rt::Vec::Constant(m, 1.0 / std::sqrt(double(m)));
  for (auto _ : st) {
    rt::Vec y = rt::jvp_h(ctx, Jc, v);
    benchmark::DoNotOptimize(y.data());
  }
}

void bm_coupled_step(benchmark::State& st, rt::Exec exec) {
  const Setup& b = setup(static_cast<int>(st.range(0)));
  rt::SolveControls controls = b.cfg.solver.controls;
  controls.exec = exec;
  for (auto _ : st) {
    rt::StepOutcome out = rt::step_newton_krylov(
        *b.cfg.problem.reduction, b.ops, b.state, b.cd, controls);
    if (!out.converged) st.SkipWithError("step did not converge");
    benchmark::DoNotOptimize(out.next.C.data());
  }
}

}  // namespace

BENCHMARK_CAPTURE(bm_chemistry_sweep, serial, rt::Exec::Serial)
    ->Arg(96)->Arg(384)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bm_chemistry_sweep, parallel, rt::Exec::Parallel)
    ->Arg(96)->Arg(384)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bm_transport_solves, serial, rt::Exec::Serial)
    ->Arg(384)->Arg(1536)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(bm_transport_solves, parallel, rt::Exec::Parallel)
    ->Arg(384)->Arg(1536)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(bm_reduced_jvp, serial, rt::Exec::Serial)
    ->Arg(384)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(bm_reduced_jvp, parallel, rt::Exec::Parallel)
    ->Arg(384)->Unit(benchmark::kMicrosecond);
BENCHMARK_CAPTURE(bm_coupled_step, serial, rt::Exec::Serial)
    ->Arg(96)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bm_coupled_step, parallel, rt::Exec::Parallel)
    ->Arg(96)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
