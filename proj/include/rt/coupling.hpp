#pragma once

#include <memory>
#include <string>
#include <vector>

#include "rt/equilibrium.hpp"
#include "rt/krylov.hpp"
#include "rt/transport.hpp"
#include "rt/types.hpp"

namespace rt {

// Discrete state of the coupled system at one time level.  Fields store the
// mobile totals: C is the aqueous part, Cbar the sorbed contribution, both
// n_mobile_totals x n_cells.  Tbar holds the (time-invariant) immobile
// totals.  cell_states caches the converged per-cell chemistry for warm
// starts and for freezing preconditioner Jacobians.
struct SystemState {
  Field C;
  Field Cbar;
  Mat Tbar;
  std::vector<CellChemState> cell_states;
  double time = 0.0;
  long step_index = 0;
};

// Equilibrate every cell from prescribed total concentrations T = C + Cbar.
SystemState make_state_from_totals(const EquilibriumReduction& red,
                                   const Field& T_total, const Mat& Tbar,
                                   Exec exec,
                                   const EquilibriumOptions& opts = {});

// Equilibrate every cell from prescribed aqueous component concentrations
// (the immobile side is equilibrated against the fixed aqueous activities,
// then a full equilibrium solve validates and caches the cell states).
SystemState make_state_from_aqueous(const EquilibriumReduction& red,
                                    const Field& components, const Mat& Tbar,
                                    Exec exec,
                                    const EquilibriumOptions& opts = {});

// Three equivalent nonlinear formulations of one coupled time step, named by
// their unknowns, plus the sequential (operator-splitting) iteration:
//   F:   (C, T, Cbar), full system
//   G:   (C, Cbar), totals-definition equation eliminated
//   H:   Cbar only, transport eliminated through the factored step matrix
//   SIA: fixed-point sweep transport <-> chemistry
enum class Formulation { F, G, H, SIA };
enum class PrecondKind { None, BlockJacobi, BlockGaussSeidel };

const char* formulation_name(Formulation f);
const char* precond_name(PrecondKind p);

// Everything one time step needs: the frozen previous state, the factored
// transport operators for this dt, the inflow boundary values (one per
// mobile total, constant within the step), and a shared warm-start cache
// that every chemistry sweep reads and refreshes.
struct StepContext {
  StepContext(const EquilibriumReduction& red, const StepOperators& ops,
              const SystemState& prev, Vec cd,
              EquilibriumOptions chem_opts = {}, Exec exec = Exec::Serial);

  const EquilibriumReduction* red;
  const StepOperators* ops;
  const SystemState* prev;
  Vec cd;
  EquilibriumOptions chem_opts;
  Exec exec;
  Field bn;  // B C^n + M .* Cbar^n + bc_rhs, one row per mobile total

  std::shared_ptr<std::vector<CellChemState>> warm;
  std::shared_ptr<long> chem_iters;

  int n_comp() const { return red->n_mobile_totals(); }
  int n_cells() const { return ops->n_cells(); }

  // Chemistry sweep at totals T: returns the sorbed totals and refreshes the
  // warm cache; throws EvalFailure if any cell fails to converge.
  Field sweep_psi(const Field& T) const;
  // Per-cell Jacobians d psi_C / dT at totals T (converges the cells first).
  std::vector<Mat> sweep_jacobians(const Field& T) const;
};

// Apply the per-species transport operator to each row of a field:
// (A (x) I) vec(V) = vec(V A^T) in the species-fastest layout.
Field kron_apply(const StepOperators& ops, const Field& V, Exec exec);
Field kron_solve(const StepOperators& ops, const Field& V, Exec exec);

// Apply the frozen per-cell chemistry Jacobians columnwise.
Field apply_cell_jacobians(const std::vector<Mat>& Jc, const Field& V);

// Flattened block unknowns (species-fastest within a cell, cells within a
// block): F packs [C; T; Cbar], G packs [C; Cbar], H packs [Cbar].
int n_unknowns(const StepContext& ctx, Formulation f);
Vec pack_initial_guess(const StepContext& ctx, Formulation f);

// Residuals and directional derivatives of the three formulations.  The Jc
// arguments are the per-cell chemistry Jacobians frozen at the linearization
// point (see sweep_jacobians).
Vec residual_f(const StepContext& ctx, const Vec& x);
Vec jvp_f(const StepContext& ctx, const std::vector<Mat>& Jc, const Vec& v);
Vec residual_g(const StepContext& ctx, const Vec& x);
Vec jvp_g(const StepContext& ctx, const std::vector<Mat>& Jc, const Vec& v);
Vec residual_h(const StepContext& ctx, const Vec& x);
Vec jvp_h(const StepContext& ctx, const std::vector<Mat>& Jc, const Vec& v);

// Block preconditioners for the F formulation (unknown order C, T, Cbar):
// block Jacobi inverts the transport diagonal block; block Gauss-Seidel
// additionally forward-substitutes the lower blocks using chemistry
// Jacobians frozen at the previous time level.
Vec precond_bj_f(const StepContext& ctx, const Vec& r);
Vec precond_bgs_f(const StepContext& ctx, const std::vector<Mat>& Jc,
                  const Vec& r);

// Closure factories for the Newton-Krylov driver.
VecFn make_residual(const StepContext& ctx, Formulation f);
OpFactory make_jvp(const StepContext& ctx, Formulation f);
// Returns an empty function for PrecondKind::None; throws ConfigError for
// unsupported combinations (preconditioners exist for F only).
VecFn make_preconditioner(const StepContext& ctx, Formulation f,
                          PrecondKind p);

struct SiaOptions {
  double tol = 1e-8;  // on the summed relative change of C and Cbar
  int max_sweeps = 200;
};

struct SolveControls {
  Formulation formulation = Formulation::H;
  PrecondKind precond = PrecondKind::None;
  NewtonOptions newton;
  SiaOptions sia;
  EquilibriumOptions chemistry;
  Exec exec = Exec::Serial;
};

struct StepOutcome {
  SystemState next;
  bool converged = false;
  int newton_iters = 0;        // outer iterations (Newton or SIA sweeps)
  long gmres_iters = 0;
  long chem_iters = 0;         // cell-level Newton iterations
  double residual_initial = 0.0;
  double residual_final = 0.0;
  std::string failure;
};

// One coupled time step from prev with step size ops.dt(), by Newton-Krylov
// on the chosen formulation or by the sequential iteration.  Non-convergence
// is reported through `converged`, leaving retry policy to the caller.
StepOutcome step_newton_krylov(const EquilibriumReduction& red,
                               const StepOperators& ops,
                               const SystemState& prev, const Vec& cd,
                               const SolveControls& controls);

// The sequential iteration on its own (exposed for direct study).
StepOutcome sia_solve(const StepContext& ctx, const SiaOptions& opts);

}  // namespace rt
