#include "rt/coupling.hpp"

#include <cmath>
#include <utility>

#include "rt/errors.hpp"

namespace rt {

namespace {

Eigen::Map<const Mat> block_of(const Vec& x, int b, int nc, int nh) {
  return Eigen::Map<const Mat>(x.data() + static_cast<long>(b) * nc * nh, nc,
                               nh);
}

Eigen::Map<Mat> block_of(Vec& x, int b, int nc, int nh) {
  return Eigen::Map<Mat>(x.data() + static_cast<long>(b) * nc * nh, nc, nh);
}

Vec pack_fields(std::initializer_list<const Field*> fields) {
  long n = 0;
  for (const Field* f : fields) n += f->size();
  Vec x(n);
  long at = 0;
  for (const Field* f : fields) {
    Eigen::Map<Mat>(x.data() + at, f->rows(), f->cols()) = *f;
    at += f->size();
  }
  return x;
}

}  // namespace

const char* formulation_name(Formulation f) {
  switch (f) {
    case Formulation::F: return "f";
    case Formulation::G: return "g";
    case Formulation::H: return "h";
    case Formulation::SIA: return "sia";
  }
  return "?";
}

const char* precond_name(PrecondKind p) {
  switch (p) {
    case PrecondKind::None: return "none";
    case PrecondKind::BlockJacobi: return "block_jacobi";
    case PrecondKind::BlockGaussSeidel: return "block_gauss_seidel";
  }
  return "?";
}

SystemState make_state_from_totals(const EquilibriumReduction& red,
                                   const Field& T_total, const Mat& Tbar,
                                   Exec exec, const EquilibriumOptions& opts) {
  auto batch = psi_C_cells(T_total, Tbar, red, nullptr, exec, opts);
  if (batch.cells_failed)
    throw SolverFailure("initial equilibration failed in " +
                        std::to_string(batch.cells_failed) +
                        " cells (first at cell " +
                        std::to_string(batch.first_failed_cell) + ")");
  SystemState st;
  st.Cbar = batch.cbar;
  st.C = T_total - st.Cbar;
  st.Tbar = Tbar;
  st.cell_states = std::move(batch.states);
  return st;
}

SystemState make_state_from_aqueous(const EquilibriumReduction& red,
                                    const Field& components, const Mat& Tbar,
                                    Exec exec,
                                    const EquilibriumOptions& opts) {
  const auto& sys = red.system();
  const int nh = static_cast<int>(components.cols());
  const int nc = red.n_mobile_totals();
  Field C(nc, nh), Cbar(nc, nh);
  for (int j = 0; j < nh; ++j) {
    const Vec logs = sys.mobile_logs_from_components(components.col(j));
    C.col(j) = sys.totals_cc() * logs.array().exp().matrix();
    if (sys.n_immobile_species() > 0) {
      const Vec imm = equilibrate_immobile(logs, Tbar.col(j), red, opts);
      Cbar.col(j) = sys.totals_cbar() * imm;
    } else {
      Cbar.col(j).setZero();
    }
  }
  // Validate and cache full cell states at the implied totals.
  auto batch = psi_C_cells(C + Cbar, Tbar, red, nullptr, exec, opts);
  if (batch.cells_failed)
    throw SolverFailure("initial equilibration failed in " +
                        std::to_string(batch.cells_failed) +
                        " cells (first at cell " +
                        std::to_string(batch.first_failed_cell) + ")");
  SystemState st;
  st.C = std::move(C);
  st.Cbar = std::move(Cbar);
  st.Tbar = Tbar;
  st.cell_states = std::move(batch.states);
  return st;
}

StepContext::StepContext(const EquilibriumReduction& red_,
                         const StepOperators& ops_, const SystemState& prev_,
                         Vec cd_, EquilibriumOptions chem_opts_, Exec exec_)
    : red(&red_),
      ops(&ops_),
      prev(&prev_),
      cd(std::move(cd_)),
      chem_opts(chem_opts_),
      exec(exec_) {
  const int nc = red->n_mobile_totals();
  const int nh = ops->n_cells();
  if (prev->C.rows() != nc || prev->C.cols() != nh ||
      prev->Cbar.rows() != nc || prev->Cbar.cols() != nh)
    throw AssemblyError("state dimensions do not match operators");
  if (cd.size() != nc)
    throw AssemblyError("boundary values need one entry per mobile total");

  bn.resize(nc, nh);
  const Vec& M = ops->assembly().M;
  for (int r = 0; r < nc; ++r)
    bn.row(r) = (ops->apply_B(prev->C.row(r).transpose()) +
                 M.cwiseProduct(prev->Cbar.row(r).transpose()) +
                 ops->bc_rhs(cd(r)))
                    .transpose();

  warm = std::make_shared<std::vector<CellChemState>>(prev->cell_states);
  chem_iters = std::make_shared<long>(0);
}

Field StepContext::sweep_psi(const Field& T) const {
  const auto* guesses =
      static_cast<int>(warm->size()) == n_cells() ? warm.get() : nullptr;
  auto batch = psi_C_cells(T, prev->Tbar, *red, guesses, exec, chem_opts);
  *chem_iters += batch.total_newton_iters;
  if (batch.cells_failed)
    // Leave the warm cache at the last good point.
    throw EvalFailure("cell chemistry failed to converge in " +
                      std::to_string(batch.cells_failed) +
                      " cells (first at cell " +
                      std::to_string(batch.first_failed_cell) + ")");
  *warm = std::move(batch.states);
  return std::move(batch.cbar);
}

std::vector<Mat> StepContext::sweep_jacobians(const Field& T) const {
  sweep_psi(T);
  return d_psi_C_cells(*warm, *red, exec, chem_opts);
}

namespace {

template <typename Body>
void rows_loop(int n, Exec exec, const Body& body) {
#if RT_HAVE_OPENMP
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < n; ++r) body(r);
    return;
  }
#else
  (void)exec;
#endif
  for (int r = 0; r < n; ++r) body(r);
}

}  // namespace

Field kron_apply(const StepOperators& ops, const Field& V, Exec exec) {
  Field out(V.rows(), V.cols());
  rows_loop(static_cast<int>(V.rows()), exec, [&](int r) {
    out.row(r) = ops.apply_A(V.row(r).transpose()).transpose();
  });
  return out;
}

Field kron_solve(const StepOperators& ops, const Field& V, Exec exec) {
  Field out(V.rows(), V.cols());
  rows_loop(static_cast<int>(V.rows()), exec, [&](int r) {
    out.row(r) = ops.apply_A_inverse(V.row(r).transpose()).transpose();
  });
  return out;
}

Field apply_cell_jacobians(const std::vector<Mat>& Jc, const Field& V) {
  Field out(V.rows(), V.cols());
  for (int j = 0; j < V.cols(); ++j) out.col(j) = Jc[j] * V.col(j);
  return out;
}

int n_unknowns(const StepContext& ctx, Formulation f) {
  const int nb = ctx.n_comp() * ctx.n_cells();
  switch (f) {
    case Formulation::F: return 3 * nb;
    case Formulation::G: return 2 * nb;
    case Formulation::H: return nb;
    case Formulation::SIA: break;
  }
  throw ConfigError("the sequential iteration has no Newton unknowns");
}

Vec pack_initial_guess(const StepContext& ctx, Formulation f) {
  const Field& C = ctx.prev->C;
  const Field& Cb = ctx.prev->Cbar;
  const Field T = C + Cb;
  switch (f) {
    case Formulation::F: return pack_fields({&C, &T, &Cb});
    case Formulation::G: return pack_fields({&C, &Cb});
    case Formulation::H: return pack_fields({&Cb});
    case Formulation::SIA: break;
  }
  throw ConfigError("the sequential iteration has no Newton unknowns");
}

Vec residual_f(const StepContext& ctx, const Vec& x) {
  const int nc = ctx.n_comp(), nh = ctx.n_cells();
  const auto C = block_of(x, 0, nc, nh);
  const auto T = block_of(x, 1, nc, nh);
  const auto Cb = block_of(x, 2, nc, nh);
  const Field psi = ctx.sweep_psi(T);
  const Vec& M = ctx.ops->assembly().M;

  Vec out(3L * nc * nh);
  block_of(out, 0, nc, nh) =
      kron_apply(*ctx.ops, C, ctx.exec) + Cb * M.asDiagonal() - ctx.bn;
  block_of(out, 1, nc, nh) = T - C - Cb;
  block_of(out, 2, nc, nh) = Cb - psi;
  return out;
}

Vec jvp_f(const StepContext& ctx, const std::vector<Mat>& Jc, const Vec& v) {
  const int nc = ctx.n_comp(), nh = ctx.n_cells();
  const auto vC = block_of(v, 0, nc, nh);
  const auto vT = block_of(v, 1, nc, nh);
  const auto vCb = block_of(v, 2, nc, nh);
  const Vec& M = ctx.ops->assembly().M;

  Vec out(3L * nc * nh);
  block_of(out, 0, nc, nh) =
      kron_apply(*ctx.ops, vC, ctx.exec) + vCb * M.asDiagonal();
  block_of(out, 1, nc, nh) = vT - vC - vCb;
  block_of(out, 2, nc, nh) = vCb - apply_cell_jacobians(Jc, vT);
  return out;
}

Vec residual_g(const StepContext& ctx, const Vec& x) {
  const int nc = ctx.n_comp(), nh = ctx.n_cells();
  const auto C = block_of(x, 0, nc, nh);
  const auto Cb = block_of(x, 1, nc, nh);
  const Field psi = ctx.sweep_psi(C + Cb);
  const Vec& M = ctx.ops->assembly().M;

  Vec out(2L * nc * nh);
  block_of(out, 0, nc, nh) =
      kron_apply(*ctx.ops, C, ctx.exec) + Cb * M.asDiagonal() - ctx.bn;
  block_of(out, 1, nc, nh) = Cb - psi;
  return out;
}

Vec jvp_g(const StepContext& ctx, const std::vector<Mat>& Jc, const Vec& v) {
  const int nc = ctx.n_comp(), nh = ctx.n_cells();
  const auto vC = block_of(v, 0, nc, nh);
  const auto vCb = block_of(v, 1, nc, nh);
  const Vec& M = ctx.ops->assembly().M;

  Vec out(2L * nc * nh);
  block_of(out, 0, nc, nh) =
      kron_apply(*ctx.ops, vC, ctx.exec) + vCb * M.asDiagonal();
  block_of(out, 1, nc, nh) =
      Field(vCb) - apply_cell_jacobians(Jc, Field(vC + vCb));
  return out;
}

Vec residual_h(const StepContext& ctx, const Vec& x) {
  const int nc = ctx.n_comp(), nh = ctx.n_cells();
  const auto Cb = block_of(x, 0, nc, nh);
  const Vec& M = ctx.ops->assembly().M;
  const Field C =
      kron_solve(*ctx.ops, ctx.bn - Cb * M.asDiagonal(), ctx.exec);
  const Field psi = ctx.sweep_psi(C + Cb);

  Vec out(static_cast<long>(nc) * nh);
  block_of(out, 0, nc, nh) = Cb - psi;
  return out;
}

Vec jvp_h(const StepContext& ctx, const std::vector<Mat>& Jc, const Vec& v) {
  const int nc = ctx.n_comp(), nh = ctx.n_cells();
  const auto vCb = block_of(v, 0, nc, nh);
  const Vec& M = ctx.ops->assembly().M;
  const Field w = kron_solve(*ctx.ops, vCb * M.asDiagonal(), ctx.exec);

  Vec out(static_cast<long>(nc) * nh);
  block_of(out, 0, nc, nh) =
      Field(vCb) - apply_cell_jacobians(Jc, Field(vCb - w));
  return out;
}

Vec precond_bj_f(const StepContext& ctx, const Vec& r) {
  const int nc = ctx.n_comp(), nh = ctx.n_cells();
  Vec out(3L * nc * nh);
  block_of(out, 0, nc, nh) =
      kron_solve(*ctx.ops, block_of(r, 0, nc, nh), ctx.exec);
  block_of(out, 1, nc, nh) = block_of(r, 1, nc, nh);
  block_of(out, 2, nc, nh) = block_of(r, 2, nc, nh);
  return out;
}

Vec precond_bgs_f(const StepContext& ctx, const std::vector<Mat>& Jc,
                  const Vec& r) {
  const int nc = ctx.n_comp(), nh = ctx.n_cells();
  Vec out(3L * nc * nh);
  auto u1 = block_of(out, 0, nc, nh);
  u1 = kron_solve(*ctx.ops, block_of(r, 0, nc, nh), ctx.exec);
  auto u2 = block_of(out, 1, nc, nh);
  u2 = block_of(r, 1, nc, nh) + u1;
  block_of(out, 2, nc, nh) =
      Field(block_of(r, 2, nc, nh)) + apply_cell_jacobians(Jc, u2);
  return out;
}

VecFn make_residual(const StepContext& ctx, Formulation f) {
  switch (f) {
    case Formulation::F:
      return [&ctx](const Vec& x) { return residual_f(ctx, x); };
    case Formulation::G:
      return [&ctx](const Vec& x) { return residual_g(ctx, x); };
    case Formulation::H:
      return [&ctx](const Vec& x) { return residual_h(ctx, x); };
    case Formulation::SIA: break;
  }
  throw ConfigError("the sequential iteration has no Newton residual");
}

OpFactory make_jvp(const StepContext& ctx, Formulation f) {
  const int nc = ctx.n_comp(), nh = ctx.n_cells();
  return [&ctx, f, nc, nh](const Vec& x) -> VecFn {
    Field T;
    switch (f) {
      case Formulation::F:
        T = block_of(x, 1, nc, nh);
        break;
      case Formulation::G:
        T = block_of(x, 0, nc, nh) + block_of(x, 1, nc, nh);
        break;
      case Formulation::H: {
        const auto Cb = block_of(x, 0, nc, nh);
        const Vec& M = ctx.ops->assembly().M;
        T = kron_solve(*ctx.ops, ctx.bn - Cb * M.asDiagonal(), ctx.exec) + Cb;
        break;
      }
      case Formulation::SIA:
        throw ConfigError("the sequential iteration has no Newton jacobian");
    }
    auto Jc = std::make_shared<std::vector<Mat>>(ctx.sweep_jacobians(T));
    switch (f) {
      case Formulation::F:
        return [&ctx, Jc](const Vec& v) { return jvp_f(ctx, *Jc, v); };
      case Formulation::G:
        return [&ctx, Jc](const Vec& v) { return jvp_g(ctx, *Jc, v); };
      default:
        return [&ctx, Jc](const Vec& v) { return jvp_h(ctx, *Jc, v); };
    }
  };
}

VecFn make_preconditioner(const StepContext& ctx, Formulation f,
                          PrecondKind p) {
  if (p == PrecondKind::None) return VecFn();
  if (f != Formulation::F)
    throw ConfigError(
        "block preconditioners are defined for the fully coupled "
        "formulation only");
  if (p == PrecondKind::BlockJacobi)
    return [&ctx](const Vec& r) { return precond_bj_f(ctx, r); };
  // Gauss-Seidel: chemistry Jacobians frozen at the previous time level.
  auto Jc = std::make_shared<std::vector<Mat>>(
      d_psi_C_cells(ctx.prev->cell_states, *ctx.red, ctx.exec,
                    ctx.chem_opts));
  return [&ctx, Jc](const Vec& r) { return precond_bgs_f(ctx, *Jc, r); };
}

StepOutcome sia_solve(const StepContext& ctx, const SiaOptions& opts) {
  const Vec& M = ctx.ops->assembly().M;
  StepOutcome out;
  Field C_last = ctx.prev->C;
  Field Cb = ctx.prev->Cbar;

  try {
    for (int k = 0; k < opts.max_sweeps; ++k) {
      const Field C =
          kron_solve(*ctx.ops, ctx.bn - Cb * M.asDiagonal(), ctx.exec);
      const Field psi = ctx.sweep_psi(C + Cb);
      ++out.newton_iters;

      const double dc = (C - C_last).norm();
      const double dcb = (psi - Cb).norm();
      const double denom_c = C.norm() > 0.0 ? C.norm() : 1.0;
      const double denom_cb = psi.norm() > 0.0 ? psi.norm() : 1.0;
      const double change = dc / denom_c + dcb / denom_cb;
      if (k == 0) out.residual_initial = change;
      out.residual_final = change;

      const bool exact = (psi.array() == Cb.array()).all() &&
                         (C.array() == C_last.array()).all();
      C_last = C;
      Cb = psi;
      if (exact || change < opts.tol) {
        out.converged = true;
        break;
      }
    }
  } catch (const EvalFailure& e) {
    out.failure = e.what();
    return out;
  }
  if (!out.converged) {
    out.failure = "sequential iteration did not converge";
    return out;
  }

  out.next.C = std::move(C_last);
  out.next.Cbar = std::move(Cb);
  out.next.Tbar = ctx.prev->Tbar;
  out.next.cell_states = *ctx.warm;
  out.chem_iters = *ctx.chem_iters;
  return out;
}

StepOutcome step_newton_krylov(const EquilibriumReduction& red,
                               const StepOperators& ops,
                               const SystemState& prev, const Vec& cd,
                               const SolveControls& controls) {
  StepContext ctx(red, ops, prev, cd, controls.chemistry, controls.exec);
  StepOutcome out;

  if (controls.formulation == Formulation::SIA) {
    out = sia_solve(ctx, controls.sia);
  } else {
    const VecFn F = make_residual(ctx, controls.formulation);
    const OpFactory jvp = make_jvp(ctx, controls.formulation);
    const VecFn P =
        make_preconditioner(ctx, controls.formulation, controls.precond);
    const Vec x0 = pack_initial_guess(ctx, controls.formulation);

    NewtonResult nr;
    try {
      nr = newton_krylov(F, jvp, x0, controls.newton, P ? &P : nullptr);
    } catch (const EvalFailure& e) {
      out.failure = e.what();
      out.chem_iters = *ctx.chem_iters;
      return out;
    }
    out.newton_iters = nr.newton_iters;
    out.gmres_iters = nr.gmres_iters_total;
    out.residual_initial = nr.initial_residual_norm;
    out.residual_final = nr.residual_norm;
    out.chem_iters = *ctx.chem_iters;
    if (!nr.converged) {
      out.failure = nr.failure_reason.empty() ? "newton did not converge"
                                              : nr.failure_reason;
      return out;
    }

    const int nc = ctx.n_comp(), nh = ctx.n_cells();
    const Vec& M = ops.assembly().M;
    switch (controls.formulation) {
      case Formulation::F:
        out.next.C = block_of(nr.x, 0, nc, nh);
        out.next.Cbar = block_of(nr.x, 2, nc, nh);
        break;
      case Formulation::G:
        out.next.C = block_of(nr.x, 0, nc, nh);
        out.next.Cbar = block_of(nr.x, 1, nc, nh);
        break;
      case Formulation::H: {
        out.next.Cbar = block_of(nr.x, 0, nc, nh);
        out.next.C = kron_solve(
            ops, ctx.bn - out.next.Cbar * M.asDiagonal(), ctx.exec);
        break;
      }
      case Formulation::SIA:
        break;
    }
    out.next.Tbar = prev.Tbar;
    out.converged = true;

    // Refresh the per-cell states at the accepted totals so the next step
    // starts from converged chemistry (the converged Cbar itself is kept).
    try {
      ctx.sweep_psi(out.next.C + out.next.Cbar);
    } catch (const EvalFailure& e) {
      out.converged = false;
      out.failure = std::string("post-step chemistry refresh failed: ") +
                    e.what();
      return out;
    }
    out.next.cell_states = *ctx.warm;
  }

  if (out.converged) {
    out.next.time = prev.time + ops.dt();
    out.next.step_index = prev.step_index + 1;
  }
  return out;
}

}  // namespace rt
