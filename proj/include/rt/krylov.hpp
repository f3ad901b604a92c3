#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rt/types.hpp"

namespace rt {

using VecFn = std::function<Vec(const Vec&)>;

// Factory producing the (frozen) Jacobian-vector product at a point; called
// once per Newton iterate so the linearization stays fixed across the inner
// Krylov iterations.
using OpFactory = std::function<VecFn(const Vec&)>;

struct GmresOptions {
  double tol = 1e-8;    // relative to the (preconditioned) rhs norm
  int max_iters = 40;   // full GMRES, no restarts
};

struct GmresResult {
  Vec x;
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

// Full GMRES from a zero initial guess with modified Gram-Schmidt (one
// conditional reorthogonalization pass) and Givens rotations.  With a
// preconditioner the left-preconditioned system P(A x) = P(b) is solved and
// residuals are measured in the preconditioned norm.  A zero rhs returns the
// zero solution in zero iterations; non-finite operator output raises
// EvalFailure.
GmresResult gmres(const VecFn& apply_op, const Vec& rhs,
                  const GmresOptions& opts = {},
                  const VecFn* precond = nullptr);

struct ForcingOptions {
  double eta0 = 0.9;
  double gamma = 0.9;
  double alpha = 2.0;
  double eta_max = 0.9;
  double safeguard_threshold = 0.1;
};

struct NewtonOptions {
  // Tolerances on the RMS (per-component) residual norm, so atol expresses
  // the same per-unknown accuracy on every mesh.
  double rtol = 1e-8;
  double atol = 1e-10;
  int max_iters = 50;
  int gmres_max_iters = 40;
  double armijo_c = 1e-4;
  double backtrack = 0.5;
  double min_step = 1e-12;
  ForcingOptions forcing;
  // Measure convergence in the preconditioned residual norm (the natural
  // norm of the left-preconditioned iteration).
  bool monitor_preconditioned = true;
};

struct NewtonResult {
  Vec x;
  bool converged = false;
  int newton_iters = 0;
  long gmres_iters_total = 0;
  double residual_norm = 0.0;
  double initial_residual_norm = 0.0;
  std::vector<double> residual_history;  // per iterate, monitoring norm
  std::string failure_reason;
};

// Inexact (Jacobian-free) Newton-GMRES with Eisenstat-Walker forcing terms
// (choice 2: eta_k = gamma (|F_k|/|F_{k-1}|)^alpha with the standard
// safeguard, capped at eta_max, no lower floor) and a backtracking line
// search on the residual norm.  EvalFailure from F during the line search
// rejects the trial point; the preconditioner is held fixed for the whole
// solve.
NewtonResult newton_krylov(const VecFn& F, const OpFactory& jvp_at,
                           const Vec& x0, const NewtonOptions& opts = {},
                           const VecFn* precond = nullptr);

}  // namespace rt
