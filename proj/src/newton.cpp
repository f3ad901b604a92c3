#include <cmath>

#include "rt/errors.hpp"
#include "rt/krylov.hpp"

namespace rt {

NewtonResult newton_krylov(const VecFn& F, const OpFactory& jvp_at,
                           const Vec& x0, const NewtonOptions& opts,
                           const VecFn* precond) {
  NewtonResult res;
  res.x = x0;

  // Root-mean-square norm: tolerances mean per-component accuracy, so the
  // absolute floor does not tighten with the number of unknowns.
  const auto monitor_norm = [&](const Vec& f) {
    const double scale = std::sqrt(static_cast<double>(f.size()));
    if (precond && opts.monitor_preconditioned)
      return (*precond)(f).norm() / scale;
    return f.norm() / scale;
  };

  Vec Fx = F(res.x);
  double fk = monitor_norm(Fx);
  res.initial_residual_norm = fk;
  res.residual_history.push_back(fk);
  const double target = opts.rtol * fk + opts.atol;
  double eta = opts.forcing.eta0;

  while (res.newton_iters < opts.max_iters) {
    if (fk <= target) {
      res.converged = true;
      res.residual_norm = fk;
      return res;
    }

    GmresOptions gopt;
    gopt.tol = eta;
    gopt.max_iters = opts.gmres_max_iters;
    GmresResult lin;
    try {
      lin = gmres(jvp_at(res.x), -Fx, gopt, precond);
    } catch (const EvalFailure& e) {
      res.residual_norm = fk;
      res.failure_reason = std::string("linear solve failed: ") + e.what();
      return res;
    }
    res.gmres_iters_total += lin.iterations;

    // Backtracking on the residual norm; an EvalFailure from F simply
    // rejects the trial point like any insufficient decrease would.
    double lambda = 1.0;
    bool accepted = false;
    Vec xt, Ft;
    double ft = fk;
    while (lambda >= opts.min_step) {
      xt = res.x + lambda * lin.x;
      bool ok = true;
      try {
        Ft = F(xt);
        ft = monitor_norm(Ft);
      } catch (const EvalFailure&) {
        ok = false;
      }
      if (ok && std::isfinite(ft) &&
          ft <= (1.0 - opts.armijo_c * lambda) * fk) {
        accepted = true;
        break;
      }
      lambda *= opts.backtrack;
    }
    ++res.newton_iters;
    if (!accepted) {
      res.residual_norm = fk;
      res.failure_reason = "line search failed";
      return res;
    }

    // Eisenstat-Walker choice 2 with the standard safeguard against
    // over-tightening after a slow step; capped, no lower floor.
    double eta_new =
        opts.forcing.gamma * std::pow(ft / fk, opts.forcing.alpha);
    const double carry = opts.forcing.gamma * eta * eta;
    if (carry > opts.forcing.safeguard_threshold)
      eta_new = std::max(eta_new, carry);
    eta = std::min(eta_new, opts.forcing.eta_max);

    res.x = xt;
    Fx = Ft;
    fk = ft;
    res.residual_history.push_back(fk);
  }

  res.residual_norm = fk;
  res.converged = fk <= target;
  if (!res.converged) res.failure_reason = "maximum Newton iterations";
  return res;
}

}  // namespace rt
