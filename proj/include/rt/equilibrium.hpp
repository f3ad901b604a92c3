#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "rt/parallel.hpp"
#include "rt/tableau.hpp"
#include "rt/types.hpp"

namespace rt {

// Orthogonal reduction of the mass action system  S log(xi) = logk,
// U xi = tau.  Built once per tableau and shared (immutable) by all cells.
//
// A QR factorization of S^T gives a particular solution b1 = Q1 R^{-T} logk
// of the mass action rows and an orthonormal null-space basis Q2, so every
// feasible log-concentration vector is z = b1 + Q2 y2.  The kernel matrix is
// chosen as U = Q2^T; Q2 is assembled blockwise so that U keeps the
// mobile/immobile upper-triangular structure (immobile totals involve no
// mobile species).
//
// Because U is orthonormal it differs from the conventional tableau totals;
// totals_map() holds the (block upper triangular) matrix G with
// U = G * tableau_totals, so reduced-convention totals are G * tau.
class EquilibriumReduction {
 public:
  explicit EquilibriumReduction(StoichiometricSystem sys);

  const StoichiometricSystem& system() const { return sys_; }

  int n_species() const { return sys_.n_species(); }
  int n_reactions() const { return sys_.n_reactions(); }
  int n_totals() const { return sys_.n_totals(); }
  int n_mobile_totals() const { return sys_.n_mobile_totals(); }
  int n_immobile_totals() const { return sys_.n_immobile_totals(); }

  const Mat& Q1() const { return Q1_; }
  const Mat& Q2() const { return Q2_; }
  const Mat& R() const { return R_; }
  const Vec& b1() const { return b1_; }

  const Mat& U() const { return U_; }
  Mat U_cc() const;          // mobile totals x mobile species
  Mat U_cbar() const;        // mobile totals x immobile species
  Mat U_bar_bar() const;     // immobile totals x immobile species

  const Mat& totals_map() const { return G_; }
  Vec to_reduced(const Vec& tau_tableau) const { return G_ * tau_tableau; }

 private:
  StoichiometricSystem sys_;
  Mat Q1_, Q2_, R_;
  Vec b1_;
  Mat U_;
  Mat G_;
};

struct EquilibriumOptions {
  // On the max norm of the residual H = Q2^T xi - tau_reduced.
  double tol = 1e-10;
  int max_iters = 200;
  double armijo_c = 1e-4;
  double backtrack = 0.5;
  double min_step = 1e-12;
  double exp_clamp = 200.0;  // componentwise cap on log concentrations
  bool track_condition = false;  // report cond(J) at the solution
};

// Converged (or last-iterate) chemical state of one cell.
struct CellChemState {
  Vec y2;           // reduced unknowns
  Vec z;            // log concentrations b1 + Q2 y2 (clamped)
  Vec xi;           // concentrations exp(z)
  Vec tau_reduced;  // totals in the reduced (orthonormal) convention
  bool converged = false;
  int newton_iters = 0;  // total across restarts
  double residual_norm = std::numeric_limits<double>::infinity();
  double jacobian_cond = std::numeric_limits<double>::quiet_NaN();
};

// Residual of the reduced equilibrium problem,
//   H(y2) = Q2^T exp(b1 + Q2 y2) - tau,
// with tau in the reduced convention (see to_reduced).  Exponent arguments
// are clamped at opts.exp_clamp so overflow cannot occur during line search.
Vec residual_H(const Vec& y2, const Vec& tau_reduced,
               const EquilibriumReduction& red,
               const EquilibriumOptions& opts = {});

// Jacobian of H: Q2^T diag(exp(b1 + Q2 y2)) Q2, symmetric positive definite
// whenever all concentrations are positive.
Mat jacobian_H(const Vec& y2, const EquilibriumReduction& red,
               const EquilibriumOptions& opts = {});

// Globalized Newton solve of H(y2) = 0 for tableau-convention totals tau.
// Starts from `guess` when given, then retries from zeros and from all
// entries -5 if a start fails to converge.  Non-convergence is reported via
// the returned state's `converged` flag, never an exception.
CellChemState solve_equilibrium(const Vec& tau_tableau,
                                const std::optional<Vec>& guess,
                                const EquilibriumReduction& red,
                                const EquilibriumOptions& opts = {});

// Sorbed-total map: solve the cell equilibrium for totals (T, Tbar) and
// return the immobile contribution Cbar to the mobile totals (tableau
// convention), plus the full state for warm starting.
std::pair<Vec, CellChemState> psi_C(const Vec& T, const Vec& Tbar,
                                    const EquilibriumReduction& red,
                                    const std::optional<Vec>& guess,
                                    const EquilibriumOptions& opts = {});

// Derivative of psi_C with respect to T at a converged state, via implicit
// differentiation of H (one SPD solve with N_c right-hand sides).
Mat d_psi_C(const CellChemState& state, const EquilibriumReduction& red,
            const EquilibriumOptions& opts = {});

// Equilibrate the immobile species against fixed mobile concentrations:
// given log mobile concentrations and immobile totals Tbar, solve the
// heterogeneous mass action rows plus the immobile total constraints.
// Returns immobile concentrations (empty system: empty vector).
Vec equilibrate_immobile(const Vec& mobile_logs, const Vec& Tbar,
                         const EquilibriumReduction& red,
                         const EquilibriumOptions& opts = {});

// Batch interface over the cells of a field (one column per cell).
struct CellBatchResult {
  Field cbar;                        // n_mobile_totals x n_cells
  std::vector<CellChemState> states;
  int cells_failed = 0;
  int first_failed_cell = -1;
  long total_newton_iters = 0;
};

CellBatchResult psi_C_cells(const Field& T, const Mat& Tbar,
                            const EquilibriumReduction& red,
                            const std::vector<CellChemState>* warm,
                            Exec exec, const EquilibriumOptions& opts = {});

std::vector<Mat> d_psi_C_cells(const std::vector<CellChemState>& states,
                               const EquilibriumReduction& red, Exec exec,
                               const EquilibriumOptions& opts = {});

}  // namespace rt
