#include "rt/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rt/errors.hpp"

#if RT_HAVE_OPENMP
#include <omp.h>
#endif

namespace rt {

namespace {

// Deterministic orientation: make the largest-magnitude entry of each column
// positive (first one on ties), so repeated factorizations of the same
// tableau produce identical matrices.
void canonicalize_column_signs(Mat& Q) {
  for (int j = 0; j < Q.cols(); ++j) {
    int imax = 0;
    double vmax = 0.0;
    for (int i = 0; i < Q.rows(); ++i) {
      if (std::abs(Q(i, j)) > vmax) {
        vmax = std::abs(Q(i, j));
        imax = i;
      }
    }
    if (Q.rows() > 0 && Q(imax, j) < 0.0) Q.col(j) = -Q.col(j);
  }
}

Mat full_q(const Eigen::HouseholderQR<Mat>& qr, int n) {
  return qr.householderQ() * Mat::Identity(n, n);
}

}  // namespace

EquilibriumReduction::EquilibriumReduction(StoichiometricSystem sys)
    : sys_(std::move(sys)) {
  const int nxi = sys_.n_species();
  const int nk = sys_.n_reactions();
  const int ns = sys_.n_mobile_species();
  const int nbar_s = sys_.n_immobile_species();
  const int nr = sys_.n_homog_reactions();
  const int nbar_r = sys_.n_heterog_reactions();
  const int nc = sys_.n_mobile_totals();
  const int nbar_c = sys_.n_immobile_totals();

  // Particular solution of the mass action rows from QR of S^T.
  Q1_ = Mat::Zero(nxi, nk);
  R_ = Mat::Zero(nk, nk);
  if (nk > 0) {
    Eigen::HouseholderQR<Mat> qr(sys_.S().transpose());
    Q1_ = qr.householderQ() * Mat::Identity(nxi, nk);
    R_ = qr.matrixQR().topLeftCorner(nk, nk).triangularView<Eigen::Upper>();
    double max_diag = 0.0;
    for (int i = 0; i < nk; ++i) max_diag = std::max(max_diag, std::abs(R_(i, i)));
    for (int i = 0; i < nk; ++i) {
      if (std::abs(R_(i, i)) <= 1e-10 * max_diag)
        throw TableauError("reaction index " + std::to_string(i) +
                           " makes the stoichiometric matrix rank deficient");
      if (R_(i, i) < 0.0) {  // positive-diagonal convention
        R_.row(i) = -R_.row(i);
        Q1_.col(i) = -Q1_.col(i);
      }
    }
    const Vec w =
        R_.transpose().triangularView<Eigen::Lower>().solve(sys_.logk());
    b1_ = Q1_ * w;
  } else {
    b1_ = Vec::Zero(nxi);
  }

  // Null-space basis of S assembled blockwise so that U = Q2^T keeps the
  // mobile/immobile triangular structure.  Immobile-only directions first:
  // the kernel of the immobile reaction block, padded with zeros on the
  // mobile side.
  Mat Qbar1(nbar_s, nbar_r), Rbar(nbar_r, nbar_r), Qbar2(nbar_s, nbar_c);
  if (nbar_s > 0) {
    if (nbar_r > 0) {
      Eigen::HouseholderQR<Mat> qrb(sys_.S_cbar_cbar().transpose());
      const Mat qb = full_q(qrb, nbar_s);
      Qbar1 = qb.leftCols(nbar_r);
      Qbar2 = qb.rightCols(nbar_c);
      Rbar = qrb.matrixQR()
                 .topLeftCorner(nbar_r, nbar_r)
                 .triangularView<Eigen::Upper>();
      for (int i = 0; i < nbar_r; ++i) {
        if (Rbar(i, i) < 0.0) {
          Rbar.row(i) = -Rbar.row(i);
          Qbar1.col(i) = -Qbar1.col(i);
        }
      }
    } else {
      Qbar2 = Mat::Identity(nbar_s, nbar_s);
    }
  }

  // Mobile directions: kernel of the mobile reaction block, completed on the
  // immobile side so the full row of S is annihilated while staying
  // orthogonal to the immobile-only directions (range of Qbar1).
  Mat Q2c;
  if (nr > 0) {
    Eigen::HouseholderQR<Mat> qrc(sys_.S_cc().transpose());
    Q2c = full_q(qrc, ns).rightCols(nc);
  } else {
    Q2c = Mat::Identity(ns, ns);
  }
  Mat F = Mat::Zero(nxi, nc);
  F.topRows(ns) = Q2c;
  if (nbar_s > 0 && nbar_r > 0) {
    const Mat t = sys_.S_cbar_c() * Q2c;  // nbar_r x nc
    F.bottomRows(nbar_s) =
        -Qbar1 * Rbar.transpose().triangularView<Eigen::Lower>().solve(t);
  }
  Eigen::HouseholderQR<Mat> qrf(F);
  const Mat QF = qrf.householderQ() * Mat::Identity(nxi, nc);

  Q2_ = Mat::Zero(nxi, nc + nbar_c);
  Q2_.leftCols(nc) = QF;
  if (nbar_s > 0) Q2_.bottomRightCorner(nbar_s, nbar_c) = Qbar2;
  canonicalize_column_signs(Q2_);
  U_ = Q2_.transpose();

  const double s_scale = std::max(1.0, nk > 0 ? sys_.S().cwiseAbs().maxCoeff() : 1.0);
  if (nk > 0 && (U_ * sys_.S().transpose()).cwiseAbs().maxCoeff() > 1e-12 * s_scale)
    throw TableauError("internal error: kernel basis does not annihilate S");
  if ((Q2_.transpose() * Q2_ - Mat::Identity(nc + nbar_c, nc + nbar_c))
          .cwiseAbs()
          .maxCoeff() > 1e-12)
    throw TableauError("internal error: kernel basis is not orthonormal");

  // Map from tableau-convention totals to the orthonormal convention:
  // G * totals() = U, solved as a (consistent) least-squares problem.
  const Mat ut = sys_.totals().transpose();
  G_ = ut.colPivHouseholderQr().solve(U_.transpose()).transpose();
  if ((G_ * sys_.totals() - U_).cwiseAbs().maxCoeff() > 1e-10)
    throw TableauError("internal error: totals conversion is inconsistent");
  if (nbar_c > 0 && nc > 0) {
    if (G_.bottomLeftCorner(nbar_c, nc).cwiseAbs().maxCoeff() > 1e-12)
      throw TableauError("internal error: totals conversion lost structure");
    G_.bottomLeftCorner(nbar_c, nc).setZero();
  }
}

Mat EquilibriumReduction::U_cc() const {
  return U_.topLeftCorner(n_mobile_totals(), sys_.n_mobile_species());
}

Mat EquilibriumReduction::U_cbar() const {
  return U_.topRightCorner(n_mobile_totals(), sys_.n_immobile_species());
}

Mat EquilibriumReduction::U_bar_bar() const {
  return U_.bottomRightCorner(n_immobile_totals(), sys_.n_immobile_species());
}

namespace {

// Two-sided clamp: the upper bound guards exp overflow, the lower bound
// keeps every concentration strictly positive so the reduced jacobian
// Q2^T diag(xi) Q2 stays positive definite even at boundary equilibria
// (species pinned at zero by a zero total).
Vec clamped_logs(const Vec& y2, const EquilibriumReduction& red,
                 const EquilibriumOptions& opts) {
  return (red.b1() + red.Q2() * y2)
      .cwiseMin(opts.exp_clamp)
      .cwiseMax(-opts.exp_clamp);
}

}  // namespace

Vec residual_H(const Vec& y2, const Vec& tau_reduced,
               const EquilibriumReduction& red,
               const EquilibriumOptions& opts) {
  const Vec xi = clamped_logs(y2, red, opts).array().exp();
  return red.Q2().transpose() * xi - tau_reduced;
}

Mat jacobian_H(const Vec& y2, const EquilibriumReduction& red,
               const EquilibriumOptions& opts) {
  const Vec xi = clamped_logs(y2, red, opts).array().exp();
  return red.Q2().transpose() * xi.asDiagonal() * red.Q2();
}

namespace {

// One globalized Newton attempt from y0.  Returns (state, success).
CellChemState newton_attempt(const Vec& y0, const Vec& tau_red,
                             const EquilibriumReduction& red,
                             const EquilibriumOptions& opts) {
  CellChemState st;
  st.tau_reduced = tau_red;
  Vec y = y0;
  Vec z = clamped_logs(y, red, opts);
  Vec xi = z.array().exp();
  Vec H = red.Q2().transpose() * xi - tau_red;
  double nrm = H.size() ? H.cwiseAbs().maxCoeff() : 0.0;

  for (int it = 0; it < opts.max_iters; ++it) {
    // Accepting a warm start anywhere inside the tolerance band would freeze
    // the returned state against small perturbations of the totals, and the
    // outer transport solver then sees a piecewise-constant (zero-derivative)
    // chemistry response.  Polished states sit at the numerical floor, far
    // below the reduced window, so untouched cells still return instantly.
    if (nrm <= (it == 0 ? 0.1 * opts.tol : opts.tol)) break;
    const Mat J = red.Q2().transpose() * xi.asDiagonal() * red.Q2();
    Eigen::LDLT<Mat> ldlt(J);
    Vec d = ldlt.solve(-H);
    if (ldlt.info() != Eigen::Success || !d.allFinite()) {
      // Rounding can make a hugely ill-conditioned (but positive definite)
      // jacobian look indefinite to LDLT; fall back to a rank-revealing
      // solve that projects out the flat directions.
      d = J.colPivHouseholderQr().solve(-H);
      if (!d.allFinite()) break;
    }

    // Backtracking line search on the residual norm: accept only steps with
    // sufficient decrease, so the norm never increases along the iteration.
    double lambda = 1.0;
    bool accepted = false;
    while (lambda >= opts.min_step) {
      const Vec yt = y + lambda * d;
      const Vec zt = clamped_logs(yt, red, opts);
      const Vec xit = zt.array().exp();
      const Vec Ht = red.Q2().transpose() * xit - tau_red;
      const double nt = Ht.size() ? Ht.cwiseAbs().maxCoeff() : 0.0;
      if (std::isfinite(nt) && nt <= (1.0 - opts.armijo_c * lambda) * nrm) {
        y = yt;
        z = zt;
        xi = xit;
        H = Ht;
        nrm = nt;
        accepted = true;
        break;
      }
      lambda *= opts.backtrack;
    }
    ++st.newton_iters;
    if (!accepted) break;  // stagnated; caller retries from another start
  }

  // Polish a freshly converged solve down to its numerical floor with full
  // Newton steps (kept only while they improve).  The tolerance alone leaves
  // O(tol) slack that the steep-front cells amplify into outer-residual
  // noise; two quadratic steps remove it.  Warm starts that were accepted
  // without iterating are already at the floor and stay bit-identical.
  if (nrm <= opts.tol && st.newton_iters > 0) {
    for (int extra = 0; extra < 2 && nrm > 0.0; ++extra) {
      const Mat J = red.Q2().transpose() * xi.asDiagonal() * red.Q2();
      Eigen::LDLT<Mat> ldlt(J);
      Vec d = ldlt.solve(-H);
      if (ldlt.info() != Eigen::Success || !d.allFinite())
        d = J.colPivHouseholderQr().solve(-H);
      if (!d.allFinite()) break;
      const Vec yt = y + d;
      const Vec zt = clamped_logs(yt, red, opts);
      const Vec xit = zt.array().exp();
      const Vec Ht = red.Q2().transpose() * xit - tau_red;
      const double nt = Ht.size() ? Ht.cwiseAbs().maxCoeff() : 0.0;
      if (!std::isfinite(nt) || nt >= nrm) break;
      y = yt;
      z = zt;
      xi = xit;
      H = Ht;
      nrm = nt;
      ++st.newton_iters;
    }
  }

  st.y2 = y;
  st.z = z;
  st.xi = xi;
  st.residual_norm = nrm;
  st.converged = nrm <= opts.tol;
  return st;
}

}  // namespace

CellChemState solve_equilibrium(const Vec& tau_tableau,
                                const std::optional<Vec>& guess,
                                const EquilibriumReduction& red,
                                const EquilibriumOptions& opts) {
  const int ntot = red.n_totals();
  if (tau_tableau.size() != ntot)
    throw std::invalid_argument("totals vector has wrong length");

  // A total built from nonnegative species coefficients cannot be negative;
  // transport round-off still leaves tiny negative values in cells a species
  // has not reached, which makes the solve infeasible below that gap.  Flush
  // those to zero within a noise window; larger negative data stays (and
  // fails honestly, or is legitimate for signed totals).
  Vec tau = tau_tableau;
  const double noise =
      1e-6 * std::max(1.0, tau.cwiseAbs().maxCoeff());
  for (int k = 0; k < ntot; ++k)
    if (tau(k) < 0.0 && tau(k) >= -noise &&
        red.system().totals().row(k).minCoeff() >= 0.0)
      tau(k) = 0.0;
  const Vec tau_red = red.to_reduced(tau);

  std::vector<Vec> starts;
  if (guess && guess->size() == ntot) starts.push_back(*guess);
  starts.push_back(Vec::Zero(ntot));
  starts.push_back(Vec::Constant(ntot, -5.0));

  CellChemState last;
  int total_iters = 0;
  for (size_t a = 0; a < starts.size(); ++a) {
    bool duplicate = false;
    for (size_t b = 0; b < a && !duplicate; ++b)
      duplicate = (starts[a].array() == starts[b].array()).all();
    if (duplicate) continue;
    CellChemState st = newton_attempt(starts[a], tau_red, red, opts);
    total_iters += st.newton_iters;
    st.newton_iters = total_iters;
    if (st.converged) {
      if (opts.track_condition) {
        const Mat J = jacobian_H(st.y2, red, opts);
        Eigen::SelfAdjointEigenSolver<Mat> es(J);
        const double lo = es.eigenvalues().minCoeff();
        const double hi = es.eigenvalues().maxCoeff();
        st.jacobian_cond =
            lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
      }
      return st;
    }
    last = std::move(st);
  }
  return last;
}

std::pair<Vec, CellChemState> psi_C(const Vec& T, const Vec& Tbar,
                                    const EquilibriumReduction& red,
                                    const std::optional<Vec>& guess,
                                    const EquilibriumOptions& opts) {
  const int nc = red.n_mobile_totals();
  const int nbc = red.n_immobile_totals();
  if (T.size() != nc || Tbar.size() != nbc)
    throw std::invalid_argument("totals blocks have wrong lengths");
  Vec tau(nc + nbc);
  tau << T, Tbar;
  CellChemState st = solve_equilibrium(tau, guess, red, opts);
  const int nbar_s = red.system().n_immobile_species();
  Vec cbar = Vec::Zero(nc);
  if (nbar_s > 0 && st.xi.size() == red.n_species())
    cbar = red.system().totals_cbar() * st.xi.tail(nbar_s);
  return {cbar, std::move(st)};
}

Mat d_psi_C(const CellChemState& state, const EquilibriumReduction& red,
            const EquilibriumOptions& opts) {
  const int nc = red.n_mobile_totals();
  const int nbar_s = red.system().n_immobile_species();
  if (!state.converged)
    throw EvalFailure("d_psi_C requires a converged chemical state");
  if (nbar_s == 0) return Mat::Zero(nc, nc);

  const Mat J = jacobian_H(state.y2, red, opts);
  Eigen::LDLT<Mat> ldlt(J);
  Mat dy2 = ldlt.solve(red.totals_map().leftCols(nc));
  if (ldlt.info() != Eigen::Success || !dy2.allFinite()) {
    // Boundary equilibria make J positive definite but with eigenvalues near
    // the underflow threshold; the pivoted QR drops those flat directions
    // (whose species sit at ~0 and contribute ~0 sensitivity anyway).
    dy2 = J.colPivHouseholderQr().solve(red.totals_map().leftCols(nc));
    if (!dy2.allFinite())
      throw EvalFailure("singular reduced jacobian in d_psi_C");
  }
  // Chain rule: d(xi)/dT = diag(xi) Q2 dy2/dT, then keep the immobile rows.
  const Mat dxi = state.xi.asDiagonal() * (red.Q2() * dy2);
  return red.system().totals_cbar() * dxi.bottomRows(nbar_s);
}

Vec equilibrate_immobile(const Vec& mobile_logs, const Vec& Tbar,
                         const EquilibriumReduction& red,
                         const EquilibriumOptions& opts) {
  const auto& sys = red.system();
  const int nbar_s = sys.n_immobile_species();
  const int nbar_r = sys.n_heterog_reactions();
  const int nbar_c = sys.n_immobile_totals();
  if (nbar_s == 0) return Vec();
  if (mobile_logs.size() != sys.n_mobile_species() || Tbar.size() != nbar_c)
    throw std::invalid_argument("equilibrate_immobile: bad input lengths");

  // Feasible log immobile concentrations are wp + N y with N the orthonormal
  // kernel of the immobile reaction block and wp any particular solution of
  // the heterogeneous mass action rows (mobile part fixed).
  const Mat N = red.U_bar_bar().transpose();  // nbar_s x nbar_c
  Vec wp = Vec::Zero(nbar_s);
  if (nbar_r > 0) {
    const Vec rhs = sys.logk().tail(nbar_r) - sys.S_cbar_c() * mobile_logs;
    wp = sys.S_cbar_cbar().colPivHouseholderQr().solve(rhs);
  }
  const Vec tau_red = red.totals_map().bottomRightCorner(nbar_c, nbar_c) * Tbar;

  Vec y = Vec::Zero(nbar_c);
  Vec xi = (wp + N * y).cwiseMin(opts.exp_clamp).cwiseMax(-opts.exp_clamp).array().exp();
  Vec H = N.transpose() * xi - tau_red;
  double nrm = H.cwiseAbs().maxCoeff();
  for (int it = 0; it < opts.max_iters && nrm > opts.tol; ++it) {
    const Mat J = N.transpose() * xi.asDiagonal() * N;
    const Vec d = Eigen::LDLT<Mat>(J).solve(-H);
    if (!d.allFinite())
      throw EvalFailure("immobile equilibration: singular jacobian");
    double lambda = 1.0;
    bool accepted = false;
    while (lambda >= opts.min_step) {
      const Vec yt = y + lambda * d;
      const Vec xit = (wp + N * yt).cwiseMin(opts.exp_clamp).cwiseMax(-opts.exp_clamp).array().exp();
      const Vec Ht = N.transpose() * xit - tau_red;
      const double nt = Ht.cwiseAbs().maxCoeff();
      if (std::isfinite(nt) && nt <= (1.0 - opts.armijo_c * lambda) * nrm) {
        y = yt;
        xi = xit;
        H = Ht;
        nrm = nt;
        accepted = true;
        break;
      }
      lambda *= opts.backtrack;
    }
    if (!accepted) break;
  }
  if (nrm > opts.tol)
    throw EvalFailure("immobile equilibration did not converge (residual " +
                      std::to_string(nrm) + ")");
  return xi;
}

namespace {

template <typename Body>
void for_each_cell(int n, Exec exec, const Body& body) {
#if RT_HAVE_OPENMP
  if (exec == Exec::Parallel) {
#pragma omp parallel for schedule(static)
    for (int j = 0; j < n; ++j) body(j);
    return;
  }
#else
  (void)exec;
#endif
  for (int j = 0; j < n; ++j) body(j);
}

}  // namespace

CellBatchResult psi_C_cells(const Field& T, const Mat& Tbar,
                            const EquilibriumReduction& red,
                            const std::vector<CellChemState>* warm, Exec exec,
                            const EquilibriumOptions& opts) {
  const int nh = static_cast<int>(T.cols());
  const int nc = red.n_mobile_totals();
  CellBatchResult out;
  out.cbar.resize(nc, nh);
  out.states.resize(nh);
  const bool use_warm = warm && static_cast<int>(warm->size()) == nh;

  for_each_cell(nh, exec, [&](int j) {
    std::optional<Vec> guess;
    if (use_warm && (*warm)[j].y2.size() == red.n_totals())
      guess = (*warm)[j].y2;
    auto [cb, st] = psi_C(T.col(j), Tbar.col(j), red, guess, opts);
    out.cbar.col(j) = cb;
    out.states[j] = std::move(st);
  });

  for (int j = 0; j < nh; ++j) {
    out.total_newton_iters += out.states[j].newton_iters;
    if (!out.states[j].converged) {
      if (out.cells_failed == 0) out.first_failed_cell = j;
      ++out.cells_failed;
    }
  }
  return out;
}

std::vector<Mat> d_psi_C_cells(const std::vector<CellChemState>& states,
                               const EquilibriumReduction& red, Exec exec,
                               const EquilibriumOptions& opts) {
  std::vector<Mat> jc(states.size());
  for_each_cell(static_cast<int>(states.size()), exec,
                [&](int j) { jc[j] = d_psi_C(states[j], red, opts); });
  return jc;
}

int max_threads() {
#if RT_HAVE_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace rt
