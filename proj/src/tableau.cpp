#include "rt/tableau.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "rt/errors.hpp"

namespace rt {

namespace {

struct Rref {
  Mat A;
  std::vector<int> pivot_of_col;  // pivot row per column, -1 if none
  std::vector<int> pivot_cols;    // ascending
  std::vector<int> free_cols;     // ascending
  int rank = 0;
};

// Gauss-Jordan elimination choosing pivots from the rightmost columns first,
// so the columns left without a pivot (the "free" ones) are the earliest
// listed species.  In a conventional tableau those are exactly the component
// species, which makes the derived totals match the usual definition.
Rref rref_rightmost(Mat A) {
  const int m = static_cast<int>(A.rows());
  const int n = static_cast<int>(A.cols());
  const double tol = 1e-12 * std::max(1.0, A.size() ? A.cwiseAbs().maxCoeff() : 0.0);

  Rref out;
  out.pivot_of_col.assign(n, -1);
  std::vector<bool> row_used(m, false);

  for (int j = n - 1; j >= 0; --j) {
    int best = -1;
    double best_abs = tol;
    for (int r = 0; r < m; ++r) {
      if (!row_used[r] && std::abs(A(r, j)) > best_abs) {
        best_abs = std::abs(A(r, j));
        best = r;
      }
    }
    if (best < 0) continue;
    row_used[best] = true;
    out.pivot_of_col[j] = best;
    ++out.rank;
    A.row(best) /= A(best, j);
    A(best, j) = 1.0;
    for (int r = 0; r < m; ++r) {
      if (r == best) continue;
      const double f = A(r, j);
      if (f != 0.0) {
        A.row(r) -= f * A.row(best);
        A(r, j) = 0.0;
      }
    }
  }
  for (int j = 0; j < n; ++j) {
    if (out.pivot_of_col[j] >= 0)
      out.pivot_cols.push_back(j);
    else
      out.free_cols.push_back(j);
  }
  out.A = std::move(A);
  return out;
}

// Null-space basis rows from a reduced matrix: one row per free column, with
// a 1 in the free slot and minus the reduced coefficients in the pivot slots.
Mat kernel_rows(const Rref& r, int n_cols) {
  const int nk = static_cast<int>(r.free_cols.size());
  Mat U = Mat::Zero(nk, n_cols);
  for (int k = 0; k < nk; ++k) {
    const int f = r.free_cols[k];
    U(k, f) = 1.0;
    for (int p : r.pivot_cols) U(k, p) = -r.A(r.pivot_of_col[p], f);
  }
  return U;
}

int first_row_without_pivot(const Rref& r, int n_rows) {
  std::vector<bool> used(n_rows, false);
  for (int p : r.pivot_cols) used[r.pivot_of_col[p]] = true;
  for (int i = 0; i < n_rows; ++i)
    if (!used[i]) return i;
  return -1;
}

}  // namespace

StoichiometricSystem::StoichiometricSystem(std::vector<Species> species, Mat S,
                                           Vec logk)
    : species_(std::move(species)), S_(std::move(S)), logk_(std::move(logk)) {
  const int ns_all = n_species();
  if (ns_all == 0) throw TableauError("tableau has no species");
  if (S_.cols() != ns_all)
    throw TableauError("stoichiometric matrix has " +
                       std::to_string(S_.cols()) + " columns for " +
                       std::to_string(ns_all) + " species");
  if (logk_.size() != S_.rows())
    throw TableauError("logK vector length does not match the reaction count");

  std::set<std::string> seen;
  for (const auto& sp : species_) {
    if (!seen.insert(sp.name).second)
      throw TableauError("duplicate species name '" + sp.name + "'");
  }

  bool immobile_seen = false;
  for (int i = 0; i < ns_all; ++i) {
    if (!species_[i].mobile) {
      immobile_seen = true;
    } else if (immobile_seen) {
      throw TableauError("species must be ordered mobile first ('" +
                         species_[i].name + "' is mobile but listed after an "
                         "immobile species)");
    }
    if (species_[i].mobile) ++n_mobile_;
  }

  const int nr_all = n_reactions();
  const int ns = n_mobile_;
  const int nbar_s = ns_all - ns;

  // Homogeneous reactions (no immobile coefficients) must come first.
  bool heterog_seen = false;
  for (int i = 0; i < nr_all; ++i) {
    const bool touches_immobile =
        nbar_s > 0 && S_.row(i).tail(nbar_s).cwiseAbs().maxCoeff() > 0.0;
    if (touches_immobile) {
      heterog_seen = true;
    } else if (heterog_seen) {
      throw TableauError(
          "reactions must be ordered mobile-only first (reaction index " +
          std::to_string(i) + " involves no immobile species but appears "
          "after one that does)");
    }
    if (!touches_immobile) ++n_homog_;
  }

  const int nr = n_homog_;
  const int nbar_r = nr_all - nr;
  if (ns - nr <= 0)
    throw TableauError("no mobile totals remain: more mobile-only reactions "
                       "than degrees of freedom");
  if (nbar_s - nbar_r < 0)
    throw TableauError("more heterogeneous reactions than immobile species");

  // Mobile-block kernel -> mobile totals over mobile species.
  const Rref rc = rref_rightmost(S_cc());
  if (rc.rank < nr) {
    const int bad = first_row_without_pivot(rc, nr);
    throw TableauError("reaction index " + std::to_string(bad) +
                       " is linearly dependent on the other mobile-only "
                       "reactions");
  }
  const Mat U_cc = kernel_rows(rc, ns);
  const int nc = ns - nr;

  // Immobile-block kernel -> immobile totals over immobile species.
  const Rref rb = rref_rightmost(S_cbar_cbar());
  if (rb.rank < nbar_r) {
    const int bad = first_row_without_pivot(rb, nbar_r);
    throw TableauError("reaction index " + std::to_string(nr + bad) +
                       " is linearly dependent on the other heterogeneous "
                       "reactions");
  }
  const Mat U_bb = kernel_rows(rb, nbar_s);
  const int nbar_c = nbar_s - nbar_r;

  // Immobile completion of the mobile totals: for each mobile-total row u,
  // solve S_cbar_cbar * w = -S_cbar_c * u with w supported on the pivot
  // species, so components of the immobile block (e.g. free sorption sites)
  // never enter a mobile total.
  Mat U_cb = Mat::Zero(nc, nbar_s);
  if (nbar_r > 0) {
    Mat piv(nbar_r, nbar_r);
    for (int k = 0; k < nbar_r; ++k)
      piv.col(k) = S_cbar_cbar().col(rb.pivot_cols[k]);
    Eigen::PartialPivLU<Mat> lu(piv);
    const Mat rhs = -(S_cbar_c() * U_cc.transpose());  // nbar_r x nc
    for (int t = 0; t < nc; ++t) {
      const Vec w = lu.solve(rhs.col(t));
      for (int k = 0; k < nbar_r; ++k) U_cb(t, rb.pivot_cols[k]) = w(k);
    }
  }

  totals_ = Mat::Zero(nc + nbar_c, ns_all);
  totals_.topLeftCorner(nc, ns) = U_cc;
  totals_.topRightCorner(nc, nbar_s) = U_cb;
  totals_.bottomRightCorner(nbar_c, nbar_s) = U_bb;

  const double s_scale = std::max(1.0, S_.cwiseAbs().maxCoeff());
  if (nr_all > 0 &&
      (totals_ * S_.transpose()).cwiseAbs().maxCoeff() > 1e-10 * s_scale)
    throw TableauError("internal error: derived totals do not annihilate S");

  for (int f : rc.free_cols) {
    components_.push_back(f);
    total_names_.push_back("T(" + species_[f].name + ")");
  }
  for (int f : rb.free_cols) {
    components_.push_back(ns + f);
    total_names_.push_back("Tbar(" + species_[ns + f].name + ")");
  }
  scc_pivot_cols_ = rc.pivot_cols;
}

Mat StoichiometricSystem::S_cc() const {
  return S_.topLeftCorner(n_homog_reactions(), n_mobile_species());
}

Mat StoichiometricSystem::S_cbar_c() const {
  return S_.bottomLeftCorner(n_heterog_reactions(), n_mobile_species());
}

Mat StoichiometricSystem::S_cbar_cbar() const {
  return S_.bottomRightCorner(n_heterog_reactions(), n_immobile_species());
}

Mat StoichiometricSystem::totals_cc() const {
  return totals_.topLeftCorner(n_mobile_totals(), n_mobile_species());
}

Mat StoichiometricSystem::totals_cbar() const {
  return totals_.topRightCorner(n_mobile_totals(), n_immobile_species());
}

Mat StoichiometricSystem::totals_bar_bar() const {
  return totals_.bottomRightCorner(n_immobile_totals(), n_immobile_species());
}

Vec StoichiometricSystem::mobile_logs_from_components(
    const Vec& components) const {
  const int nc = n_mobile_totals();
  const int nr = n_homog_reactions();
  const int ns = n_mobile_species();
  if (components.size() != nc)
    throw std::invalid_argument("expected one value per mobile component");
  if ((components.array() <= 0.0).any())
    throw std::invalid_argument(
        "component concentrations must be strictly positive");

  Vec z(ns);
  const Vec z_free = components.array().log();
  if (nr == 0) return z_free;

  Mat free_block(nr, nc);
  for (int k = 0; k < nc; ++k) free_block.col(k) = S_cc().col(components_[k]);
  Mat piv(nr, nr);
  for (int k = 0; k < nr; ++k) piv.col(k) = S_cc().col(scc_pivot_cols_[k]);
  const Vec z_piv =
      Eigen::PartialPivLU<Mat>(piv).solve(logk_.head(nr) - free_block * z_free);

  for (int k = 0; k < nc; ++k) z(components_[k]) = z_free(k);
  for (int k = 0; k < nr; ++k) z(scc_pivot_cols_[k]) = z_piv(k);
  return z;
}

}  // namespace rt
