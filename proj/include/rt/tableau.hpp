#pragma once

#include <string>
#include <vector>

#include "rt/types.hpp"

namespace rt {

struct Species {
  std::string name;
  bool mobile = true;
};

// Equilibrium reaction network in stoichiometric form.
//
// Species must be ordered mobile first, immobile last; reactions must be
// ordered so that the ones involving only mobile species (homogeneous) come
// first.  S is the reaction x species coefficient matrix of the mass action
// law  S log(xi) = logk,  so its top-right (homogeneous x immobile) block is
// zero.  logk holds natural logarithms of the equilibrium constants.
//
// On construction the conserved-total coefficient matrix is derived from the
// null space of S in the conventional tableau form: each total is "component
// species plus weighted secondary species", with components identified as the
// species left without a pivot when S is reduced with rightmost-first pivots.
// For a Morel tableau this reproduces the usual totals definition exactly.
class StoichiometricSystem {
 public:
  StoichiometricSystem(std::vector<Species> species, Mat S, Vec logk);

  int n_species() const { return static_cast<int>(species_.size()); }
  int n_mobile_species() const { return n_mobile_; }
  int n_immobile_species() const { return n_species() - n_mobile_; }
  int n_reactions() const { return static_cast<int>(S_.rows()); }
  int n_homog_reactions() const { return n_homog_; }
  int n_heterog_reactions() const { return n_reactions() - n_homog_; }

  // Numbers of conserved totals: mobile N_c = N_s - N_r, immobile
  // Nbar_c = Nbar_s - Nbar_r.
  int n_mobile_totals() const { return n_mobile_species() - n_homog_reactions(); }
  int n_immobile_totals() const {
    return n_immobile_species() - n_heterog_reactions();
  }
  int n_totals() const { return n_mobile_totals() + n_immobile_totals(); }

  const std::vector<Species>& species() const { return species_; }
  const Mat& S() const { return S_; }
  const Vec& logk() const { return logk_; }

  // Blocks of S: homogeneous reactions x mobile species, heterogeneous x
  // mobile, heterogeneous x immobile.
  Mat S_cc() const;
  Mat S_cbar_c() const;
  Mat S_cbar_cbar() const;

  // Conserved-total coefficients, (N_c + Nbar_c) x (N_s + Nbar_s), block
  // upper triangular: mobile totals may involve immobile species but not
  // vice versa.
  const Mat& totals() const { return totals_; }
  Mat totals_cc() const;          // mobile totals x mobile species
  Mat totals_cbar() const;        // mobile totals x immobile species
  Mat totals_bar_bar() const;     // immobile totals x immobile species

  // Totals are named after their component species ("T(X1)", "Tbar(S)").
  const std::vector<std::string>& total_names() const { return total_names_; }

  // Component species of each total (indices into species(), mobile
  // components first).
  const std::vector<int>& component_species() const { return components_; }

  // Log concentrations of all mobile species given the mobile component
  // concentrations, using the homogeneous mass action rows (secondary mobile
  // species are determined by the components).
  Vec mobile_logs_from_components(const Vec& components) const;

 private:
  std::vector<Species> species_;
  Mat S_;
  Vec logk_;
  int n_mobile_ = 0;
  int n_homog_ = 0;

  Mat totals_;
  std::vector<std::string> total_names_;
  std::vector<int> components_;
  // Pivot species of the homogeneous block, used to recover secondary mobile
  // concentrations from component values.
  std::vector<int> scc_pivot_cols_;
};

}  // namespace rt
