#pragma once

#include <memory>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "rt/mesh.hpp"
#include "rt/parallel.hpp"
#include "rt/types.hpp"

namespace rt {

using SpMat = Eigen::SparseMatrix<double>;

// Boundary treatment of the column.
//  InflowDirichlet: prescribed concentration at the left face (advective
//    inflow q*cd plus a diffusive ghost-cell flux), free advective outflow
//    and zero diffusive flux at the right face.
//  ClosedBox: no boundary fluxes at all (used for conservation checks).
enum class BoundaryMode { InflowDirichlet, ClosedBox };

// Spatial discretization of  phi dc/dt + d/dx(q c - D dc/dx) = 0  on a cell
// basis: M dc/dt + (A_a + A_d) c = bc(t).  A_a is first-order upwind, A_d
// uses harmonic face averaging of D.  The inflow value enters only through
// the right-hand side, kept separate so boundary data can vary in time.
struct TransportAssembly {
  SpMat A_d;  // diffusion stiffness (includes the left ghost-face diagonal)
  SpMat A_a;  // upwind advection (interior faces + outflow face)
  Vec M;      // lumped mass, phi_i h_i
  double q = 0.0;
  BoundaryMode mode = BoundaryMode::InflowDirichlet;
  double bc_diff_coeff = 0.0;  // 2 D_1 / h_1, multiplies the inflow value
  double bc_adv_coeff = 0.0;   // q, multiplies the inflow value
  Vec cfl_scale;               // q / (phi_i h_i); CFL of a step is dt * max

  int n_cells() const { return static_cast<int>(M.size()); }
  // Largest dt with per-cell advective CFL <= 1 (infinity when q == 0).
  double max_advective_dt() const;
};

TransportAssembly assemble_transport(const Mesh1D& mesh, double q,
                                     BoundaryMode mode);

// Time discretizations of one linear transport step  A c_new = B c_old + bc.
//  FullyImplicit:      A = M + dt (A_d + A_a),  B = M
//  ExplicitAdvection:  A = M + dt A_d,          B = M - dt A_a   (CFL <= 1)
//  Splitting:          A = M + dt A_d,          B c = M advect(c), where
//    advect() takes ceil(dt / dt_adv_max) explicit upwind substeps at
//    CFL <= 1.  The boundary part of the substeps is precomputed for a unit
//    inflow value, so bc_rhs stays an affine function of the inflow value.
enum class Scheme { FullyImplicit, ExplicitAdvection, Splitting };

const char* scheme_name(Scheme s);

// Operators of one step size; A is factored once and reused for every
// species and every linear solve within the step.
class StepOperators {
 public:
  StepOperators(const TransportAssembly& assembly, double dt, Scheme scheme);

  double dt() const { return dt_; }
  Scheme scheme() const { return scheme_; }
  const TransportAssembly& assembly() const { return *assembly_; }
  int n_cells() const { return assembly_->n_cells(); }
  int advective_substeps() const { return n_adv_sub_; }

  Vec apply_A(const Vec& c) const;
  Vec apply_A_inverse(const Vec& rhs) const;
  Vec apply_B(const Vec& c) const;   // boundary value taken as zero
  Vec bc_rhs(double cd) const;       // boundary contribution, linear in cd

  // One transport step of a single species: c_new = A^{-1}(B c_old + bc).
  Vec psi_T(const Vec& c_old, double cd) const {
    return apply_A_inverse(apply_B(c_old) + bc_rhs(cd));
  }

  // Row-wise application over a field (one species per row).
  Field psi_T_all(const Field& c_old, const Vec& cd, Exec exec) const;
  Field apply_A_inverse_all(const Field& rhs, Exec exec) const;

 private:
  Vec advect_explicit(const Vec& c, double cd) const;

  const TransportAssembly* assembly_;
  double dt_;
  Scheme scheme_;
  SpMat A_;
  std::unique_ptr<Eigen::SparseLU<SpMat>> lu_;
  int n_adv_sub_ = 0;
  double dt_adv_ = 0.0;
  Vec adv_affine_unit_;  // advect_explicit(0, 1), Splitting only
};

}  // namespace rt
