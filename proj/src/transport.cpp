#include "rt/transport.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "rt/errors.hpp"

namespace rt {

namespace {

template <typename Body>
void for_each_row(int n, Exec exec, const Body& body) {
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

double TransportAssembly::max_advective_dt() const {
  if (q <= 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / cfl_scale.maxCoeff();
}

TransportAssembly assemble_transport(const Mesh1D& mesh, double q,
                                     BoundaryMode mode) {
  const int n = mesh.n_cells();
  if (n == 0) throw AssemblyError("empty mesh");
  if (q < 0.0)
    throw AssemblyError("negative flux: flow must run left to right");

  TransportAssembly a;
  a.q = q;
  a.mode = mode;
  a.M = mesh.phi.cwiseProduct(mesh.h);
  a.cfl_scale = q * a.M.cwiseInverse();

  std::vector<Eigen::Triplet<double>> td, ta;
  for (int i = 0; i + 1 < n; ++i) {
    const double dsum = mesh.D(i) + mesh.D(i + 1);
    const double df = dsum > 0.0 ? 2.0 * mesh.D(i) * mesh.D(i + 1) / dsum : 0.0;
    const double w = df / (0.5 * (mesh.h(i) + mesh.h(i + 1)));
    td.emplace_back(i, i, w);
    td.emplace_back(i, i + 1, -w);
    td.emplace_back(i + 1, i + 1, w);
    td.emplace_back(i + 1, i, -w);
    ta.emplace_back(i, i, q);
    ta.emplace_back(i + 1, i, -q);
  }
  if (mode == BoundaryMode::InflowDirichlet) {
    a.bc_diff_coeff = 2.0 * mesh.D(0) / mesh.h(0);
    a.bc_adv_coeff = q;
    td.emplace_back(0, 0, a.bc_diff_coeff);
    ta.emplace_back(n - 1, n - 1, q);  // free outflow
  }
  a.A_d.resize(n, n);
  a.A_d.setFromTriplets(td.begin(), td.end());
  a.A_a.resize(n, n);
  a.A_a.setFromTriplets(ta.begin(), ta.end());
  a.A_d.makeCompressed();
  a.A_a.makeCompressed();
  return a;
}

const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::FullyImplicit: return "fully_implicit";
    case Scheme::ExplicitAdvection: return "explicit_advection";
    case Scheme::Splitting: return "splitting";
  }
  return "?";
}

StepOperators::StepOperators(const TransportAssembly& assembly, double dt,
                             Scheme scheme)
    : assembly_(&assembly), dt_(dt), scheme_(scheme) {
  const int n = assembly.n_cells();
  if (!(dt > 0.0)) throw AssemblyError("non-positive time step");

  if (scheme == Scheme::ExplicitAdvection) {
    int worst = 0;
    const double cfl = dt * assembly.cfl_scale.maxCoeff(&worst);
    if (cfl > 1.0 + 1e-9)
      throw AssemblyError("explicit advection needs CFL <= 1; dt = " +
                          std::to_string(dt) + " gives CFL = " +
                          std::to_string(cfl) + " in cell " +
                          std::to_string(worst));
  }
  if (scheme == Scheme::Splitting) {
    const double dta = assembly.max_advective_dt();
    n_adv_sub_ = std::isfinite(dta)
                     ? std::max(1, static_cast<int>(std::ceil(dt / dta - 1e-12)))
                     : 1;
    dt_adv_ = dt / n_adv_sub_;
  }

  SpMat Md(n, n);
  {
    std::vector<Eigen::Triplet<double>> tm;
    tm.reserve(n);
    for (int i = 0; i < n; ++i) tm.emplace_back(i, i, assembly.M(i));
    Md.setFromTriplets(tm.begin(), tm.end());
  }
  A_ = scheme == Scheme::FullyImplicit
           ? SpMat(Md + dt * (assembly.A_d + assembly.A_a))
           : SpMat(Md + dt * assembly.A_d);
  A_.makeCompressed();
  lu_ = std::make_unique<Eigen::SparseLU<SpMat>>();
  lu_->compute(A_);
  if (lu_->info() != Eigen::Success)
    throw AssemblyError("transport step matrix factorization failed");

  if (scheme == Scheme::Splitting)
    adv_affine_unit_ = advect_explicit(Vec::Zero(n), 1.0);
}

Vec StepOperators::advect_explicit(const Vec& c, double cd) const {
  const auto& a = *assembly_;
  Vec x = c;
  Vec bc = Vec::Zero(a.n_cells());
  bc(0) = a.bc_adv_coeff * cd;
  for (int s = 0; s < n_adv_sub_; ++s)
    x -= dt_adv_ * (a.A_a * x - bc).cwiseQuotient(a.M);
  return x;
}

Vec StepOperators::apply_A(const Vec& c) const { return A_ * c; }

Vec StepOperators::apply_A_inverse(const Vec& rhs) const {
  return lu_->solve(rhs);
}

Vec StepOperators::apply_B(const Vec& c) const {
  const auto& a = *assembly_;
  switch (scheme_) {
    case Scheme::FullyImplicit:
      return a.M.cwiseProduct(c);
    case Scheme::ExplicitAdvection:
      return a.M.cwiseProduct(c) - dt_ * (a.A_a * c);
    case Scheme::Splitting:
      return a.M.cwiseProduct(advect_explicit(c, 0.0));
  }
  return c;
}

Vec StepOperators::bc_rhs(double cd) const {
  const auto& a = *assembly_;
  Vec r = Vec::Zero(a.n_cells());
  switch (scheme_) {
    case Scheme::FullyImplicit:
    case Scheme::ExplicitAdvection:
      r(0) = dt_ * cd * (a.bc_diff_coeff + a.bc_adv_coeff);
      break;
    case Scheme::Splitting:
      r = a.M.cwiseProduct(cd * adv_affine_unit_);
      r(0) += dt_ * cd * a.bc_diff_coeff;
      break;
  }
  return r;
}

Field StepOperators::psi_T_all(const Field& c_old, const Vec& cd,
                               Exec exec) const {
  Field out(c_old.rows(), c_old.cols());
  for_each_row(static_cast<int>(c_old.rows()), exec, [&](int r) {
    out.row(r) = psi_T(c_old.row(r).transpose(), cd(r)).transpose();
  });
  return out;
}

Field StepOperators::apply_A_inverse_all(const Field& rhs, Exec exec) const {
  Field out(rhs.rows(), rhs.cols());
  for_each_row(static_cast<int>(rhs.rows()), exec, [&](int r) {
    out.row(r) = apply_A_inverse(rhs.row(r).transpose()).transpose();
  });
  return out;
}

}  // namespace rt
