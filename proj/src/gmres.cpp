#include <cmath>

#include "rt/errors.hpp"
#include "rt/krylov.hpp"

namespace rt {

namespace {

Vec checked(Vec v, const char* what) {
  if (!v.allFinite())
    throw EvalFailure(std::string("non-finite value from ") + what +
                      " in gmres");
  return v;
}

}  // namespace

GmresResult gmres(const VecFn& apply_op, const Vec& rhs,
                  const GmresOptions& opts, const VecFn* precond) {
  const int n = static_cast<int>(rhs.size());
  const int m = std::min(opts.max_iters, n);
  GmresResult res;
  res.x = Vec::Zero(n);

  const Vec r0 = precond ? checked((*precond)(rhs), "preconditioner") : rhs;
  const double beta = r0.norm();
  if (beta == 0.0) {
    res.converged = true;
    return res;
  }

  std::vector<Vec> V;
  V.reserve(m + 1);
  V.push_back(r0 / beta);
  Mat H = Mat::Zero(m + 1, m);
  Vec g = Vec::Zero(m + 1);
  g(0) = beta;
  Vec cs = Vec::Zero(m), sn = Vec::Zero(m);

  int k = 0;
  for (; k < m; ++k) {
    Vec w = checked(apply_op(V[k]), "operator");
    if (precond) w = checked((*precond)(w), "preconditioner");
    const double wnorm0 = w.norm();

    // Modified Gram-Schmidt, with one reorthogonalization pass when the
    // projection removed most of the vector (norm shrank below 1/sqrt(2)).
    for (int i = 0; i <= k; ++i) {
      H(i, k) = V[i].dot(w);
      w -= H(i, k) * V[i];
    }
    if (w.norm() < wnorm0 / std::sqrt(2.0)) {
      for (int i = 0; i <= k; ++i) {
        const double corr = V[i].dot(w);
        H(i, k) += corr;
        w -= corr * V[i];
      }
    }
    const double hsub = w.norm();
    // The subdiagonal vanishing means the Krylov space became invariant:
    // the least-squares solution is exact (happy breakdown).
    const bool breakdown = hsub <= 1e-14 * std::max(wnorm0, beta);
    H(k + 1, k) = hsub;

    for (int i = 0; i < k; ++i) {
      const double t = cs(i) * H(i, k) + sn(i) * H(i + 1, k);
      H(i + 1, k) = -sn(i) * H(i, k) + cs(i) * H(i + 1, k);
      H(i, k) = t;
    }
    const double denom = std::hypot(H(k, k), H(k + 1, k));
    if (denom == 0.0) throw EvalFailure("gmres breakdown: zero column");
    cs(k) = H(k, k) / denom;
    sn(k) = H(k + 1, k) / denom;
    H(k, k) = denom;
    H(k + 1, k) = 0.0;
    g(k + 1) = -sn(k) * g(k);
    g(k) = cs(k) * g(k);

    ++res.iterations;
    if (std::abs(g(k + 1)) <= opts.tol * beta || breakdown) {
      res.converged = true;
      ++k;
      break;
    }
    if (k + 1 < m) V.push_back(w / hsub);
  }

  // Back substitution on the triangularized least-squares system.
  const Vec y = H.topLeftCorner(k, k)
                    .triangularView<Eigen::Upper>()
                    .solve(g.head(k));
  for (int i = 0; i < k; ++i) res.x += y(i) * V[i];
  res.relative_residual = std::abs(g(k)) / beta;
  if (!res.converged) res.converged = res.relative_residual <= opts.tol;
  return res;
}

}  // namespace rt
