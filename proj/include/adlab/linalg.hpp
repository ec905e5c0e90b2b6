#pragma once

#include "adlab/tensor.hpp"

namespace adlab::linalg {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matvec(const Tensor& a, const Tensor& x);
Tensor transpose(const Tensor& a);

struct CholFactor {
  Tensor L;          // lower triangular, LL^T = A + jitter*I
  double jitter = 0; // diagonal boost that was needed, 0 when A factored cleanly
};

// Strict SPD factorization with the escalation policy used throughout: on
// failure add 1e-10*mean(diag) to the diagonal, escalate x10 up to
// 1e-4*mean(diag), then throw. Kernel matrices at duplicated points are
// numerically semidefinite, which is what the jitter absorbs.
CholFactor cholesky_spd(const Tensor& a);

// Tolerant variant for sampling covariances: zero/negative pivots within the
// PSD tolerance produce zero columns instead of failing (a zero covariance is
// a legal sampling target).
Tensor cholesky_psd(const Tensor& a);

// Solve op(L) X = B for lower-triangular L; transpose_l selects L^T.
Tensor solve_triangular(const Tensor& l, const Tensor& b, bool transpose_l);

// X = A^{-1} B for SPD A via Cholesky (jitter policy applies).
Tensor chol_solve(const Tensor& a, const Tensor& b);

}  // namespace adlab::linalg
