#include "adlab/linalg.hpp"

#include <cmath>
#include <stdexcept>

namespace adlab::linalg {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape) + " x " +
                                shape_str(b.shape));
  const std::int64_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor c = Tensor::zeros({n, m});
  for (std::int64_t i = 0; i < n; ++i) {
    const double* arow = &a.data[static_cast<size_t>(i * k)];
    double* crow = &c.data[static_cast<size_t>(i * m)];
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = &b.data[static_cast<size_t>(p * m)];
      for (std::int64_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

Tensor matvec(const Tensor& a, const Tensor& x) {
  if (a.rank() != 2 || x.rank() != 1 || a.cols() != x.rows())
    throw std::invalid_argument("matvec: incompatible shapes");
  Tensor y = Tensor::zeros({a.rows()});
  for (std::int64_t i = 0; i < a.rows(); ++i) {
    double s = 0;
    for (std::int64_t j = 0; j < a.cols(); ++j) s += a.at(i, j) * x.at(j);
    y.at(i) = s;
  }
  return y;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw std::invalid_argument("transpose: rank-2 required");
  Tensor t = Tensor::zeros({a.cols(), a.rows()});
  for (std::int64_t i = 0; i < a.rows(); ++i)
    for (std::int64_t j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
  return t;
}

namespace {

// In-place attempt; returns false on a non-positive pivot.
bool try_factor(const Tensor& a, double jitter, Tensor* out) {
  const std::int64_t n = a.rows();
  Tensor l = Tensor::zeros({n, n});
  for (std::int64_t j = 0; j < n; ++j) {
    double d = a.at(j, j) + jitter;
    for (std::int64_t k = 0; k < j; ++k) d -= l.at(j, k) * l.at(j, k);
    if (!(d > 0.0)) return false;
    const double ljj = std::sqrt(d);
    l.at(j, j) = ljj;
    for (std::int64_t i = j + 1; i < n; ++i) {
      double s = a.at(i, j);
      for (std::int64_t k = 0; k < j; ++k) s -= l.at(i, k) * l.at(j, k);
      l.at(i, j) = s / ljj;
    }
  }
  *out = std::move(l);
  return true;
}

double mean_diag(const Tensor& a) {
  double s = 0;
  for (std::int64_t i = 0; i < a.rows(); ++i) s += a.at(i, i);
  return s / static_cast<double>(a.rows());
}

}  // namespace

CholFactor cholesky_spd(const Tensor& a) {
  if (a.rank() != 2 || a.rows() != a.cols())
    throw std::invalid_argument("cholesky: square matrix required");
  CholFactor f;
  if (try_factor(a, 0.0, &f.L)) return f;
  const double base = 1e-10 * mean_diag(a);
  const double cap = 1e-4 * mean_diag(a);
  for (double jitter = base; jitter <= cap && jitter > 0.0; jitter *= 10.0) {
    if (try_factor(a, jitter, &f.L)) {
      f.jitter = jitter;
      return f;
    }
  }
  throw std::runtime_error("cholesky: factorization failed after jitter escalation (n=" +
                           std::to_string(a.rows()) + ")");
}

Tensor cholesky_psd(const Tensor& a) {
  if (a.rank() != 2 || a.rows() != a.cols())
    throw std::invalid_argument("cholesky_psd: square matrix required");
  const std::int64_t n = a.rows();
  double scale = 0;
  for (std::int64_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(a.at(i, i)));
  const double floor = 1e-12 * std::max(scale, 1e-300);
  Tensor l = Tensor::zeros({n, n});
  for (std::int64_t j = 0; j < n; ++j) {
    double d = a.at(j, j);
    for (std::int64_t k = 0; k < j; ++k) d -= l.at(j, k) * l.at(j, k);
    if (d <= floor) continue;  // semidefinite direction, leave the column at zero
    const double ljj = std::sqrt(d);
    l.at(j, j) = ljj;
    for (std::int64_t i = j + 1; i < n; ++i) {
      double s = a.at(i, j);
      for (std::int64_t k = 0; k < j; ++k) s -= l.at(i, k) * l.at(j, k);
      l.at(i, j) = s / ljj;
    }
  }
  return l;
}

Tensor solve_triangular(const Tensor& l, const Tensor& b, bool transpose_l) {
  if (l.rank() != 2 || l.rows() != l.cols())
    throw std::invalid_argument("solve_triangular: square L required");
  const std::int64_t n = l.rows();
  const bool vec = (b.rank() == 1);
  if ((vec ? b.rows() : b.rows()) != n)
    throw std::invalid_argument("solve_triangular: RHS row count mismatch");
  const std::int64_t m = vec ? 1 : b.cols();
  Tensor x = b;
  auto xat = [&](std::int64_t i, std::int64_t j) -> double& {
    return x.data[static_cast<size_t>(i * m + j)];
  };
  if (!transpose_l) {
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::int64_t k = 0; k < i; ++k) {
        const double lik = l.at(i, k);
        if (lik == 0.0) continue;
        for (std::int64_t j = 0; j < m; ++j) xat(i, j) -= lik * xat(k, j);
      }
      const double d = l.at(i, i);
      for (std::int64_t j = 0; j < m; ++j) xat(i, j) /= d;
    }
  } else {
    for (std::int64_t i = n - 1; i >= 0; --i) {
      for (std::int64_t k = i + 1; k < n; ++k) {
        const double lki = l.at(k, i);
        if (lki == 0.0) continue;
        for (std::int64_t j = 0; j < m; ++j) xat(i, j) -= lki * xat(k, j);
      }
      const double d = l.at(i, i);
      for (std::int64_t j = 0; j < m; ++j) xat(i, j) /= d;
    }
  }
  return x;
}

Tensor chol_solve(const Tensor& a, const Tensor& b) {
  CholFactor f = cholesky_spd(a);
  Tensor t = solve_triangular(f.L, b, false);
  return solve_triangular(f.L, t, true);
}

}  // namespace adlab::linalg
