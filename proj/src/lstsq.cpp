#include "microseg/lstsq.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "microseg/errors.hpp"

namespace microseg::lstsq {
namespace {

// Builds a Householder reflector for col[k..m), LAPACK dlarfg style.
// On return col[k] holds beta (the new diagonal entry) and col[k+1..m) the
// scaled reflector tail v; tau is the reflector coefficient (0 = identity).
double make_reflector(double* col, std::size_t k, std::size_t m, double& tau) {
  const double alpha = col[k];
  double xnorm = 0.0;
  for (std::size_t i = k + 1; i < m; ++i) xnorm = std::hypot(xnorm, col[i]);
  if (xnorm == 0.0) {
    tau = 0.0;
    return alpha;
  }
  double beta = -std::copysign(std::hypot(alpha, xnorm), alpha);
  tau = (beta - alpha) / beta;
  const double inv = 1.0 / (alpha - beta);
  for (std::size_t i = k + 1; i < m; ++i) col[i] *= inv;
  col[k] = beta;
  return beta;
}

// Applies reflector (v, tau) stored in column src (rows k..m) to a vector.
void apply_reflector(const double* src, std::size_t k, std::size_t m, double tau,
                     double* vec) {
  if (tau == 0.0) return;
  double s = vec[k];
  for (std::size_t i = k + 1; i < m; ++i) s += src[i] * vec[i];
  s *= tau;
  vec[k] -= s;
  for (std::size_t i = k + 1; i < m; ++i) vec[i] -= s * src[i];
}

}  // namespace

Solution solve_min_norm(const Matrix& A, const Matrix& B, double rcond) {
  const std::size_t m = A.rows();
  const std::size_t n = A.cols();
  const std::size_t q = B.cols();
  if (m == 0 || n == 0) throw EmptyDatasetError("least squares: empty design matrix");
  if (B.rows() != m) throw DimensionError("least squares: row counts of A and B differ");

  // Column-major working copy; every inner loop below runs down one column.
  std::vector<double> a(n * m);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < m; ++i) a[j * m + i] = A(i, j);

  const std::size_t kmax = std::min(m, n);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<double> tau(kmax, 0.0);
  std::vector<double> colnorm(n), colnorm_ref(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    const double* c = &a[j * m];
    for (std::size_t i = 0; i < m; ++i) s += c[i] * c[i];
    colnorm[j] = std::sqrt(s);
    colnorm_ref[j] = colnorm[j];
  }
  const double downdate_tol = std::sqrt(std::numeric_limits<double>::epsilon());

  for (std::size_t k = 0; k < kmax; ++k) {
    // Pivot: bring the column with the largest remaining norm to position k.
    std::size_t p = k;
    for (std::size_t j = k + 1; j < n; ++j)
      if (colnorm[j] > colnorm[p]) p = j;
    if (p != k) {
      for (std::size_t i = 0; i < m; ++i) std::swap(a[p * m + i], a[k * m + i]);
      std::swap(perm[p], perm[k]);
      std::swap(colnorm[p], colnorm[k]);
      std::swap(colnorm_ref[p], colnorm_ref[k]);
    }

    make_reflector(&a[k * m], k, m, tau[k]);

    for (std::size_t j = k + 1; j < n; ++j) {
      apply_reflector(&a[k * m], k, m, tau[k], &a[j * m]);
      // Downdate the trailing norm; recompute when cancellation bites.
      if (colnorm[j] != 0.0) {
        double t = std::abs(a[j * m + k]) / colnorm[j];
        t = std::max(0.0, (1.0 + t) * (1.0 - t));
        const double ratio = colnorm[j] / colnorm_ref[j];
        if (t * ratio * ratio <= downdate_tol) {
          double s = 0.0;
          for (std::size_t i = k + 1; i < m; ++i) s += a[j * m + i] * a[j * m + i];
          colnorm[j] = std::sqrt(s);
          colnorm_ref[j] = colnorm[j];
        } else {
          colnorm[j] *= std::sqrt(t);
        }
      }
    }
  }

  // Numerical rank from the pivoted R diagonal.
  double cutoff = rcond;
  if (cutoff <= 0.0)
    cutoff = static_cast<double>(std::max(m, n)) * std::numeric_limits<double>::epsilon();
  const double rmax = std::abs(a[0]);
  std::size_t rank = 0;
  for (std::size_t k = 0; k < kmax; ++k) {
    if (std::abs(a[k * m + k]) > cutoff * rmax)
      ++rank;
    else
      break;
  }

  Solution sol;
  sol.rank = rank;
  sol.coefficients = Matrix(n, q, 0.0);
  if (rank == 0) return sol;

  // Q^T applied to the targets.
  std::vector<double> qtb(m * q);
  for (std::size_t c = 0; c < q; ++c) {
    double* col = &qtb[c * m];
    for (std::size_t i = 0; i < m; ++i) col[i] = B(i, c);
    for (std::size_t k = 0; k < kmax; ++k) apply_reflector(&a[k * m], k, m, tau[k], col);
  }

  // Second factorization: W = R1^T (n x rank), plain Householder QR.
  // R1 = rows 0..rank-1 of R; R(k, j) lives at a[j*m + k] for k <= j.
  std::vector<double> w(rank * n, 0.0);
  for (std::size_t j = 0; j < rank; ++j)
    for (std::size_t i = j; i < n; ++i) w[j * n + i] = a[i * m + j];
  std::vector<double> tau2(rank, 0.0);
  for (std::size_t k = 0; k < rank; ++k) {
    make_reflector(&w[k * n], k, n, tau2[k]);
    for (std::size_t j = k + 1; j < rank; ++j)
      apply_reflector(&w[k * n], k, n, tau2[k], &w[j * n]);
  }

  // Per target column: forward-substitute R2^T u = (Q^T b)[0..rank), then
  // y = Q2 [u; 0] and undo the column permutation.
  std::vector<double> y(n);
  for (std::size_t c = 0; c < q; ++c) {
    const double* cvec = &qtb[c * m];
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t i = 0; i < rank; ++i) {
      double s = cvec[i];
      for (std::size_t j = 0; j < i; ++j) s -= w[i * n + j] * y[j];
      y[i] = s / w[i * n + i];
    }
    for (std::size_t k = rank; k-- > 0;) apply_reflector(&w[k * n], k, n, tau2[k], y.data());
    for (std::size_t j = 0; j < n; ++j) sol.coefficients(perm[j], c) = y[j];
  }
  return sol;
}

}  // namespace microseg::lstsq
