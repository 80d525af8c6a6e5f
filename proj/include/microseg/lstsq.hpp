#pragma once

#include <cstddef>

#include "microseg/matrix.hpp"

namespace microseg::lstsq {

struct Solution {
  Matrix coefficients;  // n x q for design A (m x n) and targets B (m x q)
  std::size_t rank = 0;
};

// Minimum-norm least-squares solution of A X = B via a complete orthogonal
// decomposition: column-pivoted Householder QR of A, numerical rank from the
// R diagonal, then a second QR of R1^T so the null-space component of the
// solution can be zeroed exactly. Equivalent to pinv(A) * B at the chosen
// rank cutoff.
//
// rcond <= 0 selects the default cutoff max(m, n) * machine epsilon, applied
// relative to the largest diagonal of R.
Solution solve_min_norm(const Matrix& A, const Matrix& B, double rcond = -1.0);

}  // namespace microseg::lstsq
