#pragma once

// Dense kernels used by the network and the regressors.
//
// Every kernel exists twice: a serial reference in `kernels::serial` and an
// OpenMP version in `kernels::omp`. The OpenMP versions split work over
// output rows only, so each output element is accumulated in the same order
// as the serial reference and results are bitwise identical for any thread
// count. The unqualified entry points dispatch to the OpenMP version.

#include <cstddef>
#include <span>

#include "leap/matrix.hpp"

namespace leap::kernels {

namespace serial {
// C = A * B
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c);
// C = A^T * B
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c);
// C = A * B^T
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c);
// out[i][j] = ||q_i - r_j||^2
void sq_distances(const Matrix& queries, const Matrix& refs, Matrix& out);
}  // namespace serial

namespace omp {
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c);
void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c);
void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c);
void sq_distances(const Matrix& queries, const Matrix& refs, Matrix& out);
}  // namespace omp

inline void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c) { omp::gemm_nn(a, b, c); }
inline void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) { omp::gemm_tn(a, b, c); }
inline void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) { omp::gemm_nt(a, b, c); }
inline void sq_distances(const Matrix& q, const Matrix& r, Matrix& out) {
  omp::sq_distances(q, r, out);
}

// Column sums of a matrix, accumulated top to bottom.
void column_sums(const Matrix& a, std::span<double> out);

}  // namespace leap::kernels

namespace leap {

/// Sets the OpenMP worker count for subsequent parallel regions (n >= 1).
void set_workers(int n);
int workers();

}  // namespace leap
