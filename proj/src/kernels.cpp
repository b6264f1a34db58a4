#include "leap/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cassert>

namespace leap::kernels {

namespace {

void check_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  assert(a.cols() == b.rows());
  if (c.rows() != a.rows() || c.cols() != b.cols()) c = Matrix(a.rows(), b.cols());
}
void check_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  assert(a.rows() == b.rows());
  if (c.rows() != a.cols() || c.cols() != b.cols()) c = Matrix(a.cols(), b.cols());
}
void check_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  assert(a.cols() == b.cols());
  if (c.rows() != a.rows() || c.cols() != b.rows()) c = Matrix(a.rows(), b.rows());
}

// Row kernels shared by the serial and OpenMP drivers so that both produce
// the same floating-point sequence per output element.
inline void nn_row(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
  const std::size_t inner = a.cols();
  const std::size_t n = b.cols();
  double* ci = c.data() + i * n;
  std::fill(ci, ci + n, 0.0);
  const double* ai = a.data() + i * inner;
  for (std::size_t k = 0; k < inner; ++k) {
    const double aik = ai[k];
    if (aik == 0.0) continue;
    const double* bk = b.data() + k * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
  }
}

inline void tn_row(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
  const std::size_t m = a.rows();
  const std::size_t n = b.cols();
  double* ci = c.data() + i * n;
  std::fill(ci, ci + n, 0.0);
  for (std::size_t r = 0; r < m; ++r) {
    const double ari = a(r, i);
    if (ari == 0.0) continue;
    const double* br = b.data() + r * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] += ari * br[j];
  }
}

inline void nt_row(const Matrix& a, const Matrix& b, Matrix& c, std::size_t i) {
  const std::size_t inner = a.cols();
  const double* ai = a.data() + i * inner;
  for (std::size_t j = 0; j < b.rows(); ++j) {
    const double* bj = b.data() + j * inner;
    double s = 0.0;
    for (std::size_t k = 0; k < inner; ++k) s += ai[k] * bj[k];
    c(i, j) = s;
  }
}

inline void dist_row(const Matrix& q, const Matrix& r, Matrix& out, std::size_t i) {
  const std::size_t d = q.cols();
  const double* qi = q.data() + i * d;
  for (std::size_t j = 0; j < r.rows(); ++j) {
    const double* rj = r.data() + j * d;
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = qi[k] - rj[k];
      s += diff * diff;
    }
    out(i, j) = s;
  }
}

void check_dist(const Matrix& q, const Matrix& r, Matrix& out) {
  assert(q.cols() == r.cols());
  if (out.rows() != q.rows() || out.cols() != r.rows()) out = Matrix(q.rows(), r.rows());
}

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelThreshold = 1 << 15;

}  // namespace

namespace serial {

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  check_nn(a, b, c);
  for (std::size_t i = 0; i < a.rows(); ++i) nn_row(a, b, c, i);
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  check_tn(a, b, c);
  for (std::size_t i = 0; i < a.cols(); ++i) tn_row(a, b, c, i);
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  check_nt(a, b, c);
  for (std::size_t i = 0; i < a.rows(); ++i) nt_row(a, b, c, i);
}

void sq_distances(const Matrix& queries, const Matrix& refs, Matrix& out) {
  check_dist(queries, refs, out);
  for (std::size_t i = 0; i < queries.rows(); ++i) dist_row(queries, refs, out, i);
}

}  // namespace serial

namespace omp {

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& c) {
  check_nn(a, b, c);
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
  const bool par = a.rows() * a.cols() * b.cols() >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t i = 0; i < rows; ++i) nn_row(a, b, c, static_cast<std::size_t>(i));
}

void gemm_tn(const Matrix& a, const Matrix& b, Matrix& c) {
  check_tn(a, b, c);
  const auto rows = static_cast<std::ptrdiff_t>(a.cols());
  const bool par = a.rows() * a.cols() * b.cols() >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t i = 0; i < rows; ++i) tn_row(a, b, c, static_cast<std::size_t>(i));
}

void gemm_nt(const Matrix& a, const Matrix& b, Matrix& c) {
  check_nt(a, b, c);
  const auto rows = static_cast<std::ptrdiff_t>(a.rows());
  const bool par = a.rows() * a.cols() * b.rows() >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t i = 0; i < rows; ++i) nt_row(a, b, c, static_cast<std::size_t>(i));
}

void sq_distances(const Matrix& queries, const Matrix& refs, Matrix& out) {
  check_dist(queries, refs, out);
  const auto rows = static_cast<std::ptrdiff_t>(queries.rows());
  const bool par = queries.rows() * refs.rows() * queries.cols() >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t i = 0; i < rows; ++i) dist_row(queries, refs, out, static_cast<std::size_t>(i));
}

}  // namespace omp

void column_sums(const Matrix& a, std::span<double> out) {
  assert(out.size() == a.cols());
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto row = a.row(r);
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += row[j];
  }
}

}  // namespace leap::kernels

namespace leap {

void set_workers(int n) { omp_set_num_threads(std::max(1, n)); }

int workers() { return omp_get_max_threads(); }

}  // namespace leap
