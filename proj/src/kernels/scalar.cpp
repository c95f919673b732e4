// Scalar reference kernels. Every sum runs over the reduction index in
// increasing order with separate multiply and add, so results are
// reproducible on any IEEE-754 target; the SIMD variants are tested
// against these.

#include <algorithm>
#include <cmath>
#include <vector>

#include "spherecorr/kernels.hpp"

namespace spherecorr::kernels {
namespace {

void gemm_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a,
                 bool trans_a, const double* b, bool trans_b, double* c,
                 bool accumulate) {
  auto a_at = [&](std::size_t i, std::size_t p) {
    return trans_a ? a[p * m + i] : a[i * k + p];
  };
  if (trans_b) {
    // B is n x k: each output is a contiguous dot product.
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double* brow = b + j * k;
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += a_at(i, p) * brow[p];
        c[i * n + j] = accumulate ? c[i * n + j] + s : s;
      }
    }
    return;
  }
  std::vector<double> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a_at(i, p);
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
    }
    double* crow = c + i * n;
    if (accumulate) {
      for (std::size_t j = 0; j < n; ++j) crow[j] += acc[j];
    } else {
      std::copy(acc.begin(), acc.end(), crow);
    }
  }
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void gemv_scalar(std::size_t m, std::size_t k, const double* a,
                 const double* x, double* y) {
  for (std::size_t i = 0; i < m; ++i) y[i] = dot_scalar(a + i * k, x, k);
}

void axpy_scalar(std::size_t n, double alpha, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void softmax_row_scalar(std::size_t n, const double* in, double* out) {
  if (n == 0) return;
  double mx = in[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(in[i] - mx);
    sum += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= sum;
}

constexpr KernelTable kScalar{Isa::scalar, gemm_scalar,  gemv_scalar,
                              dot_scalar,  axpy_scalar, softmax_row_scalar};

}  // namespace

namespace detail {
const KernelTable& scalar_table() { return kScalar; }
}  // namespace detail

}  // namespace spherecorr::kernels
