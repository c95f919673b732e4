// NEON kernels for AArch64, where Advanced SIMD is part of the base ISA.

#include "spherecorr/kernels.hpp"

#if defined(__aarch64__)

#include <arm_neon.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace spherecorr::kernels {
namespace {

double dot_neon(const double* x, const double* y, std::size_t n) {
  float64x2_t s0 = vdupq_n_f64(0.0);
  float64x2_t s1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 = vfmaq_f64(s0, vld1q_f64(x + i), vld1q_f64(y + i));
    s1 = vfmaq_f64(s1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(s0, s1));
  for (; i < n; ++i) s = std::fma(x[i], y[i], s);
  return s;
}

void gemm_neon(std::size_t m, std::size_t n, std::size_t k, const double* a,
               bool trans_a, const double* b, bool trans_b, double* c,
               bool accumulate) {
  if (m == 0 || n == 0) return;
  std::vector<double> apack;
  const double* ar = a;
  if (trans_a) {
    apack.resize(m * k);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) apack[i * k + p] = a[p * m + i];
    ar = apack.data();
  }
  std::vector<double> bpack;
  if (n < 2) {
    const double* bt = b;
    if (!trans_b) {
      bpack.resize(n * k);
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < k; ++p) bpack[j * k + p] = b[p * n + j];
      bt = bpack.data();
    }
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double s = dot_neon(ar + i * k, bt + j * k, k);
        c[i * n + j] = accumulate ? c[i * n + j] + s : s;
      }
    return;
  }
  const double* br = b;
  if (trans_b) {
    bpack.resize(k * n);
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) bpack[p * n + j] = b[j * k + p];
    br = bpack.data();
  }
  std::vector<double> acc(n);
  const std::size_t nv = n - n % 2;
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ar[i * k + p];
      const float64x2_t va = vdupq_n_f64(av);
      const double* brow = br + p * n;
      std::size_t j = 0;
      for (; j < nv; j += 2)
        vst1q_f64(acc.data() + j,
                  vfmaq_f64(vld1q_f64(acc.data() + j), va, vld1q_f64(brow + j)));
      for (; j < n; ++j) acc[j] = std::fma(av, brow[j], acc[j]);
    }
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j)
      crow[j] = accumulate ? crow[j] + acc[j] : acc[j];
  }
}

void gemv_neon(std::size_t m, std::size_t k, const double* a, const double* x,
               double* y) {
  for (std::size_t i = 0; i < m; ++i) y[i] = dot_neon(a + i * k, x, k);
}

void axpy_neon(std::size_t n, double alpha, const double* x, double* y) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

void softmax_row_neon(std::size_t n, const double* in, double* out) {
  if (n == 0) return;
  double mx = in[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[i]);
  float64x2_t vs = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    out[i] = std::exp(in[i] - mx);
    out[i + 1] = std::exp(in[i + 1] - mx);
    vs = vaddq_f64(vs, vld1q_f64(out + i));
  }
  double sum = vaddvq_f64(vs);
  for (; i < n; ++i) {
    out[i] = std::exp(in[i] - mx);
    sum += out[i];
  }
  const float64x2_t vsum = vdupq_n_f64(sum);
  i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vdivq_f64(vld1q_f64(out + i), vsum));
  for (; i < n; ++i) out[i] /= sum;
}

constexpr KernelTable kNeon{Isa::neon, gemm_neon, gemv_neon,
                            dot_neon,  axpy_neon, softmax_row_neon};

}  // namespace

namespace detail {
const KernelTable* neon_table() { return &kNeon; }
}  // namespace detail

}  // namespace spherecorr::kernels

#else

namespace spherecorr::kernels::detail {
const KernelTable* neon_table() { return nullptr; }
}  // namespace spherecorr::kernels::detail

#endif
