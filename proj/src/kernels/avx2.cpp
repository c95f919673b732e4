// AVX2 + FMA kernels. Compiled with -mavx2 -mfma; only reached after the
// dispatcher has checked CPU support.

#include "spherecorr/kernels.hpp"

#if defined(SPHERECORR_HAVE_AVX2)

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace spherecorr::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

inline double hmax(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_max_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_max_sd(lo, sh));
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4),
                         _mm256_loadu_pd(y + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
  }
  double s = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) s = std::fma(x[i], y[i], s);
  return s;
}

// Writes op(M) as a rows x cols row-major matrix into out.
// M is stored rows x cols, or cols x rows when trans.
void pack(const double* m, bool trans, std::size_t rows, std::size_t cols,
          std::vector<double>& out) {
  out.resize(rows * cols);
  if (!trans) {
    std::copy(m, m + rows * cols, out.begin());
    return;
  }
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = m[c * rows + r];
}

// MR rows x NV vectors of C from row-major A (m x k) and B (k x n). Every
// element is an fma chain over p = 0..k-1 starting from zero.
template <int MR, int NV>
inline void tile_rows(std::size_t n, std::size_t k, const double* a, const double* b, double* c, bool accumulate) {
  __m256d acc[MR][NV];
  for (int r = 0; r < MR; ++r)
    for (int v = 0; v < NV; ++v) acc[r][v] = _mm256_setzero_pd();
  for (std::size_t p = 0; p < k; ++p) {
    __m256d bv[NV];
    for (int v = 0; v < NV; ++v) bv[v] = _mm256_loadu_pd(b + p * n + 4 * v);
    for (int r = 0; r < MR; ++r) {
      const __m256d va = _mm256_set1_pd(a[r * k + p]);
      for (int v = 0; v < NV; ++v) acc[r][v] = _mm256_fmadd_pd(va, bv[v], acc[r][v]);
    }
  }
  for (int r = 0; r < MR; ++r)
    for (int v = 0; v < NV; ++v) {
      double* dst = c + r * n + 4 * v;
      _mm256_storeu_pd(dst, accumulate ? _mm256_add_pd(_mm256_loadu_pd(dst), acc[r][v]) : acc[r][v]);
    }
}

template <int MR>
void rows_block(std::size_t n, std::size_t k, const double* a, const double* b, double* c, bool accumulate) {
  const std::size_t nv = n - n % 4;
  std::size_t j0 = 0;
  for (; j0 + 12 <= nv; j0 += 12) tile_rows<MR, 3>(n, k, a, b + j0, c + j0, accumulate);
  if (nv - j0 == 8) tile_rows<MR, 2>(n, k, a, b + j0, c + j0, accumulate);
  if (nv - j0 == 4) tile_rows<MR, 1>(n, k, a, b + j0, c + j0, accumulate);
  for (int r = 0; r < MR; ++r)
    for (std::size_t j = nv; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s = std::fma(a[r * k + p], b[p * n + j], s);
      double& dst = c[r * n + j];
      dst = accumulate ? dst + s : s;
    }
}

void gemm_rows(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
               double* c, bool accumulate) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) rows_block<4>(n, k, a + i * k, b, c + i * n, accumulate);
  for (; i < m; ++i) rows_block<1>(n, k, a + i * k, b, c + i * n, accumulate);
}

// 8 rows x NJ columns of C = A^T B, A stored k x m. Accumulators stay in
// registers; every element is an fma chain over p = 0..k-1 from zero.
template <int NJ>
inline void tile_trans_a(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
                         bool accumulate) {
  __m256d lo[NJ], hi[NJ];
  for (int j = 0; j < NJ; ++j) lo[j] = hi[j] = _mm256_setzero_pd();
  for (std::size_t p = 0; p < k; ++p) {
    const __m256d al = _mm256_loadu_pd(a + p * m);
    const __m256d ah = _mm256_loadu_pd(a + p * m + 4);
    for (int j = 0; j < NJ; ++j) {
      const __m256d bj = _mm256_set1_pd(b[p * n + j]);
      lo[j] = _mm256_fmadd_pd(al, bj, lo[j]);
      hi[j] = _mm256_fmadd_pd(ah, bj, hi[j]);
    }
  }
  alignas(32) double t[8];
  for (int j = 0; j < NJ; ++j) {
    _mm256_store_pd(t, lo[j]);
    _mm256_store_pd(t + 4, hi[j]);
    for (int r = 0; r < 8; ++r) {
      double& dst = c[r * n + j];
      dst = accumulate ? dst + t[r] : t[r];
    }
  }
}

// C = A^T B with A stored k x m, B a row-major k x n operand.
void gemm_trans_a(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c, bool accumulate) {
  const std::size_t mb = m - m % 8;
  for (std::size_t i0 = 0; i0 < mb; i0 += 8) {
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) tile_trans_a<4>(m, n, k, a + i0, b + j, c + i0 * n + j, accumulate);
    for (; j < n; ++j) tile_trans_a<1>(m, n, k, a + i0, b + j, c + i0 * n + j, accumulate);
  }
  for (std::size_t i = mb; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s = std::fma(a[p * m + i], b[p * n + j], s);
      double& dst = c[i * n + j];
      dst = accumulate ? dst + s : s;
    }
}

void gemm_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, bool trans_a, const double* b,
               bool trans_b, double* c, bool accumulate) {
  if (m == 0 || n == 0) return;
  std::vector<double> bpack;
  if (!trans_a && n < 4) {
    // Narrow outputs: one dot product per element against rows of op(B)^T.
    const double* bt = b;
    if (!trans_b) {
      pack(b, true, n, k, bpack);
      bt = bpack.data();
    }
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double s = dot_avx2(a + i * k, bt + j * k, k);
        c[i * n + j] = accumulate ? c[i * n + j] + s : s;
      }
    return;
  }
  const double* br = b;
  if (trans_b) {
    pack(b, true, k, n, bpack);
    br = bpack.data();
  }
  if (trans_a)
    gemm_trans_a(m, n, k, a, br, c, accumulate);
  else
    gemm_rows(m, n, k, a, br, c, accumulate);
}

void gemv_avx2(std::size_t m, std::size_t k, const double* a, const double* x,
               double* y) {
  for (std::size_t i = 0; i < m; ++i) y[i] = dot_avx2(a + i * k, x, k);
}

void axpy_avx2(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i),
                                            _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

// exp(x) for x in [-708, 709]: Cody-Waite reduction by ln 2 and a rational
// approximation on |r| <= ln2/2 (Cephes coefficients).
inline __m256d exp_pd(__m256d x) {
  x = _mm256_max_pd(x, _mm256_set1_pd(-708.0));
  x = _mm256_min_pd(x, _mm256_set1_pd(709.0));
  const __m256d n = _mm256_round_pd(
      _mm256_mul_pd(x, _mm256_set1_pd(1.4426950408889634073599)),
      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(6.93145751953125e-1), x);
  r = _mm256_fnmadd_pd(n, _mm256_set1_pd(1.42860682030941723212e-6), r);
  const __m256d rr = _mm256_mul_pd(r, r);
  __m256d p = _mm256_set1_pd(1.26177193074810590878e-4);
  p = _mm256_fmadd_pd(p, rr, _mm256_set1_pd(3.02994407707441961300e-2));
  p = _mm256_fmadd_pd(p, rr, _mm256_set1_pd(9.99999999999999999910e-1));
  p = _mm256_mul_pd(p, r);
  __m256d q = _mm256_set1_pd(3.00198505138664455042e-6);
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.52448340349684104192e-3));
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.27265548208155028766e-1));
  q = _mm256_fmadd_pd(q, rr, _mm256_set1_pd(2.00000000000000000009e0));
  __m256d e = _mm256_div_pd(p, _mm256_sub_pd(q, p));
  e = _mm256_fmadd_pd(_mm256_set1_pd(2.0), e, _mm256_set1_pd(1.0));
  // 2^n via the exponent field.
  const __m128i ni = _mm256_cvtpd_epi32(n);
  __m256i bits = _mm256_cvtepi32_epi64(ni);
  bits = _mm256_add_epi64(bits, _mm256_set1_epi64x(1023));
  bits = _mm256_slli_epi64(bits, 52);
  return _mm256_mul_pd(e, _mm256_castsi256_pd(bits));
}

void softmax_row_avx2(std::size_t n, const double* in, double* out) {
  if (n == 0) return;
  std::size_t i = 0;
  double mx = in[0];
  if (n >= 4) {
    __m256d vm = _mm256_loadu_pd(in);
    for (i = 4; i + 4 <= n; i += 4) vm = _mm256_max_pd(vm, _mm256_loadu_pd(in + i));
    mx = hmax(vm);
  }
  for (; i < n; ++i) mx = std::max(mx, in[i]);

  const __m256d vmx = _mm256_set1_pd(mx);
  __m256d vs = _mm256_setzero_pd();
  i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d e = exp_pd(_mm256_sub_pd(_mm256_loadu_pd(in + i), vmx));
    _mm256_storeu_pd(out + i, e);
    vs = _mm256_add_pd(vs, e);
  }
  double sum = hsum(vs);
  for (; i < n; ++i) {
    alignas(32) double tmp[4] = {in[i] - mx, 0.0, 0.0, 0.0};
    _mm256_store_pd(tmp, exp_pd(_mm256_load_pd(tmp)));
    out[i] = tmp[0];
    sum += tmp[0];
  }
  const __m256d vinv = _mm256_set1_pd(sum);
  i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_div_pd(_mm256_loadu_pd(out + i), vinv));
  for (; i < n; ++i) out[i] /= sum;
}

constexpr KernelTable kAvx2{Isa::avx2, gemm_avx2, gemv_avx2,
                            dot_avx2,  axpy_avx2, softmax_row_avx2};

}  // namespace

namespace detail {
const KernelTable* avx2_table() { return &kAvx2; }
}  // namespace detail

}  // namespace spherecorr::kernels

#else

namespace spherecorr::kernels::detail {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace spherecorr::kernels::detail

#endif
