#pragma once

// Dense double-precision inner loops used by the autodiff engine, the
// matcher and the metrics. Every kernel has a scalar reference
// implementation; SIMD variants (AVX2+FMA on x86-64, NEON on AArch64) are
// selected once at runtime and must agree with the reference to rounding.
//
// All kernels are deterministic: for a fixed ISA the result of each output
// element depends only on the inputs that contribute to it, never on the
// number of rows being processed or on memory alignment.

#include <cstddef>
#include <string_view>

namespace spherecorr::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa);

// C (m x n) = op(A) * op(B), or C += op(A) * op(B) when accumulate is set.
// op(A) is m x k; A is stored row-major as m x k, or k x m when trans_a.
// op(B) is k x n; B is stored row-major as k x n, or n x k when trans_b.
using GemmFn = void (*)(std::size_t m, std::size_t n, std::size_t k,
                        const double* a, bool trans_a, const double* b,
                        bool trans_b, double* c, bool accumulate);

// y (m) = A (m x k, row-major) * x (k).
using GemvFn = void (*)(std::size_t m, std::size_t k, const double* a,
                        const double* x, double* y);

using DotFn = double (*)(const double* x, const double* y, std::size_t n);

// y += alpha * x
using AxpyFn = void (*)(std::size_t n, double alpha, const double* x,
                        double* y);

// out = softmax(in) over one contiguous row; in and out may alias.
using SoftmaxRowFn = void (*)(std::size_t n, const double* in, double* out);

struct KernelTable {
  Isa isa;
  GemmFn gemm;
  GemvFn gemv;
  DotFn dot;
  AxpyFn axpy;
  SoftmaxRowFn softmax_row;
};

// True when the ISA was compiled in and the running CPU supports it.
bool supported(Isa isa);

// Table for a specific ISA. Throws std::runtime_error if unsupported.
const KernelTable& table(Isa isa);

// Table in use. Chosen on first call: the best supported ISA, unless the
// SPHERECORR_KERNELS environment variable names one ("scalar", "avx2",
// "neon").
const KernelTable& active();

// Overrides the active table (tests and benchmarking).
void select(Isa isa);

namespace detail {
const KernelTable& scalar_table();
const KernelTable* avx2_table();  // nullptr when not compiled in
const KernelTable* neon_table();  // nullptr when not compiled in
}  // namespace detail

}  // namespace spherecorr::kernels
