#pragma once

// Dense f64 inner-loop kernels. Every kernel has a portable scalar
// reference; an AVX2/FMA variant is compiled when the toolchain targets
// x86-64 and is picked at runtime if the CPU supports it.

#include <cstddef>
#include <string_view>

namespace devialab::simd {

struct KernelTable {
  std::string_view name;
  // sum_i x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // z[i] = x[i] + y[i]
  void (*add)(const double* x, const double* y, double* z, std::size_t n);
  // z[i] = x[i] * y[i]
  void (*mul)(const double* x, const double* y, double* z, std::size_t n);
  // x[i] *= a
  void (*scale)(double a, double* x, std::size_t n);
  // sum_i x[i]
  double (*sum)(const double* x, std::size_t n);
};

const KernelTable& scalar_kernels();

// nullptr when the AVX2 variant was not compiled in or the CPU lacks AVX2+FMA.
const KernelTable* avx2_kernels();

// The table used by the library. Resolved once: AVX2 when available,
// scalar otherwise, or scalar when DEVIALAB_SIMD=scalar is set.
const KernelTable& active();

// Row-major GEMM helpers built on a kernel table. All accumulate into C
// (C += ...); callers zero C first when they want plain assignment.
//   nn: C[m x n] += A[m x k] * B[k x n]
//   nt: C[m x n] += A[m x k] * B[n x k]^T
//   tn: C[m x n] += A[k x m]^T * B[k x n]
void gemm_nn(const KernelTable& kt, std::size_t m, std::size_t n, std::size_t k,
             const double* a, const double* b, double* c);
void gemm_nt(const KernelTable& kt, std::size_t m, std::size_t n, std::size_t k,
             const double* a, const double* b, double* c);
void gemm_tn(const KernelTable& kt, std::size_t m, std::size_t n, std::size_t k,
             const double* a, const double* b, double* c);

}  // namespace devialab::simd
