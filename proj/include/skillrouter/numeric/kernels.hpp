#pragma once

// Dense double-precision kernels with a scalar reference path and an AVX2/FMA
// path selected at runtime. All matrices are row-major with explicit leading
// dimensions. Every GEMM variant accumulates into C.

#include <cstddef>
#include <string_view>

namespace skillrouter::numeric::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

struct KernelTable {
  double (*dot)(const double* x, const double* y, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, const double* a,
               std::size_t lda, const double* b, std::size_t ldb, double* c,
               std::size_t ldc);
};

bool isa_supported(Isa isa);

// Defaults to the best supported ISA. SKILLROUTER_KERNELS=scalar forces the
// reference path.
Isa active_isa();
void set_active_isa(Isa isa);

const KernelTable& table(Isa isa);
const KernelTable& active();

// Convenience wrappers over the active table.
double dot(const double* x, const double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c,
          std::size_t ldc);

// out[cols x rows] = in[rows x cols]^T
void transpose(std::size_t rows, std::size_t cols, const double* in,
               std::size_t ld_in, double* out, std::size_t ld_out);

namespace scalar {
double dot(const double* x, const double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c,
          std::size_t ldc);
}  // namespace scalar

#if defined(SKILLROUTER_HAVE_AVX2)
namespace avx2 {
double dot(const double* x, const double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c,
          std::size_t ldc);
}  // namespace avx2
#endif

}  // namespace skillrouter::numeric::kernels
