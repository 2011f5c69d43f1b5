#include <atomic>
#include <cstdlib>
#include <cstring>
#include <stdexcept>

#include "skillrouter/numeric/kernels.hpp"

namespace skillrouter::numeric::kernels {

namespace {

constexpr KernelTable kScalarTable{&scalar::dot, &scalar::axpy, &scalar::gemm};
#if defined(SKILLROUTER_HAVE_AVX2)
constexpr KernelTable kAvx2Table{&avx2::dot, &avx2::axpy, &avx2::gemm};
#endif

Isa detect() {
  const char* forced = std::getenv("SKILLROUTER_KERNELS");
  if (forced != nullptr && std::strcmp(forced, "scalar") == 0) {
    return Isa::kScalar;
  }
  return isa_supported(Isa::kAvx2) ? Isa::kAvx2 : Isa::kScalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  return isa == Isa::kAvx2 ? "avx2" : "scalar";
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(SKILLROUTER_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("kernel ISA not supported on this machine");
  }
  current().store(isa, std::memory_order_relaxed);
}

const KernelTable& table(Isa isa) {
#if defined(SKILLROUTER_HAVE_AVX2)
  if (isa == Isa::kAvx2) return kAvx2Table;
#endif
  (void)isa;
  return kScalarTable;
}

const KernelTable& active() { return table(active_isa()); }

double dot(const double* x, const double* y, std::size_t n) {
  return active().dot(x, y, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const double* a,
          std::size_t lda, const double* b, std::size_t ldb, double* c,
          std::size_t ldc) {
  if (m == 0 || n == 0 || k == 0) return;
  active().gemm(m, n, k, a, lda, b, ldb, c, ldc);
}

void transpose(std::size_t rows, std::size_t cols, const double* in,
               std::size_t ld_in, double* out, std::size_t ld_out) {
  constexpr std::size_t kTile = 16;
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile) {
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t r1 = r0 + kTile < rows ? r0 + kTile : rows;
      const std::size_t c1 = c0 + kTile < cols ? c0 + kTile : cols;
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) out[c * ld_out + r] = in[r * ld_in + c];
      }
    }
  }
}

}  // namespace skillrouter::numeric::kernels
