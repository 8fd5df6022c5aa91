#include "vecmath.hpp"

#include <cmath>
#include <numbers>

#if defined(__GNUC__) && !defined(__clang__) && defined(__x86_64__) && defined(__GLIBC__) && \
    __GLIBC_PREREQ(2, 35)
#define FOURLLIE_LIBMVEC 1
extern "C" {
__attribute__((simd("notinbranch"))) double atan2(double, double) noexcept;
__attribute__((simd("notinbranch"))) double sin(double) noexcept;
__attribute__((simd("notinbranch"))) double cos(double) noexcept;
}
#endif

namespace fourllie::vecmath {

void phase(const double* __restrict x, const double* __restrict y, double* __restrict out, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) out[i] = atan2(y[i], x[i]);
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] == 0.0 && y[i] == 0.0) {
      out[i] = 0.0;
    } else if (out[i] <= -std::numbers::pi) {
      out[i] = std::numbers::pi;  // atan2(-0.0, x < 0)
    }
  }
}

void sincos(const double* __restrict p, double* __restrict c, double* __restrict s, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) c[i] = cos(p[i]);
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) s[i] = sin(p[i]);
}

void magnitude(const double* __restrict x, const double* __restrict y, double* __restrict out, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) out[i] = std::sqrt(x[i] * x[i] + y[i] * y[i]);
}

}  // namespace fourllie::vecmath
