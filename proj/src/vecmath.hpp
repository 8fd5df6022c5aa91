#pragma once

#include <cstddef>

// Elementwise transcendental kernels over arrays. Where the toolchain offers
// glibc's vector math library these run on SIMD lanes.
namespace fourllie::vecmath {

/// out[i] = atan2(y[i], x[i]) mapped into (-pi, pi]; 0 where x = y = 0.
void phase(const double* x, const double* y, double* out, std::size_t n);
void sincos(const double* p, double* c, double* s, std::size_t n);
/// out[i] = sqrt(x[i]^2 + y[i]^2).
void magnitude(const double* x, const double* y, double* out, std::size_t n);

}  // namespace fourllie::vecmath
