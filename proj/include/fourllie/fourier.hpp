#pragma once

#include <complex>
#include <span>

#include "fourllie/tensor.hpp"

namespace fourllie {

using Complex = std::complex<double>;

/// Per-channel 2-D spectrum stored as separate real and imaginary arrays.
/// Index (u, v) is the raw DFT bin; no centering shift is applied.
struct ComplexSpectrum {
  Tensor real;
  Tensor imag;
};

/// Polar form of a spectrum. Amplitude is >= 0, phase in (-pi, pi].
struct AmplitudePhase {
  Tensor amplitude;
  Tensor phase;
};

enum class Direction { Forward, Inverse };

/// In-place unitary 2-D DFT of one row-major h x w plane. Both directions
/// are scaled by 1/sqrt(h*w). Thread-safe.
void dft2_plane(std::span<Complex> plane, int h, int w, Direction dir);

/// Unitary forward DFT of a real h x w plane, written as the full h x w
/// spectrum. Thread-safe.
void rdft2_plane(const double* x, double* re, double* im, int h, int w);
/// Real part of the unitary inverse DFT of a full h x w spectrum.
void irdft2_real_plane(const double* re, const double* im, double* out, int h, int w);

/// Per-channel unitary 2-D DFT of a real (C, H, W) array.
/// Throws InvalidInput on non-finite values.
ComplexSpectrum forward_transform(const Tensor& img);

/// Real part of the unitary inverse DFT. The imaginary residue is discarded
/// when it is below 1e-5 in L2 norm or below 1e-4 of the signal norm;
/// otherwise ConjugateSymmetryViolation is thrown.
Tensor inverse_transform(const ComplexSpectrum& spec);

/// Amplitude sqrt(R^2 + I^2) and four-quadrant phase atan2(I, R); a zero
/// bin gets phase 0.
AmplitudePhase to_amplitude_phase(const ComplexSpectrum& spec);

/// R = A cos P, I = A sin P. Throws InvalidInput for negative amplitude.
ComplexSpectrum from_amplitude_phase(const AmplitudePhase& ap);

}  // namespace fourllie
