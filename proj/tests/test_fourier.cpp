#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "fourllie/autograd.hpp"
#include "fourllie/errors.hpp"
#include "fourllie/fourier.hpp"
#include "support.hpp"

using namespace fourllie;
using testing::random_image;

namespace {

double max_diff(const ComplexSpectrum& a, const ComplexSpectrum& b) {
  return std::max(max_abs_diff(a.real, b.real), max_abs_diff(a.imag, b.imag));
}

double sum_sq(const Tensor& t) {
  double s = 0;
  for (double v : t.values()) s += v * v;
  return s;
}

}  // namespace

TEST_CASE("forward transform equals the double-sum oracle up to 6x6") {
  std::uint64_t seed = 1;
  for (int h = 1; h <= 6; ++h) {
    for (int w = 1; w <= 6; ++w) {
      const Tensor img = random_image(3, h, w, seed++);
      CHECK(max_diff(forward_transform(img), testing::dft_oracle(img)) < 1e-8);
    }
  }
}

TEST_CASE("round trip and Parseval on odd and even sizes") {
  const int sizes[][2] = {{5, 7}, {8, 8}, {16, 16}, {1, 9}, {7, 1}, {3, 4}};
  std::uint64_t seed = 100;
  for (const auto& s : sizes) {
    const Tensor img = random_image(3, s[0], s[1], seed++);
    const ComplexSpectrum spec = forward_transform(img);
    CHECK(max_abs_diff(inverse_transform(spec), img) < 1e-6);
    const double e_img = sum_sq(img);
    const double e_spec = sum_sq(spec.real) + sum_sq(spec.imag);
    CHECK(std::abs(e_spec - e_img) / e_img < 1e-6);
  }
}

TEST_CASE("constant image concentrates in the DC bin") {
  const int h = 4, w = 6;
  const double c = 0.37;
  const ComplexSpectrum spec = forward_transform(Tensor::image(1, h, w, c));
  for (int u = 0; u < h; ++u) {
    for (int v = 0; v < w; ++v) {
      const double expect = (u == 0 && v == 0) ? c * std::sqrt(24.0) : 0.0;
      CHECK(std::abs(spec.real.at(0, u, v) - expect) < 1e-12);
      CHECK(std::abs(spec.imag.at(0, u, v)) < 1e-12);
    }
  }
}

TEST_CASE("inverse of a DC-only spectrum is constant") {
  ComplexSpectrum spec{Tensor::image(1, 3, 5), Tensor::image(1, 3, 5)};
  spec.real.at(0, 0, 0) = 2.5;
  const Tensor img = inverse_transform(spec);
  for (double v : img.values()) CHECK(v == doctest::Approx(2.5 / std::sqrt(15.0)).epsilon(1e-12));
  const Tensor zero = inverse_transform({Tensor::image(2, 4, 4), Tensor::image(2, 4, 4)});
  for (double v : zero.values()) CHECK(v == 0.0);
}

TEST_CASE("inverse transform matches the inverse oracle on Hermitian spectra") {
  const Tensor img = random_image(2, 5, 6, 9);
  const ComplexSpectrum spec = testing::dft_oracle(img);
  const ComplexSpectrum back = testing::idft_oracle(spec);
  CHECK(max_abs_diff(inverse_transform(spec), back.real) < 1e-10);
}

TEST_CASE("non-Hermitian spectrum is rejected") {
  ComplexSpectrum spec{Tensor::image(1, 4, 4), Tensor::image(1, 4, 4)};
  spec.imag.at(0, 1, 2) = 1.0;
  CHECK_THROWS_AS(inverse_transform(spec), ConjugateSymmetryViolation);
}

TEST_CASE("tiny imaginary residue is discarded") {
  const Tensor img = random_image(1, 4, 4, 3);
  ComplexSpectrum spec = forward_transform(img);
  spec.imag.at(0, 1, 1) += 1e-7;
  CHECK(max_abs_diff(inverse_transform(spec), img) < 1e-6);
}

TEST_CASE("non-finite input is rejected") {
  Tensor img = random_image(1, 3, 3, 4);
  img[4] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(forward_transform(img), InvalidInput);
}

TEST_CASE("amplitude and phase of single bins") {
  ComplexSpectrum spec{Tensor::image(1, 1, 3), Tensor::image(1, 1, 3)};
  spec.real[0] = 3;
  spec.imag[0] = 4;
  spec.real[2] = -1;
  spec.imag[2] = -0.0;
  const AmplitudePhase ap = to_amplitude_phase(spec);
  CHECK(ap.amplitude[0] == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(ap.phase[0] == doctest::Approx(std::atan2(4.0, 3.0)).epsilon(1e-14));
  CHECK(ap.amplitude[1] == 0.0);
  CHECK(ap.phase[1] == 0.0);
  CHECK(ap.phase[2] == doctest::Approx(std::numbers::pi).epsilon(1e-15));
}

TEST_CASE("phase covers all four quadrants") {
  ComplexSpectrum spec{Tensor::image(1, 1, 8), Tensor::image(1, 1, 8)};
  for (int i = 0; i < 8; ++i) {
    const double a = -std::numbers::pi + (i + 0.5) * std::numbers::pi / 4;
    spec.real[static_cast<std::size_t>(i)] = 2.0 * std::cos(a);
    spec.imag[static_cast<std::size_t>(i)] = 2.0 * std::sin(a);
  }
  const AmplitudePhase ap = to_amplitude_phase(spec);
  for (int i = 0; i < 8; ++i) {
    const double a = -std::numbers::pi + (i + 0.5) * std::numbers::pi / 4;
    CHECK(ap.phase[static_cast<std::size_t>(i)] == doctest::Approx(a).epsilon(1e-13));
  }
}

TEST_CASE("polar recombination") {
  AmplitudePhase ap{Tensor::image(1, 2, 2, 1.0), Tensor::image(1, 2, 2, 0.0)};
  ComplexSpectrum z = from_amplitude_phase(ap);
  for (double v : z.real.values()) CHECK(v == 1.0);
  for (double v : z.imag.values()) CHECK(v == 0.0);
  ap = {Tensor::image(1, 2, 2, 2.0), Tensor::image(1, 2, 2, std::numbers::pi / 2)};
  z = from_amplitude_phase(ap);
  for (double v : z.real.values()) CHECK(std::abs(v) < 1e-15);
  for (double v : z.imag.values()) CHECK(v == doctest::Approx(2.0));
  ap.amplitude[1] = -0.5;
  CHECK_THROWS_AS(from_amplitude_phase(ap), InvalidInput);
}

TEST_CASE("decomposition round trip on random spectra") {
  const ComplexSpectrum spec{random_image(3, 6, 5, 11, -2, 2), random_image(3, 6, 5, 12, -2, 2)};
  const ComplexSpectrum back = from_amplitude_phase(to_amplitude_phase(spec));
  CHECK(max_diff(spec, back) < 1e-6);
}

TEST_CASE("amplitude of a real image is conjugate symmetric") {
  for (const auto& [h, w] : {std::pair{5, 7}, std::pair{8, 6}}) {
    const AmplitudePhase ap = to_amplitude_phase(forward_transform(random_image(3, h, w, 21)));
    for (int c = 0; c < 3; ++c) {
      for (int u = 0; u < h; ++u) {
        for (int v = 0; v < w; ++v) {
          CHECK(std::abs(ap.amplitude.at(c, u, v) - ap.amplitude.at(c, (h - u) % h, (w - v) % w)) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("graph transforms agree with the plain ones") {
  const Tensor img = random_image(3, 7, 10, 31);
  const ag::Var z = ag::fft2(ag::constant(img));
  const ComplexSpectrum oracle = testing::dft_oracle(img);
  for (int c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < 70; ++i) {
      CHECK(std::abs(z->value.plane(c)[i] - oracle.real.plane(c)[i]) < 1e-12);
      CHECK(std::abs(z->value.plane(c + 3)[i] - oracle.imag.plane(c)[i]) < 1e-12);
    }
  }
  CHECK(max_abs_diff(ag::ifft2_real(z)->value, img) < 1e-12);
  const Tensor amp = ag::amplitude(z)->value;
  const Tensor pha = ag::phase(z)->value;
  const AmplitudePhase ap = to_amplitude_phase(oracle);
  CHECK(max_abs_diff(amp, ap.amplitude) < 1e-12);
  CHECK(max_abs_diff(pha, ap.phase) < 1e-9);
}

TEST_CASE("real part of inverse ignores the anti-Hermitian component") {
  const Tensor re = random_image(1, 5, 4, 41, -1, 1);
  const Tensor im = random_image(1, 5, 4, 42, -1, 1);
  const ComplexSpectrum full = testing::idft_oracle({re, im});
  Tensor out = Tensor::image(1, 5, 4);
  irdft2_real_plane(re.data(), im.data(), out.data(), 5, 4);
  CHECK(max_abs_diff(out, full.real) < 1e-12);
}
