#include "fourllie/fourier.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <mutex>
#include <tuple>
#include <vector>

#include "fourllie/errors.hpp"
#include "vecmath.hpp"

namespace fourllie {
namespace {

// FFTW's planner is not reentrant; executing an existing plan through the
// new-array interface is. Plans are created once per (h, w, kind) and kept
// for the life of the process.
enum class PlanKind { ComplexForward, ComplexInverse, RealForward, RealInverse };

class PlanCache {
 public:
  fftw_plan get(int h, int w, PlanKind kind) {
    std::lock_guard lock(mutex_);
    auto key = std::make_tuple(h, w, static_cast<int>(kind));
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    const std::size_t n = static_cast<std::size_t>(h) * w;
    const std::size_t half = static_cast<std::size_t>(h) * (w / 2 + 1);
    fftw_plan plan = nullptr;
    if (kind == PlanKind::ComplexForward || kind == PlanKind::ComplexInverse) {
      std::vector<Complex> scratch(n);
      auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
      plan = fftw_plan_dft_2d(h, w, buf, buf, kind == PlanKind::ComplexForward ? FFTW_FORWARD : FFTW_BACKWARD,
                              FFTW_ESTIMATE | FFTW_UNALIGNED);
    } else {
      double* r = fftw_alloc_real(n);
      fftw_complex* c = fftw_alloc_complex(half);
      plan = kind == PlanKind::RealForward ? fftw_plan_dft_r2c_2d(h, w, r, c, FFTW_ESTIMATE)
                                           : fftw_plan_dft_c2r_2d(h, w, c, r, FFTW_ESTIMATE);
      fftw_free(r);
      fftw_free(c);
    }
    plans_.emplace(key, plan);
    return plan;
  }

 private:
  std::mutex mutex_;
  std::map<std::tuple<int, int, int>, fftw_plan> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

// Per-thread SIMD-aligned buffers for the real transforms; plans were made
// against buffers with the same alignment.
struct Scratch {
  double* real = nullptr;
  fftw_complex* half = nullptr;
  std::size_t real_size = 0;
  std::size_t half_size = 0;

  ~Scratch() {
    fftw_free(real);
    fftw_free(half);
  }
  void reserve(std::size_t n, std::size_t nh) {
    if (n > real_size) {
      fftw_free(real);
      real = fftw_alloc_real(n);
      real_size = n;
    }
    if (nh > half_size) {
      fftw_free(half);
      half = fftw_alloc_complex(nh);
      half_size = nh;
    }
  }
};

Scratch& scratch() {
  thread_local Scratch s;
  return s;
}

}  // namespace

void dft2_plane(std::span<Complex> plane, int h, int w, Direction dir) {
  if (h < 1 || w < 1 || plane.size() != static_cast<std::size_t>(h) * w) {
    throw InvalidInput("dft2_plane: buffer does not match " + std::to_string(h) + "x" +
                       std::to_string(w));
  }
  fftw_plan plan =
      plan_cache().get(h, w, dir == Direction::Forward ? PlanKind::ComplexForward : PlanKind::ComplexInverse);
  auto* buf = reinterpret_cast<fftw_complex*>(plane.data());
  fftw_execute_dft(plan, buf, buf);
  const double scale = 1.0 / std::sqrt(static_cast<double>(h) * w);
  for (Complex& z : plane) z *= scale;
}

void rdft2_plane(const double* x, double* re, double* im, int h, int w) {
  const int wh = w / 2 + 1;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  Scratch& s = scratch();
  s.reserve(n, static_cast<std::size_t>(h) * wh);
  std::copy(x, x + n, s.real);
  fftw_execute_dft_r2c(plan_cache().get(h, w, PlanKind::RealForward), s.real, s.half);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (int u = 0; u < h; ++u) {
    const fftw_complex* row = s.half + static_cast<std::size_t>(u) * wh;
    const fftw_complex* mirror = s.half + static_cast<std::size_t>((h - u) % h) * wh;
    double* rr = re + static_cast<std::size_t>(u) * w;
    double* ir = im + static_cast<std::size_t>(u) * w;
    for (int v = 0; v < wh; ++v) {
      rr[v] = row[v][0] * scale;
      ir[v] = row[v][1] * scale;
    }
    for (int v = wh; v < w; ++v) {
      rr[v] = mirror[w - v][0] * scale;
      ir[v] = -mirror[w - v][1] * scale;
    }
  }
}

void irdft2_real_plane(const double* re, const double* im, double* out, int h, int w) {
  const int wh = w / 2 + 1;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  Scratch& s = scratch();
  s.reserve(n, static_cast<std::size_t>(h) * wh);
  // Re(IDFT(Z)) = IDFT of the Hermitian part (Z[k] + conj(Z[-k])) / 2.
  const double scale = 0.5 / std::sqrt(static_cast<double>(n));
  for (int u = 0; u < h; ++u) {
    const int um = (h - u) % h;
    fftw_complex* row = s.half + static_cast<std::size_t>(u) * wh;
    for (int v = 0; v < wh; ++v) {
      const std::size_t a = static_cast<std::size_t>(u) * w + v;
      const std::size_t b = static_cast<std::size_t>(um) * w + (w - v) % w;
      row[v][0] = (re[a] + re[b]) * scale;
      row[v][1] = (im[a] - im[b]) * scale;
    }
  }
  fftw_execute_dft_c2r(plan_cache().get(h, w, PlanKind::RealInverse), s.half, s.real);
  std::copy(s.real, s.real + n, out);
}

ComplexSpectrum forward_transform(const Tensor& img) {
  require_image(img, "forward_transform");
  if (!img.all_finite()) throw InvalidInput("forward_transform: input contains non-finite values");
  const int c = img.channels(), h = img.height(), w = img.width();
  ComplexSpectrum out{Tensor::image(c, h, w), Tensor::image(c, h, w)};
  for (int k = 0; k < c; ++k) {
    rdft2_plane(img.plane(k).data(), out.real.plane(k).data(), out.imag.plane(k).data(), h, w);
  }
  return out;
}

Tensor inverse_transform(const ComplexSpectrum& spec) {
  require_image(spec.real, "inverse_transform");
  require_same_shape(spec.real, spec.imag, "inverse_transform");
  if (!spec.real.all_finite() || !spec.imag.all_finite()) {
    throw InvalidInput("inverse_transform: spectrum contains non-finite values");
  }
  const int c = spec.real.channels(), h = spec.real.height(), w = spec.real.width();
  Tensor out = Tensor::image(c, h, w);
  std::vector<Complex> buf(static_cast<std::size_t>(h) * w);
  double residue2 = 0.0, norm2 = 0.0;
  for (int k = 0; k < c; ++k) {
    auto re = spec.real.plane(k), im = spec.imag.plane(k);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = Complex(re[i], im[i]);
    dft2_plane(buf, h, w, Direction::Inverse);
    auto dst = out.plane(k);
    for (std::size_t i = 0; i < buf.size(); ++i) {
      dst[i] = buf[i].real();
      residue2 += buf[i].imag() * buf[i].imag();
      norm2 += std::norm(buf[i]);
    }
  }
  const double residue = std::sqrt(residue2), norm = std::sqrt(norm2);
  if (residue > 1e-5 && residue > 1e-4 * norm) {
    throw ConjugateSymmetryViolation("inverse_transform: imaginary residue " +
                                     std::to_string(residue) + " against signal norm " +
                                     std::to_string(norm));
  }
  return out;
}

AmplitudePhase to_amplitude_phase(const ComplexSpectrum& spec) {
  require_same_shape(spec.real, spec.imag, "to_amplitude_phase");
  AmplitudePhase out{Tensor(spec.real.shape()), Tensor(spec.real.shape())};
  vecmath::magnitude(spec.real.data(), spec.imag.data(), out.amplitude.data(), spec.real.size());
  vecmath::phase(spec.real.data(), spec.imag.data(), out.phase.data(), spec.real.size());
  return out;
}

ComplexSpectrum from_amplitude_phase(const AmplitudePhase& ap) {
  require_same_shape(ap.amplitude, ap.phase, "from_amplitude_phase");
  for (double a : ap.amplitude.values()) {
    if (!(a >= 0.0)) throw InvalidInput("from_amplitude_phase: negative or NaN amplitude");
  }
  ComplexSpectrum out{Tensor(ap.amplitude.shape()), Tensor(ap.amplitude.shape())};
  vecmath::sincos(ap.phase.data(), out.real.data(), out.imag.data(), ap.amplitude.size());
  for (std::size_t i = 0; i < ap.amplitude.size(); ++i) {
    out.real[i] *= ap.amplitude[i];
    out.imag[i] *= ap.amplitude[i];
  }
  return out;
}

}  // namespace fourllie
