#include "support.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <random>

#include <unistd.h>

#include "fourllie/conv.hpp"

namespace testing {

using fourllie::ComplexSpectrum;

Tensor random_tensor(const fourllie::Shape& shape, std::uint64_t seed, double lo, double hi) {
  Tensor t(shape);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.values()) v = u(rng);
  return t;
}

Tensor random_image(int c, int h, int w, std::uint64_t seed, double lo, double hi) {
  return random_tensor({c, h, w}, seed, lo, hi);
}

namespace {

ComplexSpectrum dft_sum(const Tensor& re, const Tensor& im, double sign) {
  const int c = re.channels(), h = re.height(), w = re.width();
  ComplexSpectrum out{Tensor(re.shape()), Tensor(re.shape())};
  const double scale = 1.0 / std::sqrt(static_cast<double>(h) * w);
  for (int k = 0; k < c; ++k) {
    for (int u = 0; u < h; ++u) {
      for (int v = 0; v < w; ++v) {
        std::complex<double> acc = 0;
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            const double frac = static_cast<double>((y * u) % h) / h + static_cast<double>((x * v) % w) / w;
            const double ang = sign * 2.0 * std::numbers::pi * frac;
            acc += std::complex<double>(re.at(k, y, x), im.at(k, y, x)) * std::polar(1.0, ang);
          }
        }
        out.real.at(k, u, v) = acc.real() * scale;
        out.imag.at(k, u, v) = acc.imag() * scale;
      }
    }
  }
  return out;
}

}  // namespace

ComplexSpectrum dft_oracle(const Tensor& img) { return dft_sum(img, Tensor(img.shape()), -1.0); }

ComplexSpectrum idft_oracle(const ComplexSpectrum& spec) { return dft_sum(spec.real, spec.imag, 1.0); }

Tensor conv_oracle(const Tensor& x, const Tensor& w, const Tensor* b, int stride, int pad) {
  const int cin = x.channels(), h = x.height(), wd = x.width();
  const int cout = w.dim(0), k = w.dim(2);
  const int ho = (h + 2 * pad - k) / stride + 1, wo = (wd + 2 * pad - k) / stride + 1;
  Tensor y = Tensor::image(cout, ho, wo);
  for (int o = 0; o < cout; ++o) {
    for (int i = 0; i < ho; ++i) {
      for (int j = 0; j < wo; ++j) {
        double acc = b ? (*b)[static_cast<std::size_t>(o)] : 0.0;
        for (int c = 0; c < cin; ++c) {
          for (int di = 0; di < k; ++di) {
            for (int dj = 0; dj < k; ++dj) {
              const int yy = i * stride - pad + di, xx = j * stride - pad + dj;
              if (yy < 0 || yy >= h || xx < 0 || xx >= wd) continue;
              acc += x.at(c, yy, xx) * w[((static_cast<std::size_t>(o) * cin + c) * k + di) * k + dj];
            }
          }
        }
        y.at(o, i, j) = acc;
      }
    }
  }
  return y;
}

ParamStore numeric_grad(const ParamStore& params, const LossFn& loss, double step) {
  ParamStore probe = params;
  ParamStore out = params.zeros_like();
  for (std::size_t e = 0; e < probe.entries().size(); ++e) {
    Tensor& t = probe.entries()[e].value;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double keep = t[i];
      t[i] = keep + step;
      const double up = loss(probe);
      t[i] = keep - step;
      const double down = loss(probe);
      t[i] = keep;
      out.entries()[e].value[i] = (up - down) / (2.0 * step);
    }
  }
  return out;
}

std::vector<GroupError> compare_grads(const ParamStore& analytic, const ParamStore& numeric) {
  std::vector<GroupError> out;
  for (std::size_t e = 0; e < analytic.entries().size(); ++e) {
    const Tensor& a = analytic.entries()[e].value;
    const Tensor& n = numeric.entries()[e].value;
    double diff = 0, na = 0, nn = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      diff += (a[i] - n[i]) * (a[i] - n[i]);
      na += a[i] * a[i];
      nn += n[i] * n[i];
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-300});
    out.push_back({analytic.entries()[e].name, std::sqrt(diff) / denom, std::sqrt(na)});
  }
  return out;
}

double max_rel(const std::vector<GroupError>& errs) {
  double m = 0;
  for (const auto& e : errs) m = std::max(m, e.rel);
  return m;
}

std::filesystem::path scratch_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const auto dir = std::filesystem::temp_directory_path() /
                   ("fourllie_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
