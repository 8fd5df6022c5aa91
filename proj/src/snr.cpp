#include "fourllie/snr.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "fourllie/errors.hpp"

namespace fourllie {

std::vector<double> gaussian_taps(int size, double sigma) {
  if (size < 1 || size % 2 == 0 || sigma <= 0.0) {
    throw InvalidInput("gaussian_taps: need an odd size and positive sigma");
  }
  std::vector<double> taps(static_cast<std::size_t>(size));
  const int r = size / 2;
  double total = 0.0;
  for (int i = -r; i <= r; ++i) {
    taps[i + r] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    total += taps[i + r];
  }
  for (double& t : taps) t /= total;
  return taps;
}

Tensor gaussian_blur(const Tensor& gray, int size, double sigma) {
  require_image(gray, "gaussian_blur");
  const auto taps = gaussian_taps(size, sigma);
  const int r = size / 2, h = gray.height(), w = gray.width();
  Tensor tmp(gray.shape()), out(gray.shape());
  for (int c = 0; c < gray.channels(); ++c) {
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int k = -r; k <= r; ++k) s += taps[k + r] * gray.at(c, y, reflect_index(x + k, w));
        tmp.at(c, y, x) = s;
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int k = -r; k <= r; ++k) s += taps[k + r] * tmp.at(c, reflect_index(y + k, h), x);
        out.at(c, y, x) = s;
      }
  }
  return out;
}

Tensor snr_ratio(const Tensor& img, const SnrSettings& settings) {
  require_image(img, "snr_ratio");
  if (img.channels() != 3 && img.channels() != 1) {
    throw InvalidInput("snr_ratio: expected a 1- or 3-channel image");
  }
  const Tensor gray = luminance(img);
  const Tensor blurred = gaussian_blur(gray, settings.kernel_size, settings.sigma);
  Tensor ratio(gray.shape());
  for (std::size_t i = 0; i < ratio.size(); ++i) {
    const double noise = std::abs(gray[i] - blurred[i]);
    ratio[i] = blurred[i] / std::max(noise, settings.noise_floor);
  }
  return ratio;
}

SnrMap normalize_snr(const Tensor& ratio, const SnrSettings& settings) {
  std::vector<double> sorted(ratio.values().begin(), ratio.values().end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = settings.clip_quantile * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double cap = sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);

  Tensor clipped = ratio;
  for (double& v : clipped.values()) v = std::min(v, cap);
  const auto [mn, mx] = std::minmax_element(clipped.values().begin(), clipped.values().end());
  const double lo_v = *mn, range = *mx - *mn;
  SnrMap out{Tensor(ratio.shape())};
  if (!(range > 0.0)) {
    out.values.fill(1.0);
    return out;
  }
  for (std::size_t i = 0; i < clipped.size(); ++i) {
    out.values[i] = std::clamp((clipped[i] - lo_v) / range, 0.0, 1.0);
  }
  return out;
}

SnrMap compute_snr_map(const Tensor& img, const SnrSettings& settings) {
  return normalize_snr(snr_ratio(img, settings), settings);
}

SnrMap resize_map(const SnrMap& s, int target_h, int target_w) {
  if (target_h < 1 || target_w < 1) throw InvalidInput("resize_map: target dims must be >= 1");
  require_image(s.values, "resize_map");
  const int h = s.height(), w = s.width();
  if (h == target_h && w == target_w) return s;
  SnrMap out{Tensor::image(1, target_h, target_w)};
  const double sy = static_cast<double>(h) / target_h;
  const double sx = static_cast<double>(w) / target_w;
  for (int y = 0; y < target_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < target_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - x0;
      const double top = (1 - wx) * s.values.at(0, y0, x0) + wx * s.values.at(0, y0, x1);
      const double bot = (1 - wx) * s.values.at(0, y1, x0) + wx * s.values.at(0, y1, x1);
      out.values.at(0, y, x) = std::clamp((1 - wy) * top + wy * bot, 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace fourllie
