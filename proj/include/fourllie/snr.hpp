#pragma once

#include <vector>

#include "fourllie/tensor.hpp"

namespace fourllie {

/// Single-channel (1, H, W) prior in [0, 1] weighting local against global
/// features: high values mean a clean, well-exposed region.
struct SnrMap {
  Tensor values;

  int height() const { return values.height(); }
  int width() const { return values.width(); }
};

struct SnrSettings {
  int kernel_size = 5;
  double sigma = 1.0;
  double noise_floor = 1e-6;    // guards division where the blur residual vanishes
  double clip_quantile = 0.999; // outlier clamp before min-max normalization
};

/// Normalized 1-D Gaussian taps; the 2-D kernel is their outer product.
std::vector<double> gaussian_taps(int size, double sigma);

/// Separable Gaussian blur of a (1, H, W) array with mirror borders.
Tensor gaussian_blur(const Tensor& gray, int size, double sigma);

/// Unnormalized ratio blur(I_g) / max(|I_g - blur(I_g)|, floor) over the
/// BT.601 gray image.
Tensor snr_ratio(const Tensor& img, const SnrSettings& settings = {});

/// Clamps at the configured quantile and rescales to [0, 1]. A constant
/// input maps to all ones.
SnrMap normalize_snr(const Tensor& ratio, const SnrSettings& settings = {});

SnrMap compute_snr_map(const Tensor& img, const SnrSettings& settings = {});

/// Bilinear resampling with half-pixel centers and edge clamping.
/// Throws InvalidInput for non-positive target dims.
SnrMap resize_map(const SnrMap& s, int target_h, int target_w);

}  // namespace fourllie
