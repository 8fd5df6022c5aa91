#pragma once

#include <filesystem>

#include "fourllie/tensor.hpp"

namespace fourllie {

/// Decodes PNG (8/16-bit, gray or RGB, alpha dropped) or JPEG into a
/// (3, H, W) tensor in [0, 1]. Gray images are replicated to RGB.
Tensor read_image(const std::filesystem::path& path);

/// Writes a PNG; values are clamped to [0, 1] and quantized. Single-channel
/// tensors are written as gray. The file appears atomically.
void write_png(const std::filesystem::path& path, const Tensor& img, int bit_depth = 8);

bool is_image_file(const std::filesystem::path& path);

}  // namespace fourllie
