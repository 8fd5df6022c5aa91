#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <string_view>

#include "fourllie/autograd.hpp"
#include "fourllie/params.hpp"
#include "fourllie/tensor.hpp"

namespace fourllie {

enum class BlockType { Fourier, Spatial };

/// Learnable scalars in one block of width `nc`:
///   Fourier: two 1x1 conv pairs (amplitude, phase) plus one 3x3 conv
///   Spatial: two 3x3 convs
std::size_t block_param_count(BlockType type, int nc);
/// Accepts "fp" / "sp"; throws InvalidInput for anything else.
std::size_t block_param_count(std::string_view type, int nc);

/// Registers a block's arrays under `prefix`. The layout is
///   Fourier: amp1, amp2, pha1, pha2 (1x1), conv (3x3)
///   Spatial: conv1, conv2 (3x3)
void add_block(ParamStore& store, const std::string& prefix, BlockType type, int nc,
               const InitOptions& init, std::mt19937_64& rng);

/// Fourier Processing block:
///   x -> DFT -> (amplitude, phase)
///     amplitude -> 1x1 -> LeakyReLU -> 1x1
///     phase     -> 1x1 -> LeakyReLU -> 1x1
///   -> polar recombination -> inverse DFT (real part) -> 3x3 conv -> + x
/// Every output pixel depends on every input pixel.
ag::Var fp_block(const Bindings& p, const std::string& prefix, const ag::Var& x, double slope);

/// Spatial Processing block: 3x3 -> LeakyReLU -> 3x3 -> + x.
ag::Var sp_block(const Bindings& p, const std::string& prefix, const ag::Var& x, double slope);

/// Standalone parameters of a single block.
struct BlockParams {
  BlockType type = BlockType::Fourier;
  int nc = 0;
  double leaky_slope = 0.1;
  ParamStore params;

  static BlockParams make(BlockType type, int nc, const InitOptions& init);
};

Tensor fp_block_forward(const Tensor& x, const BlockParams& params);
Tensor sp_block_forward(const Tensor& x, const BlockParams& params);

}  // namespace fourllie
