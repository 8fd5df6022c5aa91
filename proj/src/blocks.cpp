#include "fourllie/blocks.hpp"

#include "fourllie/errors.hpp"

namespace fourllie {
namespace {

ag::Var conv(const Bindings& p, const std::string& name, const ag::Var& x, int stride, int pad) {
  return ag::conv2d(x, p[name + ".w"], p[name + ".b"], stride, pad);
}

ag::Var pointwise_pair(const Bindings& p, const std::string& a, const std::string& b,
                       const ag::Var& x, double slope) {
  return conv(p, b, ag::leaky_relu(conv(p, a, x, 1, 0), slope), 1, 0);
}

}  // namespace

std::size_t block_param_count(BlockType type, int nc) {
  if (nc < 1) throw InvalidInput("block_param_count: nc must be >= 1");
  switch (type) {
    case BlockType::Fourier:
      return 4 * conv_param_count(nc, nc, 1) + conv_param_count(nc, nc, 3);
    case BlockType::Spatial:
      return 2 * conv_param_count(nc, nc, 3);
  }
  throw InvalidInput("block_param_count: unknown block type");
}

std::size_t block_param_count(std::string_view type, int nc) {
  if (type == "fp") return block_param_count(BlockType::Fourier, nc);
  if (type == "sp") return block_param_count(BlockType::Spatial, nc);
  throw InvalidInput("unknown block type: " + std::string(type));
}

void add_block(ParamStore& store, const std::string& prefix, BlockType type, int nc,
               const InitOptions& init, std::mt19937_64& rng) {
  if (type == BlockType::Fourier) {
    for (const char* name : {".amp1", ".amp2", ".pha1", ".pha2"}) {
      add_conv(store, prefix + name, nc, nc, 1, init, rng);
    }
    add_conv(store, prefix + ".conv", nc, nc, 3, init, rng);
  } else {
    add_conv(store, prefix + ".conv1", nc, nc, 3, init, rng);
    add_conv(store, prefix + ".conv2", nc, nc, 3, init, rng);
  }
}

ag::Var fp_block(const Bindings& p, const std::string& prefix, const ag::Var& x, double slope) {
  const ag::Var z = ag::fft2(x);
  const ag::Var amp = pointwise_pair(p, prefix + ".amp1", prefix + ".amp2", ag::amplitude(z), slope);
  const ag::Var pha = pointwise_pair(p, prefix + ".pha1", prefix + ".pha2", ag::phase(z), slope);
  const ag::Var spatial = ag::ifft2_real(ag::polar(amp, pha));
  return ag::add(conv(p, prefix + ".conv", spatial, 1, 1), x);
}

ag::Var sp_block(const Bindings& p, const std::string& prefix, const ag::Var& x, double slope) {
  const ag::Var h = ag::leaky_relu(conv(p, prefix + ".conv1", x, 1, 1), slope);
  return ag::add(conv(p, prefix + ".conv2", h, 1, 1), x);
}

BlockParams BlockParams::make(BlockType type, int nc, const InitOptions& init) {
  BlockParams out;
  out.type = type;
  out.nc = nc;
  out.leaky_slope = init.leaky_slope;
  std::mt19937_64 rng(init.seed);
  add_block(out.params, "block", type, nc, init, rng);
  return out;
}

namespace {

Tensor run_block(const Tensor& x, const BlockParams& params, BlockType expected) {
  if (params.type != expected) throw InvalidInput("block parameters are for a different block type");
  require_image(x, "block input");
  if (x.channels() != params.nc) {
    throw ShapeMismatch("block expects " + std::to_string(params.nc) + " channels, got " +
                        std::to_string(x.channels()));
  }
  if (!x.all_finite()) throw InvalidInput("block input contains non-finite values");
  const Bindings p(params.params, false);
  const ag::Var in = ag::constant(x);
  const ag::Var out = expected == BlockType::Fourier ? fp_block(p, "block", in, params.leaky_slope)
                                                     : sp_block(p, "block", in, params.leaky_slope);
  return out->value;
}

}  // namespace

Tensor fp_block_forward(const Tensor& x, const BlockParams& params) {
  return run_block(x, params, BlockType::Fourier);
}

Tensor sp_block_forward(const Tensor& x, const BlockParams& params) {
  return run_block(x, params, BlockType::Spatial);
}

}  // namespace fourllie
