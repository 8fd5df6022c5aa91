#include "fourllie/model.hpp"

#include <json.hpp>

#include "fourllie/blocks.hpp"
#include "fourllie/errors.hpp"

namespace fourllie {

// ------------------------------------------------------------------ config

std::vector<int> ModelConfig::resolved_widths() const {
  if (!widths.empty()) return widths;
  const int wide = std::max(1, nc * 3 / 2);
  return {nc, wide, wide};
}

int ModelConfig::size_multiple() const {
  return 1 << (static_cast<int>(resolved_widths().size()) - 1);
}

void ModelConfig::validate() const {
  if (!use_frequency_stage && !use_spatial_stage) {
    throw InvalidConfig("model config disables both the frequency and the spatial stage");
  }
  if (nc < 1) throw InvalidConfig("nc must be >= 1");
  if (n_fp_stage1 < 1) throw InvalidConfig("n_fp_stage1 must be >= 1");
  if (bottleneck_blocks < 1) throw InvalidConfig("bottleneck_blocks must be >= 1");
  const auto w = resolved_widths();
  if (w.empty() || w.size() > 6) throw InvalidConfig("widths must list 1 to 6 levels");
  for (int v : w)
    if (v < 1) throw InvalidConfig("widths must be positive");
  if (!(leaky_slope >= 0.0)) throw InvalidConfig("leaky_slope must be >= 0");
  if (!(map_epsilon > 0.0)) throw InvalidConfig("map_epsilon must be > 0");
  if (!(s1_clamp_max >= 1.0)) throw InvalidConfig("s1_clamp_max must be >= 1");
}

std::string model_config_to_json(const ModelConfig& cfg) {
  nlohmann::ordered_json j;
  j["nc"] = cfg.nc;
  j["n_fp_stage1"] = cfg.n_fp_stage1;
  j["widths"] = cfg.resolved_widths();
  j["bottleneck_blocks"] = cfg.bottleneck_blocks;
  j["use_frequency_stage"] = cfg.use_frequency_stage;
  j["use_spatial_stage"] = cfg.use_spatial_stage;
  j["use_snr_fusion"] = cfg.use_snr_fusion;
  j["exposure_correction_mode"] = cfg.exposure_correction_mode;
  j["leaky_slope"] = cfg.leaky_slope;
  j["map_epsilon"] = cfg.map_epsilon;
  j["s1_clamp_max"] = cfg.s1_clamp_max;
  return j.dump();
}

ModelConfig model_config_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ModelConfig cfg;
    cfg.nc = j.at("nc").get<int>();
    cfg.n_fp_stage1 = j.at("n_fp_stage1").get<int>();
    cfg.widths = j.at("widths").get<std::vector<int>>();
    cfg.bottleneck_blocks = j.at("bottleneck_blocks").get<int>();
    cfg.use_frequency_stage = j.at("use_frequency_stage").get<bool>();
    cfg.use_spatial_stage = j.at("use_spatial_stage").get<bool>();
    cfg.use_snr_fusion = j.at("use_snr_fusion").get<bool>();
    cfg.exposure_correction_mode = j.at("exposure_correction_mode").get<bool>();
    cfg.leaky_slope = j.at("leaky_slope").get<double>();
    cfg.map_epsilon = j.at("map_epsilon").get<double>();
    cfg.s1_clamp_max = j.at("s1_clamp_max").get<double>();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("malformed model config: ") + e.what());
  }
}

// ------------------------------------------------------------------- model

namespace {

ag::Var conv(const Bindings& p, const std::string& name, const ag::Var& x, int stride = 1, int pad = 1) {
  return ag::conv2d(x, p[name + ".w"], p[name + ".b"], stride, pad);
}

std::string idx(const char* prefix, int i) { return prefix + std::to_string(i); }

ag::Var constant_like(const Tensor& shape_of, int channels, double v) {
  return ag::constant(Tensor::image(channels, shape_of.height(), shape_of.width(), v));
}

}  // namespace

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  widths_ = config_.resolved_widths();
  config_.widths = widths_;
}

ParamStore Model::init_params(const InitOptions& init_in) const {
  InitOptions init = init_in;
  init.leaky_slope = config_.leaky_slope;
  std::mt19937_64 rng(init.seed);
  ParamStore store;
  const int nc = config_.nc;
  if (config_.use_frequency_stage) {
    add_conv(store, "freq.in", 3, nc, 3, init, rng);
    for (int i = 1; i <= config_.n_fp_stage1; ++i) {
      add_block(store, idx("freq.fp", i), BlockType::Fourier, nc, init, rng);
    }
    add_conv(store, "freq.head", nc, config_.exposure_correction_mode ? 6 : 3, 3, init, rng, true);
  }
  if (config_.use_spatial_stage) {
    const int levels = static_cast<int>(widths_.size());
    const int bott = widths_.back();
    add_conv(store, "spat.in", 3, widths_[0], 3, init, rng);
    for (int i = 0; i + 1 < levels; ++i) {
      add_block(store, idx("spat.enc", i), BlockType::Spatial, widths_[i], init, rng);
      add_conv(store, idx("spat.down", i), widths_[i], widths_[i + 1], 3, init, rng);
    }
    for (int j = 0; j < config_.bottleneck_blocks; ++j) {
      add_block(store, idx("spat.fp", j), BlockType::Fourier, bott, init, rng);
    }
    for (int j = 0; j < config_.bottleneck_blocks; ++j) {
      add_block(store, idx("spat.sp", j), BlockType::Spatial, bott, init, rng);
    }
    if (!config_.use_snr_fusion) add_conv(store, "spat.fuse", 2 * bott, bott, 1, init, rng);
    for (int i = levels - 2; i >= 0; --i) {
      add_block(store, idx("spat.dec", i + 1), BlockType::Spatial, widths_[i + 1], init, rng);
      add_conv(store, idx("spat.up", i), widths_[i + 1], widths_[i], 3, init, rng);
    }
    add_conv(store, "spat.out", widths_[0], 3, 3, init, rng, true);
  }
  return store;
}

std::size_t Model::frequency_stage_parameters() const {
  if (!config_.use_frequency_stage) return 0;
  const int nc = config_.nc;
  return conv_param_count(3, nc, 3) +
         static_cast<std::size_t>(config_.n_fp_stage1) * block_param_count(BlockType::Fourier, nc) +
         conv_param_count(nc, config_.exposure_correction_mode ? 6 : 3, 3);
}

std::size_t Model::fusion_head_parameters() const {
  if (!config_.use_spatial_stage || config_.use_snr_fusion) return 0;
  return conv_param_count(2 * widths_.back(), widths_.back(), 1);
}

std::size_t Model::spatial_stage_parameters() const {
  if (!config_.use_spatial_stage) return 0;
  const int levels = static_cast<int>(widths_.size());
  const int bott = widths_.back();
  std::size_t n = conv_param_count(3, widths_[0], 3) + conv_param_count(widths_[0], 3, 3);
  for (int i = 0; i + 1 < levels; ++i) {
    n += block_param_count(BlockType::Spatial, widths_[i]);           // encoder block
    n += conv_param_count(widths_[i], widths_[i + 1], 3);             // downsampling
    n += block_param_count(BlockType::Spatial, widths_[i + 1]);       // decoder block
    n += conv_param_count(widths_[i + 1], widths_[i], 3);             // upsampling
  }
  n += static_cast<std::size_t>(config_.bottleneck_blocks) *
       (block_param_count(BlockType::Fourier, bott) + block_param_count(BlockType::Spatial, bott));
  return n + fusion_head_parameters();
}

std::size_t Model::count_parameters() const {
  return frequency_stage_parameters() + spatial_stage_parameters();
}

std::size_t count_parameters(const ModelConfig& config) { return Model(config).count_parameters(); }

Model::FrequencyVars Model::frequency_stage(const Bindings& p, const ag::Var& img,
                                            const ForwardOverrides& ov) const {
  const Tensor& x = img->value;
  require_image(x, "frequency_stage");
  if (x.channels() != 3) throw InvalidInput("frequency_stage: expected a 3-channel image");
  const bool exposure = config_.exposure_correction_mode;
  const double slope = config_.leaky_slope;

  FrequencyVars out;
  const bool need_net = !ov.map.has_value() || (exposure && !ov.map_down.has_value());
  ag::Var logits;
  if (need_net) {
    const int n = config_.n_fp_stage1;
    std::vector<ag::Var> h{conv(p, "freq.in", img)};
    for (int j = 1; j <= n; ++j) {
      ag::Var y = fp_block(p, idx("freq.fp", j), h.back(), slope);
      if (2 * j > n + 1) y = ag::add(y, h[static_cast<std::size_t>(n + 1 - j)]);
      h.push_back(std::move(y));
    }
    logits = conv(p, "freq.head", h.back());
  }
  if (ov.map) {
    out.map = constant_like(x, 3, *ov.map);
  } else {
    out.map = ag::sigmoid(exposure ? ag::slice_channels(logits, 0, 3) : logits);
  }
  if (exposure) {
    out.map_down = ov.map_down ? constant_like(x, 3, *ov.map_down)
                               : ag::sigmoid(ag::slice_channels(logits, 3, 3));
  }

  const ag::Var spectrum = ag::fft2(ag::constant(x));
  ag::Var amp = ag::amplitude(spectrum);
  const ag::Var pha = ag::phase(spectrum);
  if (exposure) amp = ag::mul(amp, out.map_down);
  amp = ag::div(amp, ag::add_scalar(out.map, config_.map_epsilon));
  out.output_raw = ag::ifft2_real(ag::polar(amp, pha));
  out.output = ag::clamp(out.output_raw, 0.0, config_.s1_clamp_max);
  return out;
}

ag::Var Model::spatial_stage(const Bindings& p, const ag::Var& s1, const ForwardOverrides& ov,
                             Tensor* snr_used) const {
  const Tensor& x = s1->value;
  require_image(x, "spatial_stage");
  if (x.channels() != 3) throw InvalidInput("spatial_stage: expected a 3-channel image");
  const int h = x.height(), w = x.width();
  const double slope = config_.leaky_slope;
  const int levels = static_cast<int>(widths_.size());

  Tensor snr;
  if (ov.snr_map) {
    if (ov.snr_map->shape() != Shape{1, h, w}) throw ShapeMismatch("forced SNR map has the wrong shape");
    snr = *ov.snr_map;
  } else if (ov.snr) {
    snr = Tensor::image(1, h, w, *ov.snr);
  } else {
    snr = compute_snr_map(x).values;
  }
  if (snr_used) *snr_used = snr;

  const int m = config_.size_multiple();
  const int pad_h = (m - h % m) % m, pad_w = (m - w % m) % m;
  const ag::Var input = (pad_h || pad_w) ? ag::reflect_pad(s1, 0, pad_h, 0, pad_w) : s1;

  ag::Var e = conv(p, "spat.in", input);
  std::vector<ag::Var> skips;
  for (int i = 0; i + 1 < levels; ++i) {
    skips.push_back(sp_block(p, idx("spat.enc", i), e, slope));
    e = conv(p, idx("spat.down", i), skips.back(), 2, 1);
  }

  ag::Var fourier = e, spatial = e;
  for (int j = 0; j < config_.bottleneck_blocks; ++j) fourier = fp_block(p, idx("spat.fp", j), fourier, slope);
  for (int j = 0; j < config_.bottleneck_blocks; ++j) spatial = sp_block(p, idx("spat.sp", j), spatial, slope);

  ag::Var fused;
  if (config_.use_snr_fusion) {
    const Tensor padded = (pad_h || pad_w) ? reflect_pad(snr, 0, pad_h, 0, pad_w) : snr;
    const SnrMap small = resize_map(SnrMap{padded}, e->value.height(), e->value.width());
    Tensor complement = small.values;
    for (double& v : complement.values()) v = 1.0 - v;
    fused = ag::add(ag::mul_channel_broadcast(spatial, ag::constant(small.values)),
                    ag::mul_channel_broadcast(fourier, ag::constant(std::move(complement))));
  } else {
    fused = ag::conv2d(ag::concat_channels(spatial, fourier), p["spat.fuse.w"], p["spat.fuse.b"], 1, 0);
  }

  ag::Var d = fused;
  for (int i = levels - 2; i >= 0; --i) {
    d = sp_block(p, idx("spat.dec", i + 1), d, slope);
    d = conv(p, idx("spat.up", i), ag::upsample_nearest2(d));
    d = ag::add(d, skips[static_cast<std::size_t>(i)]);
  }
  ag::Var out = ag::add(conv(p, "spat.out", d), input);
  if (pad_h || pad_w) out = ag::crop(out, 0, 0, h, w);
  return ag::clamp(out, 0.0, 1.0);
}

StageVars Model::forward(const Bindings& p, const ag::Var& img, const ForwardOverrides& ov) const {
  StageVars out;
  if (config_.use_frequency_stage) {
    auto f = frequency_stage(p, img, ov);
    out.output_s1 = f.output;
    out.output_s1_raw = f.output_raw;
    out.map = f.map;
    out.map_down = f.map_down;
  } else {
    out.output_s1 = img;
    out.output_s1_raw = img;
  }
  out.output_s2 = config_.use_spatial_stage ? spatial_stage(p, out.output_s1, ov, &out.snr) : out.output_s1;
  return out;
}

void Model::check_layout(const ParamStore& params) const {
  const ParamStore expected = init_params({InitScheme::Zero, 0, config_.leaky_slope});
  if (!expected.same_layout(params)) {
    throw ConfigMismatch("parameter set does not match the model configuration");
  }
}

StageOutputs Model::enhance(const ParamStore& params, const Tensor& img, const ForwardOverrides& ov) const {
  require_image(img, "enhance");
  if (img.channels() != 3) throw InvalidInput("enhance: expected a 3-channel image");
  if (!img.all_finite()) throw InvalidInput("enhance: input contains non-finite values");
  check_layout(params);
  const Bindings p(params, false);
  const StageVars v = forward(p, ag::constant(img), ov);
  StageOutputs out;
  out.output_s1 = v.output_s1->value;
  out.output_s1_unclamped = v.output_s1_raw->value;
  if (v.map) out.map = v.map->value;
  if (v.map_down) out.map_down = v.map_down->value;
  out.snr = SnrMap{v.snr.empty() ? compute_snr_map(out.output_s1).values : v.snr};
  out.output_s2 = v.output_s2->value;
  return out;
}

StageOutputs Model::exposure_correct(const ParamStore& params, const Tensor& img,
                                     const ForwardOverrides& ov) const {
  if (!config_.exposure_correction_mode) {
    throw InvalidConfig("exposure_correct requires exposure_correction_mode");
  }
  return enhance(params, img, ov);
}

}  // namespace fourllie
