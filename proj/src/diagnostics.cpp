#include "fourllie/diagnostics.hpp"

#include <cmath>
#include <random>

#include "fourllie/blocks.hpp"
#include "fourllie/errors.hpp"
#include "fourllie/fourier.hpp"
#include "fourllie/fs_util.hpp"
#include "fourllie/losses.hpp"
#include "fourllie/optim.hpp"

namespace fourllie {
namespace {

Tensor recombine(const Tensor& amplitude, const Tensor& phase) {
  return inverse_transform(from_amplitude_phase({amplitude, phase}));
}

ModelConfig frequency_only(const ModelConfig& cfg) {
  ModelConfig c = cfg;
  c.use_frequency_stage = true;
  c.use_spatial_stage = false;
  c.exposure_correction_mode = false;
  return c;
}

ag::Var conv(const Bindings& p, const std::string& name, const ag::Var& x, int pad = 1) {
  return ag::conv2d(x, p[name + ".w"], p[name + ".b"], 1, pad);
}

// Stem plus Fourier blocks with the same symmetric skips as the frequency stage.
ag::Var trunk(const ModelConfig& cfg, const Bindings& p, const ag::Var& stem) {
  const int n = cfg.n_fp_stage1;
  std::vector<ag::Var> h{stem};
  for (int j = 1; j <= n; ++j) {
    ag::Var y = fp_block(p, "freq.fp" + std::to_string(j), h.back(), cfg.leaky_slope);
    if (2 * j > n + 1) y = ag::add(y, h[static_cast<std::size_t>(n + 1 - j)]);
    h.push_back(std::move(y));
  }
  return h.back();
}

}  // namespace

SwapResult amplitude_swap(const Tensor& low, const Tensor& normal) {
  require_same_shape(low, normal, "amplitude_swap");
  const AmplitudePhase l = to_amplitude_phase(forward_transform(low));
  const AmplitudePhase n = to_amplitude_phase(forward_transform(normal));
  SwapResult r;
  r.amp_l_pha_n_raw = recombine(l.amplitude, n.phase);
  r.amp_n_pha_l_raw = recombine(n.amplitude, l.phase);
  r.amp_l_pha_n = clamp(r.amp_l_pha_n_raw, 0.0, 1.0);
  r.amp_n_pha_l = clamp(r.amp_n_pha_l_raw, 0.0, 1.0);
  return r;
}

Tensor amplitude_scale_raw(const Tensor& img, double k) {
  if (!(k > 0) || !std::isfinite(k)) throw InvalidInput("amplitude_scale: k must be positive");
  AmplitudePhase ap = to_amplitude_phase(forward_transform(img));
  for (double& a : ap.amplitude.values()) a *= k;
  return recombine(ap.amplitude, ap.phase);
}

Tensor amplitude_scale(const Tensor& img, double k) { return clamp(amplitude_scale_raw(img, k), 0.0, 1.0); }

void validate_setting(int setting) {
  if (setting < 1 || setting > 3) {
    throw InvalidInput("unknown appendix setting " + std::to_string(setting) + " (expected 1, 2 or 3)");
  }
}

ParamStore appendix_init(int setting, const ModelConfig& cfg, const InitOptions& init_in) {
  validate_setting(setting);
  if (setting == 3) return Model(frequency_only(cfg)).init_params(init_in);
  InitOptions init = init_in;
  init.leaky_slope = cfg.leaky_slope;
  std::mt19937_64 rng(init.seed);
  ParamStore s;
  add_conv(s, "freq.in", 3, cfg.nc, 3, init, rng);
  for (int j = 1; j <= cfg.n_fp_stage1; ++j) {
    add_block(s, "freq.fp" + std::to_string(j), BlockType::Fourier, cfg.nc, init, rng);
  }
  if (setting == 2) add_block(s, "freq.par", BlockType::Spatial, cfg.nc, init, rng);
  add_conv(s, "freq.head", cfg.nc, 3, 3, init, rng, true);
  return s;
}

ag::Var appendix_forward(int setting, const ModelConfig& cfg, const Bindings& p, const ag::Var& img) {
  validate_setting(setting);
  require_image(img->value, "appendix_a_variant");
  if (img->value.channels() != 3) throw InvalidInput("appendix_a_variant: expected a 3-channel image");
  if (setting == 3) return Model(frequency_only(cfg)).frequency_stage(p, img).output;
  const ag::Var stem = conv(p, "freq.in", img);
  ag::Var raw;
  if (setting == 1) {
    const ag::Var residual = conv(p, "freq.head", trunk(cfg, p, stem));
    const ag::Var spectrum = ag::fft2(ag::constant(img->value));
    const ag::Var amp = ag::add(ag::amplitude(spectrum), residual);
    raw = ag::ifft2_real(ag::polar(amp, ag::phase(spectrum)));
  } else {
    const ag::Var features = ag::add(trunk(cfg, p, stem), sp_block(p, "freq.par", stem, cfg.leaky_slope));
    raw = ag::add(img, conv(p, "freq.head", features));
  }
  return ag::clamp(raw, 0.0, cfg.s1_clamp_max);
}

Tensor appendix_a_variant(int setting, const Tensor& img, const ParamStore& params, const ModelConfig& cfg) {
  const Bindings p(params, false);
  return appendix_forward(setting, cfg, p, ag::constant(img))->value;
}

double mean_amplitude_error(int setting, const ModelConfig& cfg, const ParamStore& params,
                            const DatasetManifest& manifest) {
  if (manifest.empty()) throw DatasetError("manifest is empty");
  double s = 0;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    const ImagePair pair = manifest.load(i);
    s += loss_s1(appendix_a_variant(setting, pair.low, params, cfg), pair.normal);
  }
  return s / static_cast<double>(manifest.size());
}

AppendixRun train_appendix_variant(int setting, const ModelConfig& cfg, const TrainConfig& tc,
                                   const DatasetManifest& manifest) {
  validate_setting(setting);
  tc.validate();
  if (manifest.empty()) throw DatasetError("training manifest is empty");
  AppendixRun run;
  run.setting = setting;
  run.params = appendix_init(setting, cfg, {InitScheme::Default, tc.seed, cfg.leaky_slope});
  run.initial_amplitude_error = mean_amplitude_error(setting, cfg, run.params, manifest);
  ParamStore m = run.params.zeros_like(), v = run.params.zeros_like();
  const MultiStepSchedule schedule(tc.lr_init, tc.resolved_milestones(), tc.lr_decay);
  std::vector<ImagePair> pairs;
  for (std::size_t i = 0; i < manifest.size(); ++i) pairs.push_back(manifest.load(i));
  const AugmentOptions aug{tc.crop, tc.augment_rotate, tc.augment_flip};
  for (std::uint64_t it = 1; it <= tc.total_iters; ++it) {
    ParamStore grads = run.params.zeros_like();
    double batch_loss = 0;
    for (int b = 0; b < tc.batch_size; ++b) {
      const auto slot = static_cast<std::uint64_t>(b);
      const ImagePair pair = augment(pairs[mix_seed(tc.seed, it, slot) % pairs.size()], aug,
                                     mix_seed(tc.seed, it, slot, 1));
      const Bindings p(run.params, true);
      const ag::Var loss = loss_s1(appendix_forward(setting, cfg, p, ag::constant(pair.low)),
                                   ag::constant(pair.normal));
      ag::backward(ag::scale(loss, 1.0 / tc.batch_size));
      p.accumulate_grads(grads);
      batch_loss += loss->value[0] / tc.batch_size;
    }
    if (!std::isfinite(batch_loss)) {
      throw NonFiniteLoss("setting " + std::to_string(setting) + ": non-finite loss at iteration " +
                          std::to_string(it));
    }
    clip_grad_norm(grads, tc.grad_clip);
    adam_step(run.params, grads, m, v, it, schedule.lr_at(it - 1), tc.adam);
    run.trace.push_back(batch_loss);
  }
  run.final_amplitude_error = mean_amplitude_error(setting, cfg, run.params, manifest);
  return run;
}

}  // namespace fourllie
