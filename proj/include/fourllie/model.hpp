#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fourllie/autograd.hpp"
#include "fourllie/params.hpp"
#include "fourllie/snr.hpp"
#include "fourllie/tensor.hpp"

namespace fourllie {

struct ModelConfig {
  int nc = 16;
  int n_fp_stage1 = 6;
  /// Spatial-stage width per encoder level; the last entry is the bottleneck.
  /// Empty means {nc, 3nc/2, 3nc/2}.
  std::vector<int> widths;
  int bottleneck_blocks = 2;
  bool use_frequency_stage = true;
  bool use_spatial_stage = true;
  bool use_snr_fusion = true;
  bool exposure_correction_mode = false;
  double leaky_slope = 0.1;
  double map_epsilon = 1e-8;
  double s1_clamp_max = 1.5;

  std::vector<int> resolved_widths() const;
  /// Spatial-stage inputs are padded to a multiple of this.
  int size_multiple() const;
  /// Throws InvalidConfig.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(std::string_view text);

/// Test and diagnostic hooks that replace learned quantities by constants.
struct ForwardOverrides {
  std::optional<double> map;       // forces M (or M_up in exposure mode)
  std::optional<double> map_down;  // forces M_down in exposure mode
  std::optional<double> snr;       // forces S to a constant
  /// Uses this (1, H, W) map as S verbatim (input resolution).
  std::optional<Tensor> snr_map;
};

/// Graph-level results of one forward pass.
struct StageVars {
  ag::Var output_s1;      // clamped to [0, s1_clamp_max]
  ag::Var output_s1_raw;  // before clamping
  ag::Var map;            // M, or M_up in exposure mode; null without a frequency stage
  ag::Var map_down;       // exposure mode only
  Tensor snr;             // S at input resolution; empty without a spatial stage
  ag::Var output_s2;
};

struct StageOutputs {
  Tensor output_s1;
  Tensor output_s1_unclamped;
  Tensor map;
  Tensor map_down;
  SnrMap snr;
  Tensor output_s2;
};

/// Two-stage enhancement network.
///
/// Frequency stage: a 3x3 stem, `n_fp_stage1` Fourier blocks with additive
/// skips pairing block i with block n+1-i, and a 3x3 head followed by a
/// sigmoid give the amplitude transform map M. The input's amplitude is
/// divided by (M + eps) and recombined with the input phase.
///
/// Spatial stage: U-shaped encoder/decoder. Each encoder level runs a
/// spatial block then a stride-2 conv; each decoder level runs a spatial
/// block then nearest upsampling + 3x3 conv and adds the encoder skip. At the
/// bottleneck, a Fourier branch and a spatial branch are blended by the SNR
/// map (or fused by concat + 1x1 conv when SNR fusion is disabled). The
/// output conv predicts a residual on top of the stage input.
class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  ParamStore init_params(const InitOptions& init) const;
  std::size_t count_parameters() const;
  std::size_t frequency_stage_parameters() const;
  std::size_t spatial_stage_parameters() const;
  /// Parameters of the concat fusion layer (zero when SNR fusion is on).
  std::size_t fusion_head_parameters() const;

  struct FrequencyVars {
    ag::Var output;
    ag::Var output_raw;
    ag::Var map;
    ag::Var map_down;
  };

  FrequencyVars frequency_stage(const Bindings& p, const ag::Var& img,
                                const ForwardOverrides& ov = {}) const;
  /// `snr_used` receives S at input resolution when non-null.
  ag::Var spatial_stage(const Bindings& p, const ag::Var& s1, const ForwardOverrides& ov = {},
                        Tensor* snr_used = nullptr) const;
  /// Runs the enabled stages. Without a frequency stage output_s1 is the
  /// input; without a spatial stage output_s2 is output_s1.
  StageVars forward(const Bindings& p, const ag::Var& img, const ForwardOverrides& ov = {}) const;

  // Inference on plain tensors. Inputs must be 3-channel and finite.
  StageOutputs enhance(const ParamStore& params, const Tensor& img,
                       const ForwardOverrides& ov = {}) const;
  /// Same as enhance, but requires exposure_correction_mode.
  StageOutputs exposure_correct(const ParamStore& params, const Tensor& img,
                                const ForwardOverrides& ov = {}) const;

  /// Throws ConfigMismatch unless `params` has this model's names and shapes.
  void check_layout(const ParamStore& params) const;

 private:

  ModelConfig config_;
  std::vector<int> widths_;
};

std::size_t count_parameters(const ModelConfig& config);

}  // namespace fourllie
