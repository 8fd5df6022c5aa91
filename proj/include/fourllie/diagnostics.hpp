#pragma once

#include <cstdint>
#include <vector>

#include "fourllie/data.hpp"
#include "fourllie/model.hpp"
#include "fourllie/params.hpp"
#include "fourllie/tensor.hpp"
#include "fourllie/trainer.hpp"

namespace fourllie {

struct SwapResult {
  Tensor amp_l_pha_n;  // amplitude of low, phase of normal; clamped to [0, 1]
  Tensor amp_n_pha_l;
  Tensor amp_l_pha_n_raw;  // before clamping
  Tensor amp_n_pha_l_raw;
};

SwapResult amplitude_swap(const Tensor& low, const Tensor& normal);

/// Multiplies the amplitude by k, keeps the phase; throws InvalidInput for k <= 0.
Tensor amplitude_scale_raw(const Tensor& img, double k);
/// amplitude_scale_raw clamped to [0, 1].
Tensor amplitude_scale(const Tensor& img, double k);

// Three ways of letting the Fourier-block trunk drive enhancement, compared
// under amplitude supervision:
//   1  the head predicts a residual amplitude, A_out = A_in + head
//   2  the head predicts a spatial residual, out = x + head, with one spatial
//      block running in parallel with the trunk
//   3  the head predicts the transform map; identical to Model::frequency_stage
// All outputs are clamped to [0, s1_clamp_max]. Settings 1 and 2 zero-init
// their head, which makes them identities at initialization.
void validate_setting(int setting);
ParamStore appendix_init(int setting, const ModelConfig& cfg, const InitOptions& init);
ag::Var appendix_forward(int setting, const ModelConfig& cfg, const Bindings& p, const ag::Var& img);
Tensor appendix_a_variant(int setting, const Tensor& img, const ParamStore& params, const ModelConfig& cfg);

struct AppendixRun {
  int setting = 0;
  ParamStore params;
  std::vector<double> trace;       // batch amplitude loss per iteration
  double initial_amplitude_error;  // mean over the manifest before training
  double final_amplitude_error;    // mean over the manifest after training
};

/// Trains one setting with the trainer's batch sampling, augmentation,
/// optimizer and schedule, minimizing the amplitude loss only.
AppendixRun train_appendix_variant(int setting, const ModelConfig& cfg, const TrainConfig& train_cfg,
                                   const DatasetManifest& manifest);
double mean_amplitude_error(int setting, const ModelConfig& cfg, const ParamStore& params,
                            const DatasetManifest& manifest);

}  // namespace fourllie
