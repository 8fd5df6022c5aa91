#pragma once

#include <filesystem>
#include <string>

#include "fourllie/model.hpp"
#include "fourllie/trainer.hpp"

namespace fourllie {

struct RunConfig {
  TrainConfig train;
  ModelConfig model;
};

// INI schema. Every key is optional; unknown sections or keys are an error.
//
//   [train]    lr_init beta1 beta2 adam_eps milestones lr_decay batch_size
//              crop augment_rotate augment_flip total_iters seed grad_clip
//              eval_interval checkpoint_interval phi_weights threads
//              deterministic
//   [loss]     alpha lambda
//   [model]    nc n_fp_stage1 widths bottleneck_blocks exposure_correction_mode
//              leaky_slope
//   [ablation] wo_f wo_s wo_snr wo_ls1 wo_lvgg        (booleans)
//
// Lists are comma separated; booleans are true/false/1/0/yes/no.
RunConfig parse_run_config(const std::string& text);
/// Throws InvalidConfig when the file is missing or malformed.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace fourllie
