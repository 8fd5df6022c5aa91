#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fourllie/checkpoint.hpp"
#include "fourllie/data.hpp"
#include "fourllie/losses.hpp"
#include "fourllie/metrics.hpp"
#include "fourllie/model.hpp"
#include "fourllie/optim.hpp"

namespace fourllie {

struct TrainConfig {
  double lr_init = 4.0e-4;
  AdamSettings adam;
  /// Empty means {total_iters / 2, 3 * total_iters / 4}.
  std::vector<std::uint64_t> milestones;
  double lr_decay = 0.5;
  int batch_size = 4;
  int crop = 384;
  bool augment_rotate = true;
  bool augment_flip = true;
  std::uint64_t total_iters = 200000;
  std::uint64_t seed = 0;
  LossWeights loss;
  bool use_loss_s1 = true;     // false: L_s1 is logged but not optimized
  bool use_perceptual = true;  // false: alpha is treated as 0
  /// "standin", a weight file path, or empty for FOURLLIE_PHI_WEIGHTS.
  std::string phi_weights;
  double grad_clip = 5.0;  // <= 0 disables
  std::uint64_t eval_interval = 0;        // 0 disables periodic evaluation
  std::uint64_t checkpoint_interval = 0;  // 0 writes only the final checkpoint
  bool deterministic = false;             // single worker thread
  int threads = 0;                        // 0 = hardware concurrency

  std::vector<std::uint64_t> resolved_milestones() const;
  double effective_alpha() const { return use_perceptual ? loss.alpha : 0.0; }
  /// Throws InvalidConfig.
  void validate() const;
  std::string to_json() const;
};

/// Applies a named ablation (wo_f, wo_s, wo_snr, wo_ls1, wo_lvgg).
/// Throws InvalidConfig for unknown names.
void apply_ablation(const std::string& name, TrainConfig& train, ModelConfig& model);
const std::vector<std::string>& ablation_names();

struct LossRecord {
  std::uint64_t iteration = 0;
  double l_s1 = 0;
  double l_s2 = 0;
  double l_total = 0;
  double lr = 0;
};

std::string loss_trace_csv(const std::vector<LossRecord>& trace);
std::vector<LossRecord> read_loss_trace(const std::filesystem::path& path);

struct TrainOptions {
  /// Receives loss.csv and checkpoints; nothing is written when empty.
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume;
  /// Stop early after this iteration (a checkpoint is still written).
  std::optional<std::uint64_t> stop_after;
  /// Evaluation set for eval_interval; defaults to the training manifest.
  const DatasetManifest* eval_manifest = nullptr;
  std::function<void(const LossRecord&)> on_step;
  std::function<void(std::uint64_t, const EvalReport&)> on_eval;
};

struct TrainResult {
  std::vector<LossRecord> trace;  // iterations run by this call
  ParamStore params;
  TrainState state;
  std::filesystem::path final_checkpoint;
};

std::string checkpoint_name(std::uint64_t iteration);

TrainResult train(const TrainConfig& train_cfg, const ModelConfig& model_cfg, const DatasetManifest& manifest,
                  const TrainOptions& opts = {});

/// Per-sample gradients of the batch-mean total loss, summed in slot order.
struct BatchResult {
  ParamStore grads;
  double l_s1 = 0;
  double l_s2 = 0;
  double l_total = 0;
  std::vector<double> sample_total;
};

BatchResult batch_gradients(const Model& model, const ParamStore& params, const std::vector<ImagePair>& batch,
                            const PerceptualExtractor* phi, const LossWeights& weights, bool include_s1,
                            int threads, const ForwardOverrides& ov = {});

/// Enhances every pair at full resolution and scores output_s2 against the
/// normal image. Throws DatasetError on an empty or unpaired manifest.
EvalReport evaluate(const Model& model, const ParamStore& params, const DatasetManifest& manifest,
                    const ForwardOverrides& ov = {}, int threads = 0);
/// Loads the checkpoint (checked against `expected` when given) and evaluates.
EvalReport evaluate(const std::filesystem::path& checkpoint, const DatasetManifest& manifest,
                    const std::optional<ModelConfig>& expected = std::nullopt, int threads = 0);

int resolve_threads(int requested);

}  // namespace fourllie
