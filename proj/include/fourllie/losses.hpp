#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "fourllie/autograd.hpp"
#include "fourllie/params.hpp"
#include "fourllie/tensor.hpp"

namespace fourllie {

/// Frozen feature network used by the perceptual term. Layers run in order up
/// to and including the tap; convolutions are 3x3 with zero padding 1.
class PerceptualExtractor {
 public:
  enum class LayerKind { Conv, Relu, MaxPool };
  struct Layer {
    LayerKind kind;
    std::string name;
  };

  /// Small randomly initialized extractor for offline use. NOT pretrained:
  /// conv3x3(3->8), relu, conv3x3(8->8), relu, maxpool2, conv3x3(8->16), relu.
  static PerceptualExtractor standin(std::uint64_t seed = 0x5eed);
  /// Reads a "fourllie-phi" container (see tools/export_vgg19.py).
  static PerceptualExtractor load(const std::filesystem::path& path);
  /// "standin" selects the stand-in, anything else is a weight file path. An
  /// empty spec falls back to FOURLLIE_PHI_WEIGHTS; returns null when both
  /// are empty.
  static std::shared_ptr<const PerceptualExtractor> resolve(const std::string& spec);

  PerceptualExtractor(std::vector<Layer> layers, ParamStore weights, std::array<double, 3> mean,
                      std::array<double, 3> stddev, std::string tap, bool pretrained);

  ag::Var features(const ag::Var& img) const;
  Tensor features(const Tensor& img) const;

  const std::string& tap() const { return tap_; }
  bool pretrained() const { return pretrained_; }
  /// Short human-readable identity naming the tap layer.
  std::string describe() const;

 private:
  std::vector<Layer> layers_;
  ParamStore weights_;
  std::shared_ptr<const Bindings> frozen_;
  std::array<double, 3> mean_;
  std::array<double, 3> std_;
  std::string tap_;
  bool pretrained_;
};

/// Writes an extractor in the container format read by PerceptualExtractor::load.
void save_extractor(const std::filesystem::path& path, const std::vector<PerceptualExtractor::Layer>& layers,
                    const ParamStore& weights, const std::array<double, 3>& mean,
                    const std::array<double, 3>& stddev, const std::string& tap, bool pretrained);

struct LossWeights {
  double alpha = 0.1;
  double lambda = 0.01;

  /// Throws InvalidConfig on negative or non-finite weights.
  void validate() const;
};

/// Mean squared difference of the amplitude spectra.
ag::Var loss_s1(const ag::Var& output_s1, const ag::Var& gt);
/// Pixel MSE + alpha * feature MSE. `phi` may be null only when alpha == 0.
ag::Var loss_s2(const ag::Var& output_s2, const ag::Var& gt, const PerceptualExtractor* phi, double alpha);

struct LossTerms {
  ag::Var s1;
  ag::Var s2;
  ag::Var total;  // s2 + lambda * s1, or s2 alone when the s1 term is excluded
};

LossTerms total_loss(const ag::Var& output_s1, const ag::Var& output_s2, const ag::Var& gt,
                     const PerceptualExtractor* phi, const LossWeights& weights, bool include_s1 = true);

double loss_s1(const Tensor& output_s1, const Tensor& gt);
double loss_s2(const Tensor& output_s2, const Tensor& gt, const PerceptualExtractor* phi, double alpha);
double total_loss(const Tensor& output_s1, const Tensor& output_s2, const Tensor& gt,
                  const PerceptualExtractor* phi, const LossWeights& weights);

}  // namespace fourllie
