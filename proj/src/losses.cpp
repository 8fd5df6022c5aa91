#include "fourllie/losses.hpp"

#include <cmath>
#include <cstdlib>
#include <json.hpp>
#include <random>

#include "fourllie/container.hpp"
#include "fourllie/errors.hpp"

namespace fourllie {
namespace {

constexpr const char* kPhiKind = "fourllie-phi";
constexpr std::array<double, 3> kImageNetMean{0.485, 0.456, 0.406};
constexpr std::array<double, 3> kImageNetStd{0.229, 0.224, 0.225};

const char* kind_name(PerceptualExtractor::LayerKind k) {
  switch (k) {
    case PerceptualExtractor::LayerKind::Conv: return "conv";
    case PerceptualExtractor::LayerKind::Relu: return "relu";
    case PerceptualExtractor::LayerKind::MaxPool: return "maxpool";
  }
  return "?";
}

PerceptualExtractor::LayerKind parse_kind(const std::string& s) {
  if (s == "conv") return PerceptualExtractor::LayerKind::Conv;
  if (s == "relu") return PerceptualExtractor::LayerKind::Relu;
  if (s == "maxpool") return PerceptualExtractor::LayerKind::MaxPool;
  throw CorruptCheckpoint("unknown extractor layer type '" + s + "'");
}

}  // namespace

PerceptualExtractor::PerceptualExtractor(std::vector<Layer> layers, ParamStore weights,
                                         std::array<double, 3> mean, std::array<double, 3> stddev,
                                         std::string tap, bool pretrained)
    : layers_(std::move(layers)),
      weights_(std::move(weights)),
      mean_(mean),
      std_(stddev),
      tap_(std::move(tap)),
      pretrained_(pretrained) {
  if (layers_.empty()) throw InvalidConfig("perceptual extractor has no layers");
  for (const Layer& l : layers_) {
    if (l.kind == LayerKind::Conv && (!weights_.contains(l.name + ".w") || !weights_.contains(l.name + ".b"))) {
      throw InvalidConfig("perceptual extractor lacks weights for " + l.name);
    }
  }
  for (double s : std_)
    if (!(s > 0)) throw InvalidConfig("perceptual extractor normalization std must be positive");
  frozen_ = std::make_shared<const Bindings>(weights_, false);
}

PerceptualExtractor PerceptualExtractor::standin(std::uint64_t seed) {
  ParamStore w;
  std::mt19937_64 rng(seed);
  const InitOptions init{InitScheme::Random, seed, 0.0};
  add_conv(w, "conv1", 3, 8, 3, init, rng);
  add_conv(w, "conv2", 8, 8, 3, init, rng);
  add_conv(w, "conv3", 8, 16, 3, init, rng);
  round_to_float(w);
  std::vector<Layer> layers{{LayerKind::Conv, "conv1"}, {LayerKind::Relu, "relu1"},
                            {LayerKind::Conv, "conv2"}, {LayerKind::Relu, "relu2"},
                            {LayerKind::MaxPool, "pool1"}, {LayerKind::Conv, "conv3"},
                            {LayerKind::Relu, "relu3"}};
  return PerceptualExtractor(std::move(layers), std::move(w), kImageNetMean, kImageNetStd, "relu3", false);
}

PerceptualExtractor PerceptualExtractor::load(const std::filesystem::path& path) {
  const Container c = read_container(path);
  if (c.kind != kPhiKind) {
    throw CorruptCheckpoint(path.string() + " is a '" + c.kind + "' container, not extractor weights");
  }
  try {
    const auto meta = nlohmann::json::parse(c.meta_json);
    std::vector<Layer> layers;
    for (const auto& l : meta.at("layers")) {
      layers.push_back({parse_kind(l.at("type").get<std::string>()), l.at("name").get<std::string>()});
    }
    ParamStore w;
    for (const auto& a : c.arrays) w.add(a.name, a.values);
    return PerceptualExtractor(std::move(layers), std::move(w), meta.at("mean").get<std::array<double, 3>>(),
                               meta.at("std").get<std::array<double, 3>>(), meta.at("tap").get<std::string>(),
                               meta.at("pretrained").get<bool>());
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpoint(std::string("extractor metadata: ") + e.what());
  }
}

std::shared_ptr<const PerceptualExtractor> PerceptualExtractor::resolve(const std::string& spec) {
  std::string s = spec;
  if (s.empty()) {
    if (const char* env = std::getenv("FOURLLIE_PHI_WEIGHTS")) s = env;
  }
  if (s.empty()) return nullptr;
  if (s == "standin") return std::make_shared<const PerceptualExtractor>(standin());
  return std::make_shared<const PerceptualExtractor>(load(s));
}

void save_extractor(const std::filesystem::path& path, const std::vector<PerceptualExtractor::Layer>& layers,
                    const ParamStore& weights, const std::array<double, 3>& mean,
                    const std::array<double, 3>& stddev, const std::string& tap, bool pretrained) {
  Container c;
  c.kind = kPhiKind;
  nlohmann::ordered_json meta;
  meta["layers"] = nlohmann::ordered_json::array();
  for (const auto& l : layers) meta["layers"].push_back({{"type", kind_name(l.kind)}, {"name", l.name}});
  meta["mean"] = mean;
  meta["std"] = stddev;
  meta["tap"] = tap;
  meta["pretrained"] = pretrained;
  c.meta_json = meta.dump();
  for (const auto& e : weights.entries()) c.arrays.push_back({e.name, DType::F32, e.value});
  write_container(path, c);
}

ag::Var PerceptualExtractor::features(const ag::Var& img) const {
  if (img->value.rank() != 3 || img->value.channels() != 3) {
    throw InvalidInput("perceptual extractor expects a 3-channel image");
  }
  const std::array<double, 3> shift = mean_;
  ag::Var h = ag::channel_normalize(img, shift, std_);
  for (const Layer& l : layers_) {
    switch (l.kind) {
      case LayerKind::Conv:
        h = ag::conv2d(h, (*frozen_)[l.name + ".w"], (*frozen_)[l.name + ".b"], 1, 1);
        break;
      case LayerKind::Relu:
        h = ag::relu(h);
        break;
      case LayerKind::MaxPool:
        h = ag::max_pool2(h);
        break;
    }
    if (l.name == tap_) break;
  }
  return h;
}

Tensor PerceptualExtractor::features(const Tensor& img) const { return features(ag::constant(img))->value; }

std::string PerceptualExtractor::describe() const {
  return std::string(pretrained_ ? "pretrained:" : "standin (not pretrained):") + tap_;
}

void LossWeights::validate() const {
  if (!(alpha >= 0) || !std::isfinite(alpha)) throw InvalidConfig("loss weight alpha must be finite and >= 0");
  if (!(lambda >= 0) || !std::isfinite(lambda)) throw InvalidConfig("loss weight lambda must be finite and >= 0");
}

ag::Var loss_s1(const ag::Var& output_s1, const ag::Var& gt) {
  require_same_shape(output_s1->value, gt->value, "loss_s1");
  return ag::mse(ag::amplitude(ag::fft2(output_s1)), ag::amplitude(ag::fft2(gt)));
}

ag::Var loss_s2(const ag::Var& output_s2, const ag::Var& gt, const PerceptualExtractor* phi, double alpha) {
  require_same_shape(output_s2->value, gt->value, "loss_s2");
  ag::Var pixel = ag::mse(output_s2, gt);
  if (alpha == 0.0) return pixel;
  if (!phi) {
    throw InvalidConfig(
        "perceptual loss requested (alpha > 0) but no feature extractor is available; set phi_weights, "
        "FOURLLIE_PHI_WEIGHTS, or disable the term with wo_lvgg");
  }
  return ag::add(pixel, ag::scale(ag::mse(phi->features(output_s2), phi->features(gt)), alpha));
}

LossTerms total_loss(const ag::Var& output_s1, const ag::Var& output_s2, const ag::Var& gt,
                     const PerceptualExtractor* phi, const LossWeights& weights, bool include_s1) {
  weights.validate();
  LossTerms t;
  t.s1 = loss_s1(output_s1, gt);
  t.s2 = loss_s2(output_s2, gt, phi, weights.alpha);
  t.total = include_s1 ? ag::add(t.s2, ag::scale(t.s1, weights.lambda)) : t.s2;
  return t;
}

double loss_s1(const Tensor& output_s1, const Tensor& gt) {
  return loss_s1(ag::constant(output_s1), ag::constant(gt))->value[0];
}

double loss_s2(const Tensor& output_s2, const Tensor& gt, const PerceptualExtractor* phi, double alpha) {
  return loss_s2(ag::constant(output_s2), ag::constant(gt), phi, alpha)->value[0];
}

double total_loss(const Tensor& output_s1, const Tensor& output_s2, const Tensor& gt,
                  const PerceptualExtractor* phi, const LossWeights& weights) {
  return total_loss(ag::constant(output_s1), ag::constant(output_s2), ag::constant(gt), phi, weights)
      .total->value[0];
}

}  // namespace fourllie
