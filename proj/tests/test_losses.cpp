#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <random>

#include "fourllie/errors.hpp"
#include "fourllie/fourier.hpp"
#include "fourllie/losses.hpp"
#include "support.hpp"

using namespace fourllie;
using testing::random_image;

namespace {

Tensor amplitude_oracle(const Tensor& img) {
  const ComplexSpectrum s = testing::dft_oracle(img);
  Tensor a(img.shape());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::hypot(s.real[i], s.imag[i]);
  return a;
}

Tensor shift(const Tensor& img, int dy, int dx) {
  Tensor out(img.shape());
  const int h = img.height(), w = img.width();
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out.at(c, (y + dy) % h, (x + dx) % w) = img.at(c, y, x);
    }
  }
  return out;
}

double pixel_mse(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

}  // namespace

TEST_CASE("amplitude loss against the hand-rolled oracle") {
  const Tensor x = random_image(3, 4, 4, 1);
  CHECK(loss_s1(x, x) == 0.0);
  Tensor x2 = x;
  for (double& v : x2.values()) v *= 2;
  const Tensor a = amplitude_oracle(x);
  double mean_sq = 0;
  for (double v : a.values()) mean_sq += v * v / static_cast<double>(a.size());
  CHECK(loss_s1(x, x2) == doctest::Approx(mean_sq).epsilon(1e-12));
  const Tensor y = random_image(3, 4, 4, 2);
  const Tensor b = amplitude_oracle(y);
  double expect = 0;
  for (std::size_t i = 0; i < a.size(); ++i) expect += (a[i] - b[i]) * (a[i] - b[i]) / static_cast<double>(a.size());
  CHECK(loss_s1(x, y) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("amplitude loss is invariant under circular shifts") {
  const Tensor x = random_image(3, 8, 6, 3);
  const Tensor gt = random_image(3, 8, 6, 4);
  const double base = loss_s1(x, gt);
  for (const auto& [dy, dx] : {std::pair{1, 0}, std::pair{0, 5}, std::pair{3, 2}}) {
    CHECK(std::abs(loss_s1(shift(x, dy, dx), gt) - base) < 1e-6);
  }
}

TEST_CASE("spatial loss reduces to pixel error without the perceptual term") {
  const Tensor x = random_image(3, 8, 8, 5);
  const Tensor gt = random_image(3, 8, 8, 6);
  CHECK(loss_s2(x, gt, nullptr, 0.0) == doctest::Approx(pixel_mse(x, gt)).epsilon(1e-14));
  const PerceptualExtractor phi = PerceptualExtractor::standin();
  CHECK(loss_s2(x, x, &phi, 0.1) == 0.0);
  CHECK(loss_s2(x, gt, &phi, 0.0) == doctest::Approx(pixel_mse(x, gt)).epsilon(1e-14));
  const Tensor fx = phi.features(x), fg = phi.features(gt);
  CHECK(loss_s2(x, gt, &phi, 0.1) == doctest::Approx(pixel_mse(x, gt) + 0.1 * pixel_mse(fx, fg)).epsilon(1e-12));
  CHECK_THROWS_AS(loss_s2(x, gt, nullptr, 0.1), InvalidConfig);
  CHECK_THROWS_AS(loss_s2(x, random_image(3, 8, 9, 1), &phi, 0.1), ShapeMismatch);
}

TEST_CASE("spatial loss grows with noise") {
  const PerceptualExtractor phi = PerceptualExtractor::standin();
  const Tensor gt = random_image(3, 16, 16, 7);
  std::mt19937_64 rng(8);
  double means[3] = {0, 0, 0};
  const double levels[] = {0.01, 0.05, 0.1};
  for (int l = 0; l < 3; ++l) {
    std::uniform_real_distribution<double> u(-levels[l], levels[l]);
    for (int t = 0; t < 20; ++t) {
      Tensor x = gt;
      for (double& v : x.values()) v += u(rng);
      means[l] += loss_s2(x, gt, &phi, 0.1) / 20;
    }
  }
  CHECK(means[0] < means[1]);
  CHECK(means[1] < means[2]);
}

TEST_CASE("total loss is affine in lambda") {
  const PerceptualExtractor phi = PerceptualExtractor::standin();
  const Tensor s1 = random_image(3, 8, 8, 9);
  const Tensor s2 = random_image(3, 8, 8, 10);
  const Tensor gt = random_image(3, 8, 8, 11);
  CHECK(total_loss(gt, gt, gt, &phi, {}) == 0.0);
  CHECK(total_loss(s1, s2, gt, &phi, {0.1, 0.0}) == loss_s2(s2, gt, &phi, 0.1));
  const double l1 = total_loss(s1, s2, gt, &phi, {0.1, 0.01});
  const double l2 = total_loss(s1, s2, gt, &phi, {0.1, 0.02});
  CHECK(std::abs((l2 - l1) - 0.01 * loss_s1(s1, gt)) < 1e-7);
  CHECK(l1 >= 0);
  CHECK(loss_s1(s1, gt) >= 0);
}

TEST_CASE("graph total loss matches the tensor version and reaches stage one") {
  const PerceptualExtractor phi = PerceptualExtractor::standin();
  const Tensor s1 = random_image(3, 8, 8, 12);
  const Tensor s2 = random_image(3, 8, 8, 13);
  const Tensor gt = random_image(3, 8, 8, 14);
  const ag::Var v1 = ag::leaf(s1);
  const LossTerms t = total_loss(v1, ag::constant(s2), ag::constant(gt), &phi, {});
  CHECK(t.total->value[0] == doctest::Approx(total_loss(s1, s2, gt, &phi, {})).epsilon(1e-14));
  ag::backward(t.total);
  double n = 0;
  for (double g : v1->grad.values()) n += g * g;
  CHECK(n > 0);
  const LossTerms without = total_loss(ag::leaf(s1), ag::constant(s2), ag::constant(gt), &phi, {}, false);
  CHECK(without.total->value[0] == doctest::Approx(t.s2->value[0]).epsilon(1e-15));
  CHECK(without.s1->value[0] == doctest::Approx(t.s1->value[0]).epsilon(1e-15));
}

TEST_CASE("loss weights validation") {
  CHECK_NOTHROW(LossWeights{}.validate());
  CHECK_THROWS_AS((LossWeights{-0.1, 0.01}.validate()), InvalidConfig);
  CHECK_THROWS_AS((LossWeights{0.1, std::nan("")}.validate()), InvalidConfig);
}

TEST_CASE("stand-in extractor is frozen, deterministic and labeled") {
  const PerceptualExtractor a = PerceptualExtractor::standin();
  const PerceptualExtractor b = PerceptualExtractor::standin();
  const Tensor x = random_image(3, 8, 8, 15);
  const Tensor fa = a.features(x);
  CHECK(fa.shape() == Shape{16, 4, 4});
  CHECK(max_abs_diff(fa, b.features(x)) == 0.0);
  CHECK_FALSE(a.pretrained());
  CHECK(a.describe().find("not pretrained") != std::string::npos);
  CHECK(a.describe().find(a.tap()) != std::string::npos);
  const ag::Var img = ag::leaf(x);
  ag::backward(ag::mse(a.features(img), ag::constant(Tensor(fa.shape()))));
  CHECK(img->grad.all_finite());
}

TEST_CASE("extractor file round trip and feature oracle") {
  using K = PerceptualExtractor::LayerKind;
  const std::vector<PerceptualExtractor::Layer> layers{
      {K::Conv, "c1"}, {K::Relu, "r1"}, {K::MaxPool, "p1"}, {K::Conv, "c2"}, {K::Relu, "r2"}, {K::Conv, "c3"}};
  ParamStore w;
  w.add("c1.w", testing::random_tensor({4, 3, 3, 3}, 20, -0.5, 0.5));
  w.add("c1.b", testing::random_tensor({4}, 21, -0.1, 0.1));
  w.add("c2.w", testing::random_tensor({5, 4, 3, 3}, 22, -0.5, 0.5));
  w.add("c2.b", testing::random_tensor({5}, 23, -0.1, 0.1));
  w.add("c3.w", testing::random_tensor({2, 5, 3, 3}, 24, -0.5, 0.5));
  w.add("c3.b", testing::random_tensor({2}, 25, -0.1, 0.1));
  round_to_float(w);
  const std::array<double, 3> mean{0.485, 0.456, 0.406}, sd{0.229, 0.224, 0.225};
  const auto dir = testing::scratch_dir("phi");
  save_extractor(dir / "phi.bin", layers, w, mean, sd, "r2", true);
  const PerceptualExtractor phi = PerceptualExtractor::load(dir / "phi.bin");
  CHECK(phi.pretrained());
  CHECK(phi.tap() == "r2");

  const Tensor x = random_image(3, 6, 8, 26);
  Tensor h = x;
  for (int c = 0; c < 3; ++c) {
    for (double& v : h.plane(c)) v = (v - mean[static_cast<std::size_t>(c)]) / sd[static_cast<std::size_t>(c)];
  }
  auto relu = [](Tensor t) {
    for (double& v : t.values()) v = std::max(v, 0.0);
    return t;
  };
  h = relu(testing::conv_oracle(h, w.get("c1.w"), &w.get("c1.b"), 1, 1));
  Tensor pooled = Tensor::image(4, 3, 4);
  for (int c = 0; c < 4; ++c) {
    for (int y = 0; y < 3; ++y) {
      for (int xx = 0; xx < 4; ++xx) {
        pooled.at(c, y, xx) = std::max({h.at(c, 2 * y, 2 * xx), h.at(c, 2 * y + 1, 2 * xx), h.at(c, 2 * y, 2 * xx + 1),
                                        h.at(c, 2 * y + 1, 2 * xx + 1)});
      }
    }
  }
  h = relu(testing::conv_oracle(pooled, w.get("c2.w"), &w.get("c2.b"), 1, 1));
  CHECK(max_abs_diff(phi.features(x), h) < 1e-12);
  std::filesystem::remove_all(dir);
}

TEST_CASE("extractor resolution") {
  ::unsetenv("FOURLLIE_PHI_WEIGHTS");
  CHECK(PerceptualExtractor::resolve("") == nullptr);
  CHECK(PerceptualExtractor::resolve("standin") != nullptr);
  ::setenv("FOURLLIE_PHI_WEIGHTS", "standin", 1);
  const auto from_env = PerceptualExtractor::resolve("");
  REQUIRE(from_env != nullptr);
  CHECK_FALSE(from_env->pretrained());
  ::unsetenv("FOURLLIE_PHI_WEIGHTS");
  CHECK_THROWS(PerceptualExtractor::resolve("/nonexistent/phi.bin"));
}
