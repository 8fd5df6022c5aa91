#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "fourllie/diagnostics.hpp"
#include "fourllie/errors.hpp"
#include "fourllie/fourier.hpp"
#include "fourllie/losses.hpp"
#include "support.hpp"

using namespace fourllie;
using testing::random_image;
namespace fs = std::filesystem;

namespace {

Tensor roll(const Tensor& img, int dy, int dx) {
  Tensor out(img.shape());
  const int h = img.height(), w = img.width();
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out.at(c, (y + dy) % h, (x + dx) % w) = img.at(c, y, x);
    }
  }
  return out;
}

// |A| with the phase of B, through the literal DFT.
Tensor swap_oracle(const Tensor& a, const Tensor& b) {
  const ComplexSpectrum sa = testing::dft_oracle(a), sb = testing::dft_oracle(b);
  ComplexSpectrum mix{Tensor(a.shape()), Tensor(a.shape())};
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double amp = std::hypot(sa.real[i], sa.imag[i]);
    const double pha = std::atan2(sb.imag[i], sb.real[i]);
    mix.real[i] = amp * std::cos(pha);
    mix.imag[i] = amp * std::sin(pha);
  }
  return testing::idft_oracle(mix).real;
}

Tensor amplitude_of(const Tensor& img) { return to_amplitude_phase(forward_transform(img)).amplitude; }

ModelConfig small() {
  ModelConfig c;
  c.nc = 4;
  c.n_fp_stage1 = 3;
  return c;
}

}  // namespace

TEST_CASE("amplitude swap against the literal transform") {
  const Tensor low = random_image(3, 6, 5, 1, 0.0, 0.2);
  const Tensor normal = random_image(3, 6, 5, 2);
  const SwapResult r = amplitude_swap(low, normal);
  CHECK(max_abs_diff(r.amp_l_pha_n_raw, swap_oracle(low, normal)) < 1e-10);
  CHECK(max_abs_diff(r.amp_n_pha_l_raw, swap_oracle(normal, low)) < 1e-10);
  for (double v : r.amp_l_pha_n.values()) CHECK((v >= 0 && v <= 1));
  CHECK(max_abs_diff(amplitude_of(r.amp_l_pha_n_raw), amplitude_of(low)) < 1e-10);
  CHECK(max_abs_diff(amplitude_of(r.amp_n_pha_l_raw), amplitude_of(normal)) < 1e-10);
  CHECK_THROWS_AS(amplitude_swap(low, random_image(3, 6, 6, 3)), ShapeMismatch);
}

TEST_CASE("swap identities") {
  const Tensor x = random_image(3, 8, 8, 4);
  const SwapResult self = amplitude_swap(x, x);
  CHECK(max_abs_diff(self.amp_l_pha_n_raw, x) < 1e-12);
  CHECK(max_abs_diff(self.amp_n_pha_l, x) < 1e-12);

  const Tensor low = random_image(3, 8, 10, 5, 0.0, 0.3);
  const Tensor normal = random_image(3, 8, 10, 6);
  const SwapResult once = amplitude_swap(low, normal);
  const SwapResult twice = amplitude_swap(once.amp_l_pha_n_raw, once.amp_n_pha_l_raw);
  CHECK(max_abs_diff(twice.amp_l_pha_n_raw, low) < 1e-10);
  CHECK(max_abs_diff(twice.amp_n_pha_l_raw, normal) < 1e-10);
}

TEST_CASE("swap and scale commute with circular shifts") {
  const Tensor low = random_image(3, 8, 6, 7, 0.0, 0.3);
  const Tensor normal = random_image(3, 8, 6, 8);
  const SwapResult a = amplitude_swap(roll(low, 2, 1), roll(normal, 2, 1));
  const SwapResult b = amplitude_swap(low, normal);
  CHECK(max_abs_diff(a.amp_l_pha_n_raw, roll(b.amp_l_pha_n_raw, 2, 1)) < 1e-10);
  CHECK(max_abs_diff(amplitude_scale_raw(roll(low, 3, 5), 1.7), roll(amplitude_scale_raw(low, 1.7), 3, 5)) < 1e-10);
}

TEST_CASE("amplitude scaling") {
  const Tensor x = random_image(3, 7, 9, 9, 0.0, 0.5);
  CHECK(max_abs_diff(amplitude_scale(x, 1.0), x) < 1e-12);
  Tensor twice = x;
  for (double& v : twice.values()) v *= 2;
  CHECK(max_abs_diff(amplitude_scale(x, 2.0), twice) < 1e-12);
  CHECK(max_abs_diff(amplitude_scale_raw(x, 3.0), amplitude_scale_raw(amplitude_scale_raw(x, 1.5), 2.0)) < 1e-12);
  for (double v : amplitude_scale(x, 5.0).values()) CHECK((v >= 0 && v <= 1));
  CHECK_THROWS_AS(amplitude_scale(x, 0.0), InvalidInput);
  CHECK_THROWS_AS(amplitude_scale(x, -1.0), InvalidInput);
  CHECK_THROWS_AS(amplitude_scale(x, std::nan("")), InvalidInput);
}

TEST_CASE("setting validation") {
  CHECK_NOTHROW(validate_setting(1));
  CHECK_NOTHROW(validate_setting(3));
  CHECK_THROWS_AS(validate_setting(0), InvalidInput);
  CHECK_THROWS_AS(validate_setting(4), InvalidInput);
  CHECK_THROWS_AS(appendix_init(5, small(), {}), InvalidInput);
}

TEST_CASE("setting three is the frequency stage") {
  ModelConfig freq = small();
  freq.use_spatial_stage = false;
  const Model model(freq);
  const ParamStore p = appendix_init(3, small(), {InitScheme::Random, 10});
  CHECK(p.same_layout(model.init_params({})));
  const Tensor img = random_image(3, 12, 12, 11, 0.0, 0.4);
  CHECK(max_abs_diff(appendix_a_variant(3, img, p, small()), model.enhance(p, img).output_s1) == 0.0);
}

TEST_CASE("settings one and two start as identities") {
  const Tensor img = random_image(3, 12, 10, 12, 0.0, 0.6);
  for (int s : {1, 2}) {
    const ParamStore p = appendix_init(s, small(), {InitScheme::Default, 13});
    CHECK(max_abs_diff(appendix_a_variant(s, img, p, small()), img) < 1e-12);
    CHECK(p.contains("freq.head.w"));
    CHECK(p.contains("freq.par.conv1.w") == (s == 2));
  }
  CHECK_THROWS_AS(appendix_a_variant(1, random_image(1, 8, 8, 1), appendix_init(1, small(), {}), small()),
                  InvalidInput);
}

TEST_CASE("appendix variants reach every parameter group") {
  const Tensor low = random_image(3, 8, 8, 14, 0.0, 0.3);
  const Tensor normal = random_image(3, 8, 8, 15);
  for (int s : {1, 2, 3}) {
    const ParamStore p = appendix_init(s, small(), {InitScheme::Random, 16});
    const Bindings b(p, true);
    ag::backward(loss_s1(appendix_forward(s, small(), b, ag::constant(low)), ag::constant(normal)));
    ParamStore g = p.zeros_like();
    b.accumulate_grads(g);
    for (const auto& e : g.entries()) {
      double n = 0;
      for (double v : e.value.values()) n += v * v;
      CHECK_MESSAGE(n > 0, "setting ", s, " group ", e.name);
    }
  }
}

TEST_CASE("short appendix training run") {
  const fs::path dir = testing::scratch_dir("appendix");
  const DatasetManifest m = synth_tiny_dataset(3, 16, 16, 17, dir);
  TrainConfig t;
  t.total_iters = 30;
  t.batch_size = 2;
  t.crop = 16;
  t.seed = 3;
  const AppendixRun r = train_appendix_variant(1, small(), t, m);
  CHECK(r.trace.size() == 30);
  for (double v : r.trace) CHECK(std::isfinite(v));
  double expect = 0;
  for (std::size_t i = 0; i < m.size(); ++i) expect += loss_s1(m.load(i).low, m.load(i).normal) / 3;
  CHECK(r.initial_amplitude_error == doctest::Approx(expect).epsilon(1e-9));
  CHECK(r.final_amplitude_error < r.initial_amplitude_error);
  CHECK_THROWS_AS(train_appendix_variant(1, small(), t, DatasetManifest{}), DatasetError);
  fs::remove_all(dir);
}
