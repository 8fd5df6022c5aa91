#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include <json.hpp>

#include "fourllie/errors.hpp"
#include "fourllie/fs_util.hpp"
#include "fourllie/metrics.hpp"
#include "support.hpp"

using namespace fourllie;
using testing::random_image;
namespace fs = std::filesystem;

namespace {

// Direct SSIM with a non-separable 11x11 Gaussian window over the valid region.
double ssim_oracle(const Tensor& a, const Tensor& b) {
  const int h = a.height(), w = a.width(), r = 5;
  double win[11][11], total = 0;
  for (int i = 0; i < 11; ++i) {
    for (int j = 0; j < 11; ++j) {
      win[i][j] = std::exp(-((i - r) * (i - r) + (j - r) * (j - r)) / (2 * 1.5 * 1.5));
      total += win[i][j];
    }
  }
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double acc = 0;
  for (int c = 0; c < a.channels(); ++c) {
    double sum = 0;
    int n = 0;
    for (int y = r; y < h - r; ++y) {
      for (int x = r; x < w - r; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < 11; ++i) {
          for (int j = 0; j < 11; ++j) {
            const double k = win[i][j] / total;
            const double va = a.at(c, y + i - r, x + j - r), vb = b.at(c, y + i - r, x + j - r);
            ma += k * va;
            mb += k * vb;
            saa += k * va * va;
            sbb += k * vb * vb;
            sab += k * va * vb;
          }
        }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        sum += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++n;
      }
    }
    acc += sum / n;
  }
  return acc / a.channels();
}

}  // namespace

TEST_CASE("psnr closed forms") {
  const Tensor a = random_image(3, 8, 8, 1, 0.0, 0.9);
  CHECK(psnr(a, a) == kPsnrIdentical);
  CHECK(std::isinf(psnr(a, a)));
  Tensor b = a;
  for (double& v : b.values()) v += 0.1;
  CHECK(std::abs(psnr(a, b) - 20.0) < 1e-9);
  CHECK(std::abs(psnr(Tensor::image(3, 4, 4, 0.0), Tensor::image(3, 4, 4, 1.0))) < 1e-12);
  const Tensor c = random_image(3, 8, 8, 2);
  CHECK(psnr(a, c) == psnr(c, a));
  CHECK_THROWS_AS(psnr(a, random_image(3, 8, 7, 1)), ShapeMismatch);
}

TEST_CASE("psnr falls as noise grows") {
  const Tensor a = random_image(3, 16, 16, 3);
  std::mt19937_64 rng(4);
  double prev = 1e300;
  for (double amp : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    double mean = 0;
    std::normal_distribution<double> n(0.0, amp);
    for (int t = 0; t < 20; ++t) {
      Tensor b = a;
      for (double& v : b.values()) v += n(rng);
      mean += psnr(a, b) / 20;
    }
    CHECK(mean < prev);
    prev = mean;
  }
}

TEST_CASE("ssim matches the direct window oracle") {
  const Tensor a = random_image(3, 16, 19, 5);
  Tensor b = a;
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0, 0.1);
  for (double& v : b.values()) v += n(rng);
  CHECK(std::abs(ssim(a, b) - ssim_oracle(a, b)) < 1e-9);
  const Tensor c = random_image(3, 11, 11, 7);
  CHECK(std::abs(ssim(a, random_image(3, 16, 19, 8)) - ssim_oracle(a, random_image(3, 16, 19, 8))) < 1e-9);
  CHECK(std::abs(ssim(c, c) - 1.0) < 1e-12);
}

TEST_CASE("ssim closed forms") {
  const Tensor a = random_image(3, 16, 16, 9);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(ssim(a, random_image(3, 16, 16, 10)) == doctest::Approx(ssim(random_image(3, 16, 16, 10), a)).epsilon(1e-14));

  Tensor board = Tensor::image(1, 16, 16);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) board.at(0, y, x) = (x + y) % 2;
  }
  Tensor inv = board;
  for (double& v : inv.values()) v = 1 - v;
  CHECK(ssim(board, inv) < 0.0);

  const double ma = 0.3, mb = 0.7, c1 = 1e-4;
  const double expect = (2 * ma * mb + c1) / (ma * ma + mb * mb + c1);
  CHECK(std::abs(ssim(Tensor::image(3, 12, 12, ma), Tensor::image(3, 12, 12, mb)) - expect) < 1e-6);

  CHECK_THROWS_AS(ssim(Tensor::image(3, 10, 20), Tensor::image(3, 10, 20)), InvalidInput);
  CHECK_THROWS_AS(ssim(a, random_image(3, 16, 17, 1)), ShapeMismatch);
}

TEST_CASE("evaluation report") {
  EvalReport r;
  CHECK_THROWS_AS(r.finalize(), DatasetError);
  r.rows = {{"b", 20.0, 0.5, {}}, {"a", 30.0, 0.7, {}}, {"c", kPsnrIdentical, 1.0, {}}};
  r.config_fingerprint = "cfg";
  r.checkpoint_fingerprint = "ck";
  r.finalize();
  CHECK(r.rows[0].id == "a");
  CHECK(r.rows[2].id == "c");
  CHECK(r.mean_ssim() == doctest::Approx(2.2 / 3));
  r.rows.pop_back();
  CHECK(r.mean_psnr() == doctest::Approx(25.0));
  CHECK(r.to_csv().rfind("id,psnr_db,ssim\n", 0) == 0);

  const fs::path dir = testing::scratch_dir("report");
  atomic_write(dir / "ext.csv", "id,lpips,niqe\na,0.1,4.5\nb,0.2,5.5\n");
  r.ingest_external(dir / "ext.csv");
  CHECK(r.rows[1].extra.at("lpips") == 0.2);
  CHECK(r.to_csv().rfind("id,psnr_db,ssim,lpips,niqe\n", 0) == 0);
  r.write(dir / "out" / "report.csv");
  CHECK(fs::exists(dir / "out" / "report.csv"));
  const auto j = nlohmann::json::parse(read_file(dir / "out" / "report.json"));
  CHECK(j.at("mean_psnr_db").get<double>() == doctest::Approx(25.0));
  CHECK(j.at("count").get<int>() == 2);
  CHECK(j.at("mean_lpips").get<double>() == doctest::Approx(0.15));
  CHECK(j.at("resolution").get<std::string>() == "full");
  CHECK(j.at("config_fingerprint").get<std::string>() == "cfg");
  CHECK(j.at("ssim").at("window").get<int>() == 11);

  atomic_write(dir / "bad.csv", "id,lpips\nzzz,0.1\n");
  CHECK_THROWS(r.ingest_external(dir / "bad.csv"));
  fs::remove_all(dir);
}
