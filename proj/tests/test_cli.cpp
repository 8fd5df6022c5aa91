#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>

#include <json.hpp>

#include "fourllie/data.hpp"
#include "fourllie/fs_util.hpp"
#include "fourllie/image_io.hpp"
#include "fourllie/trainer.hpp"
#include "support.hpp"

using namespace fourllie;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

Run cli(const std::string& args, const fs::path& scratch) {
  const fs::path log = scratch / "cli.log";
  const std::string cmd = std::string("\"") + FOURLLIE_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = fs::exists(log) ? read_file(log) : "";
  fs::remove(log);
  return r;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

// Every regular file below `root` lies under one of `allowed`.
bool contained(const fs::path& root, const std::vector<fs::path>& allowed) {
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    bool ok = false;
    for (const auto& a : allowed) {
      const auto rel = fs::relative(e.path(), a);
      ok = ok || (!rel.empty() && *rel.begin() != "..");
    }
    if (!ok) return false;
  }
  return true;
}

const char* kTinyConfig = R"([train]
batch_size = 2
crop = 32
total_iters = 6
seed = 5
phi_weights = standin
deterministic = true

[model]
nc = 4
n_fp_stage1 = 2
)";

}  // namespace

TEST_CASE("help and usage errors") {
  const fs::path dir = testing::scratch_dir("cli_usage");
  for (const char* sub : {"", "train", "eval", "enhance", "diagnose", "diagnose swap", "diagnose scale",
                          "diagnose snr", "diagnose appendix-a"}) {
    const Run r = cli(std::string(sub) + " --help", dir);
    CHECK_MESSAGE(r.code == 0, sub);
    CHECK(r.output.find("Usage") != std::string::npos);
  }
  const Run missing = cli("train --data x --out y", dir);
  CHECK(missing.code == 2);
  CHECK(missing.output.find("--config") != std::string::npos);
  CHECK(cli("train", dir).code == 2);
  CHECK(cli("frobnicate", dir).code == 2);
  CHECK(cli("diagnose scale --in /nonexistent.png --out x", dir).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("configuration errors exit with code 2") {
  const fs::path dir = testing::scratch_dir("cli_config");
  synth_tiny_dataset(2, 32, 32, 1, dir / "data");
  atomic_write(dir / "tiny.ini", kTinyConfig);
  const std::string base = "train --config " + q(dir / "tiny.ini") + " --data " + q(dir / "data") + " --out " +
                           q(dir / "run");
  const Run both = cli(base + " --ablate wo_f --ablate wo_s", dir);
  CHECK(both.code == 2);
  CHECK(both.output.find("stage") != std::string::npos);
  CHECK(cli(base + " --ablate wo_nothing", dir).code == 2);
  atomic_write(dir / "bad.ini", "[train]\nlearning_rate = 1\n");
  CHECK(cli("train --config " + q(dir / "bad.ini") + " --data " + q(dir / "data") + " --out " + q(dir / "run"), dir)
            .code == 2);
  CHECK(cli("train --config " + q(dir / "tiny.ini") + " --data " + q(dir / "nowhere") + " --out " + q(dir / "run"),
            dir)
            .code == 1);
  fs::remove_all(dir);
}

TEST_CASE("train, eval and enhance end to end") {
  const fs::path dir = testing::scratch_dir("cli_e2e");
  synth_tiny_dataset(3, 32, 32, 2, dir / "data");
  atomic_write(dir / "tiny.ini", kTinyConfig);
  const fs::path run = dir / "run";
  const Run t = cli("train --config " + q(dir / "tiny.ini") + " --data " + q(dir / "data") + " --out " + q(run) +
                        " --seed 9 --deterministic",
                    dir);
  REQUIRE_MESSAGE(t.code == 0, t.output);
  CHECK(fs::exists(run / "final.ckpt"));
  CHECK(fs::exists(run / "loss.csv"));
  CHECK(fs::exists(run / checkpoint_name(6)));

  const Run again = cli("train --config " + q(dir / "tiny.ini") + " --data " + q(dir / "data") + " --out " + q(run) +
                            " --resume " + q(run / checkpoint_name(6)) + " --seed 10",
                        dir);
  CHECK(again.code == 2);

  const Run e = cli("eval --ckpt " + q(run / "final.ckpt") + " --data " + q(dir / "data") + " --out " +
                        q(dir / "eval" / "report.csv"),
                    dir);
  REQUIRE_MESSAGE(e.code == 0, e.output);
  const std::string csv = read_file(dir / "eval" / "report.csv");
  CHECK(csv.rfind("id,psnr_db,ssim\n", 0) == 0);
  const auto j = nlohmann::json::parse(read_file(dir / "eval" / "report.json"));
  CHECK(j.at("count").get<int>() == 3);

  const Run n = cli("enhance --ckpt " + q(run / "final.ckpt") + " --in " + q(dir / "data" / "low") + " --out " +
                        q(dir / "enh") + " --save-intermediates",
                    dir);
  REQUIRE_MESSAGE(n.code == 0, n.output);
  int outputs = 0;
  for (const auto& f : fs::directory_iterator(dir / "data" / "low")) {
    const std::string stem = f.path().stem().string();
    CHECK(fs::exists(dir / "enh" / (stem + ".png")));
    CHECK(fs::exists(dir / "enh" / (stem + "_s1.png")));
    CHECK(fs::exists(dir / "enh" / (stem + "_snr.png")));
    CHECK(fs::exists(dir / "enh" / (stem + "_map.png")));
    const Tensor img = read_image(dir / "enh" / (stem + ".png"));
    CHECK(img.shape() == Shape{3, 32, 32});
    ++outputs;
  }
  CHECK(outputs == 3);
  CHECK(contained(dir, {dir / "data", dir / "run", dir / "eval", dir / "enh", dir / "tiny.ini"}));
  fs::remove_all(dir);
}

TEST_CASE("diagnose subcommands") {
  const fs::path dir = testing::scratch_dir("cli_diag");
  const DatasetManifest m = synth_tiny_dataset(2, 32, 32, 3, dir / "data");
  const fs::path low = m.records[0].low, normal = m.records[0].normal;

  REQUIRE(cli("diagnose swap --low " + q(low) + " --normal " + q(normal) + " --out " + q(dir / "swap"), dir).code ==
          0);
  CHECK(fs::exists(dir / "swap" / "amp_l_pha_n.png"));
  CHECK(fs::exists(dir / "swap" / "amp_n_pha_l.png"));
  const auto sj = nlohmann::json::parse(read_file(dir / "swap" / "swap.json"));
  CHECK(sj.size() > 0);

  REQUIRE(cli("diagnose scale --in " + q(low) + " --k 1.8 --out " + q(dir / "scale"), dir).code == 0);
  CHECK(fs::exists(dir / "scale" / "scaled.png"));
  CHECK(cli("diagnose scale --in " + q(low) + " --k -1 --out " + q(dir / "scale"), dir).code == 2);

  REQUIRE(cli("diagnose snr --in " + q(low) + " --out " + q(dir / "snr"), dir).code == 0);
  const Tensor snr = read_image(dir / "snr" / "snr.png");
  const auto r = snr.plane(0), g = snr.plane(1);
  CHECK(std::equal(r.begin(), r.end(), g.begin()));

  const Run a = cli("diagnose appendix-a --data " + q(dir / "data") + " --out " + q(dir / "app") +
                        " --iters 3 --nc 4 --settings 1,3",
                    dir);
  REQUIRE_MESSAGE(a.code == 0, a.output);
  CHECK(fs::exists(dir / "app" / "setting1_trace.csv"));
  CHECK(fs::exists(dir / "app" / "setting3_trace.csv"));
  CHECK_FALSE(fs::exists(dir / "app" / "setting2_trace.csv"));
  CHECK(fs::exists(dir / "app" / "appendix_a.json"));
  CHECK(cli("diagnose appendix-a --data " + q(dir / "data") + " --out " + q(dir / "app") + " --settings 4", dir)
            .code == 2);
  CHECK(contained(dir, {dir / "data", dir / "swap", dir / "scale", dir / "snr", dir / "app"}));
  fs::remove_all(dir);
}
