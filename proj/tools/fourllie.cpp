#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fourllie/checkpoint.hpp"
#include "fourllie/config_file.hpp"
#include "fourllie/data.hpp"
#include "fourllie/diagnostics.hpp"
#include "fourllie/errors.hpp"
#include "fourllie/fs_util.hpp"
#include "fourllie/image_io.hpp"
#include "fourllie/metrics.hpp"
#include "fourllie/model.hpp"
#include "fourllie/snr.hpp"
#include "fourllie/trainer.hpp"

namespace fs = std::filesystem;
using namespace fourllie;
using json = nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

struct TrainArgs {
  fs::path config, data, out;
  std::string split;
  std::optional<fs::path> resume;
  std::vector<std::string> ablate;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
};

struct EvalArgs {
  fs::path ckpt, data, out;
  std::string split;
  std::optional<fs::path> external;
  int threads = 0;
};

struct EnhanceArgs {
  fs::path ckpt, in, out;
  bool intermediates = false;
};

struct DiagArgs {
  fs::path low, normal, in, out, data, config;
  double k = 1.8;
  std::uint64_t iters = 300;
  std::uint64_t seed = 0;
  int nc = 8;
  std::vector<int> settings{1, 2, 3};
};

void write_json(const fs::path& path, const json& j) { atomic_write(path, j.dump(2) + "\n"); }

int run_train(const TrainArgs& a) {
  RunConfig rc = load_run_config(a.config);
  for (const auto& name : a.ablate) apply_ablation(name, rc.train, rc.model);
  if (a.seed) rc.train.seed = *a.seed;
  if (a.deterministic) rc.train.deterministic = true;
  rc.model.validate();
  rc.train.validate();

  const DatasetManifest manifest = load_manifest(a.data, DatasetLayout::Auto, a.split);
  std::printf("train: %zu pairs, %zu parameters, %llu iterations\n", manifest.size(),
              count_parameters(rc.model), static_cast<unsigned long long>(rc.train.total_iters));

  TrainOptions opts;
  opts.out_dir = a.out;
  opts.resume = a.resume;
  const std::uint64_t every = std::max<std::uint64_t>(1, rc.train.total_iters / 20);
  opts.on_step = [every](const LossRecord& r) {
    if (r.iteration % every == 0 || r.iteration == 1) {
      std::printf("iter %8llu  l_s1 %.6g  l_s2 %.6g  l_total %.6g  lr %.3g\n",
                  static_cast<unsigned long long>(r.iteration), r.l_s1, r.l_s2, r.l_total, r.lr);
      std::fflush(stdout);
    }
  };
  opts.on_eval = [](std::uint64_t it, const EvalReport& rep) {
    std::printf("eval @%llu  psnr %.4f  ssim %.4f\n", static_cast<unsigned long long>(it), rep.mean_psnr(),
                rep.mean_ssim());
  };
  const TrainResult res = train(rc.train, rc.model, manifest, opts);
  std::printf("wrote %s\n", res.final_checkpoint.string().c_str());
  return kOk;
}

int run_eval(const EvalArgs& a) {
  const DatasetManifest manifest = load_manifest(a.data, DatasetLayout::Auto, a.split);
  EvalReport rep = evaluate(a.ckpt, manifest, std::nullopt, a.threads);
  if (a.external) rep.ingest_external(*a.external);
  rep.write(a.out);
  std::printf("%zu images  psnr %.4f dB  ssim %.4f\n", rep.rows.size(), rep.mean_psnr(), rep.mean_ssim());
  return kOk;
}

std::vector<fs::path> collect_inputs(const fs::path& in) {
  std::vector<fs::path> files;
  if (fs::is_directory(in)) {
    for (const auto& e : fs::directory_iterator(in)) {
      if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DatasetError("no images in " + in.string());
  } else {
    if (!fs::exists(in)) throw DatasetError("input not found: " + in.string());
    files.push_back(in);
  }
  return files;
}

int run_enhance(const EnhanceArgs& a) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const Model model(ck.config);
  for (const auto& file : collect_inputs(a.in)) {
    const std::string stem = file.stem().string();
    const StageOutputs o = model.enhance(ck.params, read_image(file));
    write_png(a.out / (stem + ".png"), o.output_s2);
    if (a.intermediates) {
      write_png(a.out / (stem + "_s1.png"), o.output_s1);
      write_png(a.out / (stem + "_snr.png"), o.snr.values);
      if (!o.map.empty()) write_png(a.out / (stem + "_map.png"), o.map);
      if (!o.map_down.empty()) write_png(a.out / (stem + "_map_down.png"), o.map_down);
    }
    std::printf("%s -> %s\n", file.string().c_str(), (a.out / (stem + ".png")).string().c_str());
  }
  return kOk;
}

int run_swap(const DiagArgs& a) {
  const Tensor low = read_image(a.low);
  const Tensor normal = read_image(a.normal);
  const SwapResult r = amplitude_swap(low, normal);
  write_png(a.out / "amp_l_pha_n.png", r.amp_l_pha_n);
  write_png(a.out / "amp_n_pha_l.png", r.amp_n_pha_l);
  json j;
  j["mean_luminance"] = {{"low", mean_luminance(low)},
                         {"normal", mean_luminance(normal)},
                         {"amp_l_pha_n", mean_luminance(r.amp_l_pha_n)},
                         {"amp_n_pha_l", mean_luminance(r.amp_n_pha_l)}};
  write_json(a.out / "swap.json", j);
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int run_scale(const DiagArgs& a) {
  const Tensor img = read_image(a.in);
  const Tensor out = amplitude_scale(img, a.k);
  write_png(a.out / "scaled.png", out);
  json j;
  j["k"] = a.k;
  j["mean_luminance"] = {{"before", mean_luminance(img)}, {"after", mean_luminance(out)}};
  write_json(a.out / "scale.json", j);
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int run_snr(const DiagArgs& a) {
  const SnrMap s = compute_snr_map(read_image(a.in));
  write_png(a.out / "snr.png", s.values);
  double sum = 0;
  for (double v : s.values.values()) sum += v;
  json j;
  j["height"] = s.height();
  j["width"] = s.width();
  j["mean"] = sum / static_cast<double>(s.values.size());
  write_json(a.out / "snr.json", j);
  std::cout << j.dump(2) << "\n";
  return kOk;
}

int run_appendix(const DiagArgs& a) {
  RunConfig rc;
  if (!a.config.empty()) rc = load_run_config(a.config);
  if (a.config.empty()) {
    rc.model.nc = a.nc;
    rc.train.total_iters = a.iters;
    rc.train.crop = 64;
    rc.train.seed = a.seed;
  }
  rc.model.validate();
  rc.train.validate();
  const DatasetManifest manifest = load_manifest(a.data);
  json j = json::array();
  for (int setting : a.settings) {
    validate_setting(setting);
    const AppendixRun run = train_appendix_variant(setting, rc.model, rc.train, manifest);
    std::string trace = "iteration,loss\n";
    for (std::size_t i = 0; i < run.trace.size(); ++i) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i + 1, run.trace[i]);
      trace += buf;
    }
    atomic_write(a.out / ("setting" + std::to_string(setting) + "_trace.csv"), trace);
    j.push_back({{"setting", setting},
                 {"initial_amplitude_error", run.initial_amplitude_error},
                 {"final_amplitude_error", run.final_amplitude_error}});
    std::printf("setting %d  amplitude error %.6g -> %.6g\n", setting, run.initial_amplitude_error,
                run.final_amplitude_error);
    std::fflush(stdout);
  }
  write_json(a.out / "appendix_a.json", j);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fourier-domain low-light enhancement: training, evaluation and diagnostics", "fourllie"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a model from an INI config");
  train_cmd->add_option("--config", ta.config, "INI run configuration")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--data", ta.data, "Dataset root or listing file")->required();
  train_cmd->add_option("--out", ta.out, "Output directory")->required();
  train_cmd->add_option("--split", ta.split, "Dataset split subdirectory");
  train_cmd->add_option("--resume", ta.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  train_cmd->add_option("--ablate", ta.ablate, "wo_f, wo_s, wo_snr, wo_ls1 or wo_lvgg (repeatable)")
      ->check(CLI::IsMember({"wo_f", "wo_s", "wo_snr", "wo_ls1", "wo_lvgg"}));
  train_cmd->add_option("--seed", ta.seed, "Override the configured seed");
  train_cmd->add_flag("--deterministic", ta.deterministic, "Single-threaded, bitwise reproducible run");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a paired dataset");
  eval_cmd->add_option("--ckpt", ea.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", ea.data, "Dataset root or listing file")->required();
  eval_cmd->add_option("--out", ea.out, "Report CSV (aggregate JSON is written beside it)")->required();
  eval_cmd->add_option("--split", ea.split, "Dataset split subdirectory");
  eval_cmd->add_option("--external", ea.external, "CSV of extra per-image columns keyed by id")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--threads", ea.threads, "Worker threads (0 = all cores)");

  EnhanceArgs na;
  auto* enh_cmd = app.add_subcommand("enhance", "Enhance an image or a directory of images");
  enh_cmd->add_option("--ckpt", na.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  enh_cmd->add_option("--in", na.in, "Input image or directory")->required();
  enh_cmd->add_option("--out", na.out, "Output directory")->required();
  enh_cmd->add_flag("--save-intermediates", na.intermediates, "Also write stage-1 output, SNR and transform maps");

  DiagArgs da;
  auto* diag_cmd = app.add_subcommand("diagnose", "Spectral experiments");
  diag_cmd->require_subcommand(1);
  auto* swap_cmd = diag_cmd->add_subcommand("swap", "Exchange amplitude between a low/normal pair");
  swap_cmd->add_option("--low", da.low, "Low-light image")->required()->check(CLI::ExistingFile);
  swap_cmd->add_option("--normal", da.normal, "Normal-light image")->required()->check(CLI::ExistingFile);
  swap_cmd->add_option("--out", da.out, "Output directory")->required();
  auto* scale_cmd = diag_cmd->add_subcommand("scale", "Multiply the amplitude by a constant");
  scale_cmd->add_option("--in", da.in, "Input image")->required()->check(CLI::ExistingFile);
  scale_cmd->add_option("--k", da.k, "Scale factor")->capture_default_str()->check(CLI::PositiveNumber);
  scale_cmd->add_option("--out", da.out, "Output directory")->required();
  auto* snr_cmd = diag_cmd->add_subcommand("snr", "Write the SNR map as an 8-bit gray image");
  snr_cmd->add_option("--in", da.in, "Input image")->required()->check(CLI::ExistingFile);
  snr_cmd->add_option("--out", da.out, "Output directory")->required();
  auto* app_cmd = diag_cmd->add_subcommand("appendix-a", "Train the three amplitude-prediction settings");
  app_cmd->add_option("--data", da.data, "Dataset root")->required();
  app_cmd->add_option("--out", da.out, "Output directory")->required();
  app_cmd->add_option("--config", da.config, "INI run configuration")->check(CLI::ExistingFile);
  app_cmd->add_option("--iters", da.iters, "Iterations per setting (without --config)")->capture_default_str();
  app_cmd->add_option("--nc", da.nc, "Trunk width (without --config)")->capture_default_str();
  app_cmd->add_option("--seed", da.seed, "Seed (without --config)")->capture_default_str();
  app_cmd->add_option("--settings", da.settings, "Settings to run")
      ->capture_default_str()
      ->delimiter(',')
      ->check(CLI::Range(1, 3));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train_cmd) return run_train(ta);
    if (*eval_cmd) return run_eval(ea);
    if (*enh_cmd) return run_enhance(na);
    if (*swap_cmd) return run_swap(da);
    if (*scale_cmd) return run_scale(da);
    if (*snr_cmd) return run_snr(da);
    if (*app_cmd) return run_appendix(da);
  } catch (const InvalidConfig& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigMismatch& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
