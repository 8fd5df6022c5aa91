#include "fourllie/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "fourllie/errors.hpp"
#include "fourllie/fs_util.hpp"

namespace fs = std::filesystem;

namespace fourllie {
namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers; rethrows the first
// failure in index order.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < n; i += workers) run(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool all_finite(const ParamStore& s) {
  for (const auto& e : s.entries())
    if (!e.value.all_finite()) return false;
  return true;
}

}  // namespace

// ------------------------------------------------------------------ config

std::vector<std::uint64_t> TrainConfig::resolved_milestones() const {
  if (!milestones.empty()) return milestones;
  std::vector<std::uint64_t> out;
  for (std::uint64_t m : {total_iters / 2, 3 * total_iters / 4}) {
    if (m > 0 && (out.empty() || m > out.back())) out.push_back(m);
  }
  return out;
}

void TrainConfig::validate() const {
  if (!(lr_init > 0) || !std::isfinite(lr_init)) throw InvalidConfig("lr_init must be positive");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1)) throw InvalidConfig("beta1 must lie in [0, 1)");
  if (!(adam.beta2 >= 0 && adam.beta2 < 1)) throw InvalidConfig("beta2 must lie in [0, 1)");
  if (!(adam.eps > 0)) throw InvalidConfig("adam_eps must be positive");
  if (!(lr_decay > 0)) throw InvalidConfig("lr_decay must be positive");
  if (batch_size < 1) throw InvalidConfig("batch_size must be >= 1");
  if (crop < 0) throw InvalidConfig("crop must be >= 0");
  if (total_iters < 1) throw InvalidConfig("total_iters must be >= 1");
  if (!std::isfinite(grad_clip)) throw InvalidConfig("grad_clip must be finite");
  if (threads < 0) throw InvalidConfig("threads must be >= 0");
  const auto ms = resolved_milestones();
  for (std::size_t i = 0; i < ms.size(); ++i) {
    if (ms[i] == 0 || ms[i] >= total_iters) throw InvalidConfig("milestones must lie in (0, total_iters)");
    if (i && ms[i] <= ms[i - 1]) throw InvalidConfig("milestones must be strictly increasing");
  }
  loss.validate();
}

std::string TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["lr_init"] = lr_init;
  j["beta1"] = adam.beta1;
  j["beta2"] = adam.beta2;
  j["adam_eps"] = adam.eps;
  j["milestones"] = resolved_milestones();
  j["lr_decay"] = lr_decay;
  j["batch_size"] = batch_size;
  j["crop"] = crop;
  j["augment_rotate"] = augment_rotate;
  j["augment_flip"] = augment_flip;
  j["total_iters"] = total_iters;
  j["seed"] = seed;
  j["alpha"] = loss.alpha;
  j["lambda"] = loss.lambda;
  j["use_loss_s1"] = use_loss_s1;
  j["use_perceptual"] = use_perceptual;
  j["phi_weights"] = phi_weights;
  j["grad_clip"] = grad_clip;
  j["eval_interval"] = eval_interval;
  j["checkpoint_interval"] = checkpoint_interval;
  return j.dump();
}

const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names{"wo_f", "wo_s", "wo_snr", "wo_ls1", "wo_lvgg"};
  return names;
}

void apply_ablation(const std::string& name, TrainConfig& train, ModelConfig& model) {
  if (name == "wo_f") {
    model.use_frequency_stage = false;
  } else if (name == "wo_s") {
    model.use_spatial_stage = false;
  } else if (name == "wo_snr") {
    model.use_snr_fusion = false;
  } else if (name == "wo_ls1") {
    train.use_loss_s1 = false;
  } else if (name == "wo_lvgg") {
    train.use_perceptual = false;
  } else {
    throw InvalidConfig("unknown ablation '" + name + "' (expected wo_f, wo_s, wo_snr, wo_ls1 or wo_lvgg)");
  }
}

// ------------------------------------------------------------------ traces

std::string loss_trace_csv(const std::vector<LossRecord>& trace) {
  std::string out = "iteration,l_s1,l_s2,l_total,lr\n";
  for (const auto& r : trace) {
    out += std::to_string(r.iteration) + "," + fmt17(r.l_s1) + "," + fmt17(r.l_s2) + "," + fmt17(r.l_total) +
           "," + fmt17(r.lr) + "\n";
  }
  return out;
}

std::vector<LossRecord> read_loss_trace(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open loss trace " + path.string());
  std::string line;
  std::getline(is, line);
  if (line != "iteration,l_s1,l_s2,l_total,lr") throw Error(path.string() + " is not a loss trace");
  std::vector<LossRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    LossRecord r;
    char comma;
    if (!(ss >> r.iteration >> comma >> r.l_s1 >> comma >> r.l_s2 >> comma >> r.l_total >> comma >> r.lr)) {
      throw Error(path.string() + ": malformed row '" + line + "'");
    }
    out.push_back(r);
  }
  return out;
}

std::string checkpoint_name(std::uint64_t iteration) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "ckpt_%08llu.ckpt", static_cast<unsigned long long>(iteration));
  return buf;
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

// ---------------------------------------------------------------- gradients

BatchResult batch_gradients(const Model& model, const ParamStore& params, const std::vector<ImagePair>& batch,
                            const PerceptualExtractor* phi, const LossWeights& weights, bool include_s1,
                            int threads, const ForwardOverrides& ov) {
  if (batch.empty()) throw InvalidInput("batch_gradients: empty batch");
  const std::size_t n = batch.size();
  std::vector<ParamStore> grads(n);
  std::vector<std::array<double, 3>> losses(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const Bindings b(params, true);
    const StageVars v = model.forward(b, ag::constant(batch[i].low), ov);
    const LossTerms t = total_loss(v.output_s1, v.output_s2, ag::constant(batch[i].normal), phi, weights, include_s1);
    ag::backward(ag::scale(t.total, 1.0 / static_cast<double>(n)));
    grads[i] = params.zeros_like();
    b.accumulate_grads(grads[i]);
    losses[i] = {t.s1->value[0], t.s2->value[0], t.total->value[0]};
  });
  BatchResult r;
  r.grads = std::move(grads[0]);
  for (std::size_t i = 1; i < n; ++i) {
    auto& dst = r.grads.entries();
    const auto& src = grads[i].entries();
    for (std::size_t k = 0; k < dst.size(); ++k)
      for (std::size_t j = 0; j < dst[k].value.size(); ++j) dst[k].value[j] += src[k].value[j];
  }
  for (const auto& l : losses) {
    r.l_s1 += l[0];
    r.l_s2 += l[1];
    r.l_total += l[2];
    r.sample_total.push_back(l[2]);
  }
  r.l_s1 /= n;
  r.l_s2 /= n;
  r.l_total /= n;
  return r;
}

// ----------------------------------------------------------------- training

TrainResult train(const TrainConfig& cfg, const ModelConfig& model_cfg, const DatasetManifest& manifest,
                  const TrainOptions& opts) {
  cfg.validate();
  model_cfg.validate();
  if (manifest.empty()) throw DatasetError("training manifest is empty");
  if (manifest.unpaired) throw DatasetError("training needs paired data");
  const Model model(model_cfg);
  const double alpha = cfg.effective_alpha();
  std::shared_ptr<const PerceptualExtractor> phi;
  if (alpha > 0) {
    phi = PerceptualExtractor::resolve(cfg.phi_weights);
    if (!phi) {
      throw InvalidConfig(
          "perceptual loss is enabled but no feature extractor is configured: set [train] phi_weights, "
          "FOURLLIE_PHI_WEIGHTS, or use the wo_lvgg ablation");
    }
  }
  const LossWeights weights{alpha, cfg.loss.lambda};
  const int threads = cfg.deterministic ? 1 : resolve_threads(cfg.threads);
  const MultiStepSchedule schedule(cfg.lr_init, cfg.resolved_milestones(), cfg.lr_decay);

  TrainResult res;
  std::vector<LossRecord> history;
  if (opts.resume) {
    Checkpoint ck = load_checkpoint(*opts.resume, model_cfg);
    if (!ck.state) throw InvalidConfig(opts.resume->string() + " holds no training state");
    res.params = std::move(ck.params);
    res.state = std::move(*ck.state);
    if (res.state.seed != cfg.seed) {
      throw ConfigMismatch("resume seed " + std::to_string(cfg.seed) + " differs from checkpoint seed " +
                           std::to_string(res.state.seed));
    }
    if (!opts.out_dir.empty() && fs::exists(opts.out_dir / "loss.csv")) {
      for (const auto& r : read_loss_trace(opts.out_dir / "loss.csv"))
        if (r.iteration <= res.state.iteration) history.push_back(r);
    }
  } else {
    res.params = model.init_params({InitScheme::Default, cfg.seed, model_cfg.leaky_slope});
    res.state.seed = cfg.seed;
    res.state.adam_m = res.params.zeros_like();
    res.state.adam_v = res.params.zeros_like();
  }
  res.state.train_config_json = cfg.to_json();

  const bool cache = manifest.size() <= 64;
  std::vector<std::optional<ImagePair>> cached(cache ? manifest.size() : 0);
  auto fetch = [&](std::size_t i) -> ImagePair {
    if (!cache) return manifest.load(i);
    if (!cached[i]) cached[i] = manifest.load(i);
    return *cached[i];
  };
  const AugmentOptions aug{cfg.crop, cfg.augment_rotate, cfg.augment_flip};
  const DatasetManifest& eval_set = opts.eval_manifest ? *opts.eval_manifest : manifest;

  auto save = [&](std::uint64_t it) {
    if (opts.out_dir.empty()) return fs::path{};
    const fs::path p = opts.out_dir / checkpoint_name(it);
    save_checkpoint(p, model_cfg, res.params, &res.state);
    std::vector<LossRecord> all = history;
    all.insert(all.end(), res.trace.begin(), res.trace.end());
    atomic_write(opts.out_dir / "loss.csv", loss_trace_csv(all));
    return p;
  };

  std::uint64_t last = cfg.total_iters;
  if (opts.stop_after) last = std::min(last, *opts.stop_after);
  for (std::uint64_t it = res.state.iteration + 1; it <= last; ++it) {
    std::vector<ImagePair> batch;
    std::vector<std::string> ids;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const std::size_t idx = mix_seed(cfg.seed, it, static_cast<std::uint64_t>(b)) % manifest.size();
      batch.push_back(augment(fetch(idx), aug, mix_seed(cfg.seed, it, static_cast<std::uint64_t>(b), 1)));
      ids.push_back(batch.back().id);
    }
    BatchResult br = batch_gradients(model, res.params, batch, phi.get(), weights, cfg.use_loss_s1, threads);
    if (!std::isfinite(br.l_total) || !std::isfinite(br.l_s1) || !all_finite(br.grads)) {
      nlohmann::ordered_json dump;
      dump["iteration"] = it;
      dump["pair_ids"] = ids;
      dump["sample_total_loss"] = nlohmann::ordered_json::array();
      for (double v : br.sample_total) dump["sample_total_loss"].push_back(fmt17(v));
      dump["l_s1"] = fmt17(br.l_s1);
      dump["l_s2"] = fmt17(br.l_s2);
      std::string where;
      if (!opts.out_dir.empty()) {
        const fs::path p = opts.out_dir / ("nonfinite_" + std::to_string(it) + ".json");
        atomic_write(p, dump.dump(2) + "\n");
        where = "; diagnostic dump at " + p.string();
      }
      std::string joined;
      for (const auto& id : ids) joined += (joined.empty() ? "" : ",") + id;
      throw NonFiniteLoss("non-finite loss or gradient at iteration " + std::to_string(it) + " on batch [" +
                          joined + "]" + where);
    }
    clip_grad_norm(br.grads, cfg.grad_clip);
    const double lr = schedule.lr_at(it - 1);
    adam_step(res.params, br.grads, res.state.adam_m, res.state.adam_v, it, lr, cfg.adam);
    res.state.iteration = it;
    const LossRecord rec{it, br.l_s1, br.l_s2, br.l_total, lr};
    res.trace.push_back(rec);
    if (opts.on_step) opts.on_step(rec);

    if (cfg.eval_interval && it % cfg.eval_interval == 0) {
      EvalReport rep = evaluate(model, res.params, eval_set, {}, threads);
      if (rep.mean_psnr() > res.state.best_psnr) {
        res.state.best_psnr = rep.mean_psnr();
        res.state.best_iteration = it;
      }
      if (opts.on_eval) opts.on_eval(it, rep);
    }
    if (cfg.checkpoint_interval && it % cfg.checkpoint_interval == 0 && it != last) save(it);
  }
  res.final_checkpoint = save(res.state.iteration);
  if (!res.final_checkpoint.empty()) {
    fs::copy_file(res.final_checkpoint, opts.out_dir / "final.ckpt", fs::copy_options::overwrite_existing);
  }
  return res;
}

// --------------------------------------------------------------- evaluation

EvalReport evaluate(const Model& model, const ParamStore& params, const DatasetManifest& manifest,
                    const ForwardOverrides& ov, int threads) {
  if (manifest.empty()) throw DatasetError("evaluation manifest is empty");
  if (manifest.unpaired) throw DatasetError("evaluation needs paired data");
  model.check_layout(params);
  EvalReport rep;
  rep.rows.resize(manifest.size());
  parallel_for(manifest.size(), resolve_threads(threads), [&](std::size_t i) {
    const ImagePair p = manifest.load(i);
    const StageOutputs out = model.enhance(params, p.low, ov);
    rep.rows[i] = {p.id, psnr(out.output_s2, p.normal), ssim(out.output_s2, p.normal, rep.ssim_settings), {}};
  });
  rep.config_fingerprint = config_fingerprint(model.config());
  rep.finalize();
  return rep;
}

EvalReport evaluate(const fs::path& checkpoint, const DatasetManifest& manifest,
                    const std::optional<ModelConfig>& expected, int threads) {
  const Checkpoint ck = expected ? load_checkpoint(checkpoint, *expected) : load_checkpoint(checkpoint);
  EvalReport rep = evaluate(Model(ck.config), ck.params, manifest, {}, threads);
  rep.checkpoint_fingerprint = checkpoint_fingerprint(checkpoint);
  return rep;
}

}  // namespace fourllie
