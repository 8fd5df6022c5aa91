#include "fourllie/checkpoint.hpp"

#include <cmath>
#include <json.hpp>

#include "fourllie/container.hpp"
#include "fourllie/errors.hpp"
#include "fourllie/fs_util.hpp"

namespace fourllie {
namespace {

constexpr const char* kKind = "fourllie-checkpoint";

void append_store(Container& c, const std::string& prefix, const ParamStore& store, DType dtype) {
  for (const auto& e : store.entries()) c.arrays.push_back({prefix + e.name, dtype, e.value});
}

ParamStore read_store(const Container& c, const std::string& prefix, const ParamStore& layout) {
  ParamStore out = layout.zeros_like();
  for (auto& e : out.entries()) {
    const ArrayRecord* rec = c.find(prefix + e.name);
    if (!rec) throw ConfigMismatch("checkpoint lacks array " + prefix + e.name);
    if (rec->values.shape() != e.value.shape()) {
      throw ConfigMismatch("array " + prefix + e.name + " has shape " +
                           shape_string(rec->values.shape()) + ", config expects " +
                           shape_string(e.value.shape()));
    }
    e.value = rec->values;
  }
  return out;
}

// Large finite sentinel keeps the JSON header valid when no eval happened yet.
double encode_best(double v) { return std::isfinite(v) ? v : -1e308; }
double decode_best(double v) {
  return v <= -1e308 ? -std::numeric_limits<double>::infinity() : v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ParamStore& params, const TrainState* state) {
  Model(config).check_layout(params);
  Container c;
  c.kind = kKind;
  nlohmann::ordered_json meta;
  meta["model_config"] = nlohmann::ordered_json::parse(model_config_to_json(config));
  meta["parameter_count"] = params.scalar_count();
  if (state) {
    meta["train_state"] = {{"iteration", state->iteration},
                           {"seed", state->seed},
                           {"best_psnr", encode_best(state->best_psnr)},
                           {"best_iteration", state->best_iteration},
                           {"train_config", nlohmann::ordered_json::parse(state->train_config_json)}};
  }
  c.meta_json = meta.dump();
  append_store(c, "param/", params, DType::F32);
  if (state) {
    append_store(c, "adam_m/", state->adam_m, DType::F64);
    append_store(c, "adam_v/", state->adam_v, DType::F64);
  }
  write_container(path, c);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const Container c = read_container(path);
  if (c.kind != kKind) throw CorruptCheckpoint(path.string() + " is a '" + c.kind + "' container, not a checkpoint");
  Checkpoint ck;
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(c.meta_json);
    ck.config = model_config_from_json(meta.at("model_config").dump());
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpoint(std::string("checkpoint metadata: ") + e.what());
  } catch (const InvalidConfig& e) {
    throw CorruptCheckpoint(std::string("checkpoint metadata: ") + e.what());
  }
  const ParamStore layout = Model(ck.config).init_params({InitScheme::Zero});
  try {
    ck.params = read_store(c, "param/", layout);
    if (meta.contains("train_state")) {
      const auto& ts = meta.at("train_state");
      TrainState st;
      st.iteration = ts.at("iteration").get<std::uint64_t>();
      st.seed = ts.at("seed").get<std::uint64_t>();
      st.best_psnr = decode_best(ts.at("best_psnr").get<double>());
      st.best_iteration = ts.at("best_iteration").get<std::uint64_t>();
      st.train_config_json = ts.at("train_config").dump();
      st.adam_m = read_store(c, "adam_m/", layout);
      st.adam_v = read_store(c, "adam_v/", layout);
      ck.state = std::move(st);
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpoint(std::string("checkpoint train state: ") + e.what());
  } catch (const ConfigMismatch& e) {
    throw CorruptCheckpoint(std::string("checkpoint inconsistent with its own config: ") + e.what());
  }
  return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  Checkpoint ck = load_checkpoint(path);
  if (model_config_to_json(ck.config) != model_config_to_json(expected)) {
    throw ConfigMismatch("checkpoint config " + model_config_to_json(ck.config) +
                         " differs from expected " + model_config_to_json(expected));
  }
  return ck;
}

std::string checkpoint_fingerprint(const std::filesystem::path& path) {
  return hex64(fnv1a64(read_file(path)));
}

std::string config_fingerprint(const ModelConfig& config) {
  return hex64(fnv1a64(model_config_to_json(config)));
}

}  // namespace fourllie
