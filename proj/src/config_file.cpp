#include "fourllie/config_file.hpp"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "fourllie/errors.hpp"

namespace pt = boost::property_tree;

namespace fourllie {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* what) {
  throw InvalidConfig("config key " + key + " = '" + value + "': expected " + what);
}

template <class T>
T parse_number(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    bad(key, raw, std::is_integral_v<T> ? "an integer" : "a number");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& raw) {
  std::string v = trim(raw);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad(key, raw, "a boolean");
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& raw) {
  std::vector<T> out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(parse_number<T>(key, item));
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, std::map<std::string, Setter>>& schema() {
  static const std::map<std::string, std::map<std::string, Setter>> s = {
      {"train",
       {
           {"lr_init", [](RunConfig& c, auto& k, auto& v) { c.train.lr_init = parse_number<double>(k, v); }},
           {"beta1", [](RunConfig& c, auto& k, auto& v) { c.train.adam.beta1 = parse_number<double>(k, v); }},
           {"beta2", [](RunConfig& c, auto& k, auto& v) { c.train.adam.beta2 = parse_number<double>(k, v); }},
           {"adam_eps", [](RunConfig& c, auto& k, auto& v) { c.train.adam.eps = parse_number<double>(k, v); }},
           {"milestones",
            [](RunConfig& c, auto& k, auto& v) { c.train.milestones = parse_list<std::uint64_t>(k, v); }},
           {"lr_decay", [](RunConfig& c, auto& k, auto& v) { c.train.lr_decay = parse_number<double>(k, v); }},
           {"batch_size", [](RunConfig& c, auto& k, auto& v) { c.train.batch_size = parse_number<int>(k, v); }},
           {"crop", [](RunConfig& c, auto& k, auto& v) { c.train.crop = parse_number<int>(k, v); }},
           {"augment_rotate", [](RunConfig& c, auto& k, auto& v) { c.train.augment_rotate = parse_bool(k, v); }},
           {"augment_flip", [](RunConfig& c, auto& k, auto& v) { c.train.augment_flip = parse_bool(k, v); }},
           {"total_iters",
            [](RunConfig& c, auto& k, auto& v) {
              // accepts 2.0e5 as well as 200000
              const double d = parse_number<double>(k, v);
              if (d < 0 || d != static_cast<double>(static_cast<std::uint64_t>(d))) bad(k, v, "a whole number");
              c.train.total_iters = static_cast<std::uint64_t>(d);
            }},
           {"seed", [](RunConfig& c, auto& k, auto& v) { c.train.seed = parse_number<std::uint64_t>(k, v); }},
           {"grad_clip", [](RunConfig& c, auto& k, auto& v) { c.train.grad_clip = parse_number<double>(k, v); }},
           {"eval_interval",
            [](RunConfig& c, auto& k, auto& v) { c.train.eval_interval = parse_number<std::uint64_t>(k, v); }},
           {"checkpoint_interval",
            [](RunConfig& c, auto& k, auto& v) { c.train.checkpoint_interval = parse_number<std::uint64_t>(k, v); }},
           {"phi_weights", [](RunConfig& c, auto&, auto& v) { c.train.phi_weights = trim(v); }},
           {"threads", [](RunConfig& c, auto& k, auto& v) { c.train.threads = parse_number<int>(k, v); }},
           {"deterministic", [](RunConfig& c, auto& k, auto& v) { c.train.deterministic = parse_bool(k, v); }},
       }},
      {"loss",
       {
           {"alpha", [](RunConfig& c, auto& k, auto& v) { c.train.loss.alpha = parse_number<double>(k, v); }},
           {"lambda", [](RunConfig& c, auto& k, auto& v) { c.train.loss.lambda = parse_number<double>(k, v); }},
       }},
      {"model",
       {
           {"nc", [](RunConfig& c, auto& k, auto& v) { c.model.nc = parse_number<int>(k, v); }},
           {"n_fp_stage1", [](RunConfig& c, auto& k, auto& v) { c.model.n_fp_stage1 = parse_number<int>(k, v); }},
           {"widths", [](RunConfig& c, auto& k, auto& v) { c.model.widths = parse_list<int>(k, v); }},
           {"bottleneck_blocks",
            [](RunConfig& c, auto& k, auto& v) { c.model.bottleneck_blocks = parse_number<int>(k, v); }},
           {"exposure_correction_mode",
            [](RunConfig& c, auto& k, auto& v) { c.model.exposure_correction_mode = parse_bool(k, v); }},
           {"leaky_slope", [](RunConfig& c, auto& k, auto& v) { c.model.leaky_slope = parse_number<double>(k, v); }},
       }},
      {"ablation",
       {
           {"wo_f", [](RunConfig& c, auto& k, auto& v) { if (parse_bool(k, v)) apply_ablation("wo_f", c.train, c.model); }},
           {"wo_s", [](RunConfig& c, auto& k, auto& v) { if (parse_bool(k, v)) apply_ablation("wo_s", c.train, c.model); }},
           {"wo_snr", [](RunConfig& c, auto& k, auto& v) { if (parse_bool(k, v)) apply_ablation("wo_snr", c.train, c.model); }},
           {"wo_ls1", [](RunConfig& c, auto& k, auto& v) { if (parse_bool(k, v)) apply_ablation("wo_ls1", c.train, c.model); }},
           {"wo_lvgg", [](RunConfig& c, auto& k, auto& v) { if (parse_bool(k, v)) apply_ablation("wo_lvgg", c.train, c.model); }},
       }},
  };
  return s;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  pt::ptree tree;
  try {
    std::istringstream is(text);
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw InvalidConfig(std::string("malformed config: ") + e.what());
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    auto sec = schema().find(section);
    if (sec == schema().end()) {
      throw InvalidConfig(body.empty() && !body.data().empty()
                              ? "config key '" + section + "' is outside any section"
                              : "unknown config section [" + section + "]");
    }
    for (const auto& [key, node] : body) {
      auto it = sec->second.find(key);
      if (it == sec->second.end()) throw InvalidConfig("unknown config key '" + key + "' in [" + section + "]");
      it->second(cfg, section + "." + key, node.data());
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InvalidConfig("cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace fourllie
