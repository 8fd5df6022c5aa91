#include "fourllie/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <set>

#include "fourllie/errors.hpp"
#include "fourllie/fs_util.hpp"
#include "fourllie/image_io.hpp"

namespace fs = std::filesystem;

namespace fourllie {
namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

fs::path find_subdir(const fs::path& root, std::initializer_list<const char*> names) {
  if (!fs::is_directory(root)) return {};
  for (const char* want : names) {
    for (const auto& e : fs::directory_iterator(root)) {
      if (e.is_directory() && lower(e.path().filename().string()) == want) return e.path();
    }
  }
  return {};
}

std::vector<fs::path> list_images(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::string pairing_key(const fs::path& p) {
  std::string stem = p.stem().string();
  const std::string l = lower(stem);
  for (const char* tag : {"normal", "high", "low"}) {
    const std::string t = tag;
    if (l.size() > t.size() && l.compare(0, t.size(), t) == 0) return stem.substr(t.size());
  }
  return stem;
}

DatasetManifest load_paired_dirs(const fs::path& base) {
  const fs::path low_dir = find_subdir(base, {"low"});
  const fs::path high_dir = find_subdir(base, {"high", "normal"});
  if (low_dir.empty() || high_dir.empty()) {
    throw DatasetError("expected low/ and high/ (or normal/) subdirectories under " + base.string());
  }
  const auto lows = list_images(low_dir);
  const auto highs = list_images(high_dir);
  std::map<std::string, fs::path> by_name, by_key;
  for (const auto& h : highs) {
    by_name[h.filename().string()] = h;
    by_key[pairing_key(h)] = h;
  }
  DatasetManifest m;
  std::set<fs::path> used;
  for (const auto& l : lows) {
    fs::path match;
    if (auto it = by_name.find(l.filename().string()); it != by_name.end()) {
      match = it->second;
    } else if (auto jt = by_key.find(pairing_key(l)); jt != by_key.end()) {
      match = jt->second;
    }
    if (match.empty()) throw DatasetError("unmatched pair: " + l.string() + " has no counterpart in " + high_dir.string());
    if (!used.insert(match).second) throw DatasetError("unmatched pair: " + match.string() + " matches two low images");
    m.records.push_back({l.stem().string(), l, match});
  }
  for (const auto& h : highs) {
    if (!used.count(h)) throw DatasetError("unmatched pair: " + h.string() + " has no counterpart in " + low_dir.string());
  }
  return m;
}

DatasetManifest load_listing(const fs::path& file) {
  std::ifstream is(file);
  if (!is) throw DatasetError("cannot open listing file " + file.string());
  DatasetManifest m;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw DatasetError(file.string() + ":" + std::to_string(lineno) + ": expected low_path<TAB>normal_path");
    }
    fs::path low = line.substr(0, tab), normal = line.substr(tab + 1);
    if (low.is_relative()) low = file.parent_path() / low;
    if (normal.is_relative()) normal = file.parent_path() / normal;
    m.records.push_back({low.stem().string(), low, normal});
  }
  return m;
}

DatasetManifest load_unpaired(const fs::path& root) {
  fs::path dir = find_subdir(root, {"low"});
  if (dir.empty()) dir = root;
  DatasetManifest m;
  m.unpaired = true;
  for (const auto& p : list_images(dir)) m.records.push_back({p.stem().string(), p, {}});
  return m;
}

Tensor rot90(const Tensor& t, int k) {
  k = ((k % 4) + 4) % 4;
  if (k == 0) return t;
  const int c = t.channels(), h = t.height(), w = t.width();
  const int ho = (k == 2) ? h : w, wo = (k == 2) ? w : h;
  Tensor out = Tensor::image(c, ho, wo);
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < ho; ++y)
      for (int x = 0; x < wo; ++x) {
        int sy, sx;
        if (k == 1) {  // counter-clockwise
          sy = x;
          sx = w - 1 - y;
        } else if (k == 2) {
          sy = h - 1 - y;
          sx = w - 1 - x;
        } else {
          sy = h - 1 - x;
          sx = y;
        }
        out.at(ch, y, x) = t.at(ch, sy, sx);
      }
  return out;
}

Tensor flip(const Tensor& t, bool horizontal) {
  Tensor out = t;
  const int c = t.channels(), h = t.height(), w = t.width();
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.at(ch, y, x) = horizontal ? t.at(ch, y, w - 1 - x) : t.at(ch, h - 1 - y, x);
  return out;
}

}  // namespace

ImagePair DatasetManifest::load(std::size_t i) const {
  if (i >= records.size()) throw DatasetError("record index out of range");
  const PairRecord& r = records[i];
  ImagePair p;
  p.id = r.id;
  p.low = read_image(r.low);
  if (!r.normal.empty()) {
    p.normal = read_image(r.normal);
    if (p.low.height() != p.normal.height() || p.low.width() != p.normal.width()) {
      throw DatasetError("pair " + r.id + ": low is " + shape_string(p.low.shape()) + " but normal is " +
                         shape_string(p.normal.shape()));
    }
  }
  return p;
}

DatasetManifest load_manifest(const fs::path& root, DatasetLayout layout, const std::string& split) {
  if (!fs::exists(root)) throw DatasetError("dataset root does not exist: " + root.string());
  fs::path base = root;
  if (!split.empty() && fs::is_directory(root)) {
    const std::string want = lower(split);
    fs::path sub = find_subdir(root, {want.c_str()});
    if (sub.empty()) throw DatasetError("no '" + split + "' split under " + root.string());
    base = sub;
  }
  if (layout == DatasetLayout::Auto) layout = fs::is_regular_file(base) ? DatasetLayout::Listing : DatasetLayout::PairedDirs;

  DatasetManifest m;
  switch (layout) {
    case DatasetLayout::Listing: m = load_listing(base); break;
    case DatasetLayout::Unpaired: m = load_unpaired(base); break;
    default: m = load_paired_dirs(base); break;
  }
  m.root = root;
  m.split = split;
  if (m.records.empty()) throw DatasetError("dataset is empty: " + base.string());
  std::sort(m.records.begin(), m.records.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  std::set<std::string> ids;
  for (const auto& r : m.records) {
    if (!ids.insert(r.id).second) throw DatasetError("duplicate pair id '" + r.id + "'");
    if (!fs::is_regular_file(r.low)) throw DatasetError("missing file " + r.low.string());
    if (!r.normal.empty() && !fs::is_regular_file(r.normal)) throw DatasetError("missing file " + r.normal.string());
  }
  return m;
}

ImagePair augment(const ImagePair& pair, const AugmentOptions& opts, std::uint64_t seed) {
  require_image(pair.low, "augment");
  const bool paired = !pair.normal.empty();
  if (paired && (pair.low.height() != pair.normal.height() || pair.low.width() != pair.normal.width())) {
    throw ShapeMismatch("augment: pair images differ in size");
  }
  std::mt19937_64 rng(seed);
  ImagePair out{pair.low, pair.normal, pair.id};
  if (opts.crop > 0) {
    const int h = out.low.height(), w = out.low.width();
    const int ph = std::max(0, opts.crop - h), pw = std::max(0, opts.crop - w);
    if (ph || pw) {
      out.low = reflect_pad(out.low, ph / 2, ph - ph / 2, pw / 2, pw - pw / 2);
      if (paired) out.normal = reflect_pad(out.normal, ph / 2, ph - ph / 2, pw / 2, pw - pw / 2);
    }
    const int y0 = std::uniform_int_distribution<int>(0, out.low.height() - opts.crop)(rng);
    const int x0 = std::uniform_int_distribution<int>(0, out.low.width() - opts.crop)(rng);
    out.low = crop(out.low, y0, x0, opts.crop, opts.crop);
    if (paired) out.normal = crop(out.normal, y0, x0, opts.crop, opts.crop);
  }
  const int k = opts.rotate ? std::uniform_int_distribution<int>(0, 3)(rng) : 0;
  const bool hflip = opts.flip && std::uniform_int_distribution<int>(0, 1)(rng);
  const bool vflip = opts.flip && std::uniform_int_distribution<int>(0, 1)(rng);
  for (Tensor* t : {&out.low, &out.normal}) {
    if (t->empty()) continue;
    *t = rot90(*t, k);
    if (hflip) *t = flip(*t, true);
    if (vflip) *t = flip(*t, false);
  }
  return out;
}

DatasetManifest synth_tiny_dataset(int n, int h, int w, std::uint64_t seed, const fs::path& dir) {
  if (n < 1 || h < 1 || w < 1) throw InvalidInput("synth_tiny_dataset: n, h and w must be >= 1");
  fs::path root = dir;
  if (root.empty()) {
    root = fs::temp_directory_path() /
           ("fourllie-synth-" + hex64(mix_seed(seed, n, h, w)) + "-" + hex64(mix_seed(std::random_device{}(), seed)));
  }
  fs::create_directories(root / "low");
  fs::create_directories(root / "high");
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  for (int i = 0; i < n; ++i) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    // Normal image: a few low-frequency waves shared by all channels plus a
    // per-channel tint, rescaled to [0.15, 0.9].
    struct Wave {
      double fy, fx, phase, amp;
    };
    std::vector<Wave> waves(4);
    for (auto& wv : waves) wv = {0.5 + 2.5 * u(rng), 0.5 + 2.5 * u(rng), kTwoPi * u(rng), 0.5 + u(rng)};
    Tensor normal = Tensor::image(3, h, w);
    std::array<double, 3> tint{0.7 + 0.3 * u(rng), 0.7 + 0.3 * u(rng), 0.7 + 0.3 * u(rng)};
    std::array<double, 3> chan_phase{kTwoPi * u(rng), kTwoPi * u(rng), kTwoPi * u(rng)};
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double v = 0;
          for (const auto& wv : waves) {
            v += wv.amp * std::cos(kTwoPi * (wv.fy * y / h + wv.fx * x / w) + wv.phase);
          }
          v += 0.3 * std::cos(kTwoPi * (x + y) / (w + h) + chan_phase[c]);
          normal.at(c, y, x) = v;
        }
    double lo = normal[0], hi = normal[0];
    for (double v : normal.values()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double& v = normal.at(c, y, x);
          v = tint[c] * (0.15 + 0.75 * (hi > lo ? (v - lo) / (hi - lo) : 0.5));
        }
    const double gamma = 1.8 + 0.6 * u(rng);
    const double gain = 0.25 + 0.15 * u(rng);
    std::normal_distribution<double> noise(0.0, 0.02);
    Tensor low = Tensor::image(3, h, w);
    for (std::size_t k = 0; k < low.size(); ++k) {
      low[k] = std::clamp(gain * std::pow(normal[k], gamma) + noise(rng), 0.0, 1.0);
    }
    char name[32];
    std::snprintf(name, sizeof name, "pair%03d.png", i);
    write_png(root / "low" / name, low);
    write_png(root / "high" / name, normal);
  }
  return load_manifest(root, DatasetLayout::PairedDirs);
}

}  // namespace fourllie
