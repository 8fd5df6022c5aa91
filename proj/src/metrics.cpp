#include "fourllie/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "fourllie/errors.hpp"
#include "fourllie/fs_util.hpp"
#include "fourllie/snr.hpp"

namespace fourllie {
namespace {

// Valid-region separable filtering of one plane.
std::vector<double> filter_valid(const double* src, int h, int w, const std::vector<double>& taps) {
  const int k = static_cast<int>(taps.size());
  const int ho = h - k + 1, wo = w - k + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * wo), out(static_cast<std::size_t>(ho) * wo);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < wo; ++x) {
      double s = 0;
      for (int t = 0; t < k; ++t) s += taps[t] * src[static_cast<std::size_t>(y) * w + x + t];
      tmp[static_cast<std::size_t>(y) * wo + x] = s;
    }
  for (int y = 0; y < ho; ++y)
    for (int x = 0; x < wo; ++x) {
      double s = 0;
      for (int t = 0; t < k; ++t) s += taps[t] * tmp[static_cast<std::size_t>(y + t) * wo + x];
      out[static_cast<std::size_t>(y) * wo + x] = s;
    }
  return out;
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

nlohmann::ordered_json json_number(double v) {
  if (std::isfinite(v)) return v;
  return fmt(v);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "psnr");
  if (a.empty()) throw InvalidInput("psnr: empty images");
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  const double mse = s / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Tensor& a, const Tensor& b, const SsimSettings& st) {
  require_same_shape(a, b, "ssim");
  require_image(a, "ssim");
  const int h = a.height(), w = a.width();
  if (h < st.window || w < st.window) {
    throw InvalidInput("ssim: image " + shape_string(a.shape()) + " is smaller than the " +
                       std::to_string(st.window) + "x" + std::to_string(st.window) + " window");
  }
  const auto taps = gaussian_taps(st.window, st.sigma);
  const double c1 = (st.k1 * st.data_range) * (st.k1 * st.data_range);
  const double c2 = (st.k2 * st.data_range) * (st.k2 * st.data_range);
  const std::size_t n = static_cast<std::size_t>(h) * w;
  double total = 0;
  for (int c = 0; c < a.channels(); ++c) {
    const double* pa = a.data() + c * n;
    const double* pb = b.data() + c * n;
    std::vector<double> aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
    const auto mu_a = filter_valid(pa, h, w, taps);
    const auto mu_b = filter_valid(pb, h, w, taps);
    const auto e_aa = filter_valid(aa.data(), h, w, taps);
    const auto e_bb = filter_valid(bb.data(), h, w, taps);
    const auto e_ab = filter_valid(ab.data(), h, w, taps);
    double s = 0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
      s += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total += s / static_cast<double>(mu_a.size());
  }
  return total / a.channels();
}

void EvalReport::finalize() {
  if (rows.empty()) throw DatasetError("evaluation produced no rows");
  std::sort(rows.begin(), rows.end(), [](const EvalRow& x, const EvalRow& y) { return x.id < y.id; });
}

double EvalReport::mean_psnr() const {
  double s = 0;
  for (const auto& r : rows) s += r.psnr_db;
  return rows.empty() ? 0.0 : s / rows.size();
}

double EvalReport::mean_ssim() const {
  double s = 0;
  for (const auto& r : rows) s += r.ssim;
  return rows.empty() ? 0.0 : s / rows.size();
}

std::string EvalReport::to_csv() const {
  std::set<std::string> extra_cols;
  for (const auto& r : rows)
    for (const auto& [k, v] : r.extra) extra_cols.insert(k);
  std::string out = "id,psnr_db,ssim";
  for (const auto& k : extra_cols) out += "," + k;
  out += "\n";
  for (const auto& r : rows) {
    out += r.id + "," + fmt(r.psnr_db) + "," + fmt(r.ssim);
    for (const auto& k : extra_cols) {
      auto it = r.extra.find(k);
      out += "," + (it == r.extra.end() ? std::string() : fmt(it->second));
    }
    out += "\n";
  }
  return out;
}

std::string EvalReport::aggregate_json() const {
  nlohmann::ordered_json j;
  j["count"] = rows.size();
  j["mean_psnr_db"] = json_number(mean_psnr());
  j["mean_ssim"] = json_number(mean_ssim());
  std::map<std::string, std::pair<double, int>> extra;
  for (const auto& r : rows)
    for (const auto& [k, v] : r.extra) {
      extra[k].first += v;
      extra[k].second += 1;
    }
  for (const auto& [k, sv] : extra) j["mean_" + k] = json_number(sv.first / sv.second);
  j["config_fingerprint"] = config_fingerprint;
  j["checkpoint_fingerprint"] = checkpoint_fingerprint;
  j["resolution"] = resolution;
  j["psnr"] = {{"peak", 1.0}, {"color", "rgb, all channels jointly"}};
  j["ssim"] = {{"window", ssim_settings.window},
               {"sigma", ssim_settings.sigma},
               {"k1", ssim_settings.k1},
               {"k2", ssim_settings.k2},
               {"data_range", ssim_settings.data_range},
               {"region", "valid"}};
  return j.dump(2) + "\n";
}

void EvalReport::write(const std::filesystem::path& csv_path) const {
  atomic_write(csv_path, to_csv());
  std::filesystem::path json_path = csv_path;
  json_path.replace_extension(".json");
  atomic_write(json_path, aggregate_json());
}

void EvalReport::ingest_external(const std::filesystem::path& csv_path) {
  std::ifstream is(csv_path);
  if (!is) throw InvalidInput("cannot open external metrics file " + csv_path.string());
  std::string line;
  if (!std::getline(is, line)) throw InvalidInput(csv_path.string() + " is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv(line);
  if (header.empty() || header[0] != "id") throw InvalidInput(csv_path.string() + ": first column must be 'id'");
  std::map<std::string, EvalRow*> by_id;
  for (auto& r : rows) by_id[r.id] = &r;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw InvalidInput(csv_path.string() + ":" + std::to_string(lineno) + ": wrong number of columns");
    }
    auto it = by_id.find(cells[0]);
    if (it == by_id.end()) throw InvalidInput(csv_path.string() + ": unknown id '" + cells[0] + "'");
    for (std::size_t k = 1; k < cells.size(); ++k) {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(cells[k], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != cells[k].size()) {
        throw InvalidInput(csv_path.string() + ":" + std::to_string(lineno) + ": non-numeric value '" + cells[k] + "'");
      }
      it->second->extra[header[k]] = v;
    }
  }
}

}  // namespace fourllie
