#pragma once

#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "fourllie/tensor.hpp"

namespace fourllie {

/// Returned by psnr for identical images.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

/// 10 log10(1 / MSE) over all channels jointly, peak 1.0.
double psnr(const Tensor& a, const Tensor& b);

struct SsimSettings {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

/// Single-scale SSIM with a Gaussian window over the valid region, averaged
/// over the map and then over channels. Throws InvalidInput when the image is
/// smaller than the window.
double ssim(const Tensor& a, const Tensor& b, const SsimSettings& settings = {});

struct EvalRow {
  std::string id;
  double psnr_db = 0;
  double ssim = 0;
  /// Externally computed columns (e.g. LPIPS), keyed by column name.
  std::map<std::string, double> extra;
};

class EvalReport {
 public:
  std::vector<EvalRow> rows;
  std::string config_fingerprint;
  std::string checkpoint_fingerprint;
  std::string resolution = "full";
  SsimSettings ssim_settings;

  /// Sorts rows by id; throws DatasetError on an empty report.
  void finalize();
  double mean_psnr() const;
  double mean_ssim() const;

  /// Header "id,psnr_db,ssim" followed by any external columns.
  std::string to_csv() const;
  std::string aggregate_json() const;
  /// Writes the CSV and, next to it, the aggregate as <stem>.json.
  void write(const std::filesystem::path& csv_path) const;

  /// Merges a CSV whose first column is "id" and whose other columns are
  /// numeric into `extra`. Unknown ids are an error.
  void ingest_external(const std::filesystem::path& csv_path);
};

}  // namespace fourllie
