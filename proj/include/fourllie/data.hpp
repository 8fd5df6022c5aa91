#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fourllie/tensor.hpp"

namespace fourllie {

struct ImagePair {
  Tensor low;
  Tensor normal;  // empty for unpaired records
  std::string id;
};

struct PairRecord {
  std::string id;
  std::filesystem::path low;
  std::filesystem::path normal;  // empty for unpaired records
};

enum class DatasetLayout {
  Auto,        // listing file if root is a file, else paired directories
  PairedDirs,  // <root>/low|Low and <root>/high|High|normal|Normal
  Listing,     // text file of "low<TAB>normal" lines, '#' comments
  Unpaired,    // every image under <root>/low or <root>
};

struct DatasetManifest {
  std::filesystem::path root;
  std::string split;
  std::vector<PairRecord> records;
  bool unpaired = false;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  /// Decodes record i. Throws DatasetError when the two images differ in size.
  ImagePair load(std::size_t i) const;
};

/// Builds and verifies a manifest. With a non-empty `split`, the paired
/// directories are looked up under the subdirectory of `root` whose name
/// matches the split case-insensitively (e.g. Train, test, eval15).
/// Low and normal files pair by identical file name, or else by stem with a
/// leading "low"/"high"/"normal" tag removed (low00690.png <-> normal00690.png).
/// Records are sorted by id.
DatasetManifest load_manifest(const std::filesystem::path& root, DatasetLayout layout = DatasetLayout::Auto,
                              const std::string& split = "");

struct AugmentOptions {
  int crop = 384;  // 0 keeps the full frame
  bool rotate = true;
  bool flip = true;
};

/// Applies one random crop window, rotation by a multiple of 90 degrees and
/// horizontal/vertical flips identically to both images. Frames smaller than
/// the crop are reflect-padded first.
ImagePair augment(const ImagePair& pair, const AugmentOptions& opts, std::uint64_t seed);

/// Writes n smooth random normal-light images and darkened, noisy low-light
/// counterparts as 8-bit PNGs under <dir>/low and <dir>/high, then loads them.
/// An empty dir selects a fresh directory under the system temp path.
DatasetManifest synth_tiny_dataset(int n, int h, int w, std::uint64_t seed,
                                   const std::filesystem::path& dir = {});

}  // namespace fourllie
