#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fourllie/tensor.hpp"

namespace fourllie {

// Self-describing array file shared by model checkpoints and perceptual
// extractor weights.
//
//   "FOURLLIE"                      8-byte magic
//   u32 LE format version           currently 1
//   u64 LE header length
//   header (UTF-8 JSON)             {"kind", "meta", "arrays": [{"name",
//                                    "dtype", "shape", "offset", "nbytes"}]}
//   payload                         little-endian f32 / f64 arrays
//   u64 LE FNV-1a of all bytes above
enum class DType { F32, F64 };

struct ArrayRecord {
  std::string name;
  DType dtype = DType::F32;
  Tensor values;
};

struct Container {
  std::string kind;
  std::string meta_json = "{}";
  std::vector<ArrayRecord> arrays;

  const ArrayRecord* find(const std::string& name) const;
};

inline constexpr unsigned kContainerVersion = 1;

std::string encode_container(const Container& c);
/// Throws CorruptCheckpoint on any structural problem.
Container decode_container(const std::string& bytes);

void write_container(const std::filesystem::path& path, const Container& c);
Container read_container(const std::filesystem::path& path);

}  // namespace fourllie
