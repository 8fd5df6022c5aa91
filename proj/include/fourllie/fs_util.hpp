#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace fourllie {

/// Writes to a sibling temp file and renames it over `path`.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

/// Stable 64-bit mix of several integers; used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0, std::uint64_t d = 0);

}  // namespace fourllie
