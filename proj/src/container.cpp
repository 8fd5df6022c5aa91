#include "fourllie/container.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <json.hpp>

#include "fourllie/errors.hpp"
#include "fourllie/fs_util.hpp"

namespace fourllie {
namespace {

constexpr char kMagic[8] = {'F', 'O', 'U', 'R', 'L', 'L', 'I', 'E'};

template <class U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <class U>
U get_le(const std::string& in, std::size_t pos) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return v;
}

const char* dtype_name(DType d) { return d == DType::F32 ? "f32" : "f64"; }

std::size_t dtype_size(DType d) { return d == DType::F32 ? 4 : 8; }

}  // namespace

const ArrayRecord* Container::find(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

std::string encode_container(const Container& c) {
  nlohmann::ordered_json header;
  header["kind"] = c.kind;
  header["meta"] = nlohmann::ordered_json::parse(c.meta_json);
  header["arrays"] = nlohmann::ordered_json::array();
  std::string payload;
  for (const auto& a : c.arrays) {
    const std::size_t offset = payload.size();
    for (double v : a.values.values()) {
      if (a.dtype == DType::F32) {
        put_le(payload, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      } else {
        put_le(payload, std::bit_cast<std::uint64_t>(v));
      }
    }
    header["arrays"].push_back({{"name", a.name},
                                {"dtype", dtype_name(a.dtype)},
                                {"shape", a.values.shape()},
                                {"offset", offset},
                                {"nbytes", payload.size() - offset}});
  }
  const std::string header_text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kContainerVersion);
  put_le<std::uint64_t>(out, header_text.size());
  out += header_text;
  out += payload;
  put_le<std::uint64_t>(out, fnv1a64(out));
  return out;
}

Container decode_container(const std::string& bytes) {
  constexpr std::size_t kPrefix = sizeof kMagic + 4 + 8;
  if (bytes.size() < kPrefix + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CorruptCheckpoint("not a FOURLLIE container (bad magic or truncated)");
  }
  const auto version = get_le<std::uint32_t>(bytes, sizeof kMagic);
  if (version != kContainerVersion) {
    throw CorruptCheckpoint("unsupported container version " + std::to_string(version));
  }
  const auto header_len = get_le<std::uint64_t>(bytes, sizeof kMagic + 4);
  if (header_len > bytes.size() - kPrefix - 8) throw CorruptCheckpoint("container truncated in header");
  const std::size_t body_end = bytes.size() - 8;
  if (get_le<std::uint64_t>(bytes, body_end) != fnv1a64(std::string_view(bytes).substr(0, body_end))) {
    throw CorruptCheckpoint("container checksum mismatch (truncated or modified)");
  }

  Container c;
  const std::size_t payload_start = kPrefix + header_len;
  try {
    const auto header = nlohmann::json::parse(bytes.substr(kPrefix, header_len));
    c.kind = header.at("kind").get<std::string>();
    c.meta_json = header.at("meta").dump();
    for (const auto& a : header.at("arrays")) {
      ArrayRecord rec;
      rec.name = a.at("name").get<std::string>();
      const auto dtype = a.at("dtype").get<std::string>();
      if (dtype == "f32") {
        rec.dtype = DType::F32;
      } else if (dtype == "f64") {
        rec.dtype = DType::F64;
      } else {
        throw CorruptCheckpoint("unknown dtype " + dtype + " for array " + rec.name);
      }
      const Shape shape = a.at("shape").get<Shape>();
      const auto offset = a.at("offset").get<std::uint64_t>();
      const auto nbytes = a.at("nbytes").get<std::uint64_t>();
      const std::size_t count = shape_numel(shape);
      if (nbytes != count * dtype_size(rec.dtype) || offset > body_end - payload_start ||
          nbytes > body_end - payload_start - offset) {
        throw CorruptCheckpoint("array " + rec.name + " has an inconsistent extent");
      }
      Buffer values(count);
      const std::size_t base = payload_start + offset;
      for (std::size_t i = 0; i < count; ++i) {
        if (rec.dtype == DType::F32) {
          values[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, base + 4 * i));
        } else {
          values[i] = std::bit_cast<double>(get_le<std::uint64_t>(bytes, base + 8 * i));
        }
      }
      rec.values = Tensor(shape, std::move(values));
      c.arrays.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptCheckpoint(std::string("malformed container header: ") + e.what());
  } catch (const InvalidInput& e) {
    throw CorruptCheckpoint(std::string("malformed container header: ") + e.what());
  }
  return c;
}

void write_container(const std::filesystem::path& path, const Container& c) {
  atomic_write(path, encode_container(c));
}

Container read_container(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const Error& e) {
    throw CorruptCheckpoint(e.what());
  }
  return decode_container(bytes);
}

}  // namespace fourllie
