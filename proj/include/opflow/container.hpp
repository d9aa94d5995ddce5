#pragma once

// .opfl container, all integers little-endian:
//
//   "OPFL1"                     5-byte magic
//   u64 header_length
//   header                      UTF-8 JSON {format_version, kind, meta, records:[{name, shape}]}
//   payload                     float64 records in header order
//   u32 crc32                   zlib CRC-32 of every preceding byte
//
// Reading checks, in order: magic, header, version, payload length, checksum.

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "opflow/array.hpp"
#include "opflow/errors.hpp"

namespace opflow {

static_assert(std::endian::native == std::endian::little, "the .opfl codec assumes a little-endian host");

inline constexpr char kMagic[] = "OPFL1";
inline constexpr std::size_t kMagicSize = 5;
inline constexpr int kFormatVersion = 1;

struct Record {
  std::string name;
  Array values;
};

struct Container {
  std::string kind;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<Record> records;

  const Array& get(const std::string& name) const {
    for (const auto& r : records)
      if (r.name == name) return r.values;
    throw FormatError("container has no record '" + name + "'");
  }

  bool has(const std::string& name) const {
    for (const auto& r : records)
      if (r.name == name) return true;
    return false;
  }

  void put(std::string name, Array values) { records.push_back({std::move(name), std::move(values)}); }
};

namespace detail {

inline std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = ::crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

template <class T>
void put_le(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  out.insert(out.end(), b, b + sizeof(T));
}

template <class T>
T get_le(const std::uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode(const Container& c) {
  nlohmann::json header{{"format_version", kFormatVersion}, {"kind", c.kind}, {"meta", c.meta}};
  header["records"] = nlohmann::json::array();
  for (const auto& r : c.records) header["records"].push_back({{"name", r.name}, {"shape", r.values.shape()}});
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(kMagic, kMagic + kMagicSize);
  detail::put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& r : c.records) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(r.values.raw());
    out.insert(out.end(), p, p + r.values.size() * sizeof(double));
  }
  detail::put_le<std::uint32_t>(out, detail::crc32_of(out.data(), out.size()));
  return out;
}

inline Container decode(const std::vector<std::uint8_t>& bytes) {
  const std::size_t prefix = kMagicSize + sizeof(std::uint64_t);
  if (bytes.size() < kMagicSize) throw TruncatedError("file shorter than the magic number");
  if (std::memcmp(bytes.data(), kMagic, kMagicSize) != 0) throw BadMagicError("not an .opfl file (bad magic)");
  if (bytes.size() < prefix) throw TruncatedError("file ends inside the header length");
  const auto header_len = detail::get_le<std::uint64_t>(bytes.data() + kMagicSize);
  if (header_len > bytes.size() - prefix) throw TruncatedError("file ends inside the header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + static_cast<long>(prefix),
                                   bytes.begin() + static_cast<long>(prefix + header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed header: ") + e.what());
  }

  Container c;
  std::vector<Shape> shapes;
  std::size_t payload = 0;
  try {
    const int version = header.at("format_version").get<int>();
    if (version != kFormatVersion) {
      throw VersionError("unsupported format_version " + std::to_string(version) + " (expected " +
                         std::to_string(kFormatVersion) + ")");
    }
    c.kind = header.at("kind").get<std::string>();
    c.meta = header.value("meta", nlohmann::json::object());
    for (const auto& r : header.at("records")) {
      c.records.push_back({r.at("name").get<std::string>(), Array()});
      shapes.push_back(r.at("shape").get<Shape>());
      payload += numel(shapes.back()) * sizeof(double);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed header: ") + e.what());
  }

  const std::size_t expected = prefix + header_len + payload + sizeof(std::uint32_t);
  if (bytes.size() < expected) {
    throw TruncatedError("file has " + std::to_string(bytes.size()) + " bytes, header declares " +
                         std::to_string(expected));
  }
  if (bytes.size() > expected) throw FormatError("trailing bytes after checksum");
  const auto stored = detail::get_le<std::uint32_t>(bytes.data() + expected - sizeof(std::uint32_t));
  if (stored != detail::crc32_of(bytes.data(), expected - sizeof(std::uint32_t))) {
    throw ChecksumError("checksum mismatch");
  }

  const std::uint8_t* p = bytes.data() + prefix + header_len;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    Array a(shapes[i]);
    std::memcpy(a.raw(), p, a.size() * sizeof(double));
    p += a.size() * sizeof(double);
    c.records[i].values = std::move(a);
  }
  return c;
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes to a temporary sibling and renames, so readers never see a partial file.
inline void write_container(const std::filesystem::path& path, const Container& c) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::vector<std::uint8_t> bytes = encode(c);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Container read_container(const std::filesystem::path& path) { return decode(read_bytes(path)); }

}  // namespace opflow
