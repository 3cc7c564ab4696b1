#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "zbcae/errors.hpp"
#include "zbcae/tensor.hpp"

// Binary tensor container. All integers are little-endian.
//
//   "ZTEN" | u32 version (=1) | u32 record count
//   per record:
//     u16 name length | UTF-8 name | u8 dtype (2 = float64) | u8 ndim |
//     u64 extent * ndim | row-major float64 payload
//
// Record names are unique and the payload sizes account for every byte.

namespace zbcae {

using NamedTensor = std::pair<std::string, Tensor>;
using NamedTensors = std::vector<NamedTensor>;

inline constexpr std::uint32_t kTensorFileVersion = 1;
inline constexpr std::uint8_t kDtypeFloat64 = 2;

namespace detail {

class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    auto bits = static_cast<std::uint64_t>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bytes_.push_back(static_cast<char>(bits & 0xFF));
      bits >>= 8;
    }
  }
  void put_double(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void put_bytes(std::string_view s) { bytes_.append(s); }
  std::string take() { return std::move(bytes_); }

 private:
  std::string bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t count, const char* what) const {
    if (remaining() < count) {
      throw FormatError("truncated tensor file at offset " + std::to_string(pos_) + ": expected " +
                        std::to_string(count) + " more bytes for " + what + ", found " + std::to_string(remaining()));
    }
  }

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(bits);
  }

  std::string_view get_bytes(std::size_t count, const char* what) {
    need(count, what);
    auto out = bytes_.substr(pos_, count);
    pos_ += count;
    return out;
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_tensors(const NamedTensors& records) {
  std::set<std::string_view> seen;
  detail::ByteWriter out;
  out.put_bytes("ZTEN");
  out.put<std::uint32_t>(kTensorFileVersion);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(records.size()));
  for (const auto& [name, tensor] : records) {
    if (name.size() > UINT16_MAX) throw FormatError("record name longer than 65535 bytes: " + name.substr(0, 32));
    if (!seen.insert(name).second) throw FormatError("duplicate record name '" + name + "'");
    if (tensor.rank() == 0) throw FormatError("record '" + name + "' holds an empty tensor");
    out.put<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    out.put_bytes(name);
    out.put<std::uint8_t>(kDtypeFloat64);
    out.put<std::uint8_t>(static_cast<std::uint8_t>(tensor.rank()));
    for (std::size_t e : tensor.shape()) out.put<std::uint64_t>(e);
    for (double v : tensor.data()) out.put_double(v);
  }
  return out.take();
}

inline NamedTensors decode_tensors(std::string_view bytes) {
  detail::ByteReader in(bytes);
  const std::string_view magic = in.get_bytes(4, "magic");
  if (magic != "ZTEN") throw FormatError("bad magic at offset 0: expected \"ZTEN\"");
  const std::size_t version_offset = in.offset();
  const auto version = in.get<std::uint32_t>("version");
  if (version != kTensorFileVersion) {
    throw FormatError("unsupported tensor file version " + std::to_string(version) + " at offset " +
                      std::to_string(version_offset) + " (expected 1)");
  }
  const auto count = in.get<std::uint32_t>("record count");

  NamedTensors records;
  std::set<std::string> seen;
  for (std::uint32_t r = 0; r < count; ++r) {
    const std::size_t record_offset = in.offset();
    const auto name_len = in.get<std::uint16_t>("record name length");
    std::string name(in.get_bytes(name_len, "record name"));
    if (!seen.insert(name).second) {
      throw FormatError("duplicate record name '" + name + "' at offset " + std::to_string(record_offset));
    }
    const std::size_t dtype_offset = in.offset();
    const auto dtype = in.get<std::uint8_t>("dtype");
    if (dtype != kDtypeFloat64) {
      throw FormatError("unsupported dtype code " + std::to_string(dtype) + " at offset " +
                        std::to_string(dtype_offset));
    }
    const auto ndim = in.get<std::uint8_t>("ndim");
    if (ndim < 1 || ndim > 4) {
      throw FormatError("unsupported rank " + std::to_string(ndim) + " at offset " + std::to_string(dtype_offset + 1));
    }
    Tensor::Shape shape(ndim);
    std::uint64_t volume = 1;
    for (auto& e : shape) {
      const std::size_t extent_offset = in.offset();
      const auto extent = in.get<std::uint64_t>("extent");
      if (extent == 0) throw FormatError("zero extent at offset " + std::to_string(extent_offset));
      if (volume > in.remaining() / extent) {
        throw FormatError("truncated tensor file at offset " + std::to_string(extent_offset) +
                          ": declared payload exceeds the file size");
      }
      volume *= extent;
      e = static_cast<std::size_t>(extent);
    }
    in.need(volume * sizeof(double), "payload");
    std::vector<double> data(volume);
    for (auto& v : data) v = std::bit_cast<double>(in.get<std::uint64_t>("payload"));
    records.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (in.remaining() != 0) {
    throw FormatError("trailing bytes at offset " + std::to_string(in.offset()) + " after the last record");
  }
  return records;
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error while reading '" + path.string() + "'");
  return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("error while writing '" + path.string() + "'");
}

inline void save_tensors(const std::filesystem::path& path, const NamedTensors& records) {
  write_file_bytes(path, encode_tensors(records));
}

inline NamedTensors load_tensors(const std::filesystem::path& path) {
  try {
    return decode_tensors(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline const Tensor* find_record(const NamedTensors& records, std::string_view name) {
  for (const auto& [n, t] : records) {
    if (n == name) return &t;
  }
  return nullptr;
}

inline const Tensor& require_record(const NamedTensors& records, std::string_view name) {
  if (const Tensor* t = find_record(records, name)) return *t;
  throw FormatError("missing record '" + std::string(name) + "'");
}

}  // namespace zbcae
