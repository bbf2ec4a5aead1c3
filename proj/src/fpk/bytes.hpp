#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fpk/error.hpp"

namespace fpk {

// Little-endian byte buffer builder used by every on-disk format.
class ByteWriter {
 public:
  void put_u8(std::uint8_t v) { buf_.push_back(v); }
  void put_u32(std::uint32_t v) { put_le(v); }
  void put_u64(std::uint64_t v) { put_le(v); }
  void put_f32(float v) { put_le(std::bit_cast<std::uint32_t>(v)); }
  void put_f64(double v) { put_le(std::bit_cast<std::uint64_t>(v)); }
  void put_bytes(std::span<const std::uint8_t> bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }
  void put_magic(std::string_view magic) { buf_.insert(buf_.end(), magic.begin(), magic.end()); }
  void put_string(std::string_view s) {
    put_u64(s.size());
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  void put_f64s(std::span<const double> values) {
    put_u64(values.size());
    for (double v : values) put_f64(v);
  }

  const std::vector<std::uint8_t>& bytes() const { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }
  std::size_t size() const { return buf_.size(); }

 private:
  template <typename T>
  void put_le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  std::vector<std::uint8_t> buf_;
};

// Bounds-checked reader; running past the end raises `underflow_code`.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data, ErrorCode underflow_code = ErrorCode::kTruncatedFile)
      : data_(data), underflow_(underflow_code) {}

  std::uint8_t get_u8() { return take(1)[0]; }
  std::uint32_t get_u32() { return get_le<std::uint32_t>(); }
  std::uint64_t get_u64() { return get_le<std::uint64_t>(); }
  float get_f32() { return std::bit_cast<float>(get_le<std::uint32_t>()); }
  double get_f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
  std::span<const std::uint8_t> get_bytes(std::size_t n) { return take(n); }
  std::string get_magic() {
    auto b = take(4);
    return std::string(b.begin(), b.end());
  }
  std::string get_string() {
    auto n = get_u64();
    auto b = take(n);
    return std::string(b.begin(), b.end());
  }
  std::vector<double> get_f64s() {
    auto n = get_u64();
    if (n > remaining() / 8) fail(underflow_, "array length exceeds buffer");
    std::vector<double> out(n);
    for (auto& v : out) v = get_f64();
    return out;
  }

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > remaining()) fail(underflow_, "unexpected end of data");
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  template <typename T>
  T get_le() {
    auto b = take(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
    return v;
  }

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
  ErrorCode underflow_;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

std::string read_file_text(const std::filesystem::path& path);

}  // namespace fpk
