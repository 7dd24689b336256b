#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sealedinfer {

using Bytes = std::vector<std::uint8_t>;

class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16_le(std::uint16_t v) { put_le(v, 2); }
  void u32_le(std::uint32_t v) { put_le(v, 4); }
  void u64_le(std::uint64_t v) { put_le(v, 8); }
  void u16_be(std::uint16_t v) { put_be(v, 2); }
  void u32_be(std::uint32_t v) { put_be(v, 4); }
  // Low `width` bytes of v, little-endian.
  void uint_le(std::uint64_t v, std::size_t width) { put_le(v, width); }
  void raw(std::span<const std::uint8_t> data) {
    out_.insert(out_.end(), data.begin(), data.end());
  }

  Bytes take() { return std::move(out_); }
  const Bytes& bytes() const noexcept { return out_; }
  std::size_t size() const noexcept { return out_.size(); }
  void reserve(std::size_t n) { out_.reserve(n); }

 private:
  void put_le(std::uint64_t v, std::size_t width) {
    for (std::size_t i = 0; i < width; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void put_be(std::uint64_t v, std::size_t width) {
    for (std::size_t i = width; i-- > 0;) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  Bytes out_;
};

// Bounds-checked reader; throws ParseError on truncation.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get_le(1)); }
  std::uint16_t u16_le() { return static_cast<std::uint16_t>(get_le(2)); }
  std::uint32_t u32_le() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t u64_le() { return get_le(8); }
  std::uint16_t u16_be() { return static_cast<std::uint16_t>(get_be(2)); }
  std::uint32_t u32_be() { return static_cast<std::uint32_t>(get_be(4)); }
  std::uint64_t uint_le(std::size_t width) { return get_le(width); }
  std::span<const std::uint8_t> raw(std::size_t n);

  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }
  bool done() const noexcept { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const;
  std::uint64_t get_le(std::size_t width);
  std::uint64_t get_be(std::size_t width);

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::string base64_encode(std::span<const std::uint8_t> data);
Bytes base64_decode(std::string_view text);
std::string sha256_hex(std::span<const std::uint8_t> data);
std::string sha256_hex(std::string_view text);

Bytes read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> data);
void write_text_file(const std::string& path, std::string_view text);

}  // namespace sealedinfer
