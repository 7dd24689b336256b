#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "sealedinfer/bytes.hpp"

namespace sealedinfer {

// Packed bit vector, 64 lanes per word. Bits past size() are kept zero.
class BitVec {
 public:
  BitVec() = default;
  explicit BitVec(std::size_t n) : size_(n), words_((n + 63) / 64, 0) {}

  // Lanes past n in the last word are dropped.
  static BitVec from_words(std::vector<std::uint64_t> words, std::size_t n) {
    BitVec out(n);
    words.resize(out.words_.size(), 0);
    out.words_ = std::move(words);
    out.clear_tail();
    return out;
  }

  std::size_t size() const noexcept { return size_; }
  std::size_t word_count() const noexcept { return words_.size(); }
  std::vector<std::uint64_t>& words() noexcept { return words_; }
  const std::vector<std::uint64_t>& words() const noexcept { return words_; }

  bool get(std::size_t i) const noexcept { return ((words_[i / 64] >> (i % 64)) & 1U) != 0; }
  void set(std::size_t i, bool v) noexcept {
    const std::uint64_t m = std::uint64_t{1} << (i % 64);
    words_[i / 64] = v ? (words_[i / 64] | m) : (words_[i / 64] & ~m);
  }

  BitVec& operator^=(const BitVec& o) noexcept {
    for (std::size_t w = 0; w < words_.size(); ++w) words_[w] ^= o.words_[w];
    return *this;
  }
  BitVec& operator&=(const BitVec& o) noexcept {
    for (std::size_t w = 0; w < words_.size(); ++w) words_[w] &= o.words_[w];
    return *this;
  }
  friend BitVec operator^(BitVec a, const BitVec& b) { return a ^= b; }
  friend BitVec operator&(BitVec a, const BitVec& b) { return a &= b; }
  BitVec operator~() const {
    BitVec out = *this;
    for (auto& w : out.words_) w = ~w;
    out.clear_tail();
    return out;
  }

  // Wire form: ceil(size/8) bytes, lane i at bit i%8 of byte i/8.
  Bytes to_bytes() const;
  static BitVec from_bytes(std::span<const std::uint8_t> bytes, std::size_t n);
  static std::size_t byte_size(std::size_t n) { return (n + 7) / 8; }

  friend bool operator==(const BitVec&, const BitVec&) = default;

 private:
  void clear_tail() noexcept {
    if (size_ % 64 != 0) words_.back() &= (std::uint64_t{1} << (size_ % 64)) - 1;
  }
  std::size_t size_ = 0;
  std::vector<std::uint64_t> words_;
};

inline Bytes BitVec::to_bytes() const {
  Bytes out(byte_size(size_), 0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(words_[i / 8] >> (8 * (i % 8)));
  }
  return out;
}

inline BitVec BitVec::from_bytes(std::span<const std::uint8_t> bytes, std::size_t n) {
  BitVec out(n);
  for (std::size_t i = 0; i < byte_size(n) && i < bytes.size(); ++i) {
    out.words_[i / 8] |= std::uint64_t{bytes[i]} << (8 * (i % 8));
  }
  out.clear_tail();
  return out;
}

}  // namespace sealedinfer
