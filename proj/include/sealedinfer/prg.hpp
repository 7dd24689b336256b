#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>

namespace sealedinfer {

// AES-128-CTR keystream generator. Seeded construction is reproducible;
// from_entropy() draws the key from the OS.
class Prg {
 public:
  using Key = std::array<std::uint8_t, 16>;

  explicit Prg(std::uint64_t seed, std::uint64_t stream = 0);
  explicit Prg(const Key& key);
  static Prg from_entropy();

  Prg(Prg&&) noexcept;
  Prg& operator=(Prg&&) noexcept;
  Prg(const Prg&) = delete;
  Prg& operator=(const Prg&) = delete;
  ~Prg();

  void fill(std::span<std::uint8_t> out);
  std::uint64_t next_u64();
  // Uniform in [0, bound), rejection sampled. bound must be non-zero.
  std::uint64_t uniform(std::uint64_t bound);
  // Uniform in [0, 1) with 53 random bits.
  double uniform_real();
  double normal();
  bool bit() { return (next_u64() & 1U) != 0; }

  // Independent child stream, deterministic in (this key, index).
  Prg derive(std::uint64_t index) const;

 private:
  void refill();

  struct Cipher;
  std::unique_ptr<Cipher> cipher_;
  Key key_{};
  std::array<std::uint8_t, 4096> buffer_{};
  std::size_t pos_ = 4096;
};

}  // namespace sealedinfer
