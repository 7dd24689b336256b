#include "sealedinfer/prg.hpp"

#include <openssl/evp.h>
#include <openssl/rand.h>
#include <openssl/sha.h>

#include <cmath>
#include <cstring>

#include "sealedinfer/errors.hpp"

namespace sealedinfer {

struct Prg::Cipher {
  EVP_CIPHER_CTX* ctx = nullptr;
  ~Cipher() { EVP_CIPHER_CTX_free(ctx); }
};

namespace {

Prg::Key key_from_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint8_t material[24] = {'s', 'i', 'p', 'r', 'g', 0, 0, 1};
  std::memcpy(material + 8, &seed, 8);
  std::memcpy(material + 16, &stream, 8);
  std::uint8_t digest[SHA256_DIGEST_LENGTH];
  SHA256(material, sizeof(material), digest);
  Prg::Key key{};
  std::memcpy(key.data(), digest, key.size());
  return key;
}

}  // namespace

Prg::Prg(std::uint64_t seed, std::uint64_t stream)
    : Prg(key_from_seed(seed, stream)) {}

Prg::Prg(const Key& key) : cipher_(std::make_unique<Cipher>()), key_(key) {
  cipher_->ctx = EVP_CIPHER_CTX_new();
  const std::uint8_t iv[16] = {};
  if (cipher_->ctx == nullptr ||
      EVP_EncryptInit_ex(cipher_->ctx, EVP_aes_128_ctr(), nullptr, key_.data(),
                         iv) != 1) {
    throw CryptoError("AES-CTR initialisation failed");
  }
}

Prg Prg::from_entropy() {
  Key key{};
  if (RAND_bytes(key.data(), static_cast<int>(key.size())) != 1) {
    throw CryptoError("OS entropy source unavailable");
  }
  return Prg(key);
}

Prg::Prg(Prg&&) noexcept = default;
Prg& Prg::operator=(Prg&&) noexcept = default;
Prg::~Prg() = default;

void Prg::refill() {
  static const std::array<std::uint8_t, 4096> zeros{};
  int written = 0;
  if (EVP_EncryptUpdate(cipher_->ctx, buffer_.data(), &written, zeros.data(),
                        static_cast<int>(zeros.size())) != 1 ||
      written != static_cast<int>(buffer_.size())) {
    throw CryptoError("AES-CTR keystream failure");
  }
  pos_ = 0;
}

void Prg::fill(std::span<std::uint8_t> out) {
  std::size_t done = 0;
  while (done < out.size()) {
    if (pos_ == buffer_.size()) refill();
    const std::size_t n = std::min(out.size() - done, buffer_.size() - pos_);
    std::memcpy(out.data() + done, buffer_.data() + pos_, n);
    pos_ += n;
    done += n;
  }
}

std::uint64_t Prg::next_u64() {
  if (buffer_.size() - pos_ < 8) refill();
  std::uint64_t v;
  std::memcpy(&v, buffer_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

std::uint64_t Prg::uniform(std::uint64_t bound) {
  if (bound == 0) throw ConfigError("Prg::uniform with zero bound");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  for (;;) {
    const std::uint64_t v = next_u64();
    if (v < limit) return v % bound;
  }
}

double Prg::uniform_real() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Prg::normal() {
  // Box-Muller; the second variate is discarded.
  double u1 = uniform_real();
  while (u1 <= 0.0) u1 = uniform_real();
  const double u2 = uniform_real();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Prg Prg::derive(std::uint64_t index) const {
  std::uint8_t material[24];
  std::memcpy(material, key_.data(), 16);
  std::memcpy(material + 16, &index, 8);
  std::uint8_t digest[SHA256_DIGEST_LENGTH];
  SHA256(material, sizeof(material), digest);
  Key key{};
  std::memcpy(key.data(), digest, key.size());
  return Prg(key);
}

}  // namespace sealedinfer
