#pragma once

// Additively homomorphic encryption (Paillier with g = n + 1). Encryption
// randomness is h^alpha for a fixed public h = y^n mod n^2 and a short random
// exponent alpha, evaluated with a precomputed fixed-base table.

#include <gmpxx.h>

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "sealedinfer/bytes.hpp"
#include "sealedinfer/prg.hpp"

namespace sealedinfer {

inline constexpr int kDefaultModulusBits = 2048;
inline constexpr int kShortExponentBits = 256;

// h^alpha mod m for a short alpha via a windowed comb table.
class FixedBaseTable {
 public:
  FixedBaseTable(const mpz_class& base, const mpz_class& modulus);
  mpz_class pow(std::span<const std::uint8_t> alpha) const;

 private:
  mpz_class modulus_;
  std::vector<std::vector<mpz_class>> rows_;
};

struct Ciphertext {
  mpz_class value;
  std::uint64_t key_id = 0;
};

class PaillierPublicKey {
 public:
  PaillierPublicKey() = default;
  PaillierPublicKey(mpz_class n, mpz_class h);

  const mpz_class& n() const noexcept { return n_; }
  const mpz_class& n_squared() const noexcept { return n2_; }
  std::uint64_t key_id() const noexcept { return key_id_; }
  int modulus_bits() const;
  // Fixed serialized width of one ciphertext.
  std::size_t ciphertext_bytes() const noexcept { return ct_bytes_; }

  // m must lie in [0, n).
  Ciphertext encrypt(const mpz_class& m, Prg& prg) const;
  Ciphertext encrypt_u64(std::uint64_t m, Prg& prg) const { return encrypt(mpz_from_u64(m), prg); }
  // Fresh encryption of zero, used to rerandomize.
  mpz_class random_factor(Prg& prg) const;

  Ciphertext add(const Ciphertext& a, const Ciphertext& b) const;
  Ciphertext add_plain(const Ciphertext& a, const mpz_class& m) const;
  // s >= 0.
  Ciphertext scale(const Ciphertext& a, const mpz_class& s) const;
  Ciphertext scale_u64(const Ciphertext& a, std::uint64_t s) const;

  // Throws CryptoError if the value is not a unit below n^2.
  void validate(const Ciphertext& c) const;

  Bytes serialize() const;
  static PaillierPublicKey deserialize(std::span<const std::uint8_t> bytes);

  Bytes serialize_ciphertexts(std::span<const Ciphertext> cts) const;
  std::vector<Ciphertext> parse_ciphertexts(std::span<const std::uint8_t> bytes, std::size_t count) const;

  static mpz_class mpz_from_u64(std::uint64_t v);

 private:
  mpz_class n_, n2_, h_;
  std::uint64_t key_id_ = 0;
  std::size_t ct_bytes_ = 0;
  std::shared_ptr<const FixedBaseTable> table_;
};

class PaillierSecretKey {
 public:
  PaillierSecretKey() = default;
  PaillierSecretKey(const mpz_class& p, const mpz_class& q, const mpz_class& h);

  std::uint64_t key_id() const noexcept { return key_id_; }
  // Same distribution as PaillierPublicKey::encrypt, computed mod p^2 and
  // q^2 separately.
  Ciphertext encrypt(const mpz_class& m, Prg& prg) const;
  // Throws CryptoError for a ciphertext under another key.
  mpz_class decrypt(const Ciphertext& c) const;

 private:
  mpz_class p_, q_, p2_, q2_, hp_, hq_, q_inv_p_, n_, q2_inv_p2_;
  std::uint64_t key_id_ = 0;
  std::shared_ptr<const FixedBaseTable> table_p_, table_q_;
};

struct AheKeypair {
  PaillierPublicKey pub;
  PaillierSecretKey sec;
};

AheKeypair ahe_keygen(int modulus_bits, Prg& prg);

std::uint64_t mpz_low_u64(const mpz_class& v);
mpz_class mpz_random_bits(int bits, Prg& prg);

}  // namespace sealedinfer
