#include "sealedinfer/paillier.hpp"

#include <array>

#include "sealedinfer/errors.hpp"

namespace sealedinfer {

namespace {

constexpr int kWindow = 8;
constexpr int kWindows = kShortExponentBits / kWindow;

Bytes export_be(const mpz_class& v, std::size_t width) {
  Bytes out(width, 0);
  std::size_t count = 0;
  const std::size_t need = (mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8;
  if (need > width) throw CryptoError("integer too wide for its field");
  mpz_export(out.data() + (width - need), &count, 1, 1, 1, 0, v.get_mpz_t());
  return out;
}

mpz_class import_be(std::span<const std::uint8_t> bytes) {
  mpz_class v;
  mpz_import(v.get_mpz_t(), bytes.size(), 1, 1, 1, 0, bytes.data());
  return v;
}

std::uint64_t fingerprint(const mpz_class& n) {
  const Bytes b = export_be(n, (mpz_sizeinbase(n.get_mpz_t(), 2) + 7) / 8);
  const std::string hex = sha256_hex(b);
  return std::stoull(hex.substr(0, 16), nullptr, 16);
}

mpz_class random_prime(int bits, Prg& prg) {
  mpz_class c = mpz_random_bits(bits, prg);
  mpz_setbit(c.get_mpz_t(), bits - 1);
  mpz_setbit(c.get_mpz_t(), bits - 2);
  mpz_class p;
  mpz_nextprime(p.get_mpz_t(), c.get_mpz_t());
  return p;
}

}  // namespace

mpz_class mpz_random_bits(int bits, Prg& prg) {
  Bytes buf(static_cast<std::size_t>((bits + 7) / 8));
  prg.fill(buf);
  if (bits % 8 != 0) buf[0] &= static_cast<std::uint8_t>((1U << (bits % 8)) - 1);
  return import_be(buf);
}

std::uint64_t mpz_low_u64(const mpz_class& v) {
  std::uint64_t out = 0;
  const std::size_t limbs = mpz_size(v.get_mpz_t());
  static_assert(sizeof(mp_limb_t) == 8);
  if (limbs > 0) out = mpz_getlimbn(v.get_mpz_t(), 0);
  return out;
}

mpz_class PaillierPublicKey::mpz_from_u64(std::uint64_t v) {
  mpz_class out;
  mpz_import(out.get_mpz_t(), 1, 1, sizeof(v), 0, 0, &v);
  return out;
}

// rows_[i][j - 1] = base^(j * 2^(8 i)) mod m
FixedBaseTable::FixedBaseTable(const mpz_class& base_in, const mpz_class& modulus) : modulus_(modulus) {
  rows_.resize(kWindows, std::vector<mpz_class>(255));
  mpz_class base = base_in % modulus_;
  for (auto& row : rows_) {
    row[0] = base;
    for (std::size_t j = 1; j < 255; ++j) {
      row[j] = row[j - 1] * base;
      mpz_mod(row[j].get_mpz_t(), row[j].get_mpz_t(), modulus_.get_mpz_t());
    }
    base = row[254] * base;
    mpz_mod(base.get_mpz_t(), base.get_mpz_t(), modulus_.get_mpz_t());
  }
}

mpz_class FixedBaseTable::pow(std::span<const std::uint8_t> alpha) const {
  mpz_class acc = 1;
  for (std::size_t i = 0; i < alpha.size() && i < rows_.size(); ++i) {
    if (alpha[i] == 0) continue;
    acc *= rows_[i][alpha[i] - 1U];
    mpz_mod(acc.get_mpz_t(), acc.get_mpz_t(), modulus_.get_mpz_t());
  }
  return acc;
}

PaillierPublicKey::PaillierPublicKey(mpz_class n, mpz_class h)
    : n_(std::move(n)), n2_(n_ * n_), h_(std::move(h)) {
  key_id_ = fingerprint(n_);
  ct_bytes_ = (mpz_sizeinbase(n2_.get_mpz_t(), 2) + 7) / 8;
  table_ = std::make_shared<FixedBaseTable>(h_, n2_);
}

int PaillierPublicKey::modulus_bits() const {
  return static_cast<int>(mpz_sizeinbase(n_.get_mpz_t(), 2));
}

mpz_class PaillierPublicKey::random_factor(Prg& prg) const {
  std::array<std::uint8_t, kShortExponentBits / 8> alpha{};
  prg.fill(alpha);
  return table_->pow(alpha);
}

Ciphertext PaillierPublicKey::encrypt(const mpz_class& m, Prg& prg) const {
  if (m < 0 || m >= n_) throw CryptoError("plaintext outside [0, n)");
  // (1 + n)^m = 1 + m n mod n^2
  mpz_class c = m * n_ + 1;
  c *= random_factor(prg);
  mpz_mod(c.get_mpz_t(), c.get_mpz_t(), n2_.get_mpz_t());
  return {std::move(c), key_id_};
}

Ciphertext PaillierPublicKey::add(const Ciphertext& a, const Ciphertext& b) const {
  if (a.key_id != key_id_ || b.key_id != key_id_) throw CryptoError("ciphertext under another key");
  mpz_class c = a.value * b.value;
  mpz_mod(c.get_mpz_t(), c.get_mpz_t(), n2_.get_mpz_t());
  return {std::move(c), key_id_};
}

Ciphertext PaillierPublicKey::add_plain(const Ciphertext& a, const mpz_class& m) const {
  if (a.key_id != key_id_) throw CryptoError("ciphertext under another key");
  mpz_class mm = m % n_;
  if (mm < 0) mm += n_;
  mpz_class c = mm * n_ + 1;
  c *= a.value;
  mpz_mod(c.get_mpz_t(), c.get_mpz_t(), n2_.get_mpz_t());
  return {std::move(c), key_id_};
}

Ciphertext PaillierPublicKey::scale(const Ciphertext& a, const mpz_class& s) const {
  if (a.key_id != key_id_) throw CryptoError("ciphertext under another key");
  if (s < 0) throw CryptoError("negative scalar");
  mpz_class c;
  mpz_powm(c.get_mpz_t(), a.value.get_mpz_t(), s.get_mpz_t(), n2_.get_mpz_t());
  return {std::move(c), key_id_};
}

Ciphertext PaillierPublicKey::scale_u64(const Ciphertext& a, std::uint64_t s) const {
  if (s == 0) return {mpz_class(1), key_id_};
  if (s == 1) return a;
  return scale(a, mpz_from_u64(s));
}

void PaillierPublicKey::validate(const Ciphertext& c) const {
  if (c.key_id != key_id_) throw CryptoError("ciphertext under another key");
  if (c.value <= 0 || c.value >= n2_) throw CryptoError("ciphertext out of range");
  mpz_class g;
  mpz_gcd(g.get_mpz_t(), c.value.get_mpz_t(), n_.get_mpz_t());
  if (g != 1) throw CryptoError("ciphertext is not a unit mod n^2");
}

Bytes PaillierPublicKey::serialize() const {
  const std::size_t w = (mpz_sizeinbase(n_.get_mpz_t(), 2) + 7) / 8;
  ByteWriter out;
  out.u32_be(static_cast<std::uint32_t>(w));
  out.raw(export_be(n_, w));
  out.raw(export_be(h_, ct_bytes_));
  return out.take();
}

PaillierPublicKey PaillierPublicKey::deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const std::size_t w = r.u32_be();
  if (w < 64 || w > 2048) throw ParseError("public key: implausible modulus size");
  mpz_class n = import_be(r.raw(w));
  const std::size_t ctw = (mpz_sizeinbase(mpz_class(n * n).get_mpz_t(), 2) + 7) / 8;
  mpz_class h = import_be(r.raw(ctw));
  if (!r.done()) throw ParseError("public key: trailing bytes");
  if (mpz_even_p(n.get_mpz_t()) || h <= 1 || h >= n * n) throw CryptoError("public key: malformed");
  return PaillierPublicKey(std::move(n), std::move(h));
}

Bytes PaillierPublicKey::serialize_ciphertexts(std::span<const Ciphertext> cts) const {
  ByteWriter out;
  out.reserve(cts.size() * ct_bytes_);
  for (const auto& c : cts) {
    if (c.key_id != key_id_) throw CryptoError("ciphertext under another key");
    out.raw(export_be(c.value, ct_bytes_));
  }
  return out.take();
}

std::vector<Ciphertext> PaillierPublicKey::parse_ciphertexts(std::span<const std::uint8_t> bytes,
                                                             std::size_t count) const {
  if (bytes.size() != count * ct_bytes_) throw CryptoError("ciphertext block has wrong length");
  std::vector<Ciphertext> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i].value = import_be(bytes.subspan(i * ct_bytes_, ct_bytes_));
    out[i].key_id = key_id_;
    validate(out[i]);
  }
  return out;
}

PaillierSecretKey::PaillierSecretKey(const mpz_class& p, const mpz_class& q, const mpz_class& h)
    : p_(p), q_(q), p2_(p * p), q2_(q * q), n_(p * q) {
  key_id_ = fingerprint(n_);
  table_p_ = std::make_shared<FixedBaseTable>(h, p2_);
  table_q_ = std::make_shared<FixedBaseTable>(h, q2_);
  if (mpz_invert(q2_inv_p2_.get_mpz_t(), q2_.get_mpz_t(), p2_.get_mpz_t()) == 0) {
    throw CryptoError("degenerate key");
  }
  const mpz_class g = n_ + 1;
  auto h_for = [&](const mpz_class& prime, const mpz_class& prime2) {
    mpz_class e = prime - 1, t;
    mpz_powm(t.get_mpz_t(), g.get_mpz_t(), e.get_mpz_t(), prime2.get_mpz_t());
    mpz_class l = (t - 1) / prime;
    mpz_class inv;
    if (mpz_invert(inv.get_mpz_t(), l.get_mpz_t(), prime.get_mpz_t()) == 0) {
      throw CryptoError("degenerate key");
    }
    return inv;
  };
  hp_ = h_for(p_, p2_);
  hq_ = h_for(q_, q2_);
  if (mpz_invert(q_inv_p_.get_mpz_t(), q_.get_mpz_t(), p_.get_mpz_t()) == 0) {
    throw CryptoError("degenerate key");
  }
}

Ciphertext PaillierSecretKey::encrypt(const mpz_class& m, Prg& prg) const {
  if (m < 0 || m >= n_) throw CryptoError("plaintext outside [0, n)");
  std::array<std::uint8_t, kShortExponentBits / 8> alpha{};
  prg.fill(alpha);
  const mpz_class mn = m * n_ + 1;
  mpz_class cp = (mn % p2_) * table_p_->pow(alpha);
  mpz_mod(cp.get_mpz_t(), cp.get_mpz_t(), p2_.get_mpz_t());
  mpz_class cq = (mn % q2_) * table_q_->pow(alpha);
  mpz_mod(cq.get_mpz_t(), cq.get_mpz_t(), q2_.get_mpz_t());
  mpz_class d = (cp - cq) * q2_inv_p2_;
  mpz_mod(d.get_mpz_t(), d.get_mpz_t(), p2_.get_mpz_t());
  return {cq + q2_ * d, key_id_};
}

mpz_class PaillierSecretKey::decrypt(const Ciphertext& c) const {
  if (c.key_id != key_id_) throw CryptoError("ciphertext under another key");
  auto half = [&](const mpz_class& prime, const mpz_class& prime2, const mpz_class& h) {
    mpz_class cr = c.value % prime2;
    mpz_class e = prime - 1, t;
    mpz_powm(t.get_mpz_t(), cr.get_mpz_t(), e.get_mpz_t(), prime2.get_mpz_t());
    mpz_class m = ((t - 1) / prime) * h;
    mpz_mod(m.get_mpz_t(), m.get_mpz_t(), prime.get_mpz_t());
    return m;
  };
  const mpz_class mp = half(p_, p2_, hp_);
  const mpz_class mq = half(q_, q2_, hq_);
  mpz_class d = (mp - mq) * q_inv_p_;
  mpz_mod(d.get_mpz_t(), d.get_mpz_t(), p_.get_mpz_t());
  return mq + q_ * d;
}

AheKeypair ahe_keygen(int modulus_bits, Prg& prg) {
  if (modulus_bits < 512 || modulus_bits % 2 != 0) {
    throw ConfigError("modulus size must be an even number of bits >= 512");
  }
  mpz_class p, q, n;
  do {
    p = random_prime(modulus_bits / 2, prg);
    q = random_prime(modulus_bits / 2, prg);
    n = p * q;
  } while (p == q || static_cast<int>(mpz_sizeinbase(n.get_mpz_t(), 2)) != modulus_bits);
  mpz_class y;
  do {
    y = mpz_random_bits(modulus_bits, prg) % n;
  } while (y < 2 || mpz_class(gcd(y, n)) != 1);
  mpz_class h;
  const mpz_class n2 = n * n;
  mpz_powm(h.get_mpz_t(), y.get_mpz_t(), n.get_mpz_t(), n2.get_mpz_t());
  return {PaillierPublicKey(n, h), PaillierSecretKey(p, q, h)};
}

}  // namespace sealedinfer
