#include "sealedinfer/he_preproc.hpp"

#include <algorithm>

#include "sealedinfer/errors.hpp"

namespace sealedinfer {

namespace {

// One oblivious-linear-evaluation family. The encryptor holds x, the
// evaluator holds y; afterwards the two output shares combine to x * y.
class Ole {
 public:
  virtual ~Ole() = default;
  virtual Bytes encrypt(HeContext& ctx, std::span<const std::uint64_t> x) = 0;
  virtual std::size_t request_bytes(const PaillierPublicKey& key) const = 0;
  virtual Bytes respond(HeContext& ctx, std::span<const std::uint8_t> request,
                        std::span<const std::uint64_t> y, std::vector<std::uint64_t>& share) = 0;
  virtual std::size_t response_bytes(const PaillierPublicKey& key) const = 0;
  virtual std::vector<std::uint64_t> decrypt(HeContext& ctx, std::span<const std::uint8_t> response) = 0;
  virtual std::uint64_t combine(std::uint64_t a, std::uint64_t b) const = 0;
};

// Elementwise products packed several per plaintext.
class PackedOle final : public Ole {
 public:
  PackedOle(bool bits, std::size_t n, const FixedPointConfig& cfg, int modulus_bits)
      : bits_(bits), n_(n), cfg_(cfg) {
    const int k = cfg.bitwidth_k;
    mask_bits_ = bits ? kStatSecurityBits + 1 : 2 * k + kStatSecurityBits;
    slot_bits_ = mask_bits_ + 1;
    slots_ = static_cast<std::size_t>((modulus_bits - 1) / slot_bits_);
    if (slots_ == 0) throw ConfigError("encryption modulus too small for the ring");
  }

  std::size_t groups() const { return (n_ + slots_ - 1) / slots_; }

  Bytes encrypt(HeContext& ctx, std::span<const std::uint64_t> x) override {
    std::vector<Ciphertext> cts(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      mpz_class v = PaillierPublicKey::mpz_from_u64(x[i]);
      v <<= static_cast<mp_bitcnt_t>(slot_bits_ * (i % slots_));
      cts[i] = ctx.own.sec.encrypt(v, *ctx.prg);
    }
    return ctx.own.pub.serialize_ciphertexts(cts);
  }
  std::size_t request_bytes(const PaillierPublicKey& key) const override {
    return n_ * key.ciphertext_bytes();
  }

  Bytes respond(HeContext& ctx, std::span<const std::uint8_t> request, std::span<const std::uint64_t> y,
                std::vector<std::uint64_t>& share) override {
    const auto& key = ctx.peer;
    auto cts = key.parse_ciphertexts(request, n_);
    share.assign(n_, 0);
    std::vector<Ciphertext> out(groups());
    for (std::size_t g = 0; g < groups(); ++g) {
      const std::size_t lo = g * slots_, hi = std::min(n_, lo + slots_);
      mpz_class packed = 0;
      for (std::size_t i = hi; i-- > lo;) {
        mpz_class rho = mpz_random_bits(mask_bits_, *ctx.prg);
        const std::uint64_t low = mpz_low_u64(rho);
        share[i] = bits_ ? (low & 1U) : ring_neg(ring_reduce(low, cfg_), cfg_);
        packed <<= static_cast<mp_bitcnt_t>(slot_bits_);
        packed += rho;
      }
      Ciphertext acc = key.encrypt(packed, *ctx.prg);
      for (std::size_t i = lo; i < hi; ++i) {
        const std::uint64_t e = bits_ ? (y[i] & 1U) : y[i];
        if (e != 0) acc = key.add(acc, key.scale_u64(cts[i], e));
      }
      out[g] = std::move(acc);
    }
    return key.serialize_ciphertexts(out);
  }
  std::size_t response_bytes(const PaillierPublicKey& key) const override {
    return groups() * key.ciphertext_bytes();
  }

  std::vector<std::uint64_t> decrypt(HeContext& ctx, std::span<const std::uint8_t> response) override {
    auto cts = ctx.own.pub.parse_ciphertexts(response, groups());
    std::vector<std::uint64_t> share(n_);
    for (std::size_t g = 0; g < groups(); ++g) {
      mpz_class m = ctx.own.sec.decrypt(cts[g]);
      const std::size_t lo = g * slots_, hi = std::min(n_, lo + slots_);
      for (std::size_t i = lo; i < hi; ++i) {
        const std::uint64_t low = mpz_low_u64(m);
        share[i] = bits_ ? (low & 1U) : ring_reduce(low, cfg_);
        m >>= static_cast<mp_bitcnt_t>(slot_bits_);
      }
    }
    return share;
  }

  std::uint64_t combine(std::uint64_t a, std::uint64_t b) const override {
    return bits_ ? (a ^ b) : ring_add(a, b, cfg_);
  }

 private:
  bool bits_;
  std::size_t n_;
  FixedPointConfig cfg_;
  int mask_bits_ = 0;
  int slot_bits_ = 0;
  std::size_t slots_ = 0;
};

// Matrix products X[m x n] * Y[n x p], one ciphertext per output entry.
class MatmulOle final : public Ole {
 public:
  MatmulOle(std::vector<MatmulDims> dims, const FixedPointConfig& cfg, int modulus_bits)
      : dims_(std::move(dims)), cfg_(cfg) {
    std::size_t widest = 1;
    for (const auto& d : dims_) {
      x_len_ += d.m * d.n;
      out_len_ += d.m * d.p;
      widest = std::max(widest, d.n);
    }
    int log_n = 0;
    while ((std::size_t{1} << log_n) < widest) ++log_n;
    mask_bits_ = 2 * cfg.bitwidth_k + kStatSecurityBits + log_n;
    if (mask_bits_ + 2 > modulus_bits) throw ConfigError("encryption modulus too small for the matmul");
  }

  std::size_t y_len() const {
    std::size_t n = 0;
    for (const auto& d : dims_) n += d.n * d.p;
    return n;
  }

  Bytes encrypt(HeContext& ctx, std::span<const std::uint64_t> x) override {
    std::vector<Ciphertext> cts(x_len_);
    for (std::size_t i = 0; i < x_len_; ++i) cts[i] = ctx.own.sec.encrypt(PaillierPublicKey::mpz_from_u64(x[i]), *ctx.prg);
    return ctx.own.pub.serialize_ciphertexts(cts);
  }
  std::size_t request_bytes(const PaillierPublicKey& key) const override {
    return x_len_ * key.ciphertext_bytes();
  }

  Bytes respond(HeContext& ctx, std::span<const std::uint8_t> request, std::span<const std::uint64_t> y,
                std::vector<std::uint64_t>& share) override {
    const auto& key = ctx.peer;
    auto cts = key.parse_ciphertexts(request, x_len_);
    share.assign(out_len_, 0);
    std::vector<Ciphertext> out(out_len_);
    std::size_t xo = 0, yo = 0, oo = 0;
    for (const auto& d : dims_) {
      for (std::size_t i = 0; i < d.m; ++i) {
        for (std::size_t j = 0; j < d.p; ++j) {
          mpz_class rho = mpz_random_bits(mask_bits_, *ctx.prg);
          share[oo] = ring_neg(ring_reduce(mpz_low_u64(rho), cfg_), cfg_);
          Ciphertext acc = key.encrypt(rho, *ctx.prg);
          for (std::size_t l = 0; l < d.n; ++l) {
            const std::uint64_t e = y[yo + l * d.p + j];
            if (e != 0) acc = key.add(acc, key.scale_u64(cts[xo + i * d.n + l], e));
          }
          out[oo++] = std::move(acc);
        }
      }
      xo += d.m * d.n;
      yo += d.n * d.p;
    }
    return key.serialize_ciphertexts(out);
  }
  std::size_t response_bytes(const PaillierPublicKey& key) const override {
    return out_len_ * key.ciphertext_bytes();
  }

  std::vector<std::uint64_t> decrypt(HeContext& ctx, std::span<const std::uint8_t> response) override {
    auto cts = ctx.own.pub.parse_ciphertexts(response, out_len_);
    std::vector<std::uint64_t> share(out_len_);
    for (std::size_t i = 0; i < out_len_; ++i) {
      share[i] = ring_reduce(mpz_low_u64(ctx.own.sec.decrypt(cts[i])), cfg_);
    }
    return share;
  }

  std::uint64_t combine(std::uint64_t a, std::uint64_t b) const override { return ring_add(a, b, cfg_); }

 private:
  std::vector<MatmulDims> dims_;
  FixedPointConfig cfg_;
  std::size_t x_len_ = 0, out_len_ = 0;
  int mask_bits_ = 0;
};

// Shares of x0*y1 + x1*y0 where party p holds (x_p, y_p). Three flights:
// P0 -> Enc(x0); P1 -> answer, Enc(x1); P0 -> answer.
std::vector<std::uint64_t> cross_terms(HeContext& ctx, Ole& ole, std::span<const std::uint64_t> x,
                                       std::span<const std::uint64_t> y) {
  Channel& ch = *ctx.channel;
  std::vector<std::uint64_t> as_evaluator, as_encryptor;
  if (ctx.party() == 0) {
    ch.send(MsgType::Ciphertext, ole.encrypt(ctx, x));
    as_encryptor = ole.decrypt(ctx, ch.recv(MsgType::Ciphertext, ole.response_bytes(ctx.own.pub)));
    Bytes req = ch.recv(MsgType::Ciphertext, ole.request_bytes(ctx.peer));
    ch.send(MsgType::Ciphertext, ole.respond(ctx, req, y, as_evaluator));
  } else {
    Bytes req = ch.recv(MsgType::Ciphertext, ole.request_bytes(ctx.peer));
    ch.send(MsgType::Ciphertext, ole.respond(ctx, req, y, as_evaluator));
    ch.send(MsgType::Ciphertext, ole.encrypt(ctx, x));
    as_encryptor = ole.decrypt(ctx, ch.recv(MsgType::Ciphertext, ole.response_bytes(ctx.own.pub)));
  }
  for (std::size_t i = 0; i < as_encryptor.size(); ++i) {
    as_encryptor[i] = ole.combine(as_encryptor[i], as_evaluator[i]);
  }
  return as_encryptor;
}

std::vector<RingElement> random_vec(std::size_t n, HeContext& ctx) {
  std::vector<RingElement> v(n);
  for (auto& e : v) e = ring_reduce(ctx.prg->next_u64(), ctx.cfg);
  return v;
}

std::vector<std::uint64_t> unpack_bits(const std::vector<std::uint64_t>& words) {
  std::vector<std::uint64_t> bits(words.size() * 64);
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = (words[i / 64] >> (i % 64)) & 1U;
  return bits;
}

}  // namespace

HeContext he_setup(Channel& channel, const FixedPointConfig& cfg, AheKeypair own, Prg& prg) {
  HeContext ctx;
  ctx.channel = &channel;
  ctx.cfg = cfg;
  ctx.own = std::move(own);
  ctx.prg = &prg;
  const Bytes mine = ctx.own.pub.serialize();
  const Bytes theirs = channel.exchange(MsgType::Config, mine);
  ctx.peer = PaillierPublicKey::deserialize(theirs);
  if (ctx.peer.key_id() == ctx.own.pub.key_id()) throw CryptoError("peer reused our public key");
  return ctx;
}

RingElement he_dot_product(HeContext& ctx, std::span<const RingElement> mine) {
  Channel& ch = *ctx.channel;
  const int k = ctx.cfg.bitwidth_k;
  int log_len = 0;
  while ((std::size_t{1} << log_len) < std::max<std::size_t>(mine.size(), 1)) ++log_len;
  const int mask_bits = k + kStatSecurityBits + log_len + 1;
  if (k + mask_bits + 1 >= ctx.own.pub.modulus_bits()) {
    throw ConfigError("encryption modulus too small for this dot product");
  }
  if (ctx.party() == 1) {
    std::vector<Ciphertext> cts(mine.size());
    for (std::size_t i = 0; i < mine.size(); ++i) cts[i] = ctx.own.sec.encrypt(PaillierPublicKey::mpz_from_u64(mine[i]), *ctx.prg);
    ch.send(MsgType::Ciphertext, ctx.own.pub.serialize_ciphertexts(cts));
    auto reply = ctx.own.pub.parse_ciphertexts(
        ch.recv(MsgType::Ciphertext, ctx.own.pub.ciphertext_bytes()), 1);
    return ring_reduce(mpz_low_u64(ctx.own.sec.decrypt(reply[0])), ctx.cfg);
  }
  const auto& key = ctx.peer;
  auto cts = key.parse_ciphertexts(ch.recv(MsgType::Ciphertext, mine.size() * key.ciphertext_bytes()),
                                   mine.size());
  mpz_class mask = mpz_random_bits(mask_bits, *ctx.prg);
  mask <<= static_cast<mp_bitcnt_t>(k);
  Ciphertext acc = key.encrypt(mask, *ctx.prg);
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i] != 0) acc = key.add(acc, key.scale_u64(cts[i], mine[i]));
  }
  const Ciphertext out[1] = {acc};
  ch.send(MsgType::Ciphertext, key.serialize_ciphertexts(out));
  return 0;
}

ElementwiseTriples he_triple_gen(HeContext& ctx, std::size_t count) {
  ElementwiseTriples t;
  t.a = random_vec(count, ctx);
  t.b = random_vec(count, ctx);
  t.c.resize(count);
  if (count == 0) return t;
  PackedOle ole(false, count, ctx.cfg, ctx.own.pub.modulus_bits());
  auto cross = cross_terms(ctx, ole, t.a, t.b);
  for (std::size_t i = 0; i < count; ++i) {
    t.c[i] = ring_add(ring_mul(t.a[i], t.b[i], ctx.cfg), cross[i], ctx.cfg);
  }
  return t;
}

std::vector<MatmulTriple> he_matmul_triple_gen(HeContext& ctx, std::span<const MatmulDims> dims) {
  std::vector<MatmulTriple> out;
  if (dims.empty()) return out;
  std::vector<std::uint64_t> xa, yb;
  for (const auto& d : dims) {
    MatmulTriple t;
    t.dims = d;
    t.a = random_vec(d.m * d.n, ctx);
    t.b = random_vec(d.n * d.p, ctx);
    xa.insert(xa.end(), t.a.begin(), t.a.end());
    yb.insert(yb.end(), t.b.begin(), t.b.end());
    out.push_back(std::move(t));
  }
  MatmulOle ole(std::vector<MatmulDims>(dims.begin(), dims.end()), ctx.cfg, ctx.own.pub.modulus_bits());
  auto cross = cross_terms(ctx, ole, xa, yb);
  std::size_t off = 0;
  for (auto& t : out) {
    t.c = ring_matmul(t.a, t.b, t.dims.m, t.dims.n, t.dims.p, ctx.cfg);
    for (auto& c : t.c) c = ring_add(c, cross[off++], ctx.cfg);
  }
  return out;
}

AndTriples he_and_triple_gen(HeContext& ctx, std::size_t words) {
  AndTriples t;
  t.a.resize(words);
  t.b.resize(words);
  t.c.resize(words);
  if (words == 0) return t;
  for (std::size_t i = 0; i < words; ++i) {
    t.a[i] = ctx.prg->next_u64();
    t.b[i] = ctx.prg->next_u64();
  }
  PackedOle ole(true, words * 64, ctx.cfg, ctx.own.pub.modulus_bits());
  auto cross = cross_terms(ctx, ole, unpack_bits(t.a), unpack_bits(t.b));
  for (std::size_t i = 0; i < words; ++i) {
    std::uint64_t w = 0;
    for (std::size_t j = 0; j < 64; ++j) w |= (cross[i * 64 + j] & 1U) << j;
    t.c[i] = (t.a[i] & t.b[i]) ^ w;
  }
  return t;
}

DaBits he_dabit_gen(HeContext& ctx, std::size_t count, CorrelatedStore& triples) {
  const auto& cfg = ctx.cfg;
  DaBits d;
  d.boolean = BitVec(count);
  if (count == 0) return d;
  ElementwiseTriples t = triples.take_triples(count);
  const int p = ctx.party();
  // x = b0 shared as (b0, 0), y = b1 shared as (0, b1).
  std::vector<RingElement> mine(count), xs(count), ys(count);
  for (std::size_t i = 0; i < count; ++i) {
    const bool bit = ctx.prg->bit();
    d.boolean.set(i, bit);
    mine[i] = bit ? 1 : 0;
    xs[i] = p == 0 ? mine[i] : 0;
    ys[i] = p == 1 ? mine[i] : 0;
  }
  // Open d = x - a and e = y - b in one exchange.
  ByteWriter w;
  const std::size_t eb = cfg.element_bytes();
  for (std::size_t i = 0; i < count; ++i) w.uint_le(ring_sub(xs[i], t.a[i], cfg), eb);
  for (std::size_t i = 0; i < count; ++i) w.uint_le(ring_sub(ys[i], t.b[i], cfg), eb);
  const Bytes sent = w.take();
  const Bytes got = ctx.channel->exchange(MsgType::Open, sent);
  ByteReader rs(sent), rg(got);
  std::vector<RingElement> dd(count), ee(count);
  for (std::size_t i = 0; i < count; ++i) dd[i] = ring_add(rs.uint_le(eb), rg.uint_le(eb), cfg);
  for (std::size_t i = 0; i < count; ++i) ee[i] = ring_add(rs.uint_le(eb), rg.uint_le(eb), cfg);
  d.arith.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    RingElement z = ring_add(t.c[i], ring_add(ring_mul(dd[i], t.b[i], cfg), ring_mul(ee[i], t.a[i], cfg), cfg), cfg);
    if (p == 0) z = ring_add(z, ring_mul(dd[i], ee[i], cfg), cfg);
    // b0 xor b1 = b0 + b1 - 2 b0 b1
    d.arith[i] = ring_sub(mine[i], ring_add(z, z, cfg), cfg);
  }
  return d;
}

CorrelatedStore he_generate(HeContext& ctx, const Requirements& req) {
  if (!req.truncpairs.empty()) throw ConfigError("2pc-he preprocessing does not produce truncation pairs");
  CorrelatedStore store(ctx.party(), ctx.cfg);
  CorrelatedStore scratch(ctx.party(), ctx.cfg);
  ElementwiseTriples all = he_triple_gen(ctx, req.elementwise_triples + req.dabits);
  ElementwiseTriples online, for_dabits;
  auto cut = [](const std::vector<RingElement>& v, std::size_t lo, std::size_t hi) {
    return std::vector<RingElement>(v.begin() + static_cast<std::ptrdiff_t>(lo),
                                    v.begin() + static_cast<std::ptrdiff_t>(hi));
  };
  const std::size_t n = req.elementwise_triples, total = all.size();
  store.add(ElementwiseTriples{cut(all.a, 0, n), cut(all.b, 0, n), cut(all.c, 0, n)});
  scratch.add(ElementwiseTriples{cut(all.a, n, total), cut(all.b, n, total), cut(all.c, n, total)});
  for (auto& t : he_matmul_triple_gen(ctx, req.matmul_triples)) store.add(std::move(t));
  store.add(he_and_triple_gen(ctx, req.and_words));
  store.add(he_dabit_gen(ctx, req.dabits, scratch));
  return store;
}

}  // namespace sealedinfer
