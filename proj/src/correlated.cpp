#include "sealedinfer/correlated.hpp"

#include <algorithm>
#include <sstream>
#include <tuple>

#include "sealedinfer/errors.hpp"

namespace sealedinfer {

namespace {

enum class CrndKind : std::uint8_t { Elementwise = 1, Matmul = 2, And = 3, DaBit = 4, TruncPair = 5 };

constexpr std::size_t kHeaderBytes = 40;

struct SectionHeader {
  CrndKind kind{};
  int shift = 0;
  std::uint64_t count = 0;
  MatmulDims dims;
};

void write_header(ByteWriter& w, const CorrelatedStore& s, const SectionHeader& h) {
  w.raw(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>("CRND"), 4));
  w.u16_le(kCrndVersion);
  w.u8(static_cast<std::uint8_t>(s.config().bitwidth_k));
  w.u8(static_cast<std::uint8_t>(s.config().frac_bits_f));
  w.u8(static_cast<std::uint8_t>(h.kind));
  w.u8(static_cast<std::uint8_t>(h.shift));
  w.u8(static_cast<std::uint8_t>(s.party()));
  w.u8(0);
  w.u64_le(h.count);
  w.u32_le(static_cast<std::uint32_t>(h.dims.m));
  w.u32_le(static_cast<std::uint32_t>(h.dims.n));
  w.u32_le(static_cast<std::uint32_t>(h.dims.p));
  w.u64_le(s.batch_id());
}

void put_all(ByteWriter& w, const std::vector<RingElement>& v) {
  for (auto x : v) w.u64_le(x);
}

std::vector<RingElement> get_n(ByteReader& r, std::size_t n, const FixedPointConfig* cfg) {
  if (r.remaining() / 8 < n) throw ParseError("crnd: truncated record block");
  std::vector<RingElement> out(n);
  for (auto& x : out) {
    x = r.u64_le();
    if (cfg && ring_reduce(x, *cfg) != x) throw ParseError("crnd: ring element out of range");
  }
  return out;
}

}  // namespace

std::string to_string(const MatmulDims& d) {
  return std::to_string(d.m) + "x" + std::to_string(d.n) + "x" + std::to_string(d.p);
}

void Requirements::add_truncpairs(int shift, std::size_t count) {
  if (count == 0) return;
  if (!truncpairs.empty() && truncpairs.back().first == shift) {
    truncpairs.back().second += count;
  } else {
    truncpairs.emplace_back(shift, count);
  }
}

std::size_t Requirements::truncpair_count() const {
  std::size_t n = 0;
  for (const auto& [s, c] : truncpairs) n += c;
  return n;
}

Requirements& Requirements::operator+=(const Requirements& o) {
  elementwise_triples += o.elementwise_triples;
  matmul_triples.insert(matmul_triples.end(), o.matmul_triples.begin(), o.matmul_triples.end());
  and_words += o.and_words;
  dabits += o.dabits;
  for (const auto& [s, c] : o.truncpairs) add_truncpairs(s, c);
  return *this;
}

// ---- store -------------------------------------------------------------

void CorrelatedStore::add(ElementwiseTriples t) {
  triples_.a.insert(triples_.a.end(), t.a.begin(), t.a.end());
  triples_.b.insert(triples_.b.end(), t.b.begin(), t.b.end());
  triples_.c.insert(triples_.c.end(), t.c.begin(), t.c.end());
}

void CorrelatedStore::add(MatmulTriple t) { matmuls_.push_back(std::move(t)); }

void CorrelatedStore::add(AndTriples t) {
  ands_.a.insert(ands_.a.end(), t.a.begin(), t.a.end());
  ands_.b.insert(ands_.b.end(), t.b.begin(), t.b.end());
  ands_.c.insert(ands_.c.end(), t.c.begin(), t.c.end());
}

void CorrelatedStore::add(DaBits d) {
  const std::size_t old = dabits_.size();
  BitVec merged(old + d.size());
  for (std::size_t i = 0; i < old; ++i) merged.set(i, dabits_.boolean.get(i));
  for (std::size_t i = 0; i < d.size(); ++i) merged.set(old + i, d.boolean.get(i));
  dabits_.arith.insert(dabits_.arith.end(), d.arith.begin(), d.arith.end());
  dabits_.boolean = std::move(merged);
}

void CorrelatedStore::add(TruncPairs t) {
  if (t.size() == 0) return;
  if (!truncs_.empty() && truncs_.back().shift == t.shift) {
    auto& b = truncs_.back();
    b.r.insert(b.r.end(), t.r.begin(), t.r.end());
    b.r_hi.insert(b.r_hi.end(), t.r_hi.begin(), t.r_hi.end());
    b.r_msb.insert(b.r_msb.end(), t.r_msb.begin(), t.r_msb.end());
    b.r_low_bits.insert(b.r_low_bits.end(), t.r_low_bits.begin(), t.r_low_bits.end());
  } else {
    truncs_.push_back(std::move(t));
  }
}

ElementwiseTriples CorrelatedStore::take_triples(std::size_t count) {
  if (triples_.size() - triple_cursor_ < count) {
    throw ExhaustedError("elementwise triples exhausted: need " + std::to_string(count) + ", have " +
                         std::to_string(triples_.size() - triple_cursor_));
  }
  ElementwiseTriples out;
  auto slice = [&](const std::vector<RingElement>& v) {
    return std::vector<RingElement>(v.begin() + triple_cursor_, v.begin() + triple_cursor_ + count);
  };
  out.a = slice(triples_.a);
  out.b = slice(triples_.b);
  out.c = slice(triples_.c);
  triple_cursor_ += count;
  consumed_.elementwise_triples += count;
  return out;
}

MatmulTriple CorrelatedStore::take_matmul(const MatmulDims& dims) {
  if (matmul_cursor_ >= matmuls_.size()) {
    throw ExhaustedError("matmul triples exhausted: need " + to_string(dims));
  }
  if (!(matmuls_[matmul_cursor_].dims == dims)) {
    throw ExhaustedError("next matmul triple is " + to_string(matmuls_[matmul_cursor_].dims) +
                         ", need " + to_string(dims));
  }
  MatmulTriple out = std::move(matmuls_[matmul_cursor_]);
  matmuls_[matmul_cursor_] = MatmulTriple{out.dims, {}, {}, {}};
  ++matmul_cursor_;
  ++consumed_.matmul_triples;
  return out;
}

AndTriples CorrelatedStore::take_and(std::size_t words) {
  if (ands_.words() - and_cursor_ < words) {
    throw ExhaustedError("AND triples exhausted: need " + std::to_string(words) + " words, have " +
                         std::to_string(ands_.words() - and_cursor_));
  }
  AndTriples out;
  auto slice = [&](const std::vector<std::uint64_t>& v) {
    return std::vector<std::uint64_t>(v.begin() + and_cursor_, v.begin() + and_cursor_ + words);
  };
  out.a = slice(ands_.a);
  out.b = slice(ands_.b);
  out.c = slice(ands_.c);
  and_cursor_ += words;
  consumed_.and_words += words;
  return out;
}

DaBits CorrelatedStore::take_dabits(std::size_t count) {
  if (dabits_.size() - dabit_cursor_ < count) {
    throw ExhaustedError("daBits exhausted: need " + std::to_string(count) + ", have " +
                         std::to_string(dabits_.size() - dabit_cursor_));
  }
  DaBits out;
  out.arith.assign(dabits_.arith.begin() + dabit_cursor_, dabits_.arith.begin() + dabit_cursor_ + count);
  out.boolean = BitVec(count);
  for (std::size_t i = 0; i < count; ++i) out.boolean.set(i, dabits_.boolean.get(dabit_cursor_ + i));
  dabit_cursor_ += count;
  consumed_.dabits += count;
  return out;
}

TruncPairs CorrelatedStore::take_truncpairs(std::size_t count, int shift) {
  // Check first so that a failed request consumes nothing.
  std::size_t run = trunc_run_, cur = trunc_cursor_, need = count;
  while (need > 0) {
    if (run >= truncs_.size()) {
      throw ExhaustedError("truncation pairs exhausted: need " + std::to_string(count) +
                           " with shift " + std::to_string(shift));
    }
    if (truncs_[run].shift != shift) {
      throw ExhaustedError("next truncation pairs have shift " + std::to_string(truncs_[run].shift) +
                           ", need shift " + std::to_string(shift));
    }
    const std::size_t avail = truncs_[run].size() - cur;
    const std::size_t n = std::min(avail, need);
    need -= n;
    cur += n;
    if (cur == truncs_[run].size()) {
      ++run;
      cur = 0;
    }
  }
  TruncPairs out;
  out.shift = shift;
  need = count;
  while (need > 0) {
    const auto& src = truncs_[trunc_run_];
    const std::size_t n = std::min(src.size() - trunc_cursor_, need);
    const auto b = static_cast<std::ptrdiff_t>(trunc_cursor_);
    const auto e = static_cast<std::ptrdiff_t>(trunc_cursor_ + n);
    out.r.insert(out.r.end(), src.r.begin() + b, src.r.begin() + e);
    out.r_hi.insert(out.r_hi.end(), src.r_hi.begin() + b, src.r_hi.begin() + e);
    out.r_msb.insert(out.r_msb.end(), src.r_msb.begin() + b, src.r_msb.begin() + e);
    out.r_low_bits.insert(out.r_low_bits.end(), src.r_low_bits.begin() + b, src.r_low_bits.begin() + e);
    need -= n;
    trunc_cursor_ += n;
    if (trunc_cursor_ == src.size()) {
      ++trunc_run_;
      trunc_cursor_ = 0;
    }
  }
  consumed_.truncpairs += count;
  return out;
}

StoreUsage CorrelatedStore::remaining() const {
  StoreUsage r;
  r.elementwise_triples = triples_.size() - triple_cursor_;
  r.matmul_triples = matmuls_.size() - matmul_cursor_;
  r.and_words = ands_.words() - and_cursor_;
  r.dabits = dabits_.size() - dabit_cursor_;
  std::size_t t = 0;
  for (std::size_t i = trunc_run_; i < truncs_.size(); ++i) t += truncs_[i].size();
  r.truncpairs = t - trunc_cursor_;
  return r;
}

Bytes CorrelatedStore::serialize() const {
  if (triple_cursor_ || matmul_cursor_ || and_cursor_ || dabit_cursor_ || trunc_run_ || trunc_cursor_) {
    throw ExhaustedError("cannot serialize a partially consumed store");
  }
  ByteWriter w;
  if (triples_.size() > 0) {
    write_header(w, *this, {CrndKind::Elementwise, 0, triples_.size(), {}});
    for (std::size_t i = 0; i < triples_.size(); ++i) {
      w.u64_le(triples_.a[i]);
      w.u64_le(triples_.b[i]);
      w.u64_le(triples_.c[i]);
    }
  }
  for (const auto& t : matmuls_) {
    write_header(w, *this, {CrndKind::Matmul, 0, 1, t.dims});
    put_all(w, t.a);
    put_all(w, t.b);
    put_all(w, t.c);
  }
  if (ands_.words() > 0) {
    write_header(w, *this, {CrndKind::And, 0, ands_.words(), {}});
    for (std::size_t i = 0; i < ands_.words(); ++i) {
      w.u64_le(ands_.a[i]);
      w.u64_le(ands_.b[i]);
      w.u64_le(ands_.c[i]);
    }
  }
  if (dabits_.size() > 0) {
    write_header(w, *this, {CrndKind::DaBit, 0, dabits_.size(), {}});
    for (std::size_t i = 0; i < dabits_.size(); ++i) {
      w.u64_le(dabits_.arith[i]);
      w.u64_le(dabits_.boolean.get(i) ? 1 : 0);
    }
  }
  for (const auto& t : truncs_) {
    write_header(w, *this, {CrndKind::TruncPair, t.shift, t.size(), {}});
    for (std::size_t i = 0; i < t.size(); ++i) {
      w.u64_le(t.r[i]);
      w.u64_le(t.r_hi[i]);
      w.u64_le(t.r_msb[i]);
      w.u64_le(t.r_low_bits[i]);
    }
  }
  return w.take();
}

CorrelatedStore CorrelatedStore::deserialize(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  CorrelatedStore store;
  bool first = true;
  while (!r.done()) {
    if (r.remaining() < kHeaderBytes) throw ParseError("crnd: truncated section header");
    auto magic = r.raw(4);
    if (!std::equal(magic.begin(), magic.end(), "CRND")) throw ParseError("crnd: bad magic");
    const auto version = r.u16_le();
    if (version != kCrndVersion) {
      throw ParseError("crnd: unsupported version " + std::to_string(version));
    }
    const int k = r.u8();
    const int f = r.u8();
    const auto kind = r.u8();
    const int shift = r.u8();
    const int party = r.u8();
    r.u8();
    const std::uint64_t count = r.u64_le();
    MatmulDims dims;
    dims.m = r.u32_le();
    dims.n = r.u32_le();
    dims.p = r.u32_le();
    const std::uint64_t batch = r.u64_le();
    if (party > 1) throw ParseError("crnd: bad party tag " + std::to_string(party));
    FixedPointConfig cfg;
    try {
      cfg = FixedPointConfig::make(k, f);
    } catch (const ConfigError& e) {
      throw ParseError(std::string("crnd: ") + e.what());
    }
    if (first) {
      store = CorrelatedStore(party, cfg, batch);
      first = false;
    } else if (store.party_ != party || !(store.cfg_ == cfg) || store.batch_id_ != batch) {
      throw ParseError("crnd: sections disagree on party, config or batch id");
    }
    // Guard record counts against the bytes actually present.
    auto need_records = [&](std::uint64_t per) {
      if (count > r.remaining() / (8 * per)) throw ParseError("crnd: truncated record block");
    };
    switch (static_cast<CrndKind>(kind)) {
      case CrndKind::Elementwise: {
        need_records(3);
        ElementwiseTriples t;
        for (std::uint64_t i = 0; i < count; ++i) {
          auto v = get_n(r, 3, &cfg);
          t.a.push_back(v[0]);
          t.b.push_back(v[1]);
          t.c.push_back(v[2]);
        }
        store.add(std::move(t));
        break;
      }
      case CrndKind::Matmul: {
        if (count != 1) throw ParseError("crnd: matmul section must hold one triple");
        MatmulTriple t;
        t.dims = dims;
        t.a = get_n(r, dims.m * dims.n, &cfg);
        t.b = get_n(r, dims.n * dims.p, &cfg);
        t.c = get_n(r, dims.m * dims.p, &cfg);
        store.add(std::move(t));
        break;
      }
      case CrndKind::And: {
        need_records(3);
        AndTriples t;
        for (std::uint64_t i = 0; i < count; ++i) {
          auto v = get_n(r, 3, nullptr);
          t.a.push_back(v[0]);
          t.b.push_back(v[1]);
          t.c.push_back(v[2]);
        }
        store.add(std::move(t));
        break;
      }
      case CrndKind::DaBit: {
        need_records(2);
        DaBits d;
        d.boolean = BitVec(count);
        for (std::uint64_t i = 0; i < count; ++i) {
          auto v = get_n(r, 2, &cfg);
          if (v[1] > 1) throw ParseError("crnd: daBit boolean share is not a bit");
          d.arith.push_back(v[0]);
          d.boolean.set(i, v[1] != 0);
        }
        store.add(std::move(d));
        break;
      }
      case CrndKind::TruncPair: {
        need_records(4);
        if (shift <= 0 || shift > cfg.bitwidth_k - 2) throw ParseError("crnd: bad truncation shift");
        TruncPairs t;
        t.shift = shift;
        for (std::uint64_t i = 0; i < count; ++i) {
          auto v = get_n(r, 4, nullptr);
          t.r.push_back(ring_reduce(v[0], cfg));
          t.r_hi.push_back(ring_reduce(v[1], cfg));
          t.r_msb.push_back(ring_reduce(v[2], cfg));
          t.r_low_bits.push_back(v[3]);
        }
        store.add(std::move(t));
        break;
      }
      default:
        throw ParseError("crnd: unknown section kind " + std::to_string(kind));
    }
  }
  return store;
}

// ---- dealer ------------------------------------------------------------

namespace {

std::vector<RingElement> uniform_vec(std::size_t n, const FixedPointConfig& cfg, Prg& prg) {
  std::vector<RingElement> v(n);
  for (auto& x : v) x = ring_reduce(prg.next_u64(), cfg);
  return v;
}

// Split secret into (uniform, secret - uniform).
std::pair<std::vector<RingElement>, std::vector<RingElement>> split(const std::vector<RingElement>& secret,
                                                                    const FixedPointConfig& cfg, Prg& prg) {
  auto s0 = uniform_vec(secret.size(), cfg, prg);
  std::vector<RingElement> s1(secret.size());
  for (std::size_t i = 0; i < secret.size(); ++i) s1[i] = ring_sub(secret[i], s0[i], cfg);
  return {std::move(s0), std::move(s1)};
}

}  // namespace

std::pair<CorrelatedStore, CorrelatedStore> dealer_generate(const Requirements& req,
                                                            const FixedPointConfig& cfg, Prg& prg) {
  cfg.validate();
  const std::uint64_t batch = prg.next_u64();
  CorrelatedStore s0(0, cfg, batch), s1(1, cfg, batch);

  if (req.elementwise_triples > 0) {
    const std::size_t n = req.elementwise_triples;
    auto a = uniform_vec(n, cfg, prg);
    auto b = uniform_vec(n, cfg, prg);
    std::vector<RingElement> c(n);
    for (std::size_t i = 0; i < n; ++i) c[i] = ring_mul(a[i], b[i], cfg);
    auto [a0, a1] = split(a, cfg, prg);
    auto [b0, b1] = split(b, cfg, prg);
    auto [c0, c1] = split(c, cfg, prg);
    s0.add(ElementwiseTriples{std::move(a0), std::move(b0), std::move(c0)});
    s1.add(ElementwiseTriples{std::move(a1), std::move(b1), std::move(c1)});
  }

  for (const auto& d : req.matmul_triples) {
    auto a = uniform_vec(d.m * d.n, cfg, prg);
    auto b = uniform_vec(d.n * d.p, cfg, prg);
    auto c = ring_matmul(a, b, d.m, d.n, d.p, cfg);
    auto [a0, a1] = split(a, cfg, prg);
    auto [b0, b1] = split(b, cfg, prg);
    auto [c0, c1] = split(c, cfg, prg);
    s0.add(MatmulTriple{d, std::move(a0), std::move(b0), std::move(c0)});
    s1.add(MatmulTriple{d, std::move(a1), std::move(b1), std::move(c1)});
  }

  if (req.and_words > 0) {
    AndTriples t0, t1;
    for (std::size_t i = 0; i < req.and_words; ++i) {
      const std::uint64_t a = prg.next_u64(), b = prg.next_u64(), c = a & b;
      const std::uint64_t a0 = prg.next_u64(), b0 = prg.next_u64(), c0 = prg.next_u64();
      t0.a.push_back(a0);
      t0.b.push_back(b0);
      t0.c.push_back(c0);
      t1.a.push_back(a ^ a0);
      t1.b.push_back(b ^ b0);
      t1.c.push_back(c ^ c0);
    }
    s0.add(std::move(t0));
    s1.add(std::move(t1));
  }

  if (req.dabits > 0) {
    const std::size_t n = req.dabits;
    std::vector<RingElement> bits(n);
    DaBits d0, d1;
    d0.boolean = BitVec(n);
    d1.boolean = BitVec(n);
    for (std::size_t i = 0; i < n; ++i) {
      bits[i] = prg.bit() ? 1 : 0;
      const bool x0 = prg.bit();
      d0.boolean.set(i, x0);
      d1.boolean.set(i, x0 != (bits[i] != 0));
    }
    auto [a0, a1] = split(bits, cfg, prg);
    d0.arith = std::move(a0);
    d1.arith = std::move(a1);
    s0.add(std::move(d0));
    s1.add(std::move(d1));
  }

  for (const auto& [shift, count] : req.truncpairs) {
    if (shift <= 0 || shift > cfg.bitwidth_k - 2) {
      throw ConfigError("truncation shift " + std::to_string(shift) + " out of range");
    }
    auto r = uniform_vec(count, cfg, prg);
    std::vector<RingElement> hi(count), msb(count);
    const std::uint64_t low_mask = (std::uint64_t{1} << shift) - 1;
    TruncPairs t0, t1;
    t0.shift = t1.shift = shift;
    for (std::size_t i = 0; i < count; ++i) {
      hi[i] = r[i] >> shift;
      msb[i] = ring_msb(r[i], cfg) ? 1 : 0;
      const std::uint64_t m = prg.next_u64() & low_mask;
      t0.r_low_bits.push_back(m);
      t1.r_low_bits.push_back((r[i] & low_mask) ^ m);
    }
    std::tie(t0.r, t1.r) = split(r, cfg, prg);
    std::tie(t0.r_hi, t1.r_hi) = split(hi, cfg, prg);
    std::tie(t0.r_msb, t1.r_msb) = split(msb, cfg, prg);
    s0.add(std::move(t0));
    s1.add(std::move(t1));
  }
  return {std::move(s0), std::move(s1)};
}

RingElement truncpair_floor_share(const TruncPairs& t, std::size_t i, const FixedPointConfig& cfg) {
  // floor(signed(r) / 2^s) = (r >> s) - msb(r) * 2^{k-s}, linear in the shares.
  const RingElement top = ring_reduce(RingElement{1} << (cfg.bitwidth_k - t.shift), cfg);
  return ring_sub(t.r_hi[i], ring_mul(t.r_msb[i], top, cfg), cfg);
}

// ---- files -------------------------------------------------------------

std::string crnd_path(const std::string& dir, const std::string& label, int party) {
  std::string base = dir.empty() ? std::string() : (dir.back() == '/' ? dir : dir + "/");
  return base + label + ".p" + std::to_string(party) + ".crnd";
}

void write_crnd(const std::string& path, const CorrelatedStore& store) {
  write_file(path, store.serialize());
}

CorrelatedStore read_crnd(const std::string& path) {
  const Bytes data = read_file(path);
  try {
    return CorrelatedStore::deserialize(data);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::string describe_store(const CorrelatedStore& store) {
  const StoreUsage r = store.remaining();
  std::ostringstream os;
  os << "party=" << store.party() << " " << store.config().to_string()
     << " elementwise_triples=" << r.elementwise_triples << " matmul_triples=" << r.matmul_triples
     << " and_words=" << r.and_words << " dabits=" << r.dabits << " truncpairs=" << r.truncpairs;
  return os.str();
}

}  // namespace sealedinfer
