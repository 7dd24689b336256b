#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "sealedinfer/correlated.hpp"
#include "sealedinfer/errors.hpp"
#include "sealedinfer/he_preproc.hpp"
#include "sealedinfer/paillier.hpp"
#include "sealedinfer/sharing.hpp"
#include "support.hpp"

using namespace sealedinfer;
using support::add_shares;

namespace {

std::int64_t floor_div(std::int64_t v, int s) {
  const std::int64_t d = std::int64_t{1} << s;
  std::int64_t q = v / d;
  if ((v % d != 0) && (v < 0)) --q;
  return q;
}

// Keys are slow to generate; reuse one small pair per party.
const AheKeypair& test_key(int party) {
  static const AheKeypair k0 = [] {
    Prg p(501);
    return ahe_keygen(1024, p);
  }();
  static const AheKeypair k1 = [] {
    Prg p(502);
    return ahe_keygen(1024, p);
  }();
  return party == 0 ? k0 : k1;
}

// Runs `body(ctx)` for both parties after the public-key exchange.
template <typename F0, typename F1>
void he_pair(const FixedPointConfig& cfg, std::uint64_t seed, F0&& f0, F1&& f1,
             std::vector<TranscriptEntry>* transcript0 = nullptr) {
  support::two_party(
      [&](Transport& t) {
        Channel ch(t, 0, ChannelOptions{kDefaultFrameCap, true});
        Prg prg(seed, 0);
        HeContext ctx = he_setup(ch, cfg, test_key(0), prg);
        f0(ctx);
        if (transcript0) *transcript0 = ch.transcript();
      },
      [&](Transport& t) {
        Channel ch(t, 1);
        Prg prg(seed, 1);
        HeContext ctx = he_setup(ch, cfg, test_key(1), prg);
        f1(ctx);
      });
}

std::string temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("sealedinfer_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace

TEST_CASE("share and reconstruct") {
  Prg prg(20);
  const auto cfg = FixedPointConfig::make(64, 12);
  PlainTensor v(Shape{3, 4});
  for (auto& x : v.data) x = prg.next_u64();
  const auto [s0, s1] = share(v, cfg, prg);
  CHECK(s0.party == 0);
  CHECK(s1.party == 1);
  CHECK(reconstruct(s0, s1) == v);
  const auto [z0, z1] = share(PlainTensor(Shape{5}), cfg, prg);
  CHECK(reconstruct(z0, z1) == PlainTensor(Shape{5}));
}

TEST_CASE("reconstruct examples and errors") {
  const auto cfg = FixedPointConfig::make(16, 4);
  const AdditiveShare a{0, PlainTensor(Shape{1}, {3}), cfg};
  const AdditiveShare b{1, PlainTensor(Shape{1}, {65535}), cfg};
  CHECK(reconstruct(a, b).data[0] == 2);
  CHECK_THROWS_AS(reconstruct(a, AdditiveShare{0, PlainTensor(Shape{1}, {1}), cfg}), ConfigError);
  CHECK_THROWS_AS(reconstruct(a, AdditiveShare{1, PlainTensor(Shape{2}, {1, 1}), cfg}), ShapeError);
  CHECK_THROWS_AS(reconstruct(a, AdditiveShare{1, PlainTensor(Shape{1}, {1}), FixedPointConfig::make(32, 4)}),
                  ConfigError);
}

TEST_CASE("a single share is uniform (chi-square over 256 bins)") {
  Prg prg(21);
  const auto cfg = FixedPointConfig::make(8, 2);
  const PlainTensor secret(Shape{1}, {173});
  std::vector<double> counts(256, 0.0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) counts[share(secret, cfg, prg).first.payload.data[0]] += 1.0;
  const double expected = draws / 256.0;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 99th percentile of chi-square with 255 degrees of freedom.
  CHECK(chi2 < 310.46);
}

TEST_CASE("dealer material satisfies its defining relations") {
  Prg prg(22);
  for (int k : {8, 16, 32, 64}) {
    const auto cfg = FixedPointConfig::make(k, k == 8 ? 2 : 4);
    Requirements req;
    req.elementwise_triples = 2000;
    req.matmul_triples = {{2, 3, 2}, {4, 6, 3}};
    req.and_words = 50;
    req.dabits = 2000;
    req.add_truncpairs(cfg.frac_bits_f, 2000);
    auto [s0, s1] = dealer_generate(req, cfg, prg);
    CHECK(s0.batch_id() == s1.batch_id());

    const auto t0 = s0.take_triples(2000), t1 = s1.take_triples(2000);
    for (std::size_t i = 0; i < 2000; ++i) {
      const RingElement a = ring_add(t0.a[i], t1.a[i], cfg), b = ring_add(t0.b[i], t1.b[i], cfg);
      CHECK(ring_mul(a, b, cfg) == ring_add(t0.c[i], t1.c[i], cfg));
    }
    for (const MatmulDims d : req.matmul_triples) {
      const auto m0 = s0.take_matmul(d), m1 = s1.take_matmul(d);
      const auto a = add_shares(m0.a, m1.a, cfg), b = add_shares(m0.b, m1.b, cfg);
      CHECK(ring_matmul(a, b, d.m, d.n, d.p, cfg) == add_shares(m0.c, m1.c, cfg));
    }
    const auto a0 = s0.take_and(50), a1 = s1.take_and(50);
    for (std::size_t w = 0; w < 50; ++w) {
      CHECK(((a0.a[w] ^ a1.a[w]) & (a0.b[w] ^ a1.b[w])) == (a0.c[w] ^ a1.c[w]));
    }
    const auto d0 = s0.take_dabits(2000), d1 = s1.take_dabits(2000);
    for (std::size_t i = 0; i < 2000; ++i) {
      const RingElement v = ring_add(d0.arith[i], d1.arith[i], cfg);
      CHECK(v <= 1);
      CHECK(v == static_cast<RingElement>(d0.boolean.get(i) != d1.boolean.get(i)));
    }
    const auto p0 = s0.take_truncpairs(2000, cfg.frac_bits_f), p1 = s1.take_truncpairs(2000, cfg.frac_bits_f);
    for (std::size_t i = 0; i < 2000; ++i) {
      const RingElement r = ring_add(p0.r[i], p1.r[i], cfg);
      const RingElement fl =
          ring_add(truncpair_floor_share(p0, i, cfg), truncpair_floor_share(p1, i, cfg), cfg);
      CHECK(fl == from_signed(floor_div(to_signed(r, cfg), cfg.frac_bits_f), cfg));
    }
    CHECK(s0.fully_consumed());
    CHECK(s1.fully_consumed());
  }
}

TEST_CASE("truncation pairs at k=16, f=4 hit every ring value") {
  Prg prg(23);
  const auto cfg = FixedPointConfig::make(16, 4);
  Requirements req;
  req.add_truncpairs(4, 1 << 20);
  auto [s0, s1] = dealer_generate(req, cfg, prg);
  const auto p0 = s0.take_truncpairs(1 << 20, 4), p1 = s1.take_truncpairs(1 << 20, 4);
  std::set<RingElement> seen;
  int bad = 0;
  for (std::size_t i = 0; i < p0.size(); ++i) {
    const RingElement r = ring_add(p0.r[i], p1.r[i], cfg);
    seen.insert(r);
    const RingElement fl = ring_add(truncpair_floor_share(p0, i, cfg), truncpair_floor_share(p1, i, cfg), cfg);
    if (fl != from_signed(floor_div(to_signed(r, cfg), 4), cfg)) ++bad;
  }
  CHECK(bad == 0);
  CHECK(seen.size() == 65536);
}

TEST_CASE("stores refuse over-consumption and reuse") {
  Prg prg(24);
  const auto cfg = FixedPointConfig::make(32, 12);
  Requirements req;
  req.elementwise_triples = 10;
  req.add_truncpairs(12, 5);
  auto [s0, s1] = dealer_generate(req, cfg, prg);
  CHECK_THROWS_AS(s0.take_triples(11), ExhaustedError);
  CHECK(s0.consumed().elementwise_triples == 0);  // failed takes are atomic
  s0.take_triples(10);
  CHECK_THROWS_AS(s0.take_triples(1), ExhaustedError);
  CHECK_THROWS_AS(s0.take_truncpairs(5, 11), ExhaustedError);
  CHECK_THROWS_AS(s0.take_matmul({1, 1, 1}), ExhaustedError);
  CHECK_THROWS_AS(s0.serialize(), ExhaustedError);
}

TEST_CASE("crnd files round trip and hold one party's shares") {
  Prg prg(25);
  const auto cfg = FixedPointConfig::make(64, 12);
  Requirements req;
  req.elementwise_triples = 100;
  req.matmul_triples = {{2, 3, 4}};
  req.and_words = 3;
  req.dabits = 70;
  req.add_truncpairs(12, 40);
  req.add_truncpairs(2, 8);
  auto [s0, s1] = dealer_generate(req, cfg, prg);
  const std::string dir = temp_dir("crnd");
  write_crnd(crnd_path(dir, "lbl", 0), s0);
  write_crnd(crnd_path(dir, "lbl", 1), s1);
  CHECK(crnd_path(dir, "lbl", 1).ends_with("lbl.p1.crnd"));
  const CorrelatedStore back0 = read_crnd(crnd_path(dir, "lbl", 0));
  const CorrelatedStore back1 = read_crnd(crnd_path(dir, "lbl", 1));
  CHECK(back0.serialize() == s0.serialize());
  CHECK(back1.serialize() == s1.serialize());
  CHECK(back0.party() == 0);
  CHECK(back1.party() == 1);
  CHECK(back0.remaining() == s0.remaining());
  const Bytes f0 = s0.serialize(), f1 = s1.serialize();
  CHECK(f0 != f1);
  CHECK(std::equal(f0.begin(), f0.begin() + 4, "CRND"));

  Bytes bad = f0;
  bad[0] = 'X';
  CHECK_THROWS_AS(CorrelatedStore::deserialize(bad), ParseError);
  bad = f0;
  bad.resize(bad.size() - 3);
  CHECK_THROWS_AS(CorrelatedStore::deserialize(bad), ParseError);

  Prg same1(77), same2(77);
  CHECK(dealer_generate(req, cfg, same1).first.serialize() == dealer_generate(req, cfg, same2).first.serialize());
}

TEST_CASE("paillier arithmetic") {
  Prg prg(26);
  const AheKeypair& k = test_key(0);
  const auto& pub = k.pub;
  CHECK(k.sec.decrypt(pub.encrypt_u64(7, prg)) == 7);
  CHECK(k.sec.decrypt(pub.add(pub.encrypt_u64(3, prg), pub.encrypt_u64(4, prg))) == 7);
  CHECK(k.sec.decrypt(pub.scale_u64(pub.encrypt_u64(6, prg), 5)) == 30);
  CHECK(k.sec.decrypt(k.sec.encrypt(PaillierPublicKey::mpz_from_u64(99), prg)) == 99);
  CHECK(pub.n() > mpz_class(1) << 128);  // room for a 64-bit product
  for (int i = 0; i < 10000; ++i) {
    const mpz_class a = mpz_random_bits(128, prg), b = mpz_random_bits(128, prg);
    const Ciphertext ca = pub.encrypt(a, prg);
    CHECK(k.sec.decrypt(pub.add(ca, pub.encrypt(b, prg))) == (a + b) % pub.n());
    CHECK(k.sec.decrypt(pub.scale(ca, b)) == (a * b) % pub.n());
  }
}

TEST_CASE("paillier key handling") {
  Prg prg(27);
  const AheKeypair& a = test_key(0);
  const AheKeypair& b = test_key(1);
  const Ciphertext c = a.pub.encrypt_u64(5, prg);
  CHECK_THROWS_AS(b.sec.decrypt(c), CryptoError);
  const auto pub = PaillierPublicKey::deserialize(a.pub.serialize());
  CHECK(pub.key_id() == a.pub.key_id());
  const Bytes wire = pub.serialize_ciphertexts(std::vector<Ciphertext>{c, c});
  CHECK(wire.size() == 2 * pub.ciphertext_bytes());
  CHECK(a.sec.decrypt(pub.parse_ciphertexts(wire, 2)[1]) == 5);
  Ciphertext junk{a.pub.n_squared(), a.pub.key_id()};
  CHECK_THROWS_AS(a.pub.validate(junk), CryptoError);
  Ciphertext shared{a.pub.n(), a.pub.key_id()};
  CHECK_THROWS_AS(a.pub.validate(shared), CryptoError);
  CHECK_THROWS(ahe_keygen(256, prg));
}

TEST_CASE("default-size keys work end to end") {
  Prg prg(28);
  const AheKeypair k = ahe_keygen(kDefaultModulusBits, prg);
  CHECK(k.pub.modulus_bits() >= 2047);
  CHECK(mpz_low_u64(k.sec.decrypt(k.pub.scale_u64(k.pub.encrypt_u64(123456789, prg), 1000))) == 123456789000ULL);
}

TEST_CASE("homomorphic dot product") {
  const auto cfg = FixedPointConfig::make(64, 12);
  const auto run = [&](const std::vector<RingElement>& w, const std::vector<RingElement>& x) {
    RingElement got0 = 1, got1 = 0;
    he_pair(
        cfg, 29, [&](HeContext& c) { got0 = he_dot_product(c, w); }, [&](HeContext& c) { got1 = he_dot_product(c, x); });
    CHECK(got0 == 0);
    return got1;
  };
  CHECK(run({2, 3}, {4, 5}) == 23);
  CHECK(run({0, 0, 0}, {9, 8, 7}) == 0);
  Prg prg(30);
  std::vector<RingElement> w(32), x(32);
  for (auto& v : w) v = prg.next_u64();
  for (auto& v : x) v = prg.next_u64();
  RingElement want = 0;
  for (std::size_t i = 0; i < 32; ++i) want += w[i] * x[i];
  CHECK(run(w, x) == want);
}

TEST_CASE("dot product length mismatch") {
  const auto cfg = FixedPointConfig::make(64, 12);
  const auto errs = support::two_party_errors(
      [&](Transport& t) {
        Channel ch(t, 0);
        Prg prg(1);
        HeContext ctx = he_setup(ch, cfg, test_key(0), prg);
        he_dot_product(ctx, std::vector<RingElement>{1, 2});
      },
      [&](Transport& t) {
        Channel ch(t, 1);
        Prg prg(2);
        HeContext ctx = he_setup(ch, cfg, test_key(1), prg);
        he_dot_product(ctx, std::vector<RingElement>{1, 2, 3});
      });
  CHECK((errs.p0 || errs.p1));
}

TEST_CASE("dealer-free triples") {
  for (int k : {16, 64}) {
    const auto cfg = FixedPointConfig::make(k, 12);
    const std::vector<MatmulDims> dims{{2, 3, 2}, {3, 5, 4}};
    ElementwiseTriples e0, e1;
    std::vector<MatmulTriple> m0, m1;
    AndTriples a0, a1;
    std::vector<TranscriptEntry> transcript;
    he_pair(
        cfg, 31,
        [&](HeContext& c) {
          e0 = he_triple_gen(c, 300);
          m0 = he_matmul_triple_gen(c, dims);
          a0 = he_and_triple_gen(c, 5);
        },
        [&](HeContext& c) {
          e1 = he_triple_gen(c, 300);
          m1 = he_matmul_triple_gen(c, dims);
          a1 = he_and_triple_gen(c, 5);
        },
        &transcript);
    for (std::size_t i = 0; i < 300; ++i) {
      CHECK(ring_mul(ring_add(e0.a[i], e1.a[i], cfg), ring_add(e0.b[i], e1.b[i], cfg), cfg) ==
            ring_add(e0.c[i], e1.c[i], cfg));
    }
    for (std::size_t t = 0; t < dims.size(); ++t) {
      const auto& d = dims[t];
      CHECK(ring_matmul(add_shares(m0[t].a, m1[t].a, cfg), add_shares(m0[t].b, m1[t].b, cfg), d.m, d.n, d.p, cfg) ==
            add_shares(m0[t].c, m1[t].c, cfg));
    }
    for (std::size_t w = 0; w < 5; ++w) CHECK(((a0.a[w] ^ a1.a[w]) & (a0.b[w] ^ a1.b[w])) == (a0.c[w] ^ a1.c[w]));
    // Key exchange aside, party 0 only ever sends ciphertexts.
    for (const auto& e : transcript) {
      if (e.outbound) CHECK((e.type == MsgType::Ciphertext || e.type == MsgType::Config));
    }
  }
}

TEST_CASE("dealer-free daBits") {
  const auto cfg = FixedPointConfig::make(64, 12);
  const std::size_t n = 2000;
  DaBits d0, d1;
  he_pair(
      cfg, 32,
      [&](HeContext& c) {
        CorrelatedStore t(0, cfg);
        t.add(he_triple_gen(c, n));
        d0 = he_dabit_gen(c, n, t);
        CHECK(t.fully_consumed());
      },
      [&](HeContext& c) {
        CorrelatedStore t(1, cfg);
        t.add(he_triple_gen(c, n));
        d1 = he_dabit_gen(c, n, t);
      });
  std::size_t ones = 0;
  int combos[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < n; ++i) {
    const bool b0 = d0.boolean.get(i), b1 = d1.boolean.get(i);
    const RingElement v = ring_add(d0.arith[i], d1.arith[i], cfg);
    CHECK(v <= 1);
    CHECK(v == static_cast<RingElement>(b0 != b1));
    ++combos[b0][b1];
    ones += v;
  }
  for (auto& row : combos)
    for (int c : row) CHECK(c > 0);
  // Within 3 sigma of a fair coin.
  CHECK(std::fabs(static_cast<double>(ones) - n / 2.0) <= 3.0 * std::sqrt(n / 4.0));
}

TEST_CASE("daBit generation needs triples") {
  const auto cfg = FixedPointConfig::make(64, 12);
  const auto errs = support::two_party_errors(
      [&](Transport& t) {
        Channel ch(t, 0);
        Prg prg(1);
        HeContext ctx = he_setup(ch, cfg, test_key(0), prg);
        CorrelatedStore empty(0, cfg);
        he_dabit_gen(ctx, 4, empty);
      },
      [&](Transport& t) {
        Channel ch(t, 1);
        Prg prg(2);
        HeContext ctx = he_setup(ch, cfg, test_key(1), prg);
        CorrelatedStore empty(1, cfg);
        he_dabit_gen(ctx, 4, empty);
      });
  REQUIRE(errs.p1);
  CHECK_THROWS_AS(std::rethrow_exception(errs.p1), ExhaustedError);
}

TEST_CASE("he_generate fills a full plan") {
  const auto cfg = FixedPointConfig::make(32, 12);
  Requirements req;
  req.elementwise_triples = 20;
  req.matmul_triples = {{2, 2, 2}};
  req.and_words = 2;
  req.dabits = 30;
  CorrelatedStore s0, s1;
  he_pair(
      cfg, 33, [&](HeContext& c) { s0 = he_generate(c, req); }, [&](HeContext& c) { s1 = he_generate(c, req); });
  CHECK(s0.remaining() == StoreUsage{20, 1, 2, 30, 0});
  CHECK(s1.remaining() == s0.remaining());
  Requirements with_trunc = req;
  with_trunc.add_truncpairs(12, 1);
  const auto errs = support::two_party_errors(
      [&](Transport& t) {
        Channel ch(t, 0);
        Prg prg(1);
        HeContext ctx = he_setup(ch, cfg, test_key(0), prg);
        he_generate(ctx, with_trunc);
      },
      [&](Transport& t) {
        Channel ch(t, 1);
        Prg prg(2);
        HeContext ctx = he_setup(ch, cfg, test_key(1), prg);
        he_generate(ctx, with_trunc);
      });
  REQUIRE(errs.p0);
  CHECK_THROWS_AS(std::rethrow_exception(errs.p0), ConfigError);
}
