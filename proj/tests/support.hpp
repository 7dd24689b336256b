#pragma once

// Helpers shared by the unit tests: two parties on a socketpair, one on a
// helper thread, plus plain reconstruction.

#include <exception>
#include <functional>
#include <thread>
#include <utility>
#include <vector>

#include "sealedinfer/channel.hpp"
#include "sealedinfer/correlated.hpp"
#include "sealedinfer/protocols.hpp"
#include "sealedinfer/transport.hpp"

namespace support {

using namespace sealedinfer;

struct PartyErrors {
  std::exception_ptr p0, p1;
};

// Party 0 runs on a helper thread, party 1 inline. A failing side shuts its
// transport down so the peer unblocks.
inline PartyErrors two_party_errors(const std::function<void(Transport&)>& p0,
                                    const std::function<void(Transport&)>& p1) {
  auto [t0, t1] = SocketTransport::local_pair();
  PartyErrors errs;
  std::thread th([&, t = &t0] {
    try {
      p0(*t);
    } catch (...) {
      errs.p0 = std::current_exception();
      t->shutdown();
    }
  });
  try {
    p1(t1);
  } catch (...) {
    errs.p1 = std::current_exception();
    t1.shutdown();
  }
  th.join();
  return errs;
}

inline void two_party(const std::function<void(Transport&)>& p0, const std::function<void(Transport&)>& p1) {
  const PartyErrors e = two_party_errors(p0, p1);
  if (e.p0) std::rethrow_exception(e.p0);
  if (e.p1) std::rethrow_exception(e.p1);
}

// Dealer stores for `req`, one ProtocolState per party.
inline void protocol_pair(const FixedPointConfig& cfg, const Requirements& req, std::uint64_t seed,
                          const std::function<void(ProtocolState&)>& f0,
                          const std::function<void(ProtocolState&)>& f1, TruncMode trunc = TruncMode::Faithful) {
  Prg dealer(seed, 99);
  auto stores = dealer_generate(req, cfg, dealer);
  two_party(
      [&](Transport& t) {
        Channel ch(t, 0);
        Prg prg(seed, 0);
        ProtocolState st(0, ch, cfg, stores.first, trunc, prg);
        f0(st);
      },
      [&](Transport& t) {
        Channel ch(t, 1);
        Prg prg(seed, 1);
        ProtocolState st(1, ch, cfg, stores.second, trunc, prg);
        f1(st);
      });
}

inline std::vector<RingElement> add_shares(const std::vector<RingElement>& a, const std::vector<RingElement>& b,
                                           const FixedPointConfig& cfg) {
  std::vector<RingElement> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = ring_add(a[i], b[i], cfg);
  return out;
}

// Splits public values into (random, value - random).
inline std::pair<std::vector<RingElement>, std::vector<RingElement>> split(const std::vector<RingElement>& v,
                                                                           const FixedPointConfig& cfg, Prg& prg) {
  std::vector<RingElement> s0(v.size()), s1(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    s0[i] = prg.next_u64() & cfg.mask();
    s1[i] = ring_sub(v[i], s0[i], cfg);
  }
  return {s0, s1};
}

}  // namespace support
