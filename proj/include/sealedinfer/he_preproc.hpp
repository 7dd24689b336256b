#pragma once

// Dealer-free preprocessing between the two parties using Paillier. Each
// party owns a keypair; cross products of the parties' random factors are
// computed as oblivious linear evaluations: one side encrypts, the other
// raises to its own factor and adds a statistical mask, the first decrypts.

#include <cstddef>
#include <span>
#include <vector>

#include "sealedinfer/channel.hpp"
#include "sealedinfer/correlated.hpp"
#include "sealedinfer/paillier.hpp"

namespace sealedinfer {

inline constexpr int kStatSecurityBits = 40;

struct HeContext {
  Channel* channel = nullptr;
  FixedPointConfig cfg;
  AheKeypair own;
  PaillierPublicKey peer;
  Prg* prg = nullptr;

  int party() const { return channel->party(); }
};

// Exchanges public keys (CONFIG messages). Both keys must have the same size.
HeContext he_setup(Channel& channel, const FixedPointConfig& cfg, AheKeypair own, Prg& prg);

// Party 1 holds x and the decryption key, party 0 holds w. Party 1 learns
// sum(w_i * x_i) mod 2^k; party 0 sees ciphertexts only and gets 0.
RingElement he_dot_product(HeContext& ctx, std::span<const RingElement> mine);

ElementwiseTriples he_triple_gen(HeContext& ctx, std::size_t count);
std::vector<MatmulTriple> he_matmul_triple_gen(HeContext& ctx, std::span<const MatmulDims> dims);
AndTriples he_and_triple_gen(HeContext& ctx, std::size_t words);
// Consumes one elementwise triple per daBit from `triples`.
DaBits he_dabit_gen(HeContext& ctx, std::size_t count, CorrelatedStore& triples);

// Everything in req except truncation pairs, which this mode does not use.
CorrelatedStore he_generate(HeContext& ctx, const Requirements& req);

}  // namespace sealedinfer
