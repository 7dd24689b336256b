#pragma once

// Online phase over additive shares. Every function is called by both
// parties in lockstep with their own shares; randomness comes from the
// party's CorrelatedStore in a fixed order that plan_requirements mirrors.

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sealedinfer/bitvec.hpp"
#include "sealedinfer/channel.hpp"
#include "sealedinfer/correlated.hpp"
#include "sealedinfer/graph.hpp"
#include "sealedinfer/sharing.hpp"

namespace sealedinfer {

enum class PreprocMode { Dealer, TwoPartyHe };
enum class TruncMode { Faithful, Local };

std::string to_string(PreprocMode mode);
PreprocMode parse_preproc_mode(const std::string& text);
inline TruncMode trunc_mode_for(PreprocMode mode) {
  return mode == PreprocMode::Dealer ? TruncMode::Faithful : TruncMode::Local;
}

using ShareVec = std::vector<RingElement>;

struct LayerTraffic {
  std::string layer_id;
  LayerKind kind = LayerKind::Input;
  TrafficCounters traffic;
  double seconds = 0.0;
};

// Called after every truncation with this party's input and output shares.
using TruncAudit = std::function<void(int shift, std::span<const RingElement> in,
                                      std::span<const RingElement> out)>;

struct ProtocolState {
  ProtocolState(int party, Channel& channel, const FixedPointConfig& cfg, CorrelatedStore& store,
                TruncMode trunc, Prg& prg)
      : party(party), channel(&channel), cfg(cfg), store(&store), trunc(trunc), prg(&prg) {}

  int party;
  Channel* channel;
  FixedPointConfig cfg;
  CorrelatedStore* store;
  TruncMode trunc;
  // Masks the data owner's input.
  Prg* prg;
  TruncAudit trunc_audit;
  // Shares of every evaluated layer, by layer id.
  std::map<std::string, AdditiveShare> env;
  std::vector<LayerTraffic> layer_traffic;
};

// Both parties learn the reconstruction.
ShareVec open(ProtocolState& st, std::span<const RingElement> x);
BitVec open_bits(ProtocolState& st, const BitVec& x);

ShareVec secure_mul(ProtocolState& st, std::span<const RingElement> x, std::span<const RingElement> y);
// X[m x n] * Y[n x p], before any truncation.
ShareVec secure_matmul(ProtocolState& st, std::span<const RingElement> x, std::span<const RingElement> y,
                       const MatmulDims& dims);
// kernel[O x C*kh*kw] cross-correlated with a CxHxW input, before truncation.
ShareVec secure_conv(ProtocolState& st, std::span<const RingElement> input, const Shape& in_shape,
                     const LayerSpec& conv, std::span<const RingElement> kernel);

// Exact floor(signed(x) / 2^shift) for |signed(x)| < 2^(k-2).
ShareVec secure_trunc_faithful(ProtocolState& st, std::span<const RingElement> x, int shift);
// Non-interactive; off by at most one unit except with probability ~|x|/2^(k-1).
ShareVec secure_trunc_local(int party, std::span<const RingElement> x, int shift, const FixedPointConfig& cfg);
// Dispatches on st.trunc and reports to st.trunc_audit.
ShareVec secure_trunc(ProtocolState& st, std::span<const RingElement> x, int shift);

// XOR-shared bits to arithmetic shares, one daBit per lane.
ShareVec bits_to_arith(ProtocolState& st, const BitVec& bits);
// XOR shares of [c mod 2^width < r mod 2^width] for public c and XOR-shared
// bits of r (bit j of lane i at r_bits[j].get(i)).
BitVec less_than_public(ProtocolState& st, std::span<const RingElement> c, const std::vector<BitVec>& r_bits,
                        int width);
BitVec secure_and(ProtocolState& st, const BitVec& x, const BitVec& y);

// Arithmetic share of [signed(x) >= 0].
ShareVec secure_drelu(ProtocolState& st, std::span<const RingElement> x);
ShareVec secure_relu(ProtocolState& st, std::span<const RingElement> x);
// Lanewise max(a, b) = b + DReLU(a - b) * (a - b).
ShareVec secure_max(ProtocolState& st, std::span<const RingElement> a, std::span<const RingElement> b);
ShareVec secure_maxpool(ProtocolState& st, std::span<const RingElement> x, const Shape& in_shape,
                        const LayerSpec& pool);

// The correlated randomness one secure evaluation of `graph` consumes.
Requirements plan_requirements(const ComputationGraph& graph, const FixedPointConfig& cfg, TruncMode trunc);

// Data owner (party 1) passes its encoded input; the model owner (party 0)
// passes its weights. Returns the output logit shares.
ShareVec run_graph_secure(ProtocolState& st, const ComputationGraph& graph, const WeightStore* weights,
                          const PlainTensor* input);

// Model owner sends its output share; only the data owner learns the result.
std::optional<ShareVec> reveal_to_data_owner(ProtocolState& st, std::span<const RingElement> out);

}  // namespace sealedinfer
