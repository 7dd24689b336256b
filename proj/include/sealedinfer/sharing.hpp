#pragma once

#include <utility>

#include "sealedinfer/prg.hpp"
#include "sealedinfer/ring.hpp"

namespace sealedinfer {

// One party's additive share of a ring tensor.
struct AdditiveShare {
  int party = 0;
  PlainTensor payload;
  FixedPointConfig config;
};

// share0 uniform, share1 = secret - share0 (mod 2^k).
std::pair<AdditiveShare, AdditiveShare> share(const PlainTensor& secret,
                                              const FixedPointConfig& cfg, Prg& prg);

// Elementwise sum mod 2^k. Throws ShapeError/ConfigError on mismatched
// shapes, configs or party tags.
PlainTensor reconstruct(const AdditiveShare& s0, const AdditiveShare& s1);

// Uniform ring elements.
std::vector<RingElement> random_ring(std::size_t n, const FixedPointConfig& cfg, Prg& prg);

}  // namespace sealedinfer
