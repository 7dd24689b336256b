#include "sealedinfer/sharing.hpp"

#include "sealedinfer/errors.hpp"

namespace sealedinfer {

std::vector<RingElement> random_ring(std::size_t n, const FixedPointConfig& cfg, Prg& prg) {
  std::vector<RingElement> out(n);
  for (auto& v : out) v = prg.next_u64() & cfg.mask();
  return out;
}

std::pair<AdditiveShare, AdditiveShare> share(const PlainTensor& secret,
                                              const FixedPointConfig& cfg, Prg& prg) {
  secret.check();
  AdditiveShare s0{0, PlainTensor(secret.shape, random_ring(secret.size(), cfg, prg)), cfg};
  AdditiveShare s1{1, PlainTensor(secret.shape), cfg};
  for (std::size_t i = 0; i < secret.size(); ++i) {
    s1.payload.data[i] = ring_sub(secret.data[i], s0.payload.data[i], cfg);
  }
  return {std::move(s0), std::move(s1)};
}

PlainTensor reconstruct(const AdditiveShare& s0, const AdditiveShare& s1) {
  if (s0.party == s1.party) {
    throw ConfigError("cannot reconstruct two shares of party " + std::to_string(s0.party));
  }
  if (s0.config != s1.config) throw ConfigError("shares use different fixed-point configs");
  if (s0.payload.shape != s1.payload.shape) {
    throw ShapeError("share shapes differ: " + shape_to_string(s0.payload.shape) + " vs " +
                     shape_to_string(s1.payload.shape));
  }
  s0.payload.check();
  s1.payload.check();
  PlainTensor out(s0.payload.shape);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data[i] = ring_add(s0.payload.data[i], s1.payload.data[i], s0.config);
  }
  return out;
}

}  // namespace sealedinfer
