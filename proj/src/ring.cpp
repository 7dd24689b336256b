#include "sealedinfer/ring.hpp"

#include <cmath>
#include <sstream>

#include "sealedinfer/errors.hpp"

namespace sealedinfer {

void FixedPointConfig::validate() const {
  if (bitwidth_k < 8 || bitwidth_k > 64) {
    throw ConfigError("bitwidth_k must lie in [8, 64], got " +
                      std::to_string(bitwidth_k));
  }
  if (frac_bits_f <= 0 || frac_bits_f > bitwidth_k - 4) {
    throw ConfigError("frac_bits_f must lie in (0, k-4], got " +
                      std::to_string(frac_bits_f) + " for k=" +
                      std::to_string(bitwidth_k));
  }
}

FixedPointConfig FixedPointConfig::make(int k, int f) {
  FixedPointConfig cfg{k, f};
  cfg.validate();
  return cfg;
}

std::string FixedPointConfig::to_string() const {
  return "k=" + std::to_string(bitwidth_k) + ",f=" + std::to_string(frac_bits_f);
}

std::int64_t to_signed(RingElement v, const FixedPointConfig& cfg) {
  v &= cfg.mask();
  if (cfg.bitwidth_k == 64) return static_cast<std::int64_t>(v);
  if (ring_msb(v, cfg)) {
    return static_cast<std::int64_t>(v) -
           static_cast<std::int64_t>(RingElement{1} << cfg.bitwidth_k);
  }
  return static_cast<std::int64_t>(v);
}

RingElement from_signed(std::int64_t v, const FixedPointConfig& cfg) {
  return static_cast<RingElement>(v) & cfg.mask();
}

RingElement fx_encode(double real, const FixedPointConfig& cfg) {
  const double limit = std::ldexp(1.0, cfg.bitwidth_k - cfg.frac_bits_f - 1);
  if (!std::isfinite(real) || std::fabs(real) >= limit) {
    std::ostringstream msg;
    msg << "fixed-point overflow: " << real << " outside (-" << limit << ", "
        << limit << ") for " << cfg.to_string();
    throw OverflowError(msg.str());
  }
  // std::round is half-away-from-zero.
  const double scaled = std::round(std::ldexp(real, cfg.frac_bits_f));
  const double bound = std::ldexp(1.0, cfg.bitwidth_k - 1);
  if (scaled >= bound || scaled < -bound) {
    throw OverflowError("fixed-point overflow after rounding for " +
                        cfg.to_string());
  }
  return from_signed(static_cast<std::int64_t>(scaled), cfg);
}

double fx_decode(RingElement elem, const FixedPointConfig& cfg) {
  return std::ldexp(static_cast<double>(to_signed(elem, cfg)), -cfg.frac_bits_f);
}

RingElement trunc_floor(RingElement x, int shift, const FixedPointConfig& cfg) {
  return from_signed(to_signed(x, cfg) >> shift, cfg);
}

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

void throw_shape_mismatch(const Shape& shape, std::size_t data_len) {
  throw ShapeError("tensor data length " + std::to_string(data_len) +
                   " does not match shape " + shape_to_string(shape));
}

std::vector<RingElement> ring_matmul(std::span<const RingElement> a,
                                     std::span<const RingElement> b, std::size_t m,
                                     std::size_t n, std::size_t p,
                                     const FixedPointConfig& cfg) {
  if (a.size() != m * n || b.size() != n * p) {
    throw ShapeError("ring_matmul operand sizes do not match " + std::to_string(m) + "x" +
                     std::to_string(n) + "x" + std::to_string(p));
  }
  std::vector<RingElement> c(m * p, 0);
  for (std::size_t i = 0; i < m; ++i) {
    RingElement* row = c.data() + i * p;
    for (std::size_t l = 0; l < n; ++l) {
      const RingElement x = a[i * n + l];
      if (x == 0) continue;
      const RingElement* brow = b.data() + l * p;
      for (std::size_t j = 0; j < p; ++j) row[j] += x * brow[j];
    }
  }
  for (auto& v : c) v &= cfg.mask();
  return c;
}

PlainTensor encode_tensor(const FloatTensor& t, const FixedPointConfig& cfg) {
  PlainTensor out(t.shape);
  for (std::size_t i = 0; i < t.size(); ++i) out.data[i] = fx_encode(t.data[i], cfg);
  return out;
}

FloatTensor decode_tensor(const PlainTensor& t, const FixedPointConfig& cfg) {
  FloatTensor out(t.shape);
  for (std::size_t i = 0; i < t.size(); ++i) out.data[i] = fx_decode(t.data[i], cfg);
  return out;
}

}  // namespace sealedinfer
