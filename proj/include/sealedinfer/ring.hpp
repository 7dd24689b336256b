#pragma once

// Fixed-point reals embedded in the ring Z_{2^k}. Ring elements are carried
// as uint64_t reduced mod 2^k; signed views use two's complement.

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace sealedinfer {

using RingElement = std::uint64_t;
using Shape = std::vector<std::size_t>;

struct FixedPointConfig {
  int bitwidth_k = 64;
  int frac_bits_f = 12;

  // Throws ConfigError unless 8 <= k <= 64 and 0 < f <= k - 4.
  void validate() const;
  static FixedPointConfig make(int k, int f);

  RingElement mask() const noexcept {
    return bitwidth_k == 64 ? ~RingElement{0}
                            : ((RingElement{1} << bitwidth_k) - 1);
  }
  // Bytes per element on the wire and in files.
  std::size_t element_bytes() const noexcept {
    return static_cast<std::size_t>((bitwidth_k + 7) / 8);
  }
  std::string to_string() const;

  friend bool operator==(const FixedPointConfig&,
                         const FixedPointConfig&) = default;
};

inline RingElement ring_reduce(RingElement v, const FixedPointConfig& cfg) {
  return v & cfg.mask();
}
inline RingElement ring_add(RingElement a, RingElement b,
                            const FixedPointConfig& cfg) {
  return (a + b) & cfg.mask();
}
inline RingElement ring_sub(RingElement a, RingElement b,
                            const FixedPointConfig& cfg) {
  return (a - b) & cfg.mask();
}
inline RingElement ring_neg(RingElement a, const FixedPointConfig& cfg) {
  return (RingElement{0} - a) & cfg.mask();
}
inline RingElement ring_mul(RingElement a, RingElement b,
                            const FixedPointConfig& cfg) {
  return (a * b) & cfg.mask();
}

// Two's-complement view in [-2^{k-1}, 2^{k-1}).
std::int64_t to_signed(RingElement v, const FixedPointConfig& cfg);
RingElement from_signed(std::int64_t v, const FixedPointConfig& cfg);

inline bool ring_msb(RingElement v, const FixedPointConfig& cfg) {
  return ((v >> (cfg.bitwidth_k - 1)) & 1U) != 0;
}

// round(real * 2^f), half away from zero. Throws OverflowError when
// |real| >= 2^{k-f-1} or the rounded value leaves the signed range.
RingElement fx_encode(double real, const FixedPointConfig& cfg);
double fx_decode(RingElement elem, const FixedPointConfig& cfg);

// floor(signed(x) / 2^shift), i.e. an arithmetic right shift.
RingElement trunc_floor(RingElement x, int shift, const FixedPointConfig& cfg);

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::size_t b) { return a * b; });
}
std::string shape_to_string(const Shape& shape);

template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(shape_size(shape)) {}
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    check();
  }

  std::size_t size() const noexcept { return data.size(); }
  // Throws ShapeError when data length disagrees with the shape.
  void check() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

using PlainTensor = Tensor<RingElement>;
using FloatTensor = Tensor<double>;

void throw_shape_mismatch(const Shape& shape, std::size_t data_len);

template <typename T>
void Tensor<T>::check() const {
  if (shape_size(shape) != data.size()) throw_shape_mismatch(shape, data.size());
}

// Row-major (m x n) * (n x p) product mod 2^k.
std::vector<RingElement> ring_matmul(std::span<const RingElement> a,
                                     std::span<const RingElement> b, std::size_t m,
                                     std::size_t n, std::size_t p,
                                     const FixedPointConfig& cfg);

PlainTensor encode_tensor(const FloatTensor& t, const FixedPointConfig& cfg);
FloatTensor decode_tensor(const PlainTensor& t, const FixedPointConfig& cfg);

}  // namespace sealedinfer
