#pragma once

// Index plumbing shared by the plaintext evaluators and the secure runtime,
// so both walk tensors in exactly the same order.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "sealedinfer/graph.hpp"

namespace sealedinfer {

inline constexpr std::size_t kPaddingIndex = std::numeric_limits<std::size_t>::max();

// im2col for a CxHxW input: returns a (C*kh*kw) x (OH*OW) row-major matrix of
// input flat indices, kPaddingIndex marking zero padding. Row order is
// (c, i, j), matching the [O, C, kh, kw] kernel layout, so the convolution is
// kernel[O x C*kh*kw] * patches.
std::vector<std::size_t> conv_patch_indices(const Shape& in, const LayerSpec& conv);

// For each output element of a pooling layer (row-major over [C, OH, OW]) the
// kh*kw input indices of its window, flattened.
std::vector<std::size_t> pool_window_indices(const Shape& in, const LayerSpec& pool);

// Indices per output channel for GlobalAvgPool: C rows of H*W indices.
std::vector<std::size_t> global_pool_indices(const Shape& in);

// log2 of the pooling window area (powers of two only).
int pool_shift(const Shape& in, const LayerSpec& pool);

// Pairwise tournament over `lanes` windows of `width` values stored
// window-major. Each round pairs neighbours (0,1), (2,3), ... with an odd
// survivor carried forward; `max_batch(a, b)` is called once per round on all
// pairs of all windows.
template <typename T, typename MaxBatch>
std::vector<T> tournament_max(std::vector<T> values, std::size_t lanes, std::size_t width,
                              MaxBatch&& max_batch) {
  while (width > 1) {
    const std::size_t pairs = width / 2;
    const std::size_t next_width = pairs + (width % 2);
    std::vector<T> a, b;
    a.reserve(lanes * pairs);
    b.reserve(lanes * pairs);
    for (std::size_t l = 0; l < lanes; ++l) {
      for (std::size_t p = 0; p < pairs; ++p) {
        a.push_back(values[l * width + 2 * p]);
        b.push_back(values[l * width + 2 * p + 1]);
      }
    }
    std::vector<T> m = max_batch(a, b);
    std::vector<T> next(lanes * next_width);
    for (std::size_t l = 0; l < lanes; ++l) {
      for (std::size_t p = 0; p < pairs; ++p) next[l * next_width + p] = m[l * pairs + p];
      if (width % 2 == 1) next[l * next_width + pairs] = values[l * width + width - 1];
    }
    values = std::move(next);
    width = next_width;
  }
  return values;
}

}  // namespace sealedinfer
