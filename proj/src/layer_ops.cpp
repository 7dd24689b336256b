#include "sealedinfer/layer_ops.hpp"

#include <bit>

namespace sealedinfer {

std::vector<std::size_t> conv_patch_indices(const Shape& in, const LayerSpec& conv) {
  const std::size_t c_in = in[0], h = in[1], w = in[2];
  const std::size_t oh = conv_output_extent(h, conv.kernel_h, conv.stride, conv.padding);
  const std::size_t ow = conv_output_extent(w, conv.kernel_w, conv.stride, conv.padding);
  const std::size_t cols = oh * ow;
  std::vector<std::size_t> idx(c_in * conv.kernel_h * conv.kernel_w * cols, kPaddingIndex);
  std::size_t row = 0;
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t i = 0; i < conv.kernel_h; ++i) {
      for (std::size_t j = 0; j < conv.kernel_w; ++j, ++row) {
        for (std::size_t y = 0; y < oh; ++y) {
          for (std::size_t x = 0; x < ow; ++x) {
            // Padded coordinates; negative positions wrap to huge values and
            // fail the bound check below.
            const std::size_t py = y * conv.stride + i - conv.padding;
            const std::size_t px = x * conv.stride + j - conv.padding;
            if (py < h && px < w) idx[row * cols + y * ow + x] = (c * h + py) * w + px;
          }
        }
      }
    }
  }
  return idx;
}

std::vector<std::size_t> pool_window_indices(const Shape& in, const LayerSpec& pool) {
  const std::size_t c_in = in[0], h = in[1], w = in[2];
  const std::size_t oh = conv_output_extent(h, pool.kernel_h, pool.stride, 0);
  const std::size_t ow = conv_output_extent(w, pool.kernel_w, pool.stride, 0);
  std::vector<std::size_t> idx;
  idx.reserve(c_in * oh * ow * pool.kernel_h * pool.kernel_w);
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        for (std::size_t i = 0; i < pool.kernel_h; ++i) {
          for (std::size_t j = 0; j < pool.kernel_w; ++j) {
            idx.push_back((c * h + y * pool.stride + i) * w + x * pool.stride + j);
          }
        }
      }
    }
  }
  return idx;
}

std::vector<std::size_t> global_pool_indices(const Shape& in) {
  std::vector<std::size_t> idx(shape_size(in));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

int pool_shift(const Shape& in, const LayerSpec& pool) {
  const std::size_t area = pool.kind == LayerKind::GlobalAvgPool ? in[1] * in[2]
                                                                 : pool.kernel_h * pool.kernel_w;
  return std::countr_zero(area);
}

}  // namespace sealedinfer
