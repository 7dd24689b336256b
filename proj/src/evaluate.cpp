#include "sealedinfer/evaluate.hpp"

#include <algorithm>
#include <cmath>

#include "sealedinfer/errors.hpp"
#include "sealedinfer/layer_ops.hpp"

namespace sealedinfer {

namespace {

const LayerWeights& weights_of(const WeightStore& weights, const LayerSpec& layer) {
  const auto it = weights.find(layer.id);
  if (it == weights.end()) throw ShapeError("no weights for layer '" + layer.id + "'");
  return it->second;
}

const FloatTensor& tensor_of(const LayerWeights& lw, const std::string& name,
                             const LayerSpec& layer) {
  const auto it = lw.find(name);
  if (it == lw.end()) throw ShapeError("layer '" + layer.id + "' lacks weight '" + name + "'");
  return it->second;
}

void check_input(const ComputationGraph& graph, const Shape& shape) {
  if (shape != graph.input_shape()) {
    throw ShapeError("input shape " + shape_to_string(shape) + " does not match declared " +
                     shape_to_string(graph.input_shape()));
  }
}

template <typename T>
Tensor<T> concat(const ComputationGraph& graph, const LayerSpec& layer,
                 const std::vector<Tensor<T>>& values, const Shape& out_shape) {
  Tensor<T> out(out_shape);
  std::size_t pos = 0;
  for (const auto& id : layer.inputs) {
    const auto& src = values[graph.index_of(id)].data;
    std::copy(src.begin(), src.end(), out.data.begin() + static_cast<std::ptrdiff_t>(pos));
    pos += src.size();
  }
  return out;
}

}  // namespace

std::vector<double> eval_float(const ComputationGraph& graph, const WeightStore& weights,
                               const FloatTensor& input) {
  check_input(graph, input.shape);
  input.check();
  std::vector<FloatTensor> values(graph.layers().size());
  for (std::size_t li = 0; li < graph.layers().size(); ++li) {
    const LayerSpec& layer = graph.layers()[li];
    const Shape& out_shape = graph.shape_of(li);
    if (layer.kind == LayerKind::Input) {
      values[li] = input;
      continue;
    }
    if (layer.kind == LayerKind::Concat) {
      values[li] = concat(graph, layer, values, out_shape);
      continue;
    }
    const FloatTensor& x = values[graph.index_of(layer.inputs[0])];
    FloatTensor y(out_shape);
    switch (layer.kind) {
      case LayerKind::Dense: {
        const auto& lw = weights_of(weights, layer);
        const auto& k = tensor_of(lw, "kernel", layer);
        const auto& b = tensor_of(lw, "bias", layer);
        const std::size_t n = x.size();
        for (std::size_t o = 0; o < layer.units; ++o) {
          double acc = b.data[o];
          for (std::size_t i = 0; i < n; ++i) acc += k.data[o * n + i] * x.data[i];
          y.data[o] = acc;
        }
        break;
      }
      case LayerKind::Conv2D: {
        const auto& lw = weights_of(weights, layer);
        const auto& k = tensor_of(lw, "kernel", layer);
        const auto& b = tensor_of(lw, "bias", layer);
        const auto patches = conv_patch_indices(x.shape, layer);
        const std::size_t cols = out_shape[1] * out_shape[2];
        const std::size_t rows = patches.size() / cols;
        for (std::size_t o = 0; o < layer.units; ++o) {
          for (std::size_t p = 0; p < cols; ++p) {
            double acc = b.data[o];
            for (std::size_t q = 0; q < rows; ++q) {
              const std::size_t src = patches[q * cols + p];
              if (src != kPaddingIndex) acc += k.data[o * rows + q] * x.data[src];
            }
            y.data[o * cols + p] = acc;
          }
        }
        break;
      }
      case LayerKind::ReLU:
        for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = std::max(0.0, x.data[i]);
        break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool: {
        const auto windows = pool_window_indices(x.shape, layer);
        const std::size_t width = layer.kernel_h * layer.kernel_w;
        for (std::size_t o = 0; o < y.size(); ++o) {
          double acc = layer.kind == LayerKind::MaxPool ? -INFINITY : 0.0;
          for (std::size_t j = 0; j < width; ++j) {
            const double v = x.data[windows[o * width + j]];
            acc = layer.kind == LayerKind::MaxPool ? std::max(acc, v) : acc + v;
          }
          y.data[o] = layer.kind == LayerKind::MaxPool ? acc : acc / static_cast<double>(width);
        }
        break;
      }
      case LayerKind::GlobalAvgPool: {
        const std::size_t area = x.shape[1] * x.shape[2];
        for (std::size_t c = 0; c < x.shape[0]; ++c) {
          double acc = 0.0;
          for (std::size_t j = 0; j < area; ++j) acc += x.data[c * area + j];
          y.data[c] = acc / static_cast<double>(area);
        }
        break;
      }
      case LayerKind::BatchNormFolded: {
        const auto& lw = weights_of(weights, layer);
        const auto& scale = tensor_of(lw, "scale", layer);
        const auto& shift = tensor_of(lw, "shift", layer);
        const std::size_t block = x.size() / x.shape[0];
        for (std::size_t i = 0; i < x.size(); ++i) {
          y.data[i] = scale.data[i / block] * x.data[i] + shift.data[i / block];
        }
        break;
      }
      case LayerKind::Flatten:
      case LayerKind::Output:
        y.data = x.data;
        break;
      case LayerKind::Input:
      case LayerKind::Concat:
        break;
    }
    values[li] = std::move(y);
  }
  return values.back().data;
}

EncodedLayer encode_layer(const ComputationGraph& graph, const WeightStore& weights,
                          std::size_t layer_index, const FixedPointConfig& cfg) {
  const LayerSpec& layer = graph.layers().at(layer_index);
  const auto& lw = weights_of(weights, layer);
  EncodedLayer enc;
  const bool is_bn = layer.kind == LayerKind::BatchNormFolded;
  const auto& k = tensor_of(lw, is_bn ? "scale" : "kernel", layer);
  const auto& b = tensor_of(lw, is_bn ? "shift" : "bias", layer);
  enc.kernel.reserve(k.size());
  for (double v : k.data) enc.kernel.push_back(fx_encode(v, cfg));
  enc.bias.reserve(b.size());
  for (double v : b.data) enc.bias.push_back(ring_reduce(fx_encode(v, cfg) << cfg.frac_bits_f, cfg));
  enc.rows = b.size();
  enc.cols = k.size() / b.size();
  return enc;
}

std::vector<RingElement> eval_fixed(const ComputationGraph& graph, const WeightStore& weights,
                                    const FloatTensor& input, const FixedPointConfig& cfg) {
  check_input(graph, input.shape);
  return eval_fixed_encoded(graph, weights, encode_tensor(input, cfg), cfg);
}

std::vector<RingElement> eval_fixed_encoded(const ComputationGraph& graph,
                                            const WeightStore& weights, const PlainTensor& input,
                                            const FixedPointConfig& cfg) {
  check_input(graph, input.shape);
  input.check();
  const int f = cfg.frac_bits_f;
  const auto ring_max = [&cfg](const std::vector<RingElement>& a,
                               const std::vector<RingElement>& b) {
    // max(a, b) = b + [signed(a - b) >= 0] * (a - b), as in the secure pool.
    std::vector<RingElement> m(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      const RingElement d = ring_sub(a[i], b[i], cfg);
      m[i] = ring_msb(d, cfg) ? b[i] : ring_add(b[i], d, cfg);
    }
    return m;
  };

  std::vector<PlainTensor> values(graph.layers().size());
  for (std::size_t li = 0; li < graph.layers().size(); ++li) {
    const LayerSpec& layer = graph.layers()[li];
    const Shape& out_shape = graph.shape_of(li);
    if (layer.kind == LayerKind::Input) {
      values[li] = input;
      continue;
    }
    if (layer.kind == LayerKind::Concat) {
      values[li] = concat(graph, layer, values, out_shape);
      continue;
    }
    const PlainTensor& x = values[graph.index_of(layer.inputs[0])];
    PlainTensor y(out_shape);
    switch (layer.kind) {
      case LayerKind::Dense:
      case LayerKind::Conv2D: {
        const EncodedLayer enc = encode_layer(graph, weights, li, cfg);
        std::vector<RingElement> rhs;
        std::size_t cols = 1;
        if (layer.kind == LayerKind::Dense) {
          rhs = x.data;
        } else {
          const auto patches = conv_patch_indices(x.shape, layer);
          cols = out_shape[1] * out_shape[2];
          rhs.resize(patches.size());
          for (std::size_t i = 0; i < patches.size(); ++i) {
            rhs[i] = patches[i] == kPaddingIndex ? 0 : x.data[patches[i]];
          }
        }
        auto acc = ring_matmul(enc.kernel, rhs, enc.rows, enc.cols, cols, cfg);
        for (std::size_t o = 0; o < enc.rows; ++o) {
          for (std::size_t p = 0; p < cols; ++p) {
            y.data[o * cols + p] = trunc_floor(ring_add(acc[o * cols + p], enc.bias[o], cfg), f, cfg);
          }
        }
        break;
      }
      case LayerKind::BatchNormFolded: {
        const EncodedLayer enc = encode_layer(graph, weights, li, cfg);
        const std::size_t block = x.size() / x.shape[0];
        for (std::size_t i = 0; i < x.size(); ++i) {
          const RingElement acc =
              ring_add(ring_mul(enc.kernel[i / block], x.data[i], cfg), enc.bias[i / block], cfg);
          y.data[i] = trunc_floor(acc, f, cfg);
        }
        break;
      }
      case LayerKind::ReLU:
        for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = ring_msb(x.data[i], cfg) ? 0 : x.data[i];
        break;
      case LayerKind::MaxPool: {
        const auto windows = pool_window_indices(x.shape, layer);
        std::vector<RingElement> gathered(windows.size());
        for (std::size_t i = 0; i < windows.size(); ++i) gathered[i] = x.data[windows[i]];
        y.data = tournament_max(std::move(gathered), y.size(), layer.kernel_h * layer.kernel_w,
                                ring_max);
        break;
      }
      case LayerKind::AvgPool:
      case LayerKind::GlobalAvgPool: {
        const auto windows = layer.kind == LayerKind::AvgPool ? pool_window_indices(x.shape, layer)
                                                              : global_pool_indices(x.shape);
        const std::size_t width = windows.size() / y.size();
        const int shift = pool_shift(x.shape, layer);
        for (std::size_t o = 0; o < y.size(); ++o) {
          RingElement acc = 0;
          for (std::size_t j = 0; j < width; ++j) acc += x.data[windows[o * width + j]];
          y.data[o] = trunc_floor(ring_reduce(acc, cfg), shift, cfg);
        }
        break;
      }
      case LayerKind::Flatten:
      case LayerKind::Output:
        y.data = x.data;
        break;
      case LayerKind::Input:
      case LayerKind::Concat:
        break;
    }
    values[li] = std::move(y);
  }
  return values.back().data;
}

std::vector<double> aggregate_views(const std::vector<std::vector<double>>& logits_per_view) {
  if (logits_per_view.empty()) throw ShapeError("aggregate_views needs at least one view");
  std::vector<double> out = logits_per_view.front();
  for (const auto& view : logits_per_view) {
    if (view.size() != out.size()) throw ShapeError("views have different output widths");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], view[i]);
  }
  return out;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<double> sigmoid(const std::vector<double>& logits) {
  std::vector<double> out(logits.size());
  std::transform(logits.begin(), logits.end(), out.begin(), [](double z) { return sigmoid(z); });
  return out;
}

std::size_t truncation_depth(const ComputationGraph& graph) {
  std::vector<std::size_t> depth(graph.layers().size(), 0);
  for (std::size_t li = 0; li < graph.layers().size(); ++li) {
    const LayerSpec& layer = graph.layers()[li];
    std::size_t d = 0;
    for (const auto& in : layer.inputs) d = std::max(d, depth[graph.index_of(in)]);
    const bool truncates = is_parameterized(layer.kind) || layer.kind == LayerKind::AvgPool ||
                           layer.kind == LayerKind::GlobalAvgPool;
    depth[li] = d + (truncates ? 1 : 0);
  }
  return depth.back();
}

}  // namespace sealedinfer
