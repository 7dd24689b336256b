#pragma once

// Portable description of a layered CNN classifier and its parameters.
//
// A manifest is a canonical JSON document (sorted keys) holding the layer
// list, the declared input shape and output width, and optionally a weight
// section of base64 little-endian float32 tensors keyed by layer id. The
// same document format is used for server bundles (with weights) and client
// bundles (weights stripped).

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sealedinfer/bytes.hpp"
#include "sealedinfer/ring.hpp"

namespace sealedinfer {

enum class LayerKind {
  Input,
  Dense,
  Conv2D,
  ReLU,
  MaxPool,
  AvgPool,
  GlobalAvgPool,
  BatchNormFolded,
  Concat,
  Flatten,
  Output,
};

std::string_view to_string(LayerKind kind);
std::optional<LayerKind> parse_layer_kind(std::string_view name);
bool is_parameterized(LayerKind kind);

struct LayerSpec {
  std::string id;
  LayerKind kind = LayerKind::Input;
  std::vector<std::string> inputs;

  Shape shape;               // Input only
  std::size_t units = 0;     // Dense: out features; Conv2D: out channels
  std::size_t kernel_h = 0;  // Conv2D kernel or pooling window
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;   // Conv2D zero padding

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Validated, topologically ordered DAG with resolved shapes. Immutable once
// built.
class ComputationGraph {
 public:
  // Throws ParseError for structural problems (dangling or forward
  // references, duplicate ids, missing Input/Output) and ShapeError when
  // shape inference fails.
  static ComputationGraph build(std::string name, std::vector<LayerSpec> layers,
                                std::size_t output_width);

  const std::string& name() const noexcept { return name_; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  const Shape& input_shape() const noexcept { return input_shape_; }
  std::size_t output_width() const noexcept { return output_width_; }

  const Shape& shape_of(std::size_t layer_index) const { return shapes_.at(layer_index); }
  std::size_t index_of(const std::string& id) const;
  const LayerSpec& layer(const std::string& id) const { return layers_[index_of(id)]; }

  // Input shape of each Conv2D/Dense input, i.e. shape of inputs[0].
  const Shape& input_shape_of(std::size_t layer_index) const;

  friend bool operator==(const ComputationGraph& a, const ComputationGraph& b) {
    return a.name_ == b.name_ && a.layers_ == b.layers_ &&
           a.output_width_ == b.output_width_;
  }

 private:
  std::string name_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> shapes_;
  std::map<std::string, std::size_t> index_;
  Shape input_shape_;
  std::size_t output_width_ = 0;
};

// Output shape per conv formula floor((in + 2p - kernel) / stride) + 1.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               std::size_t stride, std::size_t padding);

// Named parameter tensors of one layer: "kernel"/"bias" for Dense and Conv2D,
// "scale"/"shift" for BatchNormFolded.
using LayerWeights = std::map<std::string, FloatTensor>;
using WeightStore = std::map<std::string, LayerWeights>;

// Expected parameter shapes for a parameterized layer.
std::map<std::string, Shape> expected_weight_shapes(const ComputationGraph& graph,
                                                    std::size_t layer_index);

// Throws ShapeError/ParseError unless the store holds exactly the
// parameterized layers with matching tensor shapes.
void validate_weights(const ComputationGraph& graph, const WeightStore& weights);

enum class BundleRole { Server, Client };

std::string_view to_string(BundleRole role);

struct GraphBundle {
  ComputationGraph graph;
  WeightStore weights;
  BundleRole role = BundleRole::Server;
};

GraphBundle load_manifest(std::span<const std::uint8_t> bytes);
GraphBundle load_manifest(std::string_view text);
GraphBundle load_bundle_file(const std::string& path);

// Canonical, byte-stable serialization. Client bundles have no "weights" key.
std::string save_manifest(const GraphBundle& bundle);

// SHA-256 over the canonical graph section only; identical for a server
// bundle and its stripped client bundle.
std::string graph_hash(const ComputationGraph& graph);
std::string bundle_hash(const GraphBundle& bundle);

GraphBundle strip_weights(const GraphBundle& bundle);
bool verify_stripped(const GraphBundle& bundle);

// Key that marks the weight payload section in serialized bundles.
inline constexpr std::string_view kWeightSectionKey = "\"weights\"";

}  // namespace sealedinfer
