#include "sealedinfer/graph.hpp"

#include <bit>
#include <cstring>
#include <set>

#include <json.hpp>

#include "sealedinfer/errors.hpp"

namespace sealedinfer {

using nlohmann::json;

namespace {

constexpr std::string_view kFormatName = "sealedinfer.graph";
constexpr int kFormatVersion = 1;

struct KindName {
  LayerKind kind;
  std::string_view name;
};

constexpr KindName kKindNames[] = {
    {LayerKind::Input, "Input"},
    {LayerKind::Dense, "Dense"},
    {LayerKind::Conv2D, "Conv2D"},
    {LayerKind::ReLU, "ReLU"},
    {LayerKind::MaxPool, "MaxPool"},
    {LayerKind::AvgPool, "AvgPool"},
    {LayerKind::GlobalAvgPool, "GlobalAvgPool"},
    {LayerKind::BatchNormFolded, "BatchNormFolded"},
    {LayerKind::Concat, "Concat"},
    {LayerKind::Flatten, "Flatten"},
    {LayerKind::Output, "Output"},
};

[[noreturn]] void fail_layer(const LayerSpec& layer, const std::string& msg) {
  throw ParseError("layer '" + layer.id + "' (" + std::string(to_string(layer.kind)) +
                   "): " + msg);
}

[[noreturn]] void fail_shape(const LayerSpec& layer, const std::string& msg) {
  throw ShapeError("layer '" + layer.id + "' (" + std::string(to_string(layer.kind)) +
                   "): " + msg);
}

void expect_inputs(const LayerSpec& layer, std::size_t n) {
  if (layer.inputs.size() != n) {
    fail_layer(layer, "expects " + std::to_string(n) + " input(s), got " +
                          std::to_string(layer.inputs.size()));
  }
}

const Shape& expect_chw(const LayerSpec& layer, const Shape& in) {
  if (in.size() != 3) fail_shape(layer, "expects a CxHxW input, got " + shape_to_string(in));
  return in;
}

Shape pooled_shape(const LayerSpec& layer, const Shape& in) {
  expect_chw(layer, in);
  if (layer.kernel_h == 0 || layer.kernel_w == 0 || layer.stride == 0) {
    fail_layer(layer, "window and stride must be positive");
  }
  if (layer.kernel_h > in[1] || layer.kernel_w > in[2]) {
    fail_shape(layer, "window larger than input " + shape_to_string(in));
  }
  return {in[0], conv_output_extent(in[1], layer.kernel_h, layer.stride, 0),
          conv_output_extent(in[2], layer.kernel_w, layer.stride, 0)};
}

Shape infer_shape(const LayerSpec& layer, const std::vector<const Shape*>& ins,
                  std::size_t output_width) {
  switch (layer.kind) {
    case LayerKind::Input:
      if (layer.shape.empty() || shape_size(layer.shape) == 0) {
        fail_layer(layer, "input shape must be non-empty with positive dims");
      }
      return layer.shape;
    case LayerKind::Dense: {
      const Shape& in = *ins[0];
      if (in.size() != 1) fail_shape(layer, "expects a flat input, got " + shape_to_string(in));
      if (layer.units == 0) fail_layer(layer, "out_features must be positive");
      return {layer.units};
    }
    case LayerKind::Conv2D: {
      const Shape& in = expect_chw(layer, *ins[0]);
      if (layer.units == 0 || layer.kernel_h == 0 || layer.kernel_w == 0 || layer.stride == 0) {
        fail_layer(layer, "out_channels, kernel and stride must be positive");
      }
      if (in[1] + 2 * layer.padding < layer.kernel_h ||
          in[2] + 2 * layer.padding < layer.kernel_w) {
        fail_shape(layer, "kernel larger than padded input " + shape_to_string(in));
      }
      return {layer.units, conv_output_extent(in[1], layer.kernel_h, layer.stride, layer.padding),
              conv_output_extent(in[2], layer.kernel_w, layer.stride, layer.padding)};
    }
    case LayerKind::ReLU:
    case LayerKind::BatchNormFolded:
      return *ins[0];
    case LayerKind::MaxPool:
      return pooled_shape(layer, *ins[0]);
    case LayerKind::AvgPool: {
      Shape out = pooled_shape(layer, *ins[0]);
      if (!std::has_single_bit(layer.kernel_h * layer.kernel_w)) {
        fail_layer(layer, "window area must be a power of two");
      }
      return out;
    }
    case LayerKind::GlobalAvgPool: {
      const Shape& in = expect_chw(layer, *ins[0]);
      if (!std::has_single_bit(in[1] * in[2])) {
        fail_shape(layer, "spatial area must be a power of two, got " + shape_to_string(in));
      }
      return {in[0]};
    }
    case LayerKind::Concat: {
      if (ins.size() < 2) fail_layer(layer, "expects at least two inputs");
      Shape out = *ins[0];
      for (std::size_t i = 1; i < ins.size(); ++i) {
        const Shape& s = *ins[i];
        if (s.size() != out.size() || !std::equal(s.begin() + 1, s.end(), out.begin() + 1)) {
          fail_shape(layer, "inputs disagree beyond the channel axis: " +
                                shape_to_string(out) + " vs " + shape_to_string(s));
        }
        out[0] += s[0];
      }
      return out;
    }
    case LayerKind::Flatten:
      return {shape_size(*ins[0])};
    case LayerKind::Output: {
      const Shape& in = *ins[0];
      if (in.size() != 1 || in[0] != output_width) {
        fail_shape(layer, "expects a flat input of width " + std::to_string(output_width) +
                              ", got " + shape_to_string(in));
      }
      return in;
    }
  }
  fail_layer(layer, "unknown kind");
}

// ---- JSON helpers ---------------------------------------------------------

std::size_t get_size(const json& obj, const char* key, const LayerSpec& layer) {
  const auto it = obj.find(key);
  if (it == obj.end()) fail_layer(layer, std::string("missing attribute '") + key + "'");
  if (!it->is_number_unsigned()) {
    fail_layer(layer, std::string("attribute '") + key + "' must be a non-negative integer");
  }
  return it->get<std::size_t>();
}

std::pair<std::size_t, std::size_t> get_pair(const json& obj, const char* key,
                                             const LayerSpec& layer) {
  const auto it = obj.find(key);
  if (it == obj.end()) fail_layer(layer, std::string("missing attribute '") + key + "'");
  if (it->is_number_unsigned()) return {it->get<std::size_t>(), it->get<std::size_t>()};
  if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number_unsigned() ||
      !(*it)[1].is_number_unsigned()) {
    fail_layer(layer, std::string("attribute '") + key + "' must be [h, w]");
  }
  return {(*it)[0].get<std::size_t>(), (*it)[1].get<std::size_t>()};
}

Shape get_shape(const json& value, const std::string& what) {
  if (!value.is_array()) throw ParseError(what + ": shape must be an array");
  Shape shape;
  for (const auto& d : value) {
    if (!d.is_number_unsigned()) throw ParseError(what + ": shape dims must be unsigned");
    shape.push_back(d.get<std::size_t>());
  }
  return shape;
}

std::set<std::string> allowed_keys(LayerKind kind) {
  std::set<std::string> keys{"id", "kind", "inputs"};
  switch (kind) {
    case LayerKind::Input:
      keys.insert("shape");
      break;
    case LayerKind::Dense:
      keys.insert("out_features");
      break;
    case LayerKind::Conv2D:
      keys.insert({"out_channels", "kernel", "stride", "padding"});
      break;
    case LayerKind::MaxPool:
    case LayerKind::AvgPool:
      keys.insert({"window", "stride"});
      break;
    default:
      break;
  }
  return keys;
}

LayerSpec layer_from_json(const json& obj, const std::string& previous_id) {
  if (!obj.is_object()) throw ParseError("layer entries must be objects");
  LayerSpec layer;
  if (!obj.contains("id") || !obj["id"].is_string()) throw ParseError("layer without string 'id'");
  layer.id = obj["id"].get<std::string>();
  if (!obj.contains("kind") || !obj["kind"].is_string()) {
    throw ParseError("layer '" + layer.id + "' without string 'kind'");
  }
  const auto kind = parse_layer_kind(obj["kind"].get<std::string>());
  if (!kind) {
    throw ParseError("layer '" + layer.id + "': unknown kind '" +
                     obj["kind"].get<std::string>() + "'");
  }
  layer.kind = *kind;
  const auto allowed = allowed_keys(layer.kind);
  for (const auto& item : obj.items()) {
    if (!allowed.contains(item.key())) fail_layer(layer, "unexpected attribute '" + item.key() + "'");
  }
  if (obj.contains("inputs")) {
    if (!obj["inputs"].is_array()) fail_layer(layer, "'inputs' must be an array");
    for (const auto& in : obj["inputs"]) {
      if (!in.is_string()) fail_layer(layer, "input ids must be strings");
      layer.inputs.push_back(in.get<std::string>());
    }
  } else if (layer.kind != LayerKind::Input && !previous_id.empty()) {
    layer.inputs.push_back(previous_id);
  }
  switch (layer.kind) {
    case LayerKind::Input:
      if (!obj.contains("shape")) fail_layer(layer, "missing attribute 'shape'");
      layer.shape = get_shape(obj["shape"], "layer '" + layer.id + "'");
      break;
    case LayerKind::Dense:
      layer.units = get_size(obj, "out_features", layer);
      break;
    case LayerKind::Conv2D: {
      layer.units = get_size(obj, "out_channels", layer);
      std::tie(layer.kernel_h, layer.kernel_w) = get_pair(obj, "kernel", layer);
      layer.stride = obj.contains("stride") ? get_size(obj, "stride", layer) : 1;
      layer.padding = obj.contains("padding") ? get_size(obj, "padding", layer) : 0;
      break;
    }
    case LayerKind::MaxPool:
    case LayerKind::AvgPool:
      std::tie(layer.kernel_h, layer.kernel_w) = get_pair(obj, "window", layer);
      layer.stride = obj.contains("stride") ? get_size(obj, "stride", layer) : layer.kernel_h;
      break;
    default:
      break;
  }
  return layer;
}

json layer_to_json(const LayerSpec& layer) {
  json obj;
  obj["id"] = layer.id;
  obj["kind"] = std::string(to_string(layer.kind));
  if (layer.kind != LayerKind::Input) obj["inputs"] = layer.inputs;
  switch (layer.kind) {
    case LayerKind::Input:
      obj["shape"] = layer.shape;
      break;
    case LayerKind::Dense:
      obj["out_features"] = layer.units;
      break;
    case LayerKind::Conv2D:
      obj["out_channels"] = layer.units;
      obj["kernel"] = {layer.kernel_h, layer.kernel_w};
      obj["stride"] = layer.stride;
      obj["padding"] = layer.padding;
      break;
    case LayerKind::MaxPool:
    case LayerKind::AvgPool:
      obj["window"] = {layer.kernel_h, layer.kernel_w};
      obj["stride"] = layer.stride;
      break;
    default:
      break;
  }
  return obj;
}

json graph_to_json(const ComputationGraph& graph) {
  json obj;
  obj["format"] = std::string(kFormatName);
  obj["version"] = kFormatVersion;
  obj["name"] = graph.name();
  obj["input_shape"] = graph.input_shape();
  obj["output_width"] = graph.output_width();
  json layers = json::array();
  for (const auto& layer : graph.layers()) layers.push_back(layer_to_json(layer));
  obj["layers"] = std::move(layers);
  return obj;
}

std::string encode_f32(const std::vector<double>& values) {
  ByteWriter w;
  w.reserve(values.size() * 4);
  for (double v : values) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    w.u32_le(bits);
  }
  return base64_encode(w.bytes());
}

std::vector<double> decode_f32(const std::string& text, std::size_t expected,
                               const std::string& what) {
  const Bytes raw = base64_decode(text);
  if (raw.size() != expected * 4) {
    throw ShapeError(what + ": payload holds " + std::to_string(raw.size() / 4) +
                     " float32 values, shape needs " + std::to_string(expected));
  }
  ByteReader r(raw);
  std::vector<double> out(expected);
  for (auto& v : out) {
    const std::uint32_t bits = r.u32_le();
    float f;
    std::memcpy(&f, &bits, 4);
    v = static_cast<double>(f);
  }
  return out;
}

std::string describe_parse_error(const json::parse_error& e, std::string_view text) {
  std::size_t line = 1, col = 1;
  const std::size_t limit = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
  for (std::size_t i = 0; i < limit; ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + e.what();
}

}  // namespace

std::string_view to_string(LayerKind kind) {
  for (const auto& kn : kKindNames) {
    if (kn.kind == kind) return kn.name;
  }
  return "?";
}

std::optional<LayerKind> parse_layer_kind(std::string_view name) {
  for (const auto& kn : kKindNames) {
    if (kn.name == name) return kn.kind;
  }
  return std::nullopt;
}

bool is_parameterized(LayerKind kind) {
  return kind == LayerKind::Dense || kind == LayerKind::Conv2D ||
         kind == LayerKind::BatchNormFolded;
}

std::string_view to_string(BundleRole role) {
  return role == BundleRole::Server ? "server" : "client";
}

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                               std::size_t padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

ComputationGraph ComputationGraph::build(std::string name, std::vector<LayerSpec> layers,
                                         std::size_t output_width) {
  ComputationGraph g;
  g.name_ = std::move(name);
  g.output_width_ = output_width;
  if (layers.empty()) throw ParseError("graph has no layers");
  if (output_width == 0) throw ParseError("output width must be positive");

  std::size_t n_inputs = 0, n_outputs = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& layer = layers[i];
    if (layer.id.empty()) throw ParseError("layer " + std::to_string(i) + " has an empty id");
    if (g.index_.contains(layer.id)) throw ParseError("duplicate layer id '" + layer.id + "'");

    std::vector<const Shape*> ins;
    for (const auto& in : layer.inputs) {
      const auto it = g.index_.find(in);
      if (it == g.index_.end()) {
        fail_layer(layer, "dangling reference to '" + in +
                              "' (inputs must name an earlier layer)");
      }
      if (layers[it->second].kind == LayerKind::Output) {
        fail_layer(layer, "cannot consume the Output layer");
      }
      ins.push_back(&g.shapes_[it->second]);
    }
    switch (layer.kind) {
      case LayerKind::Input:
        expect_inputs(layer, 0);
        ++n_inputs;
        g.input_shape_ = layer.shape;
        break;
      case LayerKind::Concat:
        break;
      default:
        expect_inputs(layer, 1);
    }
    if (layer.kind == LayerKind::Output) ++n_outputs;
    g.shapes_.push_back(infer_shape(layer, ins, output_width));
    g.index_.emplace(layer.id, i);
  }
  if (n_inputs != 1) throw ParseError("graph needs exactly one Input layer, found " + std::to_string(n_inputs));
  if (n_outputs != 1 || layers.back().kind != LayerKind::Output) {
    throw ParseError("graph needs exactly one Output layer, placed last");
  }
  g.layers_ = std::move(layers);
  return g;
}

std::size_t ComputationGraph::index_of(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw ParseError("unknown layer id '" + id + "'");
  return it->second;
}

const Shape& ComputationGraph::input_shape_of(std::size_t layer_index) const {
  return shapes_.at(index_of(layers_.at(layer_index).inputs.at(0)));
}

std::map<std::string, Shape> expected_weight_shapes(const ComputationGraph& graph,
                                                    std::size_t layer_index) {
  const LayerSpec& layer = graph.layers().at(layer_index);
  const Shape& in = graph.input_shape_of(layer_index);
  switch (layer.kind) {
    case LayerKind::Dense:
      return {{"kernel", {layer.units, in[0]}}, {"bias", {layer.units}}};
    case LayerKind::Conv2D:
      return {{"kernel", {layer.units, in[0], layer.kernel_h, layer.kernel_w}},
              {"bias", {layer.units}}};
    case LayerKind::BatchNormFolded:
      return {{"scale", {in[0]}}, {"shift", {in[0]}}};
    default:
      return {};
  }
}

void validate_weights(const ComputationGraph& graph, const WeightStore& weights) {
  std::size_t parameterized = 0;
  for (std::size_t i = 0; i < graph.layers().size(); ++i) {
    const LayerSpec& layer = graph.layers()[i];
    if (!is_parameterized(layer.kind)) {
      if (weights.contains(layer.id)) fail_layer(layer, "has weights but takes no parameters");
      continue;
    }
    ++parameterized;
    const auto it = weights.find(layer.id);
    if (it == weights.end()) fail_layer(layer, "missing weights");
    const auto expected = expected_weight_shapes(graph, i);
    if (it->second.size() != expected.size()) {
      fail_layer(layer, "expected " + std::to_string(expected.size()) + " weight tensors");
    }
    for (const auto& [name, shape] : expected) {
      const auto t = it->second.find(name);
      if (t == it->second.end()) fail_layer(layer, "missing weight tensor '" + name + "'");
      if (t->second.shape != shape) {
        fail_shape(layer, "weight '" + name + "' has shape " + shape_to_string(t->second.shape) +
                              ", expected " + shape_to_string(shape));
      }
      t->second.check();
    }
  }
  if (weights.size() != parameterized) {
    for (const auto& [id, _] : weights) graph.index_of(id);  // throws for unknown ids
  }
}

GraphBundle load_manifest(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("malformed manifest at " + describe_parse_error(e, text));
  }
  if (!doc.is_object()) throw ParseError("manifest must be a JSON object");
  if (doc.value("format", std::string{}) != kFormatName) {
    throw ParseError("manifest 'format' must be \"" + std::string(kFormatName) + "\"");
  }
  if (!doc.contains("version") || !doc["version"].is_number_integer() ||
      doc["version"].get<int>() != kFormatVersion) {
    throw ParseError("unsupported manifest version (expected " + std::to_string(kFormatVersion) + ")");
  }
  static const std::set<std::string> top_keys{"format", "version", "name", "role",
                                              "input_shape", "output_width", "layers", "weights"};
  for (const auto& item : doc.items()) {
    if (!top_keys.contains(item.key())) throw ParseError("unexpected manifest key '" + item.key() + "'");
  }
  if (!doc.contains("layers") || !doc["layers"].is_array()) throw ParseError("manifest needs a 'layers' array");
  if (!doc.contains("output_width") || !doc["output_width"].is_number_unsigned()) {
    throw ParseError("manifest needs an unsigned 'output_width'");
  }

  std::vector<LayerSpec> layers;
  for (const auto& entry : doc["layers"]) {
    layers.push_back(layer_from_json(entry, layers.empty() ? std::string{} : layers.back().id));
  }
  GraphBundle bundle{
      ComputationGraph::build(doc.value("name", std::string{"model"}), std::move(layers),
                              doc["output_width"].get<std::size_t>()),
      {}, BundleRole::Server};
  if (doc.contains("input_shape") &&
      get_shape(doc["input_shape"], "input_shape") != bundle.graph.input_shape()) {
    throw ShapeError("declared input_shape " +
                     shape_to_string(get_shape(doc["input_shape"], "input_shape")) +
                     " disagrees with the Input layer " + shape_to_string(bundle.graph.input_shape()));
  }

  const std::string role = doc.value("role", std::string{doc.contains("weights") ? "server" : "client"});
  if (role != "server" && role != "client") throw ParseError("role must be 'server' or 'client'");
  bundle.role = role == "server" ? BundleRole::Server : BundleRole::Client;

  if (doc.contains("weights")) {
    if (bundle.role == BundleRole::Client) throw ParseError("client bundle carries a weight section");
    const json& ws = doc["weights"];
    if (!ws.is_object()) throw ParseError("'weights' must be an object keyed by layer id");
    for (const auto& [layer_id, tensors] : ws.items()) {
      if (!tensors.is_object()) throw ParseError("weights of '" + layer_id + "' must be an object");
      LayerWeights lw;
      for (const auto& [name, t] : tensors.items()) {
        const std::string what = "weight '" + layer_id + "." + name + "'";
        if (!t.is_object() || !t.contains("shape") || !t.contains("data") || !t["data"].is_string()) {
          throw ParseError(what + " needs 'shape' and base64 'data'");
        }
        Shape shape = get_shape(t["shape"], what);
        auto data = decode_f32(t["data"].get<std::string>(), shape_size(shape), what);
        lw.emplace(name, FloatTensor(std::move(shape), std::move(data)));
      }
      bundle.weights.emplace(layer_id, std::move(lw));
    }
  }
  if (bundle.role == BundleRole::Server) validate_weights(bundle.graph, bundle.weights);
  return bundle;
}

GraphBundle load_manifest(std::span<const std::uint8_t> bytes) {
  return load_manifest(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

GraphBundle load_bundle_file(const std::string& path) {
  const Bytes bytes = read_file(path);
  try {
    return load_manifest(bytes);
  } catch (const ShapeError& e) {
    throw ShapeError(path + ": " + e.what());
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::string save_manifest(const GraphBundle& bundle) {
  json doc = graph_to_json(bundle.graph);
  doc["role"] = std::string(to_string(bundle.role));
  if (bundle.role == BundleRole::Server || !bundle.weights.empty()) {
    json ws = json::object();
    for (const auto& [layer_id, tensors] : bundle.weights) {
      json lw = json::object();
      for (const auto& [name, t] : tensors) {
        lw[name] = {{"shape", t.shape}, {"data", encode_f32(t.data)}};
      }
      ws[layer_id] = std::move(lw);
    }
    doc["weights"] = std::move(ws);
  }
  return doc.dump(1) + "\n";
}

std::string graph_hash(const ComputationGraph& graph) {
  return sha256_hex(graph_to_json(graph).dump());
}

std::string bundle_hash(const GraphBundle& bundle) { return sha256_hex(save_manifest(bundle)); }

GraphBundle strip_weights(const GraphBundle& bundle) {
  return GraphBundle{bundle.graph, {}, BundleRole::Client};
}

bool verify_stripped(const GraphBundle& bundle) { return bundle.weights.empty(); }

}  // namespace sealedinfer
