#include "sealedinfer/synth.hpp"

#include <algorithm>
#include <cmath>

#include "sealedinfer/errors.hpp"
#include "sealedinfer/evaluate.hpp"

namespace sealedinfer {

namespace {

std::size_t pick(Prg& prg, std::size_t lo, std::size_t hi) { return lo + prg.uniform(hi - lo + 1); }

LayerSpec make(std::string id, LayerKind kind, std::vector<std::string> inputs) {
  LayerSpec l;
  l.id = std::move(id);
  l.kind = kind;
  l.inputs = std::move(inputs);
  return l;
}

}  // namespace

WeightStore random_weights(const ComputationGraph& graph, Prg& prg, double gain) {
  WeightStore ws;
  for (std::size_t li = 0; li < graph.layers().size(); ++li) {
    const LayerSpec& layer = graph.layers()[li];
    if (!is_parameterized(layer.kind)) continue;
    LayerWeights lw;
    for (const auto& [name, shape] : expected_weight_shapes(graph, li)) {
      FloatTensor t(shape);
      double scale = 0.1;
      if (name == "kernel") {
        const std::size_t fan_in = shape_size(shape) / shape[0];
        scale = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
      }
      for (auto& v : t.data) {
        const double u = 2.0 * prg.uniform_real() - 1.0;
        if (name == "scale") {
          v = 0.5 + 0.5 * prg.uniform_real();
        } else {
          v = u * scale;
        }
      }
      lw.emplace(name, std::move(t));
    }
    ws.emplace(layer.id, std::move(lw));
  }
  return ws;
}

FloatTensor random_input(const Shape& shape, Prg& prg, double amplitude) {
  FloatTensor t(shape);
  for (auto& v : t.data) v = amplitude * (2.0 * prg.uniform_real() - 1.0);
  return t;
}

GraphBundle random_bundle(Prg& prg, const RandomGraphOptions& opts) {
  std::vector<LayerSpec> layers;
  const std::size_t c = pick(prg, 1, std::min<std::size_t>(3, opts.max_channels));
  std::size_t h = pick(prg, 2, opts.max_extent / 2) * 2;
  std::size_t w = pick(prg, 2, opts.max_extent / 2) * 2;
  LayerSpec in = make("input", LayerKind::Input, {});
  in.shape = {c, h, w};
  layers.push_back(in);
  std::string prev = "input";
  bool spatial = true;
  const std::size_t body = pick(prg, 1, opts.max_layers - 1);  // the final Dense is one more
  int serial = 0;
  auto fresh = [&](const char* stem) { return std::string(stem) + std::to_string(++serial); };

  for (std::size_t i = 0; i < body; ++i) {
    if (!spatial) {
      // After flattening only Dense/ReLU/BN-free ops make sense.
      LayerSpec l = prg.bit() ? make(fresh("dense"), LayerKind::Dense, {prev})
                              : make(fresh("relu"), LayerKind::ReLU, {prev});
      if (l.kind == LayerKind::Dense) l.units = pick(prg, 1, opts.max_channels);
      layers.push_back(l);
      prev = l.id;
      continue;
    }
    const std::size_t choice = prg.uniform(opts.allow_concat ? 8 : 7);
    if (choice <= 1) {
      LayerSpec l = make(fresh("conv"), LayerKind::Conv2D, {prev});
      l.units = pick(prg, 1, opts.max_channels);
      const bool three = prg.bit() && h >= 3 && w >= 3;
      l.kernel_h = l.kernel_w = three ? 3 : 1;
      l.padding = three && prg.bit() ? 1 : 0;
      l.stride = 1;
      h = conv_output_extent(h, l.kernel_h, 1, l.padding);
      w = conv_output_extent(w, l.kernel_w, 1, l.padding);
      layers.push_back(l);
      prev = l.id;
    } else if (choice == 2) {
      LayerSpec l = make(fresh("relu"), LayerKind::ReLU, {prev});
      layers.push_back(l);
      prev = l.id;
    } else if (choice == 3 || choice == 4) {
      if (h < 2 || w < 2) {
        --i;
        continue;
      }
      LayerSpec l = make(fresh("pool"), choice == 3 ? LayerKind::MaxPool : LayerKind::AvgPool, {prev});
      l.kernel_h = l.kernel_w = 2;
      l.stride = 2;
      h /= 2;
      w /= 2;
      layers.push_back(l);
      prev = l.id;
    } else if (choice == 5) {
      LayerSpec l = make(fresh("bn"), LayerKind::BatchNormFolded, {prev});
      layers.push_back(l);
      prev = l.id;
    } else if (choice == 6) {
      const bool gap = prg.bit() && (((h * w) & (h * w - 1)) == 0);
      LayerSpec l = make(fresh(gap ? "gap" : "flat"), gap ? LayerKind::GlobalAvgPool : LayerKind::Flatten, {prev});
      layers.push_back(l);
      prev = l.id;
      spatial = false;
    } else {
      // Two 1x1 branches joined along channels.
      if (i + 2 >= body) continue;
      LayerSpec a = make(fresh("conv"), LayerKind::Conv2D, {prev});
      LayerSpec b = make(fresh("conv"), LayerKind::Conv2D, {prev});
      a.units = pick(prg, 1, opts.max_channels / 2);
      b.units = pick(prg, 1, opts.max_channels / 2);
      a.kernel_h = a.kernel_w = b.kernel_h = b.kernel_w = 1;
      LayerSpec cat = make(fresh("cat"), LayerKind::Concat, {a.id, b.id});
      layers.push_back(a);
      layers.push_back(b);
      layers.push_back(cat);
      prev = cat.id;
      i += 2;
    }
  }
  if (spatial) {
    layers.push_back(make("flatten", LayerKind::Flatten, {prev}));
    prev = "flatten";
  }
  LayerSpec head = make("head", LayerKind::Dense, {prev});
  head.units = opts.output_width;
  layers.push_back(head);
  layers.push_back(make("output", LayerKind::Output, {"head"}));
  auto graph = ComputationGraph::build("random", std::move(layers), opts.output_width);
  WeightStore ws = random_weights(graph, prg);
  return GraphBundle{std::move(graph), std::move(ws), BundleRole::Server};
}

GraphBundle mini_cnn(Prg& prg, std::size_t classes) {
  std::vector<LayerSpec> layers;
  LayerSpec in = make("input", LayerKind::Input, {});
  in.shape = {1, 8, 8};
  layers.push_back(in);
  LayerSpec c1 = make("conv1", LayerKind::Conv2D, {"input"});
  c1.units = 4;
  c1.kernel_h = c1.kernel_w = 3;
  c1.padding = 1;
  layers.push_back(c1);
  layers.push_back(make("relu1", LayerKind::ReLU, {"conv1"}));
  LayerSpec p1 = make("pool1", LayerKind::MaxPool, {"relu1"});
  p1.kernel_h = p1.kernel_w = 2;
  p1.stride = 2;
  layers.push_back(p1);
  LayerSpec c2 = make("conv2", LayerKind::Conv2D, {"pool1"});
  c2.units = 8;
  c2.kernel_h = c2.kernel_w = 3;
  c2.padding = 1;
  layers.push_back(c2);
  layers.push_back(make("bn2", LayerKind::BatchNormFolded, {"conv2"}));
  layers.push_back(make("relu2", LayerKind::ReLU, {"bn2"}));
  layers.push_back(make("gap", LayerKind::GlobalAvgPool, {"relu2"}));
  LayerSpec fc = make("fc", LayerKind::Dense, {"gap"});
  fc.units = classes;
  layers.push_back(fc);
  layers.push_back(make("output", LayerKind::Output, {"fc"}));
  auto graph = ComputationGraph::build("mini-cnn", std::move(layers), classes);
  WeightStore ws = random_weights(graph, prg, 1.5);
  return GraphBundle{std::move(graph), std::move(ws), BundleRole::Server};
}

SyntheticDataset synthetic_dataset(const GraphBundle& bundle, std::size_t images, Prg& prg, double noise,
                                   double amplitude) {
  if (images < 2) throw ConfigError("a labelled dataset needs at least two images");
  const ComputationGraph& g = bundle.graph;
  SyntheticDataset ds;
  const std::size_t classes = g.output_width();
  for (std::size_t c = 0; c < classes; ++c) ds.classes.push_back("class" + std::to_string(c));
  std::vector<std::vector<double>> z(images);
  for (std::size_t i = 0; i < images; ++i) {
    ds.names.push_back("img" + std::string(i < 10 ? "000" : i < 100 ? "00" : i < 1000 ? "0" : "") + std::to_string(i));
    ds.inputs.push_back(random_input(g.input_shape(), prg, amplitude));
    z[i] = eval_float(g, bundle.weights, ds.inputs.back());
    for (auto& v : z[i]) v += noise * prg.normal();
  }
  ds.labels.assign(images, std::vector<int>(classes, 0));
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<double> col(images);
    for (std::size_t i = 0; i < images; ++i) col[i] = z[i][c];
    std::vector<double> sorted = col;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(images / 2), sorted.end());
    const double median = sorted[images / 2];
    for (std::size_t i = 0; i < images; ++i) ds.labels[i][c] = col[i] >= median ? 1 : 0;
  }
  return ds;
}

}  // namespace sealedinfer
