#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "sealedinfer/errors.hpp"
#include "sealedinfer/evaluate.hpp"
#include "sealedinfer/graph.hpp"
#include "sealedinfer/synth.hpp"

using namespace sealedinfer;

namespace {

LayerSpec layer(std::string id, LayerKind kind, std::vector<std::string> inputs = {}) {
  LayerSpec l;
  l.id = std::move(id);
  l.kind = kind;
  l.inputs = std::move(inputs);
  return l;
}

const char* kMinimal = R"({
  "format": "sealedinfer.graph", "version": 1, "name": "tiny", "output_width": 2,
  "layers": [
    {"id": "x", "kind": "Input", "shape": [1, 4, 4]},
    {"id": "flat", "kind": "Flatten"},
    {"id": "fc", "kind": "Dense", "out_features": 2},
    {"id": "y", "kind": "Output"}
  ]
})";

GraphBundle identity_conv_bundle(std::size_t c, std::size_t h, std::size_t w) {
  LayerSpec in = layer("x", LayerKind::Input);
  in.shape = {c, h, w};
  LayerSpec conv = layer("conv", LayerKind::Conv2D, {"x"});
  conv.units = c;
  conv.kernel_h = conv.kernel_w = 1;
  std::vector<LayerSpec> ls{in, conv, layer("flat", LayerKind::Flatten, {"conv"}),
                            layer("y", LayerKind::Output, {"flat"})};
  GraphBundle b{ComputationGraph::build("id", ls, c * h * w), {}, BundleRole::Server};
  FloatTensor k(Shape{c, c, 1, 1});
  for (std::size_t i = 0; i < c; ++i) k.data[i * c + i] = 1.0;
  b.weights["conv"] = {{"kernel", k}, {"bias", FloatTensor(Shape{c})}};
  return b;
}

// Direct nested-loop forward pass, independent of the library evaluator.
std::vector<double> brute_force(const ComputationGraph& g, const WeightStore& ws, const FloatTensor& input) {
  std::map<std::string, FloatTensor> env;
  for (std::size_t li = 0; li < g.layers().size(); ++li) {
    const LayerSpec& l = g.layers()[li];
    const Shape out_shape = g.shape_of(li);
    FloatTensor out(out_shape);
    const auto in = [&](std::size_t i) -> const FloatTensor& { return env.at(l.inputs.at(i)); };
    switch (l.kind) {
      case LayerKind::Input:
        out = input;
        break;
      case LayerKind::Dense: {
        const auto& W = ws.at(l.id).at("kernel");
        const auto& b = ws.at(l.id).at("bias");
        const std::size_t n = in(0).size();
        for (std::size_t o = 0; o < l.units; ++o) {
          double acc = b.data[o];
          for (std::size_t i = 0; i < n; ++i) acc += W.data[o * n + i] * in(0).data[i];
          out.data[o] = acc;
        }
        break;
      }
      case LayerKind::Conv2D: {
        const auto& K = ws.at(l.id).at("kernel");
        const auto& b = ws.at(l.id).at("bias");
        const Shape& s = in(0).shape;
        const long C = static_cast<long>(s[0]), H = static_cast<long>(s[1]), W = static_cast<long>(s[2]);
        const long OH = static_cast<long>(out_shape[1]), OW = static_cast<long>(out_shape[2]);
        const long kh = static_cast<long>(l.kernel_h), kw = static_cast<long>(l.kernel_w);
        const long st = static_cast<long>(l.stride), pad = static_cast<long>(l.padding);
        for (long o = 0; o < static_cast<long>(l.units); ++o)
          for (long y = 0; y < OH; ++y)
            for (long x = 0; x < OW; ++x) {
              double acc = b.data[o];
              for (long c = 0; c < C; ++c)
                for (long dy = 0; dy < kh; ++dy)
                  for (long dx = 0; dx < kw; ++dx) {
                    const long iy = y * st + dy - pad, ix = x * st + dx - pad;
                    if (iy < 0 || ix < 0 || iy >= H || ix >= W) continue;
                    acc += K.data[((o * C + c) * kh + dy) * kw + dx] * in(0).data[(c * H + iy) * W + ix];
                  }
              out.data[(o * OH + y) * OW + x] = acc;
            }
        break;
      }
      case LayerKind::ReLU:
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = std::max(0.0, in(0).data[i]);
        break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool: {
        const Shape& s = in(0).shape;
        const std::size_t H = s[1], W = s[2], OH = out_shape[1], OW = out_shape[2];
        for (std::size_t c = 0; c < s[0]; ++c)
          for (std::size_t y = 0; y < OH; ++y)
            for (std::size_t x = 0; x < OW; ++x) {
              double m = -1e300, sum = 0.0;
              for (std::size_t dy = 0; dy < l.kernel_h; ++dy)
                for (std::size_t dx = 0; dx < l.kernel_w; ++dx) {
                  const double v = in(0).data[(c * H + y * l.stride + dy) * W + x * l.stride + dx];
                  m = std::max(m, v);
                  sum += v;
                }
              out.data[(c * OH + y) * OW + x] =
                  l.kind == LayerKind::MaxPool ? m : sum / static_cast<double>(l.kernel_h * l.kernel_w);
            }
        break;
      }
      case LayerKind::GlobalAvgPool: {
        const Shape& s = in(0).shape;
        const std::size_t area = s[1] * s[2];
        for (std::size_t c = 0; c < s[0]; ++c) {
          double sum = 0.0;
          for (std::size_t i = 0; i < area; ++i) sum += in(0).data[c * area + i];
          out.data[c] = sum / static_cast<double>(area);
        }
        break;
      }
      case LayerKind::BatchNormFolded: {
        const auto& sc = ws.at(l.id).at("scale");
        const auto& sh = ws.at(l.id).at("shift");
        const std::size_t per = in(0).size() / in(0).shape[0];
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = sc.data[i / per] * in(0).data[i] + sh.data[i / per];
        break;
      }
      case LayerKind::Concat: {
        std::size_t pos = 0;
        for (std::size_t i = 0; i < l.inputs.size(); ++i)
          for (double v : in(i).data) out.data[pos++] = v;
        break;
      }
      case LayerKind::Flatten:
      case LayerKind::Output:
        out.data = in(0).data;
        break;
    }
    env[l.id] = std::move(out);
  }
  return env.at(g.layers().back().id).data;
}

}  // namespace

TEST_CASE("minimal manifest loads into a four-layer graph") {
  const GraphBundle b = load_manifest(std::string_view(kMinimal));
  CHECK(b.graph.layers().size() == 4);
  CHECK(b.graph.input_shape() == Shape{1, 4, 4});
  CHECK(b.graph.output_width() == 2);
  CHECK(b.role == BundleRole::Client);
  CHECK(verify_stripped(b));
  CHECK(b.graph.shape_of(1) == Shape{16});
}

TEST_CASE("manifest errors") {
  std::string text = kMinimal;
  SUBCASE("dangling reference") {
    text.replace(text.find(R"("kind": "Flatten")"), 17, R"("kind": "Flatten", "inputs": ["nope"])");
    CHECK_THROWS_AS(load_manifest(std::string_view(text)), ParseError);
  }
  SUBCASE("duplicate id") {
    text.replace(text.find(R"("id": "flat")"), 12, R"("id": "x")");
    CHECK_THROWS_AS(load_manifest(std::string_view(text)), ParseError);
  }
  SUBCASE("syntax error names a line") {
    text.erase(text.rfind('}'));
    try {
      load_manifest(std::string_view(text));
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("line") != std::string::npos);
    }
  }
  SUBCASE("unknown kind") {
    text.replace(text.find("Flatten"), 7, "Softmax");
    CHECK_THROWS_AS(load_manifest(std::string_view(text)), ParseError);
  }
}

TEST_CASE("weights with the wrong shape are rejected") {
  Prg prg(4);
  GraphBundle b = load_manifest(std::string_view(kMinimal));
  b.weights = random_weights(b.graph, prg);
  b.role = BundleRole::Server;
  CHECK_NOTHROW(validate_weights(b.graph, b.weights));
  b.weights["fc"]["kernel"] = FloatTensor(Shape{2, 15});
  CHECK_THROWS_AS(validate_weights(b.graph, b.weights), ShapeError);
  std::string text = save_manifest(GraphBundle{b.graph, random_weights(b.graph, prg), BundleRole::Server});
  const auto pos = text.find("[\n     2,\n     16\n    ]");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 22, "[\n     2,\n     15\n    ]");
  CHECK_THROWS(load_manifest(std::string_view(text)));
}

TEST_CASE("canonical serialization round trips") {
  Prg prg(5);
  for (int i = 0; i < 20; ++i) {
    const GraphBundle b = random_bundle(prg);
    const std::string text = save_manifest(b);
    const GraphBundle back = load_manifest(std::string_view(text));
    CHECK(back.graph == b.graph);
    CHECK(save_manifest(back) == text);
    const std::string client = save_manifest(strip_weights(b));
    CHECK(save_manifest(load_manifest(std::string_view(client))) == client);
  }
}

TEST_CASE("weight stripping") {
  Prg prg(6);
  for (int i = 0; i < 30; ++i) {
    const GraphBundle server = random_bundle(prg);
    CHECK_FALSE(verify_stripped(server));
    const GraphBundle client = strip_weights(server);
    CHECK(verify_stripped(client));
    CHECK(client.weights.empty());
    CHECK(client.role == BundleRole::Client);
    CHECK(client.graph == server.graph);
    CHECK(save_manifest(strip_weights(client)) == save_manifest(client));
    CHECK(save_manifest(client).find(kWeightSectionKey) == std::string::npos);
    CHECK(save_manifest(server).find(kWeightSectionKey) != std::string::npos);
    CHECK(graph_hash(client.graph) == graph_hash(server.graph));
    CHECK(bundle_hash(client) != bundle_hash(server));
  }
}

TEST_CASE("a graph without parameters is vacuously stripped") {
  LayerSpec in = layer("x", LayerKind::Input);
  in.shape = {2, 2, 2};
  std::vector<LayerSpec> ls{in, layer("r", LayerKind::ReLU, {"x"}), layer("g", LayerKind::GlobalAvgPool, {"r"}),
                            layer("y", LayerKind::Output, {"g"})};
  const GraphBundle b{ComputationGraph::build("p", ls, 2), {}, BundleRole::Server};
  CHECK(verify_stripped(b));
}

TEST_CASE("shape inference follows the conv formula") {
  for (std::size_t in = 3; in <= 12; ++in)
    for (std::size_t k = 1; k <= 3 && k <= in; ++k)
      for (std::size_t s = 1; s <= 2; ++s)
        for (std::size_t p = 0; p <= 1; ++p) CHECK(conv_output_extent(in, k, s, p) == (in + 2 * p - k) / s + 1);
  Prg prg(7);
  for (int t = 0; t < 30; ++t) {
    const GraphBundle b = random_bundle(prg);
    const auto& g = b.graph;
    for (std::size_t li = 0; li < g.layers().size(); ++li) {
      const LayerSpec& l = g.layers()[li];
      if (l.kind != LayerKind::Conv2D) continue;
      const Shape& in = g.input_shape_of(li);
      CHECK(g.shape_of(li) == Shape{l.units, conv_output_extent(in[1], l.kernel_h, l.stride, l.padding),
                                    conv_output_extent(in[2], l.kernel_w, l.stride, l.padding)});
    }
  }
}

TEST_CASE("identity layers pass inputs through") {
  Prg prg(8);
  const GraphBundle b = identity_conv_bundle(2, 3, 3);
  const FloatTensor x = random_input({2, 3, 3}, prg);
  CHECK(eval_float(b.graph, b.weights, x) == x.data);
  const auto cfg = FixedPointConfig::make(64, 12);
  CHECK(eval_fixed(b.graph, b.weights, x, cfg) == encode_tensor(x, cfg).data);

  LayerSpec in = layer("x", LayerKind::Input);
  in.shape = {5};
  LayerSpec fc = layer("fc", LayerKind::Dense, {"x"});
  fc.units = 5;
  const GraphBundle d{ComputationGraph::build("d", {in, fc, layer("y", LayerKind::Output, {"fc"})}, 5), {},
                      BundleRole::Server};
  FloatTensor eye(Shape{5, 5});
  for (std::size_t i = 0; i < 5; ++i) eye.data[i * 6] = 1.0;
  const WeightStore ws{{"fc", {{"kernel", eye}, {"bias", FloatTensor(Shape{5})}}}};
  const FloatTensor v = random_input({5}, prg);
  CHECK(eval_float(d.graph, ws, v) == v.data);
}

TEST_CASE("eval_float matches the direct-loop oracle") {
  Prg prg(9);
  RandomGraphOptions opts;
  opts.max_layers = 4;
  for (int t = 0; t < 60; ++t) {
    const GraphBundle b = random_bundle(prg, opts);
    const FloatTensor x = random_input(b.graph.input_shape(), prg);
    const auto got = eval_float(b.graph, b.weights, x);
    const auto want = brute_force(b.graph, b.weights, x);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::fabs(got[i] - want[i]) <= 1e-9);
  }
}

TEST_CASE("eval_fixed tracks eval_float within the per-layer error budget") {
  Prg prg(10);
  const auto cfg = FixedPointConfig::make(64, 12);
  for (int t = 0; t < 60; ++t) {
    const GraphBundle b = random_bundle(prg);
    const FloatTensor x = random_input(b.graph.input_shape(), prg);
    const auto fx = eval_fixed(b.graph, b.weights, x, cfg);
    const auto fl = eval_float(b.graph, b.weights, x);
    const double bound = static_cast<double>(b.graph.layers().size()) * std::ldexp(1.0, -12 + 2);
    for (std::size_t i = 0; i < fl.size(); ++i) CHECK(std::fabs(fx_decode(fx[i], cfg) - fl[i]) <= bound);
    CHECK(eval_fixed(b.graph, b.weights, x, cfg) == fx);
  }
}

TEST_CASE("input shape mismatch is rejected") {
  Prg prg(11);
  const GraphBundle b = identity_conv_bundle(1, 4, 4);
  CHECK_THROWS_AS(eval_float(b.graph, b.weights, random_input({1, 4, 5}, prg)), ShapeError);
  CHECK_THROWS_AS(eval_fixed(b.graph, b.weights, random_input({4, 4}, prg), FixedPointConfig{}), ShapeError);
}

TEST_CASE("view aggregation and sigmoid") {
  CHECK(aggregate_views({{1.0, -2.0}}) == std::vector<double>{1.0, -2.0});
  CHECK(aggregate_views({{1.0, -2.0}, {0.0, 3.0}}) == std::vector<double>{1.0, 3.0});
  CHECK_THROWS(aggregate_views({}));
  CHECK_THROWS(aggregate_views({{1.0}, {1.0, 2.0}}));
  CHECK(sigmoid(0.0) == 0.5);
  Prg prg(12);
  double prev = 0.0;
  for (double z = 0.0; z < 40.0; z += 0.5) {
    CHECK(sigmoid(z) >= prev);
    prev = sigmoid(z);
  }
  CHECK(sigmoid(40.0) > 0.999999);
  for (int i = 0; i < 1000; ++i) {
    const double a = 20 * prg.uniform_real() - 10, b = 20 * prg.uniform_real() - 10;
    CHECK(sigmoid(std::max(a, b)) == std::max(sigmoid(a), sigmoid(b)));
    CHECK(sigmoid(-a) == doctest::Approx(1.0 - sigmoid(a)).epsilon(1e-12));
  }
  const std::vector<double> logits{0.3, -1.0, 2.5, 2.4};
  const auto p = sigmoid(logits);
  CHECK(std::max_element(p.begin(), p.end()) - p.begin() == std::max_element(logits.begin(), logits.end()) - logits.begin());
}
