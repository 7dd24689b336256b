#include "sealedinfer/protocols.hpp"

#include <chrono>

#include "sealedinfer/errors.hpp"
#include "sealedinfer/evaluate.hpp"
#include "sealedinfer/layer_ops.hpp"

namespace sealedinfer {

namespace {

std::size_t words_for(std::size_t lanes) { return (lanes + 63) / 64; }

void check_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": operand lengths " + std::to_string(a) + " and " +
                     std::to_string(b) + " differ");
  }
}

Bytes pack_ring(std::span<const RingElement> v, const FixedPointConfig& cfg) {
  ByteWriter w;
  const std::size_t eb = cfg.element_bytes();
  w.reserve(v.size() * eb);
  for (auto x : v) w.uint_le(x, eb);
  return w.take();
}

// Public constant 2^e in the ring, contributed by party 0 only.
RingElement pow2(int e, const FixedPointConfig& cfg) {
  return e >= 64 ? 0 : ring_reduce(RingElement{1} << e, cfg);
}

BitVec public_bit_mask(std::span<const RingElement> c, int bit) {
  BitVec m(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) m.set(i, ((c[i] >> bit) & 1U) != 0);
  return m;
}

}  // namespace

std::string to_string(PreprocMode mode) { return mode == PreprocMode::Dealer ? "dealer" : "2pc-he"; }

PreprocMode parse_preproc_mode(const std::string& text) {
  if (text == "dealer") return PreprocMode::Dealer;
  if (text == "2pc-he") return PreprocMode::TwoPartyHe;
  throw ConfigError("unknown preprocessing mode '" + text + "' (expected dealer or 2pc-he)");
}

ShareVec open(ProtocolState& st, std::span<const RingElement> x) {
  const auto& cfg = st.cfg;
  const Bytes mine = pack_ring(x, cfg);
  const Bytes theirs = st.channel->exchange(MsgType::Open, mine);
  ByteReader r(theirs);
  ShareVec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = ring_add(x[i], ring_reduce(r.uint_le(cfg.element_bytes()), cfg), cfg);
  return out;
}

BitVec open_bits(ProtocolState& st, const BitVec& x) {
  const Bytes theirs = st.channel->exchange(MsgType::Open, x.to_bytes());
  return x ^ BitVec::from_bytes(theirs, x.size());
}

ShareVec secure_mul(ProtocolState& st, std::span<const RingElement> x, std::span<const RingElement> y) {
  check_same(x.size(), y.size(), "secure_mul");
  const auto& cfg = st.cfg;
  const std::size_t n = x.size();
  if (n == 0) return {};
  ElementwiseTriples t = st.store->take_triples(n);
  ShareVec masked(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    masked[i] = ring_sub(x[i], t.a[i], cfg);
    masked[n + i] = ring_sub(y[i], t.b[i], cfg);
  }
  const ShareVec de = open(st, masked);
  ShareVec z(n);
  for (std::size_t i = 0; i < n; ++i) {
    const RingElement d = de[i], e = de[n + i];
    RingElement v = ring_add(t.c[i], ring_add(ring_mul(d, t.b[i], cfg), ring_mul(e, t.a[i], cfg), cfg), cfg);
    if (st.party == 0) v = ring_add(v, ring_mul(d, e, cfg), cfg);
    z[i] = v;
  }
  return z;
}

ShareVec secure_matmul(ProtocolState& st, std::span<const RingElement> x, std::span<const RingElement> y,
                       const MatmulDims& dims) {
  const auto& cfg = st.cfg;
  check_same(x.size(), dims.m * dims.n, "secure_matmul left operand");
  check_same(y.size(), dims.n * dims.p, "secure_matmul right operand");
  MatmulTriple t = st.store->take_matmul(dims);
  const std::size_t nx = x.size();
  ShareVec masked(nx + y.size());
  for (std::size_t i = 0; i < nx; ++i) masked[i] = ring_sub(x[i], t.a[i], cfg);
  for (std::size_t i = 0; i < y.size(); ++i) masked[nx + i] = ring_sub(y[i], t.b[i], cfg);
  const ShareVec de = open(st, masked);
  const std::span<const RingElement> d(de.data(), nx), e(de.data() + nx, y.size());
  ShareVec z = t.c;
  const auto db = ring_matmul(d, t.b, dims.m, dims.n, dims.p, cfg);
  const auto ae = ring_matmul(t.a, e, dims.m, dims.n, dims.p, cfg);
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = ring_add(z[i], ring_add(db[i], ae[i], cfg), cfg);
  if (st.party == 0) {
    const auto dd = ring_matmul(d, e, dims.m, dims.n, dims.p, cfg);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = ring_add(z[i], dd[i], cfg);
  }
  return z;
}

ShareVec secure_conv(ProtocolState& st, std::span<const RingElement> input, const Shape& in_shape,
                     const LayerSpec& conv, std::span<const RingElement> kernel) {
  check_same(input.size(), shape_size(in_shape), "secure_conv input");
  const auto patches = conv_patch_indices(in_shape, conv);
  const std::size_t rows = in_shape[0] * conv.kernel_h * conv.kernel_w;
  const std::size_t cols = patches.size() / rows;
  check_same(kernel.size(), conv.units * rows, "secure_conv kernel");
  ShareVec rhs(patches.size());
  for (std::size_t i = 0; i < patches.size(); ++i) rhs[i] = patches[i] == kPaddingIndex ? 0 : input[patches[i]];
  return secure_matmul(st, kernel, rhs, MatmulDims{conv.units, rows, cols});
}

BitVec secure_and(ProtocolState& st, const BitVec& x, const BitVec& y) {
  check_same(x.size(), y.size(), "secure_and");
  const std::size_t n = x.size();
  AndTriples t = st.store->take_and(words_for(n));
  const BitVec a = BitVec::from_words(std::move(t.a), n);
  const BitVec b = BitVec::from_words(std::move(t.b), n);
  const BitVec c = BitVec::from_words(std::move(t.c), n);
  BitVec masked(2 * n);
  const BitVec d_mine = x ^ a, e_mine = y ^ b;
  for (std::size_t i = 0; i < n; ++i) {
    masked.set(i, d_mine.get(i));
    masked.set(n + i, e_mine.get(i));
  }
  const BitVec opened = open_bits(st, masked);
  BitVec d(n), e(n);
  for (std::size_t i = 0; i < n; ++i) {
    d.set(i, opened.get(i));
    e.set(i, opened.get(n + i));
  }
  BitVec z = c ^ (d & b) ^ (e & a);
  if (st.party == 0) z ^= (d & e);
  return z;
}

ShareVec bits_to_arith(ProtocolState& st, const BitVec& bits) {
  const auto& cfg = st.cfg;
  const std::size_t n = bits.size();
  DaBits db = st.store->take_dabits(n);
  const BitVec e = open_bits(st, bits ^ db.boolean);
  ShareVec out(n);
  for (std::size_t i = 0; i < n; ++i) {
    // t = e xor d = e + d - 2 e d
    if (e.get(i)) {
      out[i] = ring_neg(db.arith[i], cfg);
      if (st.party == 0) out[i] = ring_add(out[i], 1, cfg);
    } else {
      out[i] = db.arith[i];
    }
  }
  return out;
}

BitVec less_than_public(ProtocolState& st, std::span<const RingElement> c, const std::vector<BitVec>& r_bits,
                        int width) {
  const std::size_t n = c.size();
  if (width <= 0) return BitVec(n);
  // lt_0 = !c_0 & r_0, then per bit: c_i ? (r_i & lt) : (r_i | lt).
  BitVec lt = r_bits[0] & ~public_bit_mask(c, 0);
  for (int i = 1; i < width; ++i) {
    const BitVec ci = public_bit_mask(c, i);
    const BitVec& ri = r_bits[static_cast<std::size_t>(i)];
    const BitVec t = secure_and(st, ri, lt);
    const BitVec or_share = ri ^ lt ^ t;
    lt = (ci & t) ^ (~ci & or_share);
  }
  return lt;
}

ShareVec secure_trunc_faithful(ProtocolState& st, std::span<const RingElement> x, int shift) {
  const auto& cfg = st.cfg;
  const int k = cfg.bitwidth_k;
  const std::size_t n = x.size();
  if (shift == 0 || n == 0) return ShareVec(x.begin(), x.end());
  if (shift < 0 || shift > k - 2) throw ConfigError("truncation shift out of range");
  TruncPairs tp = st.store->take_truncpairs(n, shift);
  const RingElement bias = pow2(k - 2, cfg);
  ShareVec masked(n);
  for (std::size_t i = 0; i < n; ++i) {
    RingElement y = x[i];
    if (st.party == 0) y = ring_add(y, bias, cfg);
    masked[i] = ring_add(y, tp.r[i], cfg);
  }
  const ShareVec c = open(st, masked);
  std::vector<BitVec> r_bits(static_cast<std::size_t>(shift), BitVec(n));
  for (int j = 0; j < shift; ++j) {
    for (std::size_t i = 0; i < n; ++i) r_bits[static_cast<std::size_t>(j)].set(i, ((tp.r_low_bits[i] >> j) & 1U) != 0);
  }
  const BitVec beta_bits = less_than_public(st, c, r_bits, shift);
  const ShareVec beta = bits_to_arith(st, beta_bits);
  const RingElement top = pow2(k - shift, cfg);
  const RingElement unbias = pow2(k - 2 - shift, cfg);
  ShareVec out(n);
  for (std::size_t i = 0; i < n; ++i) {
    // wrap = msb(r) * (1 - msb(c))
    const RingElement wrap = ring_msb(c[i], cfg) ? 0 : tp.r_msb[i];
    RingElement v = ring_sub(ring_neg(tp.r_hi[i], cfg), beta[i], cfg);
    v = ring_add(v, ring_mul(top, wrap, cfg), cfg);
    if (st.party == 0) v = ring_add(v, ring_sub(c[i] >> shift, unbias, cfg), cfg);
    out[i] = v;
  }
  return out;
}

ShareVec secure_trunc_local(int party, std::span<const RingElement> x, int shift, const FixedPointConfig& cfg) {
  ShareVec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = party == 0 ? (x[i] >> shift) : ring_neg(ring_neg(x[i], cfg) >> shift, cfg);
  }
  return out;
}

ShareVec secure_trunc(ProtocolState& st, std::span<const RingElement> x, int shift) {
  if (shift == 0) return ShareVec(x.begin(), x.end());
  ShareVec out = st.trunc == TruncMode::Faithful ? secure_trunc_faithful(st, x, shift)
                                                 : secure_trunc_local(st.party, x, shift, st.cfg);
  if (st.trunc_audit) st.trunc_audit(shift, x, out);
  return out;
}

ShareVec secure_drelu(ProtocolState& st, std::span<const RingElement> x) {
  const auto& cfg = st.cfg;
  const int k = cfg.bitwidth_k;
  const std::size_t n = x.size();
  if (n == 0) return {};
  // k mask bits per lane, lane-major.
  DaBits mask = st.store->take_dabits(n * static_cast<std::size_t>(k));
  ShareVec masked(n);
  std::vector<BitVec> r_bits(static_cast<std::size_t>(k), BitVec(n));
  for (std::size_t i = 0; i < n; ++i) {
    RingElement r = 0;
    for (int j = 0; j < k; ++j) {
      const std::size_t idx = i * static_cast<std::size_t>(k) + static_cast<std::size_t>(j);
      r = ring_add(r, ring_mul(mask.arith[idx], pow2(j, cfg), cfg), cfg);
      r_bits[static_cast<std::size_t>(j)].set(i, mask.boolean.get(idx));
    }
    masked[i] = ring_add(x[i], r, cfg);
  }
  const ShareVec c = open(st, masked);
  // msb(x) = c_{k-1} ^ r_{k-1} ^ [c_low < r_low]; the sign bit s = !msb(x).
  BitVec s = less_than_public(st, c, r_bits, k - 1) ^ r_bits[static_cast<std::size_t>(k - 1)];
  if (st.party == 0) s ^= ~public_bit_mask(c, k - 1);
  return bits_to_arith(st, s);
}

ShareVec secure_relu(ProtocolState& st, std::span<const RingElement> x) {
  const ShareVec s = secure_drelu(st, x);
  return secure_mul(st, x, s);
}

ShareVec secure_max(ProtocolState& st, std::span<const RingElement> a, std::span<const RingElement> b) {
  check_same(a.size(), b.size(), "secure_max");
  const auto& cfg = st.cfg;
  ShareVec d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = ring_sub(a[i], b[i], cfg);
  const ShareVec s = secure_drelu(st, d);
  ShareVec m = secure_mul(st, s, d);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = ring_add(m[i], b[i], cfg);
  return m;
}

ShareVec secure_maxpool(ProtocolState& st, std::span<const RingElement> x, const Shape& in_shape,
                        const LayerSpec& pool) {
  const auto windows = pool_window_indices(in_shape, pool);
  const std::size_t width = pool.kernel_h * pool.kernel_w;
  ShareVec gathered(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) gathered[i] = x[windows[i]];
  return tournament_max(std::move(gathered), windows.size() / width, width,
                        [&st](const ShareVec& a, const ShareVec& b) { return secure_max(st, a, b); });
}

// ---- planning ------------------------------------------------------------

namespace {

void plan_drelu(Requirements& req, std::size_t n, const FixedPointConfig& cfg) {
  if (n == 0) return;
  const auto k = static_cast<std::size_t>(cfg.bitwidth_k);
  req.dabits += n * k + n;
  req.and_words += (k - 2) * words_for(n);
}

void plan_trunc(Requirements& req, std::size_t n, int shift, TruncMode trunc) {
  if (n == 0 || shift == 0 || trunc == TruncMode::Local) return;
  req.add_truncpairs(shift, n);
  req.dabits += n;
  req.and_words += static_cast<std::size_t>(shift - 1) * words_for(n);
}

}  // namespace

Requirements plan_requirements(const ComputationGraph& graph, const FixedPointConfig& cfg, TruncMode trunc) {
  Requirements req;
  const int f = cfg.frac_bits_f;
  for (std::size_t li = 0; li < graph.layers().size(); ++li) {
    const LayerSpec& layer = graph.layers()[li];
    const Shape& out = graph.shape_of(li);
    const std::size_t n_out = shape_size(out);
    switch (layer.kind) {
      case LayerKind::Dense: {
        const Shape& in = graph.input_shape_of(li);
        req.matmul_triples.push_back({layer.units, shape_size(in), 1});
        plan_trunc(req, n_out, f, trunc);
        break;
      }
      case LayerKind::Conv2D: {
        const Shape& in = graph.input_shape_of(li);
        req.matmul_triples.push_back({layer.units, in[0] * layer.kernel_h * layer.kernel_w, out[1] * out[2]});
        plan_trunc(req, n_out, f, trunc);
        break;
      }
      case LayerKind::BatchNormFolded:
        req.elementwise_triples += n_out;
        plan_trunc(req, n_out, f, trunc);
        break;
      case LayerKind::ReLU:
        plan_drelu(req, n_out, cfg);
        req.elementwise_triples += n_out;
        break;
      case LayerKind::MaxPool: {
        std::size_t width = layer.kernel_h * layer.kernel_w;
        while (width > 1) {
          const std::size_t pairs = n_out * (width / 2);
          plan_drelu(req, pairs, cfg);
          req.elementwise_triples += pairs;
          width = width / 2 + width % 2;
        }
        break;
      }
      case LayerKind::AvgPool:
      case LayerKind::GlobalAvgPool:
        plan_trunc(req, n_out, pool_shift(graph.input_shape_of(li), layer), trunc);
        break;
      default:
        break;
    }
  }
  return req;
}

// ---- graph evaluation -------------------------------------------------------

ShareVec run_graph_secure(ProtocolState& st, const ComputationGraph& graph, const WeightStore* weights,
                          const PlainTensor* input) {
  const auto& cfg = st.cfg;
  const int f = cfg.frac_bits_f;
  if (st.party == 0 && weights == nullptr) throw ConfigError("model owner needs the weights");
  if (st.party == 1 && input == nullptr) throw ConfigError("data owner needs an input");
  if (st.party == 1) {
    input->check();
    if (input->shape != graph.input_shape()) {
      throw ShapeError("input shape " + shape_to_string(input->shape) + " does not match declared " +
                       shape_to_string(graph.input_shape()));
    }
  }
  st.layer_traffic.clear();
  st.env.clear();
  std::vector<ShareVec> values(graph.layers().size());

  for (std::size_t li = 0; li < graph.layers().size(); ++li) {
    const LayerSpec& layer = graph.layers()[li];
    const Shape& out_shape = graph.shape_of(li);
    const TrafficCounters before = st.channel->counters();
    const auto t0 = std::chrono::steady_clock::now();
    ShareVec y;
    try {
      switch (layer.kind) {
        case LayerKind::Input: {
          // The data owner masks its input with a fresh uniform tensor and hands
          // the mask to the model owner as that party's share.
          const std::size_t n = shape_size(graph.input_shape());
          if (st.party == 1) {
            const ShareVec rho = random_ring(n, cfg, *st.prg);
            st.channel->send(MsgType::Open, pack_ring(rho, cfg));
            y.resize(n);
            for (std::size_t i = 0; i < n; ++i) y[i] = ring_sub(ring_reduce(input->data[i], cfg), rho[i], cfg);
          } else {
            const Bytes b = st.channel->recv(MsgType::Open, n * cfg.element_bytes());
            ByteReader r(b);
            y.resize(n);
            for (auto& v : y) v = ring_reduce(r.uint_le(cfg.element_bytes()), cfg);
          }
          break;
        }
        case LayerKind::Concat:
          for (const auto& id : layer.inputs) {
            const auto& src = values[graph.index_of(id)];
            y.insert(y.end(), src.begin(), src.end());
          }
          break;
        case LayerKind::Dense:
        case LayerKind::Conv2D:
        case LayerKind::BatchNormFolded: {
          const ShareVec& x = values[graph.index_of(layer.inputs[0])];
          EncodedLayer enc;
          if (st.party == 0) {
            enc = encode_layer(graph, *weights, li, cfg);
          } else {
            // Weights are shared as (W, 0).
            const auto shapes = expected_weight_shapes(graph, li);
            const bool is_bn = layer.kind == LayerKind::BatchNormFolded;
            const std::size_t ksz = shape_size(shapes.at(is_bn ? "scale" : "kernel"));
            const std::size_t bsz = shape_size(shapes.at(is_bn ? "shift" : "bias"));
            enc.kernel.assign(ksz, 0);
            enc.bias.assign(bsz, 0);
            enc.rows = bsz;
            enc.cols = ksz / bsz;
          }
          ShareVec acc;
          std::size_t cols = 1;
          if (layer.kind == LayerKind::Dense) {
            acc = secure_matmul(st, enc.kernel, x, MatmulDims{enc.rows, enc.cols, 1});
          } else if (layer.kind == LayerKind::Conv2D) {
            acc = secure_conv(st, x, graph.input_shape_of(li), layer, enc.kernel);
            cols = out_shape[1] * out_shape[2];
          } else {
            const std::size_t block = x.size() / graph.input_shape_of(li)[0];
            ShareVec scale(x.size());
            for (std::size_t i = 0; i < x.size(); ++i) scale[i] = enc.kernel[i / block];
            acc = secure_mul(st, scale, x);
            cols = block;
          }
          if (st.party == 0) {
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] = ring_add(acc[i], enc.bias[i / cols], cfg);
          }
          y = secure_trunc(st, acc, f);
          break;
        }
        case LayerKind::ReLU:
          y = secure_relu(st, values[graph.index_of(layer.inputs[0])]);
          break;
        case LayerKind::MaxPool:
          y = secure_maxpool(st, values[graph.index_of(layer.inputs[0])], graph.input_shape_of(li), layer);
          break;
        case LayerKind::AvgPool:
        case LayerKind::GlobalAvgPool: {
          const ShareVec& x = values[graph.index_of(layer.inputs[0])];
          const Shape& in = graph.input_shape_of(li);
          const auto windows =
              layer.kind == LayerKind::AvgPool ? pool_window_indices(in, layer) : global_pool_indices(in);
          const std::size_t n_out = shape_size(out_shape);
          const std::size_t width = windows.size() / n_out;
          ShareVec sum(n_out, 0);
          for (std::size_t o = 0; o < n_out; ++o) {
            for (std::size_t j = 0; j < width; ++j) sum[o] = ring_add(sum[o], x[windows[o * width + j]], cfg);
          }
          y = secure_trunc(st, sum, pool_shift(in, layer));
          break;
        }
        case LayerKind::Flatten:
        case LayerKind::Output:
          y = values[graph.index_of(layer.inputs[0])];
          break;
      }
    } catch (const ExhaustedError& e) {
      throw ExhaustedError("layer '" + layer.id + "': " + e.what());
    }
    if (y.size() != shape_size(out_shape)) {
      throw ShapeError("layer '" + layer.id + "' produced " + std::to_string(y.size()) + " values, expected " +
                       std::to_string(shape_size(out_shape)));
    }
    LayerTraffic lt;
    lt.layer_id = layer.id;
    lt.kind = layer.kind;
    lt.traffic = st.channel->counters() - before;
    lt.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    st.layer_traffic.push_back(std::move(lt));
    st.env[layer.id] = AdditiveShare{st.party, PlainTensor{out_shape, y}, cfg};
    values[li] = std::move(y);
  }
  return values.back();
}

std::optional<ShareVec> reveal_to_data_owner(ProtocolState& st, std::span<const RingElement> out) {
  const auto& cfg = st.cfg;
  if (st.party == 0) {
    st.channel->send(MsgType::Output, pack_ring(out, cfg));
    return std::nullopt;
  }
  const Bytes b = st.channel->recv(MsgType::Output, out.size() * cfg.element_bytes());
  ByteReader r(b);
  ShareVec result(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) result[i] = ring_add(out[i], ring_reduce(r.uint_le(cfg.element_bytes()), cfg), cfg);
  return result;
}

}  // namespace sealedinfer
