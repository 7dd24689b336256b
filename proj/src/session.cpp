#include "sealedinfer/session.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "sealedinfer/errors.hpp"
#include "sealedinfer/he_preproc.hpp"

namespace sealedinfer {

using json = nlohmann::json;

namespace {

constexpr std::string_view kHelloTag = "sealedinfer";

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Bytes hello_payload() {
  ByteWriter w;
  w.u16_be(kProtocolVersion);
  w.raw(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(kHelloTag.data()), kHelloTag.size()));
  return w.take();
}

void check_hello(const Bytes& payload) {
  if (payload.size() != 2 + kHelloTag.size() ||
      !std::equal(kHelloTag.begin(), kHelloTag.end(), payload.begin() + 2)) {
    throw HandshakeError("hello", "peer sent an unrecognised HELLO");
  }
  ByteReader r(payload);
  const auto v = r.u16_be();
  if (v != kProtocolVersion) {
    throw HandshakeError("protocol_version", "protocol version mismatch: local " + std::to_string(kProtocolVersion) +
                                                 ", peer " + std::to_string(v));
  }
}

Bytes to_bytes(const std::string& s) { return Bytes(s.begin(), s.end()); }

}  // namespace

std::string to_string(Role role) { return role == Role::ModelOwner ? "model-owner" : "data-owner"; }

std::string SessionConfig::to_json() const {
  json j;
  j["protocol_version"] = protocol_version;
  j["bitwidth_k"] = fixed.bitwidth_k;
  j["frac_bits_f"] = fixed.frac_bits_f;
  j["graph_hash"] = graph_hash;
  j["mode"] = to_string(mode);
  j["randomness_label"] = randomness_label;
  j["randomness_batch"] = randomness_batch;
  j["he_modulus_bits"] = he_modulus_bits;
  return j.dump();
}

SessionConfig SessionConfig::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    SessionConfig c;
    c.protocol_version = j.at("protocol_version").get<std::uint16_t>();
    c.fixed.bitwidth_k = j.at("bitwidth_k").get<int>();
    c.fixed.frac_bits_f = j.at("frac_bits_f").get<int>();
    c.graph_hash = j.at("graph_hash").get<std::string>();
    c.mode = parse_preproc_mode(j.at("mode").get<std::string>());
    c.randomness_label = j.at("randomness_label").get<std::string>();
    c.randomness_batch = j.at("randomness_batch").get<std::uint64_t>();
    c.he_modulus_bits = j.at("he_modulus_bits").get<int>();
    return c;
  } catch (const json::exception& e) {
    throw HandshakeError("config", std::string("malformed CONFIG from peer: ") + e.what());
  } catch (const ConfigError& e) {
    throw HandshakeError("mode", std::string("peer CONFIG: ") + e.what());
  }
}

std::string first_mismatch(const SessionConfig& a, const SessionConfig& b) {
  if (a.protocol_version != b.protocol_version) return "protocol_version";
  if (a.fixed.bitwidth_k != b.fixed.bitwidth_k) return "bitwidth_k";
  if (a.fixed.frac_bits_f != b.fixed.frac_bits_f) return "frac_bits_f";
  if (a.graph_hash != b.graph_hash) return "graph_hash";
  if (a.mode != b.mode) return "mode";
  if (a.randomness_label != b.randomness_label) return "randomness_label";
  if (a.randomness_batch != b.randomness_batch) return "randomness_batch";
  if (a.he_modulus_bits != b.he_modulus_bits) return "he_modulus_bits";
  return {};
}

SessionConfig handshake(Channel& channel, SessionConfig local, const ConfigAdopter& adopt) {
  SessionConfig peer;
  if (channel.party() == 1) {
    channel.send(MsgType::Hello, hello_payload());
    check_hello(channel.recv_any(MsgType::Hello));
    channel.send(MsgType::Config, to_bytes(local.to_json()));
    const Bytes b = channel.recv_any(MsgType::Config);
    peer = SessionConfig::from_json(std::string(b.begin(), b.end()));
  } else {
    const Bytes hello = channel.recv_any(MsgType::Hello);
    channel.send(MsgType::Hello, hello_payload());
    check_hello(hello);
    const Bytes b = channel.recv_any(MsgType::Config);
    peer = SessionConfig::from_json(std::string(b.begin(), b.end()));
    if (adopt) adopt(peer, local);
    channel.send(MsgType::Config, to_bytes(local.to_json()));
  }
  const std::string field = first_mismatch(local, peer);
  if (!field.empty()) {
    throw HandshakeError(field, "session config mismatch on field '" + field + "': local " + local.to_json() +
                                    ", peer " + peer.to_json());
  }
  return local;
}

std::string SessionStats::to_json() const {
  json j;
  j["bytes_sent"] = traffic.bytes_sent;
  j["bytes_received"] = traffic.bytes_received;
  j["frames_sent"] = traffic.frames_sent;
  j["frames_received"] = traffic.frames_received;
  j["rounds"] = traffic.rounds;
  j["wall_time"] = wall_time;
  j["preprocessing_time"] = preprocessing_time;
  j["online_time"] = online_time;
  j["output_frames_received"] = output_frames_received;
  json layers_j = json::array();
  for (const auto& l : layers) {
    layers_j.push_back({{"id", l.layer_id},
                        {"kind", std::string(to_string(l.kind))},
                        {"bytes_sent", l.traffic.bytes_sent},
                        {"bytes_received", l.traffic.bytes_received},
                        {"rounds", l.traffic.rounds},
                        {"seconds", l.seconds}});
  }
  j["layers"] = std::move(layers_j);
  return j.dump(1) + "\n";
}

std::string consumed_marker_path(const std::string& crnd_path) { return crnd_path + ".consumed"; }

void claim_randomness_file(const std::string& path) {
  if (::access(path.c_str(), R_OK) != 0) throw IoError("cannot read randomness file " + path);
  const std::string marker = consumed_marker_path(path);
  const int fd = ::open(marker.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST) throw ExhaustedError("randomness file " + path + " was already consumed");
    throw IoError("cannot create " + marker + ": " + std::strerror(errno));
  }
  ::close(fd);
}

namespace {

CorrelatedStore load_dealer_store(const SessionOptions& o, const std::string& label, int party) {
  const std::string path = crnd_path(o.randomness_dir, label, party);
  claim_randomness_file(path);
  CorrelatedStore store = read_crnd(path);
  if (store.party() != party) throw ConfigError(path + " holds party " + std::to_string(store.party()) + " shares");
  if (!(store.config() == o.cfg)) {
    throw ConfigError(path + " was generated for " + store.config().to_string() + ", session uses " +
                      o.cfg.to_string());
  }
  return store;
}

}  // namespace

InferenceResult run_secure_inference(const SessionOptions& o, const GraphBundle& bundle, const FloatTensor* input,
                                     Transport& transport) {
  const auto t_start = std::chrono::steady_clock::now();
  const int party = party_of(o.role);
  o.cfg.validate();
  const ComputationGraph& graph = bundle.graph;

  // Local checks first: nothing is sent for a bad bundle or input.
  PlainTensor encoded;
  if (o.role == Role::ModelOwner) {
    if (bundle.role != BundleRole::Server) throw ConfigError("model owner needs a server bundle with weights");
    validate_weights(graph, bundle.weights);
  } else {
    if (!verify_stripped(bundle)) throw ConfigError("data owner bundle still carries weights");
    if (input == nullptr) throw ConfigError("data owner needs an input tensor");
    input->check();
    if (input->shape != graph.input_shape()) {
      throw ShapeError("input shape " + shape_to_string(input->shape) + " does not match declared " +
                       shape_to_string(graph.input_shape()));
    }
    encoded = encode_tensor(*input, o.cfg);
  }

  Prg prg = o.seed ? Prg(*o.seed, static_cast<std::uint64_t>(party)) : Prg::from_entropy();
  ChannelOptions copt = o.channel;
  copt.record_transcript = true;
  Channel channel(transport, party, copt);

  SessionConfig local;
  local.fixed = o.cfg;
  local.graph_hash = graph_hash(graph);
  local.mode = o.mode;
  local.he_modulus_bits = o.mode == PreprocMode::TwoPartyHe ? o.he_modulus_bits : 0;
  local.randomness_label = o.mode == PreprocMode::Dealer ? o.randomness_label : "";

  CorrelatedStore store(party, o.cfg);
  const bool deferred = o.mode == PreprocMode::Dealer && party == 0 && o.accept_label_prefix.has_value();
  if (o.mode == PreprocMode::Dealer && !deferred) {
    store = load_dealer_store(o, o.randomness_label, party);
    local.randomness_batch = store.batch_id();
  }

  InferenceResult result;
  try {
    ConfigAdopter adopt;
    if (deferred) {
      adopt = [&](const SessionConfig& peer, SessionConfig& mine) {
        const std::string& prefix = *o.accept_label_prefix;
        if (peer.mode != PreprocMode::Dealer || peer.randomness_label.compare(0, prefix.size(), prefix) != 0) {
          return;  // the comparison below reports the mismatch
        }
        mine.randomness_label = peer.randomness_label;
        store = load_dealer_store(o, peer.randomness_label, party);
        mine.randomness_batch = store.batch_id();
      };
    }
    result.agreed = handshake(channel, local, adopt);

    const auto t_pre = std::chrono::steady_clock::now();
    const TruncMode trunc = trunc_mode_for(o.mode);
    if (o.mode == PreprocMode::TwoPartyHe) {
      Prg key_prg = prg.derive(1);
      AheKeypair keys = ahe_keygen(o.he_modulus_bits, key_prg);
      HeContext ctx = he_setup(channel, o.cfg, std::move(keys), prg);
      store = he_generate(ctx, plan_requirements(graph, o.cfg, trunc));
    }
    result.stats.preprocessing_time = seconds_since(t_pre);

    const auto t_online = std::chrono::steady_clock::now();
    ProtocolState st(party, channel, o.cfg, store, trunc, prg);
    st.trunc_audit = o.trunc_audit;
    const ShareVec out = run_graph_secure(st, graph, party == 0 ? &bundle.weights : nullptr,
                                          party == 1 ? &encoded : nullptr);
    result.logits = reveal_to_data_owner(st, out);
    result.stats.online_time = seconds_since(t_online);
    result.stats.layers = std::move(st.layer_traffic);
  } catch (const std::exception& e) {
    channel.abort(e.what());
    throw;
  }

  result.stats.traffic = channel.counters();
  result.transcript = channel.transcript();
  for (const auto& t : result.transcript) {
    if (!t.outbound && t.type == MsgType::Output) ++result.stats.output_frames_received;
  }
  result.stats.wall_time = seconds_since(t_start);
  return result;
}

BatchOutcome run_batch(const std::vector<std::function<InferenceResult()>>& sessions, std::size_t parallelism) {
  BatchOutcome out;
  const std::size_t n = sessions.size();
  out.results.resize(n);
  out.errors.resize(n);
  const auto t0 = std::chrono::steady_clock::now();
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out.results[i] = sessions[i]();
      } catch (const std::exception& e) {
        out.errors[i] = e.what();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(parallelism, n));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  out.wall_time = seconds_since(t0);
  for (const auto& r : out.results) {
    if (r) out.aggregate += r->stats.traffic;
  }
  return out;
}

namespace {

constexpr double kPublishedSeconds = 900.0;
constexpr double kPublishedGigabytes = 60.0;
constexpr double kPublishedSlowdown = 3000.0;

double per_image(double v, std::size_t images) { return images ? v / static_cast<double>(images) : 0.0; }

}  // namespace

std::string CostReport::to_json() const {
  json j;
  j["images"] = images;
  j["secure_seconds"] = secure_seconds;
  j["insecure_seconds"] = insecure_seconds;
  j["secure_seconds_per_image"] = per_image(secure_seconds, images);
  j["insecure_seconds_per_image"] = per_image(insecure_seconds, images);
  j["secure_to_insecure_ratio"] = ratio();
  j["bytes_total"] = bytes_total;
  j["bytes_per_image"] = per_image(static_cast<double>(bytes_total), images);
  j["rounds"] = rounds;
  j["published_reference"] = {{"seconds_per_image", kPublishedSeconds},
                              {"gigabytes_per_image", kPublishedGigabytes},
                              {"slowdown", kPublishedSlowdown},
                              {"is_target", false},
                              {"note", "full-size production model on a different protocol stack; not comparable"}};
  return j.dump(1) + "\n";
}

std::string CostReport::to_text() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "images                      " << images << "\n";
  os << "secure seconds per image    " << per_image(secure_seconds, images) << "\n";
  os << "insecure seconds per image  " << per_image(insecure_seconds, images) << "\n";
  os << std::setprecision(1);
  os << "secure/insecure time ratio  " << ratio() << "x\n";
  os << "bytes per image             " << std::setprecision(0) << per_image(static_cast<double>(bytes_total), images)
     << "\n";
  os << "rounds                      " << rounds << "\n";
  os << "published reference (NOT a target, different model and stack): " << kPublishedSeconds << " s/image, "
     << kPublishedGigabytes << " GB/image, " << kPublishedSlowdown << "x slowdown\n";
  return os.str();
}

}  // namespace sealedinfer
