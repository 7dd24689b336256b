#pragma once

// One secure inference between the model owner (party 0, listens) and the
// data owner (party 1, connects): handshake, preprocessing, online phase and
// the output reveal to the data owner only.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "sealedinfer/channel.hpp"
#include "sealedinfer/graph.hpp"
#include "sealedinfer/protocols.hpp"

namespace sealedinfer {

enum class Role { ModelOwner, DataOwner };

inline int party_of(Role role) { return role == Role::ModelOwner ? 0 : 1; }
std::string to_string(Role role);

struct SessionConfig {
  std::uint16_t protocol_version = kProtocolVersion;
  FixedPointConfig fixed;
  std::string graph_hash;
  PreprocMode mode = PreprocMode::Dealer;
  std::string randomness_label;
  std::uint64_t randomness_batch = 0;
  int he_modulus_bits = 0;

  std::string to_json() const;
  static SessionConfig from_json(const std::string& text);
};

// Name of the first field on which the two configs differ, or empty.
std::string first_mismatch(const SessionConfig& a, const SessionConfig& b);

// HELLO then CONFIG, data owner first. `adopt` lets the model owner finish
// its local config after seeing the peer's (e.g. pick the randomness file
// named by the peer). Throws HandshakeError naming the mismatching field.
using ConfigAdopter = std::function<void(const SessionConfig& peer, SessionConfig& local)>;
SessionConfig handshake(Channel& channel, SessionConfig local, const ConfigAdopter& adopt = {});

struct SessionStats {
  TrafficCounters traffic;
  double wall_time = 0.0;
  double preprocessing_time = 0.0;
  double online_time = 0.0;
  std::vector<LayerTraffic> layers;
  std::uint64_t output_frames_received = 0;

  std::string to_json() const;
};

struct SessionOptions {
  Role role = Role::DataOwner;
  PreprocMode mode = PreprocMode::Dealer;
  FixedPointConfig cfg;
  // Dealer mode: <randomness_dir>/<label>.p<party>.crnd.
  std::string randomness_dir = ".";
  std::string randomness_label;
  // Model owner only: accept any peer label with this prefix instead of a
  // fixed randomness_label.
  std::optional<std::string> accept_label_prefix;
  int he_modulus_bits = 2048;
  // Seeded runs are reproducible; otherwise randomness comes from the OS.
  std::optional<std::uint64_t> seed;
  ChannelOptions channel;
  TruncAudit trunc_audit;
};

struct InferenceResult {
  // Data owner only.
  std::optional<std::vector<RingElement>> logits;
  SessionStats stats;
  SessionConfig agreed;
  std::vector<TranscriptEntry> transcript;
};

// Marks a dealer file as used; throws ExhaustedError if it already was.
void claim_randomness_file(const std::string& path);
std::string consumed_marker_path(const std::string& crnd_path);

// The model owner passes its server bundle and no input; the data owner a
// stripped bundle and its input. Shape and bundle checks happen before any
// byte is sent.
InferenceResult run_secure_inference(const SessionOptions& options, const GraphBundle& bundle,
                                     const FloatTensor* input, Transport& transport);

struct BatchOutcome {
  std::vector<std::optional<InferenceResult>> results;
  std::vector<std::string> errors;  // empty string on success
  TrafficCounters aggregate;
  double wall_time = 0.0;
};

// Runs independent sessions with at most `parallelism` in flight. A failing
// session is recorded and the rest continue.
BatchOutcome run_batch(const std::vector<std::function<InferenceResult()>>& sessions, std::size_t parallelism);

struct CostReport {
  double secure_seconds = 0.0;
  double insecure_seconds = 0.0;
  std::uint64_t bytes_total = 0;
  std::uint64_t rounds = 0;
  std::size_t images = 0;

  double ratio() const { return insecure_seconds > 0 ? secure_seconds / insecure_seconds : 0.0; }
  std::string to_json() const;
  std::string to_text() const;
};

}  // namespace sealedinfer
