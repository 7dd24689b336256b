#pragma once

// Framed, accounted message channel between the two parties. Every byte that
// crosses the transport passes through here, so the counters equal the sum
// of on-wire frame sizes.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sealedinfer/bytes.hpp"
#include "sealedinfer/frame.hpp"
#include "sealedinfer/transport.hpp"

namespace sealedinfer {

struct ChannelOptions {
  std::size_t frame_cap = kDefaultFrameCap;
  bool record_transcript = false;
};

struct TrafficCounters {
  std::uint64_t bytes_sent = 0;
  std::uint64_t bytes_received = 0;
  std::uint64_t frames_sent = 0;
  std::uint64_t frames_received = 0;
  // Message flights: maximal runs of frames travelling in one direction.
  std::uint64_t rounds = 0;

  TrafficCounters& operator+=(const TrafficCounters& o);
  friend TrafficCounters operator-(TrafficCounters a, const TrafficCounters& b);
  friend bool operator==(const TrafficCounters&, const TrafficCounters&) = default;
};

struct TranscriptEntry {
  bool outbound = false;
  MsgType type = MsgType::Hello;
  std::size_t wire_bytes = 0;
};

class Channel {
 public:
  // party is 0 or 1; party 0 speaks first in exchange().
  Channel(Transport& transport, int party, ChannelOptions options = {});

  int party() const noexcept { return party_; }
  const ChannelOptions& options() const noexcept { return options_; }

  void send_frame(const Frame& frame);
  // Reads one frame of any type. ABORT frames are returned, not thrown.
  Frame recv_frame();

  // Message-level API. Payloads above the frame cap travel as several frames
  // of the same type, each prefixed with a 32-bit big-endian sequence number.
  void send(MsgType type, std::span<const std::uint8_t> payload);
  // Throws ProtocolError on a type or length disagreement and when the peer
  // sent ABORT.
  Bytes recv(MsgType type, std::size_t expected_length);
  // One frame of the given type with any payload length.
  Bytes recv_any(MsgType type);

  // Symmetric swap of equal-length payloads; strict alternation (party 0
  // sends first, party 1 answers).
  Bytes exchange(MsgType type, std::span<const std::uint8_t> payload);

  // Best-effort ABORT notification; never throws.
  void abort(const std::string& reason) noexcept;

  const TrafficCounters& counters() const noexcept { return counters_; }
  const std::vector<TranscriptEntry>& transcript() const noexcept { return transcript_; }

 private:
  void note_direction(bool outbound);

  Transport& transport_;
  int party_;
  ChannelOptions options_;
  TrafficCounters counters_;
  std::vector<TranscriptEntry> transcript_;
  int last_direction_ = -1;
};

}  // namespace sealedinfer
