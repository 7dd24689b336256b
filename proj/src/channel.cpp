#include "sealedinfer/channel.hpp"

#include <algorithm>
#include <array>

#include "sealedinfer/errors.hpp"

namespace sealedinfer {

TrafficCounters& TrafficCounters::operator+=(const TrafficCounters& o) {
  bytes_sent += o.bytes_sent;
  bytes_received += o.bytes_received;
  frames_sent += o.frames_sent;
  frames_received += o.frames_received;
  rounds += o.rounds;
  return *this;
}

TrafficCounters operator-(TrafficCounters a, const TrafficCounters& b) {
  a.bytes_sent -= b.bytes_sent;
  a.bytes_received -= b.bytes_received;
  a.frames_sent -= b.frames_sent;
  a.frames_received -= b.frames_received;
  a.rounds -= b.rounds;
  return a;
}

Channel::Channel(Transport& transport, int party, ChannelOptions options)
    : transport_(transport), party_(party), options_(options) {
  if (party != 0 && party != 1) throw ConfigError("party index must be 0 or 1");
  if (options_.frame_cap < 16) throw ConfigError("frame cap too small");
}

void Channel::note_direction(bool outbound) {
  const int dir = outbound ? 1 : 0;
  if (dir != last_direction_) {
    ++counters_.rounds;
    last_direction_ = dir;
  }
}

void Channel::send_frame(const Frame& frame) {
  if (frame.payload.size() > options_.frame_cap) {
    throw FrameError("refusing to send oversize frame of " + std::to_string(frame.payload.size()) +
                     " bytes");
  }
  const Bytes wire = encode_frame(frame);
  transport_.write_all(wire);
  note_direction(true);
  counters_.bytes_sent += wire.size();
  ++counters_.frames_sent;
  if (options_.record_transcript) transcript_.push_back({true, frame.type, wire.size()});
}

Frame Channel::recv_frame() {
  std::array<std::uint8_t, kFrameHeaderBytes> header{};
  transport_.read_exact(header);
  const FrameHeader h = parse_frame_header(header, options_.frame_cap);
  Frame frame;
  frame.version = h.version;
  frame.type = h.type;
  frame.payload.resize(h.length);
  transport_.read_exact(frame.payload);
  note_direction(false);
  counters_.bytes_received += kFrameHeaderBytes + h.length;
  ++counters_.frames_received;
  if (options_.record_transcript) {
    transcript_.push_back({false, frame.type, kFrameHeaderBytes + h.length});
  }
  return frame;
}

void Channel::send(MsgType type, std::span<const std::uint8_t> payload) {
  if (payload.size() <= options_.frame_cap) {
    send_frame(Frame{kProtocolVersion, type, Bytes(payload.begin(), payload.end())});
    return;
  }
  const std::size_t chunk = options_.frame_cap - 4;
  std::uint32_t seq = 0;
  for (std::size_t pos = 0; pos < payload.size(); pos += chunk, ++seq) {
    const std::size_t n = std::min(chunk, payload.size() - pos);
    ByteWriter w;
    w.reserve(n + 4);
    w.u32_be(seq);
    w.raw(payload.subspan(pos, n));
    send_frame(Frame{kProtocolVersion, type, w.take()});
  }
}

namespace {

[[noreturn]] void unexpected(const Frame& frame, MsgType expected) {
  if (frame.type == MsgType::Abort) {
    throw ProtocolError("peer aborted: " +
                        std::string(frame.payload.begin(), frame.payload.end()));
  }
  throw ProtocolError("expected " + std::string(to_string(expected)) + " frame, got " +
                      std::string(to_string(frame.type)));
}

}  // namespace

Bytes Channel::recv(MsgType type, std::size_t expected_length) {
  if (expected_length <= options_.frame_cap) {
    Frame frame = recv_frame();
    if (frame.type != type) unexpected(frame, type);
    if (frame.payload.size() != expected_length) {
      throw ProtocolError(std::string(to_string(type)) + " length mismatch: expected " +
                          std::to_string(expected_length) + " bytes, got " +
                          std::to_string(frame.payload.size()));
    }
    return std::move(frame.payload);
  }
  const std::size_t chunk = options_.frame_cap - 4;
  Bytes out;
  out.reserve(expected_length);
  for (std::uint32_t seq = 0; out.size() < expected_length; ++seq) {
    Frame frame = recv_frame();
    if (frame.type != type) unexpected(frame, type);
    const std::size_t want = std::min(chunk, expected_length - out.size());
    if (frame.payload.size() != want + 4) throw ProtocolError("chunk length mismatch");
    ByteReader r(frame.payload);
    if (r.u32_be() != seq) throw ProtocolError("chunk out of sequence");
    const auto data = r.raw(want);
    out.insert(out.end(), data.begin(), data.end());
  }
  return out;
}

Bytes Channel::recv_any(MsgType type) {
  Frame frame = recv_frame();
  if (frame.type != type) unexpected(frame, type);
  return std::move(frame.payload);
}

Bytes Channel::exchange(MsgType type, std::span<const std::uint8_t> payload) {
  if (party_ == 0) {
    send(type, payload);
    return recv(type, payload.size());
  }
  Bytes peer = recv(type, payload.size());
  send(type, payload);
  return peer;
}

void Channel::abort(const std::string& reason) noexcept {
  try {
    const std::string text = reason.substr(0, 1024);
    send_frame(Frame{kProtocolVersion, MsgType::Abort, Bytes(text.begin(), text.end())});
  } catch (...) {
  }
}

}  // namespace sealedinfer
