#pragma once

// Wire framing: 4-byte magic "2PC1", 16-bit version, 8-bit message type,
// 32-bit big-endian payload length, payload. 11 header bytes per frame.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

#include "sealedinfer/bytes.hpp"

namespace sealedinfer {

enum class MsgType : std::uint8_t {
  Hello = 0x01,
  Config = 0x02,
  Open = 0x03,
  Ciphertext = 0x04,
  Output = 0x05,
  Abort = 0x06,
};

std::string_view to_string(MsgType type);

inline constexpr std::array<std::uint8_t, 4> kFrameMagic{0x32, 0x50, 0x43, 0x31};
inline constexpr std::uint16_t kProtocolVersion = 1;
inline constexpr std::size_t kFrameHeaderBytes = 11;
inline constexpr std::size_t kDefaultFrameCap = std::size_t{64} << 20;

struct Frame {
  std::uint16_t version = kProtocolVersion;
  MsgType type = MsgType::Hello;
  Bytes payload;

  friend bool operator==(const Frame&, const Frame&) = default;
};

struct FrameHeader {
  std::uint16_t version = 0;
  MsgType type = MsgType::Hello;
  std::uint32_t length = 0;
};

Bytes encode_frame(const Frame& frame);

// Validates magic, message type and the length cap. Throws FrameError.
FrameHeader parse_frame_header(std::span<const std::uint8_t> header, std::size_t cap);

// Decodes exactly one complete frame; trailing or missing bytes are errors.
Frame decode_frame(std::span<const std::uint8_t> bytes, std::size_t cap = kDefaultFrameCap);

}  // namespace sealedinfer
