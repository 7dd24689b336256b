#include "sealedinfer/frame.hpp"

#include <algorithm>

#include "sealedinfer/errors.hpp"

namespace sealedinfer {

std::string_view to_string(MsgType type) {
  switch (type) {
    case MsgType::Hello: return "HELLO";
    case MsgType::Config: return "CONFIG";
    case MsgType::Open: return "OPEN";
    case MsgType::Ciphertext: return "CIPHERTEXT";
    case MsgType::Output: return "OUTPUT";
    case MsgType::Abort: return "ABORT";
  }
  return "UNKNOWN";
}

Bytes encode_frame(const Frame& frame) {
  if (frame.payload.size() > 0xFFFFFFFFu) throw FrameError("frame payload exceeds 32-bit length");
  ByteWriter w;
  w.reserve(kFrameHeaderBytes + frame.payload.size());
  w.raw(kFrameMagic);
  w.u16_be(frame.version);
  w.u8(static_cast<std::uint8_t>(frame.type));
  w.u32_be(static_cast<std::uint32_t>(frame.payload.size()));
  w.raw(frame.payload);
  return w.take();
}

FrameHeader parse_frame_header(std::span<const std::uint8_t> header, std::size_t cap) {
  if (header.size() < kFrameHeaderBytes) throw FrameError("truncated frame header");
  if (!std::equal(kFrameMagic.begin(), kFrameMagic.end(), header.begin())) {
    throw FrameError("bad frame magic");
  }
  ByteReader r(header.subspan(4, kFrameHeaderBytes - 4));
  FrameHeader h;
  h.version = r.u16_be();
  const std::uint8_t type = r.u8();
  if (type < static_cast<std::uint8_t>(MsgType::Hello) ||
      type > static_cast<std::uint8_t>(MsgType::Abort)) {
    throw FrameError("unknown message type " + std::to_string(type));
  }
  h.type = static_cast<MsgType>(type);
  h.length = r.u32_be();
  if (h.length > cap) {
    throw FrameError("oversize frame: " + std::to_string(h.length) + " bytes exceeds cap " +
                     std::to_string(cap));
  }
  return h;
}

Frame decode_frame(std::span<const std::uint8_t> bytes, std::size_t cap) {
  const FrameHeader h = parse_frame_header(bytes, cap);
  if (bytes.size() - kFrameHeaderBytes < h.length) throw FrameError("truncated frame payload");
  if (bytes.size() - kFrameHeaderBytes > h.length) throw FrameError("trailing bytes after frame");
  Frame f;
  f.version = h.version;
  f.type = h.type;
  f.payload.assign(bytes.begin() + kFrameHeaderBytes, bytes.end());
  return f;
}

}  // namespace sealedinfer
