#pragma once

#include <cstdint>

#include "ss/common/bytes.hpp"

namespace ss::transport {

enum class FrameKind : uint8_t {
    Data = 0,
    Ack = 1,
    Nak = 2,
    Handshake = 3,
    Keepalive = 4,
    Msg = 5,
};

// Frame flag bits.
inline constexpr uint16_t kFlagMore = 0x1;    // message continues in the next fragment
inline constexpr uint16_t kFlagResp = 0x2;    // message answers the request_id it carries
inline constexpr uint16_t kFlagOneway = 0x4;  // message expects no response
inline constexpr uint16_t kFlagFin = 0x8;     // sender is closing the connection

inline constexpr size_t kFrameHeaderSize = 32;
inline constexpr size_t kMaxFramePayload = 1440;  // datagram MTU 1472 minus the header

struct Frame {
    uint8_t version = 1;
    FrameKind kind = FrameKind::Data;
    uint16_t flags = 0;
    uint32_t seq = 0;
    uint32_t ack = 0;
    uint64_t request_id = 0;
    Bytes payload;
};

// Header layout, big-endian throughout:
//   magic "SSTP" | version u8 | kind u8 | flags u16 | seq u32 | ack u32 |
//   request_id u64 | payload_len u32 | header_crc32 u32
// header_crc32 covers the preceding 28 bytes.
Bytes encode_frame(const Frame& f);

// Throws Decode on short input, bad magic, bad checksum, or truncated payload.
Frame decode_frame(std::span<const uint8_t> wire);

}  // namespace ss::transport
