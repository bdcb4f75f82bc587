#include "ss/transport/frame.hpp"

#include <cstring>

#include "ss/common/checksum.hpp"
#include "ss/common/error.hpp"

namespace ss::transport {

namespace {
constexpr uint8_t kMagic[4] = {'S', 'S', 'T', 'P'};
constexpr uint8_t kMaxKind = uint8_t(FrameKind::Msg);
}  // namespace

Bytes encode_frame(const Frame& f) {
    if (f.payload.size() > kMaxFramePayload)
        throw Error(Err::Internal, "frame payload exceeds " + std::to_string(kMaxFramePayload));
    ByteWriter w;
    w.raw(kMagic);
    w.u8(f.version);
    w.u8(uint8_t(f.kind));
    w.u16(f.flags);
    w.u32(f.seq);
    w.u32(f.ack);
    w.u64(f.request_id);
    w.u32(uint32_t(f.payload.size()));
    w.u32(crc32(std::span(w.data()).first(28)));
    w.raw(f.payload);
    return w.take();
}

Frame decode_frame(std::span<const uint8_t> wire) {
    if (wire.size() < kFrameHeaderSize) throw Error(Err::Decode, "frame shorter than header");
    if (std::memcmp(wire.data(), kMagic, sizeof kMagic) != 0)
        throw Error(Err::Decode, "bad frame magic");

    ByteReader r(wire.subspan(sizeof kMagic));
    Frame f;
    f.version = r.u8();
    uint8_t kind = r.u8();
    if (kind > kMaxKind) throw Error(Err::Decode, "unknown frame kind");
    f.kind = FrameKind(kind);
    f.flags = r.u16();
    f.seq = r.u32();
    f.ack = r.u32();
    f.request_id = r.u64();
    uint32_t len = r.u32();
    uint32_t stored_crc = r.u32();
    if (crc32(wire.first(28)) != stored_crc)
        throw Error(Err::Decode, "frame header checksum mismatch");
    if (wire.size() != kFrameHeaderSize + len)
        throw Error(Err::Decode, "frame payload truncated");
    auto p = r.raw(len);
    f.payload.assign(p.begin(), p.end());
    return f;
}

}  // namespace ss::transport
