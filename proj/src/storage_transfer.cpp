#include "ss/storage/transfer.hpp"

#include "ss/storage/protocol.hpp"

namespace ss::storage {

Bytes fetch_chunk(sim::Runtime& rt, transport::Connection& conn, const ChunkKey& key,
                  uint32_t& crc_out, uint32_t piece_bytes, double timeout_ms) {
    Bytes out;
    uint64_t total = 0;
    uint64_t offset = 0;
    do {
        ByteWriter w;
        write_chunk_key(w, key);
        w.u64(offset);
        w.u32(piece_bytes);
        Bytes resp = rpc::call(rt, conn, kRpcChunkGet, w.data(), timeout_ms);
        ByteReader r(resp);
        total = r.u64();
        crc_out = r.u32();
        Bytes piece = r.bytes();
        if (offset == 0) out.reserve(total);
        if (piece.empty() && offset < total)
            throw Error(Err::Decode, "holder returned an empty piece mid-chunk");
        out.insert(out.end(), piece.begin(), piece.end());
        offset += piece.size();
    } while (offset < total);
    return out;
}

void push_chunk(sim::Runtime& rt, transport::Connection& conn, uint8_t rpc_type,
                const ChunkKey& key, std::span<const uint8_t> data, uint32_t crc,
                uint32_t piece_bytes, double timeout_ms) {
    uint64_t offset = 0;
    do {
        size_t n = std::min<uint64_t>(piece_bytes, data.size() - offset);
        ByteWriter w;
        write_chunk_key(w, key);
        w.u64(data.size());
        w.u32(crc);
        w.u64(offset);
        w.bytes(data.subspan(offset, n));
        rpc::call(rt, conn, rpc_type, w.data(), timeout_ms);
        offset += n;
    } while (offset < data.size());
}

}  // namespace ss::storage
