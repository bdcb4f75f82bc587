#pragma once

#include "ss/rpc/rpc.hpp"
#include "ss/storage/types.hpp"

namespace ss::storage {

// Chunk payloads move over the message channel in bounded pieces. These two
// drive the full loop against an open connection and throw the peer's error
// (ChunkUnavailable, ChunkCorrupt, ...) straight through.

// Downloads a whole chunk; crc_out is the checksum the holder has on record
// (not recomputed, so a corrupted block is caught by the caller's verify).
Bytes fetch_chunk(sim::Runtime& rt, transport::Connection& conn, const ChunkKey& key,
                  uint32_t& crc_out, uint32_t piece_bytes, double timeout_ms);

// Uploads a whole chunk; rpc_type picks the ingest path on the far side.
void push_chunk(sim::Runtime& rt, transport::Connection& conn, uint8_t rpc_type,
                const ChunkKey& key, std::span<const uint8_t> data, uint32_t crc,
                uint32_t piece_bytes, double timeout_ms);

}  // namespace ss::storage
