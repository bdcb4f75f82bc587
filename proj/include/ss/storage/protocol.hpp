#pragma once

#include <cstdint>

namespace ss::storage {

// Storage RPC types. Chord owns 1..5 on the shared per-node dispatcher, so
// these start at 10; the coordinator's live at 30.
inline constexpr uint8_t kRpcUploadInit = 10;
inline constexpr uint8_t kRpcUploadCommit = 11;
inline constexpr uint8_t kRpcChunkPut = 12;
inline constexpr uint8_t kRpcChunkGet = 13;
inline constexpr uint8_t kRpcLocate = 14;
inline constexpr uint8_t kRpcList = 15;
inline constexpr uint8_t kRpcDelete = 16;
inline constexpr uint8_t kRpcReplicaPut = 17;
inline constexpr uint8_t kRpcChunkDrop = 18;
inline constexpr uint8_t kRpcChunkList = 19;
inline constexpr uint8_t kRpcMetaUpdate = 20;

inline constexpr uint8_t kRpcHeartbeat = 30;
inline constexpr uint8_t kRpcGetNodes = 31;

// Chunk payloads travel in pieces of this size inside request/response
// bodies, keeping individual messages well under the datagram burst a
// bottleneck queue can absorb.
inline constexpr uint32_t kPieceBytes = 64 * 1024;

}  // namespace ss::storage
