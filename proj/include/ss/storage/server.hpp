#pragma once

#include <functional>
#include <map>

#include "ss/rpc/rpc.hpp"
#include "ss/storage/chunk_store.hpp"
#include "ss/storage/protocol.hpp"
#include "ss/storage/types.hpp"

namespace ss::storage {

struct StorageConfig {
    uint64_t chunk_size = 64ull << 20;
    int target_replicas = 3;
    double heartbeat_interval_ms = 1000.0;
    std::string data_dir;       // empty = memory only (no recovery)
    net::Address coordinator;   // heartbeat destination
};

// One node's storage plane: its chunk blocks plus the metadata shard for the
// names this node owns on the ring. Every handler answers from local state
// only; multi-node flows (placement, replication, owner lookup) are driven by
// clients and the coordinator.
class StorageService {
public:
    StorageService(transport::TransportHost& host, rpc::Dispatcher& disp, StorageConfig cfg);

    // Sends the periodic heartbeat; drive as an actor.
    bool tick(double now_ms);

    // Heartbeats addressed to ourselves skip the network through this hook.
    void set_local_heartbeat(std::function<void(const net::Address&, size_t)> fn) {
        local_beat_ = std::move(fn);
    }

    struct FileRecord {
        FileMetadata meta;
        AccessControlList acl;
    };

    ChunkStore& chunks() { return store_; }
    const std::map<std::string, FileRecord>& shard() const { return shard_; }
    const StorageConfig& config() const { return cfg_; }
    const net::Address& address() const { return host_.address(); }

private:
    Bytes on_upload_init(ByteReader& r);
    Bytes on_upload_commit(ByteReader& r);
    Bytes on_chunk_put(ByteReader& r);
    Bytes on_chunk_get(ByteReader& r);
    Bytes on_locate(ByteReader& r);
    Bytes on_list(ByteReader& r);
    Bytes on_delete(ByteReader& r);
    Bytes on_chunk_drop(ByteReader& r);
    Bytes on_chunk_list();
    Bytes on_meta_update(ByteReader& r);

    void log_append(uint8_t kind, const Bytes& payload);
    void log_replay();

    transport::TransportHost& host_;
    StorageConfig cfg_;
    ChunkStore store_;
    std::map<std::string, FileRecord> shard_;
    std::map<std::string, uint32_t> next_version_;  // per-name upload counter

    struct Pending {
        FileMetadata meta;
        AccessControlList acl;
    };
    std::map<std::pair<std::string, uint32_t>, Pending> pending_;

    struct Assembly {
        Bytes buf;
        uint64_t have = 0;
        uint32_t crc = 0;
    };
    std::map<ChunkKey, Assembly> assembling_;

    std::function<void(const net::Address&, size_t)> local_beat_;
    double next_beat_ms_ = 0.0;
};

}  // namespace ss::storage
