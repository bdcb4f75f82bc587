#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ss/common/bytes.hpp"
#include "ss/net/address.hpp"

namespace ss::storage {

enum class AccessOp : uint8_t { Read = 0, Write = 1 };

struct AccessControlList {
    std::set<std::string> writers;
    bool public_read = true;
};

// READ is open to the world unless public_read was turned off; WRITE always
// requires membership.
bool check_access(const AccessControlList& acl, const std::string& user, AccessOp op);

struct FileMetadata {
    std::string name;
    uint64_t size_bytes = 0;
    uint64_t chunk_size = 0;
    uint32_t version = 0;
    std::string owner;
    std::vector<uint32_t> chunk_crcs;                 // one entry per chunk
    std::vector<std::vector<net::Address>> replicas;  // one list per chunk

    uint32_t chunk_count() const { return uint32_t(replicas.size()); }
};

// ceil(size / chunk_size); an empty file has no chunks, only metadata.
uint32_t chunk_count_for(uint64_t size_bytes, uint64_t chunk_size);

void write_address(ByteWriter& w, const net::Address& a);
net::Address read_address(ByteReader& r);
void write_metadata(ByteWriter& w, const FileMetadata& m);
FileMetadata read_metadata(ByteReader& r);
void write_acl(ByteWriter& w, const AccessControlList& acl);
AccessControlList read_acl(ByteReader& r);

struct ChunkKey {
    std::string name;
    uint32_t chunk_index = 0;
    uint32_t version = 0;

    auto operator<=>(const ChunkKey&) const = default;
};

void write_chunk_key(ByteWriter& w, const ChunkKey& k);
ChunkKey read_chunk_key(ByteReader& r);

struct ReplicationAction {
    enum class Kind : uint8_t { CreateReplica, DropReplica };
    Kind kind = Kind::CreateReplica;
    ChunkKey key;
    uint32_t expected_crc = 0;  // meaningful for CreateReplica
    net::Address source;        // a live holder for CreateReplica
    net::Address target;
};

// What the auditor sees: the desired placements (from committed metadata),
// what each live node actually holds, and how loaded everyone is.
struct ClusterView {
    std::vector<net::Address> live;
    std::map<net::Address, size_t> chunk_counts;
    struct DesiredChunk {
        ChunkKey key;
        uint32_t crc = 0;
        net::Address meta_owner;  // where to report placement changes
        std::vector<net::Address> replicas;
    };
    std::vector<DesiredChunk> chunks;
    std::map<net::Address, std::set<ChunkKey>> inventory;
    int target_replicas = 3;
};

struct AuditPlan {
    std::vector<ReplicationAction> actions;
    std::vector<ChunkKey> unrecoverable;  // chunks with zero live replicas
};

// Plans one repair round: create replicas for deficient chunks on the least
// loaded live nodes, drop surplus replicas and orphaned blocks, and report
// chunks that no live node holds any more. Pure and deterministic.
AuditPlan replication_audit(const ClusterView& view);

}  // namespace ss::storage
