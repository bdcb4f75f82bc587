#pragma once

#include <map>
#include <optional>

#include "ss/routing/chord.hpp"
#include "ss/rpc/rpc.hpp"
#include "ss/storage/protocol.hpp"
#include "ss/storage/types.hpp"

namespace ss::storage {

struct ClientConfig {
    std::vector<net::Address> servers;  // ring entry points for owner lookups
    net::Address coordinator;           // live-node source for placement
    std::string user;
    uint64_t chunk_size = 64ull << 20;
    int target_replicas = 3;
    int ring_bits = 16;  // must match the ring the servers joined
    uint32_t piece_bytes = kPieceBytes;
    double rpc_timeout_ms = 5000.0;
};

// The user-facing side of the storage plane. The client does all the
// cross-node work itself: it walks the ring to find a name's metadata owner,
// asks the coordinator who is alive, spreads chunks over the least loaded
// nodes, and reassembles downloads from whichever replicas answer.
class StorageClient {
public:
    StorageClient(sim::Runtime& rt, transport::TransportHost& host, ClientConfig cfg);

    // Splits, places, and commits; returns the committed metadata. A non-zero
    // expected_version insists the upload becomes exactly that version.
    FileMetadata upload(const std::string& name, std::span<const uint8_t> data,
                        const std::optional<AccessControlList>& acl = std::nullopt,
                        uint32_t expected_version = 0);

    // Reassembled, checksum-verified file contents.
    Bytes download(const std::string& name);

    FileMetadata locate(const std::string& name);
    std::vector<FileMetadata> list_files(const std::string& prefix);

    // Deletes the name and best-effort drops its replicas; returns the
    // metadata that was removed.
    FileMetadata remove(const std::string& name);

    // Ring walk: the node whose metadata shard holds this name.
    net::Address resolve_owner(const std::string& name);

    const ClientConfig& config() const { return cfg_; }
    transport::TransportHost& host() { return host_; }

private:
    transport::Connection& dial(const net::Address& at, double timeout_ms = 0);
    bool owner_vouches(const routing::NodeId& key, const routing::NodeRef& who);
    std::vector<std::pair<net::Address, size_t>> fetch_nodes();
    double rtt_to(const net::Address& at);

    sim::Runtime& rt_;
    transport::TransportHost& host_;
    ClientConfig cfg_;
    size_t entry_rr_ = 0;  // rotates entry servers when a walk fails
    std::map<net::Address, double> rtt_cache_;
};

}  // namespace ss::storage
