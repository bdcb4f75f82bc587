#pragma once

#include <map>

#include "ss/rpc/rpc.hpp"
#include "ss/storage/protocol.hpp"
#include "ss/storage/types.hpp"

namespace ss::storage {

struct CoordinatorConfig {
    int target_replicas = 3;
    double dead_after_ms = 5000.0;  // silence before a node counts as dead
    double rpc_timeout_ms = 2000.0;
    uint32_t piece_bytes = kPieceBytes;
};

struct AuditResult {
    AuditPlan plan;
    int applied = 0;
    int requeued = 0;  // failed actions; the next round plans them again
    int pruned = 0;    // placements struck from metadata (dead or empty-handed)
};

// Tracks cluster membership from heartbeats and runs replication repair.
// Audit rounds are driven from the controlling context (a tool or test),
// never from inside an actor, because each round blocks on many calls.
class CoordinatorService {
public:
    CoordinatorService(transport::TransportHost& host, rpc::Dispatcher& disp,
                       CoordinatorConfig cfg = {});

    void note_heartbeat(const net::Address& node, size_t chunk_count, double now_ms);
    std::vector<net::Address> live_nodes(double now_ms) const;

    // One snapshot / plan / apply cycle over every reachable node.
    AuditResult audit_round_blocking(sim::Runtime& rt);

private:
    void apply_create(sim::Runtime& rt, const ClusterView& view,
                      const net::Address& meta_owner, const ReplicationAction& act);
    void apply_drop(sim::Runtime& rt, const net::Address* meta_owner,
                    const ReplicationAction& act);

    transport::TransportHost& host_;
    CoordinatorConfig cfg_;

    struct Beat {
        double last_ms = 0;
        size_t chunks = 0;
    };
    std::map<net::Address, Beat> beats_;
};

}  // namespace ss::storage
