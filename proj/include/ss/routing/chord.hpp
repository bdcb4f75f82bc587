#pragma once

#include <optional>
#include <vector>

#include "ss/routing/node_id.hpp"
#include "ss/rpc/rpc.hpp"

namespace ss::routing {

// Lookup RPC vocabulary.
inline constexpr uint8_t kRpcGetSuccessor = 1;
inline constexpr uint8_t kRpcGetPredecessor = 2;
inline constexpr uint8_t kRpcFindSuccessor = 3;
inline constexpr uint8_t kRpcNotify = 4;
inline constexpr uint8_t kRpcPing = 5;

struct NodeRef {
    NodeId id;
    net::Address addr;

    bool operator==(const NodeRef& o) const { return id == o.id && addr == o.addr; }
};

void write_node_ref(ByteWriter& w, const NodeRef& n);
NodeRef read_node_ref(ByteReader& r);

// The ring-position bookkeeping one node maintains.
struct RoutingState {
    NodeRef self;
    std::vector<NodeRef> successor_list;  // [0] is the successor; never empty once joined
    std::optional<NodeRef> predecessor;
    std::vector<NodeRef> finger;  // finger[i] = first node at or after self.id + 2^i
    int m_bits = 160;
};

// Highest table entry strictly between self and key (the best next hop), or
// self when no entry improves on asking our own successor.
NodeRef closest_preceding_finger(const RoutingState& st, const NodeId& key);

struct FindStep {
    bool done = false;
    NodeRef node;
};

// One routing step: either the key's successor (done) or the next node to ask.
FindStep find_successor_step(const RoutingState& st, const NodeId& key);

// One node's view of the ring plus the protocol around it. Handlers answer
// purely from local state; every multi-hop activity (join, lookups,
// stabilization) is driven from this side of the conversation.
class ChordService {
public:
    static constexpr int kSuccessorListLen = 4;

    // The ring id defaults to hash_id(address); tests may pin an explicit id.
    ChordService(transport::TransportHost& host, rpc::Dispatcher& disp, int m_bits,
                 std::optional<NodeId> id_override = std::nullopt);

    const NodeId& id() const { return st_.self.id; }
    const net::Address& address() const { return st_.self.addr; }
    const RoutingState& state() const { return st_; }
    int m_bits() const { return st_.m_bits; }
    bool joined() const { return joined_; }

    // Starts a fresh single-node ring.
    void create();

    // Joins via bootstrap (joining self-address creates a fresh ring).
    // Throws JoinFailed when the bootstrap cannot be reached.
    void join_blocking(sim::Runtime& rt, const net::Address& bootstrap,
                       double timeout_ms = 15000.0);

    struct Lookup {
        NodeRef node;
        int hops = 0;  // remote nodes consulted
    };
    // Iterative lookup of key's successor starting from local state.
    // Throws LookupTimeout when no route survives.
    Lookup lookup_blocking(sim::Runtime& rt, const NodeId& key, double timeout_ms = 20000.0);

    // One maintenance exchange with the current successor: verify against its
    // predecessor, notify it of us, refresh the successor list. Unreachable
    // successors are dropped and the next list entry promoted.
    void stabilize_blocking(sim::Runtime& rt);

    // finger[i] = find_successor(self.id + 2^i); kept unchanged on timeout.
    void fix_finger_blocking(sim::Runtime& rt, int i);

    // Scrub a departed node from local tables.
    void handle_departure(const NodeId& departed);

    // Background maintenance: a stabilize round plus one finger refresh every
    // interval. Runs the same exchanges as the blocking forms, just spread
    // across ticks.
    bool tick(double now_ms);
    void enable_maintenance(bool on) { maintenance_ = on; }
    void set_maintenance_interval(double ms) { maintenance_interval_ms_ = ms; }

    NodeRef successor() const {
        return st_.successor_list.empty() ? st_.self : st_.successor_list[0];
    }

private:
    Bytes rpc_find_successor(ByteReader& r);
    Bytes rpc_get_successor();
    Bytes rpc_get_predecessor();
    void rpc_notify(ByteReader& r);

    void adopt_successor(const NodeRef& n);
    void notify_peer(const NodeRef& target);

    // Asks the node at `at` to advance the search by one step; asking our own
    // address answers locally.
    FindStep remote_find_step(sim::Runtime& rt, const net::Address& at, const NodeId& key,
                              double timeout_ms);

    // background round machinery
    enum class Phase { Idle, PingPred, GetPred, Walk, Finger };
    bool start_call(const net::Address& at, uint8_t type, std::span<const uint8_t> body,
                    double now);
    void begin_get_pred(double now);
    void begin_finger(double now);
    void finger_apply(const NodeRef& n);

    transport::TransportHost& host_;
    RoutingState st_;
    bool joined_ = false;
    bool maintenance_ = true;
    double maintenance_interval_ms_ = 500.0;
    double call_budget_ms_ = 2000.0;

    Phase phase_ = Phase::Idle;
    rpc::AsyncCall call_;
    double next_round_ms_ = 0.0;
    bool offset_applied_ = false;
    std::vector<NodeRef> walk_acc_;
    NodeRef walk_cur_;
    int next_finger_ = 0;
    int finger_i_ = 0;
    NodeId finger_key_;
    NodeRef finger_cur_;
    int finger_hops_ = 0;
};

}  // namespace ss::routing
