#include "ss/routing/chord.hpp"

#include <algorithm>
#include <set>

namespace ss::routing {

void write_node_ref(ByteWriter& w, const NodeRef& n) {
    w.raw(n.id.b);
    w.str(n.addr.host);
    w.u16(n.addr.port);
}

NodeRef read_node_ref(ByteReader& r) {
    NodeRef n;
    auto id = r.raw(20);
    std::copy(id.begin(), id.end(), n.id.b.begin());
    n.addr.host = r.str();
    n.addr.port = r.u16();
    return n;
}

NodeRef closest_preceding_finger(const RoutingState& st, const NodeId& key) {
    NodeRef best = st.self;
    NodeId best_off;  // zero: self is distance 0 from itself
    auto consider = [&](const NodeRef& c) {
        if (c.id == st.self.id) return;
        if (!in_ring_interval(c.id, st.self.id, key, false)) return;
        NodeId off = ring_offset(st.self.id, c.id, st.m_bits);
        if (off > best_off) {
            best_off = off;
            best = c;
        }
    };
    for (const NodeRef& f : st.finger) consider(f);
    for (const NodeRef& s : st.successor_list) consider(s);
    return best;
}

FindStep find_successor_step(const RoutingState& st, const NodeId& key) {
    NodeRef succ = st.successor_list.empty() ? st.self : st.successor_list[0];
    if (in_ring_interval(key, st.self.id, succ.id, true)) return {true, succ};
    NodeRef next = closest_preceding_finger(st, key);
    if (next.id == st.self.id) return {true, succ};
    return {false, next};
}

ChordService::ChordService(transport::TransportHost& host, rpc::Dispatcher& disp, int m_bits,
                           std::optional<NodeId> id_override)
    : host_(host) {
    if (m_bits < 1 || m_bits > 160) throw Error(Err::InvalidInput, "ring width out of range");
    st_.m_bits = m_bits;
    st_.self.addr = host.address();
    st_.self.id = id_override ? *id_override : hash_id(st_.self.addr.str(), m_bits);
    st_.finger.assign(size_t(m_bits), st_.self);

    disp.on(kRpcFindSuccessor,
            [this](const net::Address&, ByteReader& r) { return rpc_find_successor(r); });
    disp.on(kRpcGetSuccessor,
            [this](const net::Address&, ByteReader&) { return rpc_get_successor(); });
    disp.on(kRpcGetPredecessor,
            [this](const net::Address&, ByteReader&) { return rpc_get_predecessor(); });
    disp.on(kRpcNotify, [this](const net::Address&, ByteReader& r) {
        rpc_notify(r);
        return Bytes{};
    });
    disp.on(kRpcPing, [this](const net::Address&, ByteReader&) { return Bytes{}; });
}

void ChordService::create() {
    st_.successor_list = {st_.self};
    st_.predecessor.reset();
    std::fill(st_.finger.begin(), st_.finger.end(), st_.self);
    joined_ = true;
}

Bytes ChordService::rpc_find_successor(ByteReader& r) {
    if (!joined_) throw Error(Err::Internal, "node not in a ring yet");
    NodeId key;
    auto raw = r.raw(20);
    std::copy(raw.begin(), raw.end(), key.b.begin());
    FindStep s = find_successor_step(st_, key);
    ByteWriter w;
    w.u8(s.done ? 1 : 0);
    write_node_ref(w, s.node);
    return w.take();
}

Bytes ChordService::rpc_get_successor() {
    if (!joined_) throw Error(Err::Internal, "node not in a ring yet");
    ByteWriter w;
    write_node_ref(w, successor());
    return w.take();
}

Bytes ChordService::rpc_get_predecessor() {
    ByteWriter w;
    w.u8(st_.predecessor ? 1 : 0);
    if (st_.predecessor) write_node_ref(w, *st_.predecessor);
    return w.take();
}

void ChordService::rpc_notify(ByteReader& r) {
    NodeRef cand = read_node_ref(r);
    if (cand.id == st_.self.id) return;
    if (!st_.predecessor ||
        in_ring_interval(cand.id, st_.predecessor->id, st_.self.id, false))
        st_.predecessor = cand;
}

void ChordService::adopt_successor(const NodeRef& n) {
    std::vector<NodeRef> list{n};
    for (const NodeRef& s : st_.successor_list) {
        if (s.id != n.id && int(list.size()) < kSuccessorListLen) list.push_back(s);
    }
    st_.successor_list = std::move(list);
    st_.finger[0] = n;
}

void ChordService::handle_departure(const NodeId& departed) {
    std::erase_if(st_.successor_list, [&](const NodeRef& s) { return s.id == departed; });
    if (st_.successor_list.empty()) st_.successor_list = {st_.self};
    if (st_.predecessor && st_.predecessor->id == departed) st_.predecessor.reset();
    const NodeRef& repl = st_.successor_list[0];
    for (NodeRef& f : st_.finger)
        if (f.id == departed) f = repl;
    st_.finger[0] = st_.successor_list[0];
}

FindStep ChordService::remote_find_step(sim::Runtime& rt, const net::Address& at,
                                        const NodeId& key, double timeout_ms) {
    if (at == st_.self.addr) return find_successor_step(st_, key);
    auto& conn = transport::connect_blocking(rt, host_, at, timeout_ms);
    ByteWriter w;
    w.raw(key.b);
    Bytes resp = rpc::call(rt, conn, kRpcFindSuccessor, w.data(), timeout_ms);
    ByteReader r(resp);
    FindStep s;
    s.done = r.u8() != 0;
    s.node = read_node_ref(r);
    return s;
}

void ChordService::join_blocking(sim::Runtime& rt, const net::Address& bootstrap,
                                 double timeout_ms) {
    if (joined_) throw Error(Err::Internal, "already joined");
    if (bootstrap == st_.self.addr) {
        create();
        return;
    }
    double deadline = rt.now_ms() + timeout_ms;
    auto budget = [&] { return std::max(100.0, std::min(3000.0, deadline - rt.now_ms())); };
    try {
        FindStep s = remote_find_step(rt, bootstrap, st_.self.id, budget());
        int guard = 0;
        while (!s.done) {
            if (++guard > 2 * st_.m_bits + 8 || rt.now_ms() >= deadline)
                throw Error(Err::JoinFailed, "lookup via bootstrap did not converge");
            s = remote_find_step(rt, s.node.addr, st_.self.id, budget());
        }
        st_.predecessor.reset();
        adopt_successor(s.node);
        joined_ = true;
    } catch (const Error& e) {
        if (e.code() == Err::JoinFailed) throw;
        throw Error(Err::JoinFailed, std::string("bootstrap unreachable: ") + e.what());
    }
}

ChordService::Lookup ChordService::lookup_blocking(sim::Runtime& rt, const NodeId& key,
                                                   double timeout_ms) {
    if (!joined_) throw Error(Err::LookupTimeout, "node not in a ring");
    double deadline = rt.now_ms() + timeout_ms;
    auto budget = [&] { return std::max(100.0, std::min(2000.0, deadline - rt.now_ms())); };
    std::set<NodeId> dead;  // unreachable nodes seen during this lookup
    int restarts = 0;
    while (true) {
        FindStep s = find_successor_step(st_, key);
        int hops = 0;
        bool failed = false;
        while (!s.done && !failed) {
            if (hops > 2 * st_.m_bits + 8) {
                failed = true;  // routing loop on an unconverged ring
                break;
            }
            NodeRef cur = s.node;
            FindStep nxt;
            try {
                nxt = remote_find_step(rt, cur.addr, key, budget());
                ++hops;
            } catch (const Error&) {
                dead.insert(cur.id);  // unreachable hop: scrub and retry
                handle_departure(cur.id);
                failed = true;
                break;
            }
            if (!nxt.done && dead.count(nxt.node.id)) {
                // cur still routes through a node we know is gone; move one
                // spot clockwise via cur's own successor pointer instead
                NodeRef side;
                try {
                    auto& sc = transport::connect_blocking(rt, host_, cur.addr, budget());
                    Bytes resp = rpc::call(rt, sc, kRpcGetSuccessor, {}, budget());
                    ByteReader r(resp);
                    side = read_node_ref(r);
                } catch (const Error&) {
                    dead.insert(cur.id);
                    handle_departure(cur.id);
                    failed = true;
                    break;
                }
                if (dead.count(side.id) || side.id == cur.id) {
                    failed = true;
                    break;
                }
                if (in_ring_interval(key, cur.id, side.id, true)) return {side, hops};
                nxt = {false, side};
            }
            if (nxt.done && dead.count(nxt.node.id)) {
                failed = true;  // stale claim about a gone node; retry later
                break;
            }
            s = nxt;
        }
        if (!failed) return {s.node, hops};
        if (++restarts > 8 || rt.now_ms() >= deadline)
            throw Error(Err::LookupTimeout, "no route to successor of " + key.hex());
    }
}

void ChordService::notify_peer(const NodeRef& target) {
    if (target.addr == st_.self.addr) return;
    try {
        ByteWriter w;
        write_node_ref(w, st_.self);
        rpc::cast(*host_.connect(target.addr), kRpcNotify, w.data());
    } catch (const Error&) {
        // peer gone; the next stabilize round will notice
    }
}

void ChordService::stabilize_blocking(sim::Runtime& rt) {
    if (!joined_) return;

    if (st_.predecessor && st_.predecessor->addr != st_.self.addr) {
        try {
            auto& pc = transport::connect_blocking(rt, host_, st_.predecessor->addr, 1500.0);
            rpc::call(rt, pc, kRpcPing, {}, 1500.0);
        } catch (const Error&) {
            st_.predecessor.reset();
        }
    }

    NodeRef succ = successor();
    if (succ.addr == st_.self.addr) {
        // Lone ring: a notify from a joiner shows up as our predecessor.
        if (st_.predecessor && st_.predecessor->id != st_.self.id) {
            adopt_successor(*st_.predecessor);
            notify_peer(st_.predecessor.value());
        }
        return;
    }

    try {
        auto& conn = transport::connect_blocking(rt, host_, succ.addr, 2000.0);
        Bytes resp = rpc::call(rt, conn, kRpcGetPredecessor, {}, 2000.0);
        ByteReader r(resp);
        if (r.u8()) {
            NodeRef cand = read_node_ref(r);
            if (cand.addr != st_.self.addr &&
                in_ring_interval(cand.id, st_.self.id, succ.id, false)) {
                try {
                    auto& cc = transport::connect_blocking(rt, host_, cand.addr, 1500.0);
                    rpc::call(rt, cc, kRpcPing, {}, 1500.0);
                    adopt_successor(cand);
                    succ = cand;
                } catch (const Error&) {
                    // candidate died between being recorded and now; keep succ
                }
            }
        }
        notify_peer(succ);

        std::vector<NodeRef> list{succ};
        NodeRef cur = succ;
        while (int(list.size()) < kSuccessorListLen && cur.addr != st_.self.addr) {
            try {
                auto& wc = transport::connect_blocking(rt, host_, cur.addr, 2000.0);
                Bytes resp = rpc::call(rt, wc, kRpcGetSuccessor, {}, 2000.0);
                ByteReader nr(resp);
                NodeRef nxt = read_node_ref(nr);
                bool seen = std::any_of(list.begin(), list.end(),
                                        [&](const NodeRef& e) { return e.id == nxt.id; });
                if (seen || nxt.addr == st_.self.addr) break;
                list.push_back(nxt);
                cur = nxt;
            } catch (const Error&) {
                break;  // keep the partial list
            }
        }
        st_.successor_list = std::move(list);
        st_.finger[0] = st_.successor_list[0];
    } catch (const Error&) {
        handle_departure(succ.id);
    }
}

void ChordService::fix_finger_blocking(sim::Runtime& rt, int i) {
    if (!joined_) return;
    if (i < 0 || i >= st_.m_bits) throw Error(Err::InvalidInput, "finger index out of range");
    NodeId target = add_pow2(st_.self.id, i, st_.m_bits);
    try {
        Lookup res = lookup_blocking(rt, target, 8000.0);
        if (i == 0)
            adopt_successor(res.node);
        else
            st_.finger[size_t(i)] = res.node;
    } catch (const Error&) {
        // lookup failed; leave the finger for a later round
    }
}

// ----------------------------------------------------------- background loop

bool ChordService::start_call(const net::Address& at, uint8_t type,
                              std::span<const uint8_t> body, double now) {
    try {
        call_.start(*host_.connect(at), type, body, now + call_budget_ms_);
        return call_.active();
    } catch (const Error&) {
        return false;
    }
}

void ChordService::begin_get_pred(double now) {
    phase_ = Phase::GetPred;
    if (!start_call(successor().addr, kRpcGetPredecessor, {}, now)) {
        handle_departure(successor().id);
        phase_ = Phase::Idle;
    }
}

void ChordService::begin_finger(double now) {
    finger_i_ = next_finger_;
    next_finger_ = (next_finger_ + 1) % st_.m_bits;
    finger_key_ = add_pow2(st_.self.id, finger_i_, st_.m_bits);
    finger_hops_ = 0;
    FindStep s = find_successor_step(st_, finger_key_);
    if (s.done) {
        finger_apply(s.node);
        phase_ = Phase::Idle;
        return;
    }
    finger_cur_ = s.node;
    ByteWriter w;
    w.raw(finger_key_.b);
    phase_ = Phase::Finger;
    if (!start_call(finger_cur_.addr, kRpcFindSuccessor, w.data(), now)) phase_ = Phase::Idle;
}

void ChordService::finger_apply(const NodeRef& n) {
    if (finger_i_ == 0)
        adopt_successor(n);
    else
        st_.finger[size_t(finger_i_)] = n;
}

bool ChordService::tick(double now_ms) {
    if (!maintenance_ || !joined_) return false;
    if (!offset_applied_) {
        offset_applied_ = true;
        next_round_ms_ =
            now_ms + double(st_.self.id.low64() % uint64_t(maintenance_interval_ms_));
    }

    if (phase_ == Phase::Idle) {
        if (now_ms < next_round_ms_) return false;
        next_round_ms_ = now_ms + maintenance_interval_ms_;
        if (successor().addr == st_.self.addr) {
            if (st_.predecessor && st_.predecessor->id != st_.self.id) {
                adopt_successor(*st_.predecessor);
                notify_peer(st_.predecessor.value());
            }
            begin_finger(now_ms);
            return true;
        }
        if (st_.predecessor && st_.predecessor->addr != st_.self.addr) {
            phase_ = Phase::PingPred;
            if (!start_call(st_.predecessor->addr, kRpcPing, {}, now_ms)) {
                st_.predecessor.reset();
                begin_get_pred(now_ms);
            }
        } else {
            begin_get_pred(now_ms);
        }
        return true;
    }

    Bytes out;
    auto outcome = call_.poll(now_ms, out);
    if (outcome == rpc::AsyncCall::Outcome::Pending) return false;
    bool failed = outcome == rpc::AsyncCall::Outcome::Failed;

    switch (phase_) {
        case Phase::PingPred:
            if (failed) st_.predecessor.reset();
            begin_get_pred(now_ms);
            return true;

        case Phase::GetPred: {
            if (failed) {
                handle_departure(successor().id);
                phase_ = Phase::Idle;
                return true;
            }
            ByteReader r(out);
            if (r.u8()) {
                NodeRef cand = read_node_ref(r);
                if (cand.addr != st_.self.addr &&
                    in_ring_interval(cand.id, st_.self.id, successor().id, false))
                    adopt_successor(cand);
            }
            notify_peer(successor());
            walk_acc_ = {successor()};
            walk_cur_ = successor();
            if (walk_cur_.addr == st_.self.addr) {
                st_.successor_list = walk_acc_;
                st_.finger[0] = st_.successor_list[0];
                begin_finger(now_ms);
                return true;
            }
            phase_ = Phase::Walk;
            if (!start_call(walk_cur_.addr, kRpcGetSuccessor, {}, now_ms)) {
                st_.successor_list = walk_acc_;
                st_.finger[0] = st_.successor_list[0];
                begin_finger(now_ms);
            }
            return true;
        }

        case Phase::Walk: {
            bool stop = failed;
            if (!failed) {
                ByteReader r(out);
                NodeRef nxt = read_node_ref(r);
                bool seen = std::any_of(walk_acc_.begin(), walk_acc_.end(),
                                        [&](const NodeRef& e) { return e.id == nxt.id; });
                if (seen || nxt.addr == st_.self.addr) {
                    stop = true;
                } else {
                    walk_acc_.push_back(nxt);
                    walk_cur_ = nxt;
                    stop = int(walk_acc_.size()) >= kSuccessorListLen;
                }
            }
            if (!stop && start_call(walk_cur_.addr, kRpcGetSuccessor, {}, now_ms)) return true;
            st_.successor_list = walk_acc_;
            st_.finger[0] = st_.successor_list[0];
            begin_finger(now_ms);
            return true;
        }

        case Phase::Finger: {
            if (failed) {
                handle_departure(finger_cur_.id);
                phase_ = Phase::Idle;
                return true;
            }
            ByteReader r(out);
            FindStep s;
            s.done = r.u8() != 0;
            s.node = read_node_ref(r);
            if (s.done) {
                finger_apply(s.node);
                phase_ = Phase::Idle;
                return true;
            }
            if (++finger_hops_ > 2 * st_.m_bits + 8) {
                phase_ = Phase::Idle;
                return true;
            }
            finger_cur_ = s.node;
            ByteWriter w;
            w.raw(finger_key_.b);
            if (!start_call(finger_cur_.addr, kRpcFindSuccessor, w.data(), now_ms))
                phase_ = Phase::Idle;
            return true;
        }

        case Phase::Idle:
            return false;
    }
    return false;
}

}  // namespace ss::routing
