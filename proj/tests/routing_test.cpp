#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>

#include "ss/net/sim_network.hpp"
#include "ss/routing/chord.hpp"
#include "ss/sim/runtime.hpp"

using namespace ss;
using namespace ss::routing;

namespace {

NodeId id_of(uint64_t v) { return NodeId::from_u64(v); }

NodeRef ref_of(uint64_t v) {
    return {id_of(v), net::Address{"h" + std::to_string(v), 1}};
}

// A simulated cluster of chord nodes on ideal links, with the maintenance
// traffic either driven here (blocking calls) or left to background ticks.
struct Ring {
    net::SimNetwork net;
    sim::Runtime rt;
    int m;

    struct Node {
        std::unique_ptr<transport::TransportHost> host;
        std::unique_ptr<rpc::Dispatcher> disp;
        std::unique_ptr<ChordService> chord;
        std::unique_ptr<sim::FnActor> maint;
        bool alive = true;
    };
    std::vector<Node> nodes;

    explicit Ring(uint64_t seed, int m_bits) : net(seed), rt(net), m(m_bits) {}

    ChordService& add(const std::string& host, std::optional<NodeId> id = std::nullopt,
                      bool background = false) {
        Node n;
        n.host = std::make_unique<transport::TransportHost>(net, net::Address{host, 40});
        n.disp = std::make_unique<rpc::Dispatcher>();
        n.chord = std::make_unique<ChordService>(*n.host, *n.disp, m, id);
        n.chord->enable_maintenance(background);
        n.disp->attach(*n.host);
        rt.add_actor(n.host.get());
        if (background) {
            auto* c = n.chord.get();
            n.maint = std::make_unique<sim::FnActor>([c](double now) { return c->tick(now); });
            rt.add_actor(n.maint.get());
        }
        nodes.push_back(std::move(n));
        return *nodes.back().chord;
    }

    ChordService& chord(size_t i) { return *nodes[i].chord; }

    void kill(size_t i) {
        nodes[i].alive = false;
        rt.remove_actor(nodes[i].host.get());
        if (nodes[i].maint) rt.remove_actor(nodes[i].maint.get());
        nodes[i].host->shutdown();
    }

    void stabilize_all(int rounds) {
        for (int r = 0; r < rounds; ++r)
            for (auto& n : nodes)
                if (n.alive) n.chord->stabilize_blocking(rt);
    }

    void fix_all_fingers(int rounds = 1) {
        for (int r = 0; r < rounds; ++r)
            for (auto& n : nodes)
                if (n.alive)
                    for (int i = 0; i < m; ++i) n.chord->fix_finger_blocking(rt, i);
    }

    std::vector<NodeId> live_ids() const {
        std::vector<NodeId> ids;
        for (const auto& n : nodes)
            if (n.alive) ids.push_back(n.chord->id());
        std::sort(ids.begin(), ids.end());
        return ids;
    }
};

// First live id at or after key, wrapping: the ground truth every routed
// lookup must agree with.
NodeId oracle_successor(const std::vector<NodeId>& sorted_ids, const NodeId& key) {
    auto it = std::lower_bound(sorted_ids.begin(), sorted_ids.end(), key);
    return it == sorted_ids.end() ? sorted_ids.front() : *it;
}

// Builds a converged ring: join one node at a time through the first, with
// enough stabilization after each join to wire both neighbors, then fingers.
void build_ring(Ring& ring, const std::vector<uint64_t>& ids, bool background = false) {
    for (size_t i = 0; i < ids.size(); ++i) {
        auto& c = ring.add("h" + std::to_string(ids[i]), id_of(ids[i]), background);
        if (i == 0)
            c.create();
        else
            c.join_blocking(ring.rt, ring.chord(0).address());
        if (!background) ring.stabilize_all(2);
    }
    if (!background) {
        ring.stabilize_all(2);
        ring.fix_all_fingers();
    }
}

}  // namespace

TEST_CASE("ring ids come from sha1 and keep only the top bits") {
    CHECK(hash_id("abc", 160).hex() == "a9993e364706816aba3e25717850c26c9cd0d89d");
    CHECK(hash_id("abc", 8).low64() == 0xa9);
    CHECK(hash_id("abc", 12).low64() == 0xa99);
    CHECK(hash_id("abc", 16) == hash_id("abc", 16));
    CHECK(hash_id("abd", 160) != hash_id("abc", 160));

    NodeId narrow = hash_id("some address:9000", 16);
    CHECK(narrow.low64() < (1u << 16));
    for (int i = 0; i < 12; ++i) CHECK(narrow.b[size_t(i)] == 0);

    CHECK_THROWS_AS(hash_id("x", 0), Error);
    CHECK_THROWS_AS(hash_id("x", 161), Error);
}

TEST_CASE("ring id arithmetic wraps at the modulus") {
    CHECK(id_of(0x1234567890abcdefull).low64() == 0x1234567890abcdefull);
    CHECK(id_of(5) < id_of(1000));

    CHECK(add_pow2(id_of(5), 3, 8).low64() == 13);
    CHECK(add_pow2(id_of(250), 3, 8).low64() == 2);
    CHECK(add_pow2(id_of(0xffffffffffffffffull), 0, 64).low64() == 0);
    CHECK(add_pow2(id_of(0), 159, 160).b[0] == 0x80);
    CHECK_THROWS_AS(add_pow2(id_of(0), 8, 8), Error);

    CHECK(ring_offset(id_of(250), id_of(2), 8).low64() == 8);
    CHECK(ring_offset(id_of(2), id_of(250), 8).low64() == 248);
    CHECK(ring_offset(id_of(77), id_of(77), 16).low64() == 0);

    NodeId full_circle = ring_offset(id_of(1), id_of(0), 160);
    for (uint8_t byte : full_circle.b) CHECK(byte == 0xff);
}

TEST_CASE("ring interval membership handles wraparound") {
    CHECK(in_ring_interval(id_of(5), id_of(1), id_of(10)));
    CHECK_FALSE(in_ring_interval(id_of(1), id_of(1), id_of(10)));
    CHECK_FALSE(in_ring_interval(id_of(10), id_of(1), id_of(10)));
    CHECK(in_ring_interval(id_of(10), id_of(1), id_of(10), true));

    // interval crossing zero
    CHECK(in_ring_interval(id_of(1), id_of(200), id_of(10)));
    CHECK(in_ring_interval(id_of(201), id_of(200), id_of(10)));
    CHECK_FALSE(in_ring_interval(id_of(100), id_of(200), id_of(10)));
    CHECK_FALSE(in_ring_interval(id_of(200), id_of(200), id_of(10)));

    // degenerate interval: everything but the endpoint itself
    CHECK(in_ring_interval(id_of(7), id_of(3), id_of(3)));
    CHECK_FALSE(in_ring_interval(id_of(3), id_of(3), id_of(3)));
    CHECK(in_ring_interval(id_of(3), id_of(3), id_of(3), true));
}

TEST_CASE("node refs survive the wire format") {
    ByteWriter w;
    write_node_ref(w, {hash_id("n1", 160), {"somewhere", 9001}});
    write_node_ref(w, ref_of(56));
    ByteReader r(w.data());
    NodeRef a = read_node_ref(r);
    NodeRef b = read_node_ref(r);
    CHECK(a.id == hash_id("n1", 160));
    CHECK(a.addr == net::Address{"somewhere", 9001});
    CHECK(b == ref_of(56));
    CHECK(r.done());
}

TEST_CASE("closest preceding finger picks the highest entry short of the key") {
    RoutingState st;
    st.m_bits = 6;
    st.self = ref_of(1);
    st.successor_list = {ref_of(8), ref_of(14), ref_of(21), ref_of(32)};
    st.finger = {ref_of(8), ref_of(8), ref_of(8), ref_of(14), ref_of(21), ref_of(38)};

    CHECK(closest_preceding_finger(st, id_of(10)) == ref_of(8));
    CHECK(closest_preceding_finger(st, id_of(40)) == ref_of(38));
    CHECK(closest_preceding_finger(st, id_of(22)) == ref_of(21));
    // key == self: the whole ring is fair game, furthest entry wins
    CHECK(closest_preceding_finger(st, id_of(1)) == ref_of(38));
    // nothing between self and 2 but the tables
    CHECK(closest_preceding_finger(st, id_of(2)) == st.self);

    auto step = [&](uint64_t key) { return find_successor_step(st, id_of(key)); };
    CHECK((step(5).done && step(5).node == ref_of(8)));
    CHECK((step(8).done && step(8).node == ref_of(8)));
    CHECK_FALSE(step(10).done);
    CHECK(step(10).node == ref_of(8));
    CHECK_FALSE(step(40).done);
    CHECK(step(40).node == ref_of(38));

    RoutingState lone;
    lone.m_bits = 6;
    lone.self = ref_of(1);
    lone.successor_list = {ref_of(1)};
    lone.finger.assign(6, ref_of(1));
    CHECK(closest_preceding_finger(lone, id_of(40)) == ref_of(1));
    CHECK((find_successor_step(lone, id_of(40)).done &&
           find_successor_step(lone, id_of(40)).node == ref_of(1)));
}

TEST_CASE("two fresh nodes absorb each other") {
    Ring ring(101, 16);
    auto& a = ring.add("ha", id_of(100));
    auto& b = ring.add("hb", id_of(900));
    a.create();
    CHECK(a.joined());
    CHECK(a.successor().id == a.id());

    b.join_blocking(ring.rt, a.address());
    CHECK(b.joined());
    CHECK(b.successor().id == a.id());

    ring.stabilize_all(2);
    CHECK(a.successor().id == b.id());
    CHECK(b.successor().id == a.id());
    REQUIRE(a.state().predecessor.has_value());
    REQUIRE(b.state().predecessor.has_value());
    CHECK(a.state().predecessor->id == b.id());
    CHECK(b.state().predecessor->id == a.id());

    // either node resolves a key to the same owner
    auto from_a = a.lookup_blocking(ring.rt, id_of(500));
    auto from_b = b.lookup_blocking(ring.rt, id_of(500));
    CHECK(from_a.node.id == id_of(900));
    CHECK(from_a.hops == 0);  // 500 lies between a and its successor
    CHECK(from_b.node.id == id_of(900));
    CHECK(from_b.hops == 1);  // b must ask a before it can name the owner
}

TEST_CASE("joining a dead bootstrap fails cleanly") {
    Ring ring(102, 16);
    auto& a = ring.add("ha", id_of(7));
    try {
        a.join_blocking(ring.rt, {"nobody-home", 40}, 3000.0);
        FAIL("expected a throw");
    } catch (const Error& e) {
        CHECK(e.code() == Err::JoinFailed);
    }
    CHECK_FALSE(a.joined());

    // bootstrapping through yourself just starts a ring
    a.join_blocking(ring.rt, a.address());
    CHECK(a.joined());
    CHECK(a.successor().id == a.id());
    CHECK_THROWS_AS(a.join_blocking(ring.rt, a.address()), Error);
}

TEST_CASE("lookups on an unjoined node refuse to guess") {
    Ring ring(103, 16);
    auto& a = ring.add("ha");
    CHECK_THROWS_AS(a.lookup_blocking(ring.rt, id_of(1)), Error);
    a.create();
    CHECK_THROWS_AS(a.fix_finger_blocking(ring.rt, 16), Error);
    CHECK_THROWS_AS(a.fix_finger_blocking(ring.rt, -1), Error);
}

TEST_CASE("a stabilized ring agrees with the brute force successor") {
    Ring ring(104, 6);
    std::vector<uint64_t> ids = {1, 8, 14, 21, 32, 38, 42, 48, 51, 56};
    build_ring(ring, ids);

    auto sorted = ring.live_ids();
    REQUIRE(sorted.size() == ids.size());

    // neighbor pointers are exactly the sorted-order neighbors
    for (size_t i = 0; i < ring.nodes.size(); ++i) {
        auto& c = ring.chord(i);
        auto pos = std::lower_bound(sorted.begin(), sorted.end(), c.id());
        size_t k = size_t(pos - sorted.begin());
        CHECK(c.successor().id == sorted[(k + 1) % sorted.size()]);
        REQUIRE(c.state().predecessor.has_value());
        CHECK(c.state().predecessor->id == sorted[(k + sorted.size() - 1) % sorted.size()]);

        // successor list holds the next nodes clockwise, in order
        const auto& list = c.state().successor_list;
        REQUIRE(list.size() == size_t(ChordService::kSuccessorListLen));
        for (size_t j = 0; j < list.size(); ++j)
            CHECK(list[j].id == sorted[(k + 1 + j) % sorted.size()]);
    }

    // every key from every node resolves to the oracle owner
    for (uint64_t key = 0; key < 64; ++key)
        for (auto& n : ring.nodes) {
            auto got = n.chord->lookup_blocking(ring.rt, id_of(key));
            CHECK(got.node.id == oracle_successor(sorted, id_of(key)));
        }
}

TEST_CASE("lookup hop counts stay within the doubling bound") {
    Ring ring(105, 16);
    std::vector<uint64_t> ids;
    for (uint64_t i = 0; i < 16; ++i) ids.push_back(i * 4096 + 7);
    build_ring(ring, ids);
    auto sorted = ring.live_ids();

    std::mt19937_64 rng(4242);
    int total_hops = 0, max_hops = 0, lookups = 0;
    for (int t = 0; t < 1000; ++t) {
        NodeId key = id_of(rng() & 0xffff);
        auto& from = ring.chord(rng() % ring.nodes.size());
        auto got = from.lookup_blocking(ring.rt, key);
        REQUIRE(got.node.id == oracle_successor(sorted, key));
        total_hops += got.hops;
        max_hops = std::max(max_hops, got.hops);
        ++lookups;
    }
    double mean = double(total_hops) / lookups;
    double log_n = std::log2(16.0);
    CHECK(mean <= log_n);
    CHECK(max_hops <= int(2 * log_n) + 2);
}

TEST_CASE("a lone node answers every lookup with itself") {
    Ring ring(106, 16);
    auto& a = ring.add("solo", id_of(77));
    a.create();
    for (uint64_t k : {0ull, 76ull, 77ull, 78ull, 65535ull}) {
        auto got = a.lookup_blocking(ring.rt, id_of(k));
        CHECK(got.node.id == a.id());
        CHECK(got.hops == 0);
    }
}

TEST_CASE("routing survives a node death") {
    Ring ring(107, 16);
    std::vector<uint64_t> ids = {100, 9000, 17000, 26000, 34000, 43000, 52000, 61000};
    build_ring(ring, ids);

    const size_t victim = 4;  // id 34000
    NodeId dead_id = ring.chord(victim).id();
    ring.kill(victim);
    auto live = ring.live_ids();
    CHECK(live.size() == 7);

    // let each survivor notice its own neighbors; fingers stay stale for now
    ring.stabilize_all(2);

    std::mt19937_64 rng(777);
    std::vector<NodeId> keys;
    for (int i = 0; i < 10; ++i) keys.push_back(id_of(26000 + 1 + rng() % 8000));  // ex-owner range
    for (int i = 0; i < 20; ++i) keys.push_back(id_of(rng() & 0xffff));

    for (auto& n : ring.nodes) {
        if (!n.alive) continue;
        for (const NodeId& key : keys) {
            auto got = n.chord->lookup_blocking(ring.rt, key);
            CHECK(got.node.id == oracle_successor(live, key));
            CHECK(got.node.id != dead_id);
        }
    }

    // full repair: neighbors again exact, no trace of the dead node anywhere
    ring.stabilize_all(3);
    ring.fix_all_fingers(2);
    for (size_t i = 0; i < ring.nodes.size(); ++i) {
        if (!ring.nodes[i].alive) continue;
        auto& st = ring.chord(i).state();
        auto pos = std::lower_bound(live.begin(), live.end(), st.self.id);
        size_t k = size_t(pos - live.begin());
        CHECK(st.successor_list[0].id == live[(k + 1) % live.size()]);
        REQUIRE(st.predecessor.has_value());
        CHECK(st.predecessor->id == live[(k + live.size() - 1) % live.size()]);
        for (const auto& s : st.successor_list) CHECK(s.id != dead_id);
        for (const auto& f : st.finger) CHECK(f.id != dead_id);
    }
}

TEST_CASE("background maintenance converges a ring by itself") {
    Ring ring(108, 16);
    std::vector<uint64_t> ids = {500, 11000, 22000, 33000, 44000, 55000};
    build_ring(ring, ids, /*background=*/true);

    // no controller-driven stabilization: give the periodic rounds time to
    // wire neighbors and walk the full finger cycle
    ring.rt.run_for(20000.0);

    auto sorted = ring.live_ids();
    for (size_t i = 0; i < ring.nodes.size(); ++i) {
        auto& c = ring.chord(i);
        auto pos = std::lower_bound(sorted.begin(), sorted.end(), c.id());
        size_t k = size_t(pos - sorted.begin());
        CHECK(c.successor().id == sorted[(k + 1) % sorted.size()]);
        REQUIRE(c.state().predecessor.has_value());
        CHECK(c.state().predecessor->id == sorted[(k + sorted.size() - 1) % sorted.size()]);
    }

    std::mt19937_64 rng(31337);
    for (int t = 0; t < 100; ++t) {
        NodeId key = id_of(rng() & 0xffff);
        auto got = ring.chord(rng() % ring.nodes.size()).lookup_blocking(ring.rt, key);
        CHECK(got.node.id == oracle_successor(sorted, key));
    }

    // a death heals without help too
    NodeId dead_id = ring.chord(2).id();
    ring.kill(2);
    ring.rt.run_for(25000.0);
    auto live = ring.live_ids();
    for (size_t i = 0; i < ring.nodes.size(); ++i) {
        if (!ring.nodes[i].alive) continue;
        auto& st = ring.chord(i).state();
        auto pos = std::lower_bound(live.begin(), live.end(), st.self.id);
        size_t k = size_t(pos - live.begin());
        CHECK(st.successor_list[0].id == live[(k + 1) % live.size()]);
        REQUIRE(st.predecessor.has_value());
        CHECK(st.predecessor->id == live[(k + live.size() - 1) % live.size()]);
        for (const auto& f : st.finger) CHECK(f.id != dead_id);
    }
    for (int t = 0; t < 40; ++t) {
        NodeId key = id_of(rng() & 0xffff);
        auto got = ring.chord(5).lookup_blocking(ring.rt, key);
        CHECK(got.node.id == oracle_successor(live, key));
    }
}

TEST_CASE("default ids hash the listen address") {
    Ring ring(109, 160);
    auto& a = ring.add("alpha");
    auto& b = ring.add("beta");
    CHECK(a.id() == hash_id(a.address().str(), 160));
    CHECK(a.id() != b.id());

    a.create();
    b.join_blocking(ring.rt, a.address());
    ring.stabilize_all(2);
    ring.fix_all_fingers();

    auto sorted = ring.live_ids();
    std::mt19937_64 rng(9);
    for (int t = 0; t < 50; ++t) {
        NodeId key;
        for (auto& byte : key.b) byte = uint8_t(rng());
        auto got = a.lookup_blocking(ring.rt, key);
        CHECK(got.node.id == oracle_successor(sorted, key));
    }
}
