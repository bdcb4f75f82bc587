#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <queue>
#include <random>
#include <vector>

#include "ss/net/network.hpp"

namespace ss::net {

struct SimConfig {
    // Drop-tail queue capacity per directed link, in packets; applies only to
    // bandwidth-limited links.
    size_t link_queue_packets = 256;
    bool record_trace = false;
};

class SimEndpoint;

// One line per send; arrival_ms < 0 means the datagram was dropped.
struct TraceEntry {
    double send_ms;
    double arrival_ms;
    Address src;
    Address dst;
    size_t size;
};

// Deterministic discrete-event network. Single-threaded; the virtual clock
// moves only through advance_time. Links are keyed by host pair, so all
// endpoints of two hosts share one serializing path (and its queue).
class SimNetwork final : public Network {
public:
    explicit SimNetwork(uint64_t seed, SimConfig cfg = {});
    ~SimNetwork() override;

    Endpoint* bind(const Address& addr) override;
    double now_ms() const override { return clock_ms_; }
    void advance_time(double dt_ms) override;
    bool simulated() const override { return true; }

    // Sets the a->b profile and, when b->a was never set explicitly, mirrors it.
    void set_link(const Address& a, const Address& b, const LinkProfile& profile);

    // Earliest pending arrival, or a negative value when idle.
    double next_arrival_ms() const;

    uint64_t delivered_count() const { return delivered_; }
    uint64_t dropped_count() const { return dropped_; }
    const std::vector<TraceEntry>& trace() const { return trace_; }

private:
    friend class SimEndpoint;

    struct LinkState {
        LinkProfile profile;
        bool explicit_profile = false;
        double busy_until_ms = 0.0;
        std::deque<double> queue_departs;  // wire departure times of queued datagrams
    };

    struct Delivery {
        double arrival_ms;
        uint64_t seq;
        Datagram dgram;
        bool operator>(const Delivery& o) const {
            if (arrival_ms != o.arrival_ms) return arrival_ms > o.arrival_ms;
            return seq > o.seq;
        }
    };

    void submit(const Address& src, const Address& dst, std::span<const uint8_t> payload);
    void flush();
    LinkState& link(const std::string& src_host, const std::string& dst_host);

    SimConfig cfg_;
    double clock_ms_ = 0.0;
    std::mt19937_64 rng_;
    uint64_t next_seq_ = 0;
    uint64_t delivered_ = 0;
    uint64_t dropped_ = 0;
    std::map<Address, std::unique_ptr<SimEndpoint>> endpoints_;
    std::map<std::pair<std::string, std::string>, LinkState> links_;
    std::priority_queue<Delivery, std::vector<Delivery>, std::greater<>> pending_;
    std::vector<TraceEntry> trace_;
};

class SimEndpoint final : public Endpoint {
public:
    SimEndpoint(SimNetwork& net, Address addr) : net_(net), addr_(std::move(addr)) {}

    const Address& address() const override { return addr_; }
    void send(const Address& dst, std::span<const uint8_t> payload) override;
    std::optional<Datagram> poll() override;
    void close() override;
    bool closed() const override { return closed_; }

private:
    friend class SimNetwork;

    SimNetwork& net_;
    Address addr_;
    bool closed_ = false;
    std::deque<Datagram> inbox_;
};

}  // namespace ss::net
