#include "ss/net/sim_network.hpp"

#include <algorithm>

#include "ss/common/error.hpp"

namespace ss::net {

SimNetwork::SimNetwork(uint64_t seed, SimConfig cfg) : cfg_(cfg), rng_(seed) {}

SimNetwork::~SimNetwork() = default;

Endpoint* SimNetwork::bind(const Address& addr) {
    auto it = endpoints_.find(addr);
    if (it != endpoints_.end() && !it->second->closed_)
        throw Error(Err::AddressInUse, addr.str());
    auto ep = std::make_unique<SimEndpoint>(*this, addr);
    auto* raw = ep.get();
    endpoints_[addr] = std::move(ep);
    return raw;
}

void SimNetwork::advance_time(double dt_ms) {
    if (dt_ms < 0) throw Error(Err::BadProfile, "negative time step");
    clock_ms_ += dt_ms;
    flush();
}

void SimNetwork::set_link(const Address& a, const Address& b, const LinkProfile& profile) {
    if (profile.loss_rate < 0.0 || profile.loss_rate > 1.0)
        throw Error(Err::BadProfile, "loss_rate outside [0,1]");
    if (profile.latency_ms < 0.0 || profile.jitter_ms < 0.0)
        throw Error(Err::BadProfile, "negative latency or jitter");
    if (profile.bandwidth_bps < 0.0)
        throw Error(Err::BadProfile, "negative bandwidth");
    auto& fwd = link(a.host, b.host);
    fwd.profile = profile;
    fwd.explicit_profile = true;
    auto& rev = link(b.host, a.host);
    if (!rev.explicit_profile) rev.profile = profile;
}

double SimNetwork::next_arrival_ms() const {
    return pending_.empty() ? -1.0 : pending_.top().arrival_ms;
}

SimNetwork::LinkState& SimNetwork::link(const std::string& src_host, const std::string& dst_host) {
    return links_[{src_host, dst_host}];
}

void SimNetwork::submit(const Address& src, const Address& dst, std::span<const uint8_t> payload) {
    auto& ln = link(src.host, dst.host);
    const auto& p = ln.profile;

    bool dropped = false;
    if (p.loss_rate >= 1.0) {
        dropped = true;
    } else if (p.loss_rate > 0.0) {
        dropped = std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p.loss_rate;
    }

    double arrival = -1.0;
    if (!dropped) {
        double depart = clock_ms_;
        if (p.bandwidth_bps > 0.0) {
            while (!ln.queue_departs.empty() && ln.queue_departs.front() <= clock_ms_)
                ln.queue_departs.pop_front();
            if (ln.queue_departs.size() >= cfg_.link_queue_packets) {
                dropped = true;  // drop-tail overflow
            } else {
                double tx_ms = double(payload.size()) * 8.0 * 1000.0 / p.bandwidth_bps;
                double start = std::max(clock_ms_, ln.busy_until_ms);
                depart = start + tx_ms;
                ln.busy_until_ms = depart;
                ln.queue_departs.push_back(depart);
            }
        }
        if (!dropped) {
            double jitter = p.jitter_ms > 0.0
                                ? std::uniform_real_distribution<double>(0.0, p.jitter_ms)(rng_)
                                : 0.0;
            arrival = depart + p.latency_ms + jitter;
        }
    }

    if (cfg_.record_trace)
        trace_.push_back({clock_ms_, arrival, src, dst, payload.size()});

    if (dropped) {
        ++dropped_;
        return;
    }
    Datagram d{src, dst, Bytes(payload.begin(), payload.end()), arrival};
    pending_.push({arrival, next_seq_++, std::move(d)});
}

void SimNetwork::flush() {
    while (!pending_.empty() && pending_.top().arrival_ms <= clock_ms_) {
        Delivery del = std::move(const_cast<Delivery&>(pending_.top()));
        pending_.pop();
        auto it = endpoints_.find(del.dgram.dst);
        if (it == endpoints_.end() || it->second->closed_) {
            ++dropped_;
            continue;
        }
        ++delivered_;
        it->second->inbox_.push_back(std::move(del.dgram));
    }
}

void SimEndpoint::send(const Address& dst, std::span<const uint8_t> payload) {
    if (payload.size() > kMaxDatagramPayload)
        throw Error(Err::PayloadTooLarge,
                    std::to_string(payload.size()) + " > " + std::to_string(kMaxDatagramPayload));
    if (closed_) return;
    net_.submit(addr_, dst, payload);
}

std::optional<Datagram> SimEndpoint::poll() {
    net_.flush();
    if (inbox_.empty()) return std::nullopt;
    Datagram d = std::move(inbox_.front());
    inbox_.pop_front();
    return d;
}

void SimEndpoint::close() {
    closed_ = true;
    inbox_.clear();
}

}  // namespace ss::net
