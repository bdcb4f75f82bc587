#pragma once

#include <compare>
#include <cstdint>
#include <string>

#include "ss/common/bytes.hpp"

namespace ss::net {

struct Address {
    std::string host;
    uint16_t port = 0;

    auto operator<=>(const Address&) const = default;

    std::string str() const { return host + ":" + std::to_string(port); }
};

inline Address make_address(const std::string& host, uint16_t port) { return Address{host, port}; }

// One-way characteristics of a simulated path. bandwidth_bps == 0 means
// unlimited (no serialization delay, no queueing).
struct LinkProfile {
    double latency_ms = 0.0;
    double loss_rate = 0.0;
    double bandwidth_bps = 0.0;
    double jitter_ms = 0.0;

    static LinkProfile ideal() { return {}; }
};

constexpr size_t kMaxDatagramPayload = 1472;

struct Datagram {
    Address src;
    Address dst;
    Bytes payload;
    double time_ms = 0.0;  // arrival time (virtual in sim, wall in real mode)
};

}  // namespace ss::net
