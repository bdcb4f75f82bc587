#pragma once

#include <memory>
#include <optional>
#include <span>

#include "ss/net/address.hpp"

namespace ss::net {

class Network;

// A bound datagram socket. Obtained from Network::bind; owned by the network.
class Endpoint {
public:
    virtual ~Endpoint() = default;

    virtual const Address& address() const = 0;
    // Enqueues one datagram, best effort. Throws PayloadTooLarge above 1472 bytes.
    virtual void send(const Address& dst, std::span<const uint8_t> payload) = 0;
    // Next arrived datagram in arrival order, if any.
    virtual std::optional<Datagram> poll() = 0;
    // Unbinds. Further sends are dropped, pending arrivals discarded.
    virtual void close() = 0;
    virtual bool closed() const = 0;
};

class Network {
public:
    virtual ~Network() = default;

    // Throws AddressInUse if addr is already bound.
    virtual Endpoint* bind(const Address& addr) = 0;
    virtual double now_ms() const = 0;
    // Simulated backend only; throws SimOnly otherwise.
    virtual void advance_time(double dt_ms) = 0;
    virtual bool simulated() const = 0;
};

}  // namespace ss::net
