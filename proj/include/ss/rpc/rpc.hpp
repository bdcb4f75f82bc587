#pragma once

#include <functional>
#include <map>

#include "ss/common/bytes.hpp"
#include "ss/common/error.hpp"
#include "ss/transport/transport.hpp"

namespace ss::rpc {

// Requests are `type u8 | body`; responses are `status u8 | payload`, where
// status 0 is success and anything else is Err(status-1) with a message
// string. One dispatcher serves all services sharing a transport host.

Bytes ok_envelope(Bytes body);
Bytes error_envelope(Err code, std::string_view msg);

// Returns the payload of a success envelope or throws the carried error.
Bytes unwrap(Bytes response);

class Dispatcher {
public:
    using Handler = std::function<Bytes(const net::Address& peer, ByteReader& body)>;

    void on(uint8_t type, Handler h);
    // Installs this dispatcher as the host's request handler.
    void attach(transport::TransportHost& host);

    Bytes handle(const net::Address& peer, std::span<const uint8_t> request);

private:
    std::map<uint8_t, Handler> handlers_;
};

Bytes make_request(uint8_t type, std::span<const uint8_t> body);

// Send one call and pump the runtime until its response arrives; throws the
// remote error if the peer reports one.
Bytes call(sim::Runtime& rt, transport::Connection& conn, uint8_t type,
           std::span<const uint8_t> body, double timeout_ms = 10000.0);

// Fire-and-forget call (still delivered reliably, just unanswered).
void cast(transport::Connection& conn, uint8_t type, std::span<const uint8_t> body);

// Non-blocking call started on a connection; poll() until it resolves.
class AsyncCall {
public:
    AsyncCall() = default;

    void start(transport::Connection& conn, uint8_t type, std::span<const uint8_t> body,
               double deadline_ms);
    bool active() const { return active_; }
    void abandon();

    enum class Outcome { Pending, Done, Failed };
    // On Done, out holds the unwrapped payload. Remote errors and transport
    // failures (timeout, closed connection) both resolve to Failed with the
    // error recorded.
    Outcome poll(double now_ms, Bytes& out);
    const std::optional<Error>& failure() const { return failure_; }

private:
    transport::Connection* conn_ = nullptr;
    uint64_t req_ = 0;
    double deadline_ = 0;
    bool active_ = false;
    std::optional<Error> failure_;
};

}  // namespace ss::rpc
