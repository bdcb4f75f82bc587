#include "ss/rpc/rpc.hpp"

namespace ss::rpc {

Bytes ok_envelope(Bytes body) {
    Bytes out;
    out.reserve(body.size() + 1);
    out.push_back(0);
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

Bytes error_envelope(Err code, std::string_view msg) {
    ByteWriter w;
    w.u8(uint8_t(code) + 1);
    w.str(msg);
    return w.take();
}

Bytes unwrap(Bytes response) {
    if (response.empty()) throw Error(Err::Decode, "empty rpc response");
    uint8_t status = response[0];
    if (status == 0) {
        response.erase(response.begin());
        return response;
    }
    std::span<const uint8_t> tail(response.data() + 1, response.size() - 1);
    ByteReader r(tail);
    std::string msg;
    try {
        msg = r.str();
    } catch (const Error&) {
        msg = "(unreadable error message)";
    }
    throw Error(Err(status - 1), msg);
}

void Dispatcher::on(uint8_t type, Handler h) { handlers_[type] = std::move(h); }

void Dispatcher::attach(transport::TransportHost& host) {
    host.set_request_handler(
        [this](const net::Address& peer, std::span<const uint8_t> payload) {
            return handle(peer, payload);
        });
}

Bytes Dispatcher::handle(const net::Address& peer, std::span<const uint8_t> request) {
    try {
        ByteReader r(request);
        uint8_t type = r.u8();
        auto it = handlers_.find(type);
        if (it == handlers_.end())
            return error_envelope(Err::Decode, "unknown rpc type " + std::to_string(type));
        return ok_envelope(it->second(peer, r));
    } catch (const Error& e) {
        return error_envelope(e.code(), e.what());
    } catch (const std::exception& e) {
        return error_envelope(Err::Internal, e.what());
    }
}

Bytes make_request(uint8_t type, std::span<const uint8_t> body) {
    Bytes out;
    out.reserve(body.size() + 1);
    out.push_back(type);
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

Bytes call(sim::Runtime& rt, transport::Connection& conn, uint8_t type,
           std::span<const uint8_t> body, double timeout_ms) {
    return unwrap(transport::request_blocking(rt, conn, make_request(type, body), timeout_ms));
}

void cast(transport::Connection& conn, uint8_t type, std::span<const uint8_t> body) {
    conn.send_oneway(make_request(type, body));
}

void AsyncCall::start(transport::Connection& conn, uint8_t type, std::span<const uint8_t> body,
                      double deadline_ms) {
    conn_ = &conn;
    deadline_ = deadline_ms;
    failure_.reset();
    try {
        req_ = conn.begin_request(make_request(type, body));
        active_ = true;
    } catch (const Error& e) {
        failure_ = e;
        active_ = false;
        conn_ = nullptr;
    }
}

void AsyncCall::abandon() {
    if (active_ && conn_ && !conn_->closed()) conn_->cancel_request(req_);
    active_ = false;
    conn_ = nullptr;
}

AsyncCall::Outcome AsyncCall::poll(double now_ms, Bytes& out) {
    if (!active_) return failure_ ? Outcome::Failed : Outcome::Pending;
    try {
        if (auto resp = conn_->take_response(req_)) {
            active_ = false;
            conn_ = nullptr;
            out = unwrap(std::move(*resp));
            return Outcome::Done;
        }
    } catch (const Error& e) {
        failure_ = e;
        active_ = false;
        conn_ = nullptr;
        return Outcome::Failed;
    }
    if (now_ms >= deadline_) {
        failure_ = Error(Err::Timeout, "rpc deadline passed");
        abandon();
        return Outcome::Failed;
    }
    return Outcome::Pending;
}

}  // namespace ss::rpc
