#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>

#include "ss/net/network.hpp"
#include "ss/sim/runtime.hpp"
#include "ss/transport/frame.hpp"
#include "ss/transport/rate_control.hpp"

namespace ss::transport {

struct TransportConfig {
    double sync_interval_ms = 10.0;       // rate-control tick
    double ack_interval_ms = 10.0;        // cumulative ACK cadence
    double handshake_retx_ms = 250.0;
    double keepalive_interval_ms = 1000.0;
    double dead_after_ms = 5000.0;        // silence before a peer is declared gone
    RateControl rate;
};

struct ConnStats {
    uint64_t bytes_sent = 0;         // payload bytes put on the wire (first transmissions)
    uint64_t bytes_delivered = 0;    // payload bytes the peer has acknowledged
    uint64_t bytes_received = 0;     // in-order payload bytes surfaced locally
    uint64_t retransmissions = 0;    // frames sent again after a loss report or probe
    uint64_t duplicate_frames = 0;   // received frames discarded as already-seen
    double rtt_est_ms = 0.0;
    double current_rate_pps = 0.0;
};

class TransportHost;

// One reliable, rate-paced conversation with a single peer. Stream bytes and
// framed messages share one sequence space, so both inherit in-order
// exactly-once delivery from the same NAK/retransmit machinery. Stream data
// is paced by the token bucket; message frames are control traffic and go out
// immediately.
class Connection {
public:
    enum class State { Connecting, Established, Closed };

    const net::Address& peer() const { return peer_; }
    State state() const { return state_; }
    bool established() const { return state_ == State::Established; }
    bool closed() const { return state_ == State::Closed; }

    // Reliable byte stream. send_stream enqueues; pacing drains the queue.
    void send_stream(std::span<const uint8_t> data);
    // Up to max_bytes of whatever has arrived in order. Empty while open and
    // idle; throws ConnectionClosed once the connection is closed and drained.
    Bytes recv_stream(size_t max_bytes = size_t(-1));
    size_t stream_available() const { return stream_in_.size() - stream_in_head_; }
    // Bytes accepted by send_stream but not yet acknowledged by the peer.
    size_t send_backlog() const;

    // Request/response messages. begin_request returns the id to poll with
    // take_response; send_oneway expects no reply.
    uint64_t begin_request(std::span<const uint8_t> payload);
    void send_oneway(std::span<const uint8_t> payload);
    // nullopt while pending. Throws ConnectionClosed if the connection died
    // before the response arrived.
    std::optional<Bytes> take_response(uint64_t request_id);
    // Stops waiting for a response that is no longer wanted.
    void cancel_request(uint64_t request_id);

    void close();
    ConnStats stats() const;

private:
    friend class TransportHost;

    struct SentFrame {
        Bytes wire;
        double first_send_ms = 0.0;
        uint32_t payload_len = 0;
        FrameKind kind = FrameKind::Data;
        bool retx_queued = false;
        bool ever_retx = false;
    };
    struct PendingMsg {
        uint64_t id = 0;
        uint16_t flags = 0;
        Bytes data;
        size_t off = 0;
        bool started = false;
    };

    Connection(TransportHost& host, net::Address peer, const TransportConfig& cfg);

    void start_connect(double now);
    void establish(double now);
    void on_frame(Frame f, double now);
    bool tick(double now);
    double nak_interval() const;

    void consume_in_order(const Frame& f);
    void deliver_message(uint64_t id, uint16_t flags, Bytes payload);
    void note_gap_and_buffer(Frame f, double now);
    void send_nak(const std::set<uint32_t>& seqs, double now);
    void handle_ack(uint32_t ack, double now);
    void handle_nak(const Frame& f, double now);
    void rtt_sample(double sample);

    void emit_messages(double now, bool& work);
    bool emit_frame(FrameKind kind, uint16_t flags, uint64_t req_id,
                    std::span<const uint8_t> payload, double now);
    void resend(uint32_t seq, double now);
    void send_control(Frame f, double now);
    void mark_closed();

    TransportHost& host_;
    net::Address peer_;
    TransportConfig cfg_;
    State state_ = State::Connecting;
    bool initiated_ = false;
    uint64_t cookie_ = 0;

    // sender
    uint32_t snd_next_ = 0;
    uint32_t snd_una_ = 0;
    std::map<uint32_t, SentFrame> send_buf_;
    std::deque<uint32_t> retx_q_;
    std::deque<PendingMsg> msg_q_;
    Bytes stream_out_;
    size_t stream_out_head_ = 0;
    size_t unacked_bytes_ = 0;
    double tokens_ = 1.0;
    double last_refill_ms_ = 0.0;
    RateControl rc_;
    bool loss_since_sync_ = false;
    uint32_t epoch_floor_ = 0;   // losses below this seq were already penalized
    double rto_ms_ = 200.0;
    double last_progress_ms_ = 0.0;

    // receiver
    uint32_t rcv_next_ = 0;
    uint32_t high_water_ = 0;    // one past the highest sequence seen
    std::map<uint32_t, Frame> ooo_;
    std::set<uint32_t> missing_;
    Bytes msg_in_;
    uint16_t msg_in_flags_ = 0;
    uint64_t msg_in_id_ = 0;
    bool msg_in_active_ = false;
    Bytes stream_in_;
    size_t stream_in_head_ = 0;
    bool recv_since_ack_ = false;

    std::map<uint64_t, std::optional<Bytes>> resp_wait_;

    // timers
    double next_sync_ms_ = 0.0;
    double next_ack_ms_ = 0.0;
    double next_nak_ms_ = 0.0;
    double next_hs_ms_ = 0.0;
    double hs_sent_ms_ = 0.0;
    double last_send_ms_ = 0.0;
    double last_recv_ms_ = 0.0;

    ConnStats st_;
};

// Handler for incoming requests; the returned bytes become the response.
using RequestHandler =
    std::function<Bytes(const net::Address& peer, std::span<const uint8_t> payload)>;

// Owns one datagram endpoint and all connections through it. Every host both
// listens (incoming handshakes create accepted connections) and originates
// (connect). Drive it as an actor on the shared runtime.
class TransportHost : public sim::Actor {
public:
    TransportHost(net::Network& net, const net::Address& addr, TransportConfig cfg = {});
    ~TransportHost() override;

    const net::Address& address() const { return ep_->address(); }
    net::Network& network() { return net_; }
    const TransportConfig& config() const { return cfg_; }

    void set_request_handler(RequestHandler h) { handler_ = std::move(h); }

    // Starts (or returns the existing) connection to peer. Completion is
    // asynchronous; poll established() or use connect_blocking.
    Connection* connect(const net::Address& peer);
    // Next connection accepted from a remote handshake, if any.
    Connection* accept();
    Connection* connection(const net::Address& peer);

    bool process(double now_ms) override;

    // Closes the endpoint and every connection; the host goes silent.
    void shutdown();
    bool is_shutdown() const { return shutdown_; }

private:
    friend class Connection;

    void handle_datagram(const net::Datagram& d, double now);
    Connection& ensure_connection(const net::Address& peer);

    net::Network& net_;
    net::Endpoint* ep_;
    TransportConfig cfg_;
    RequestHandler handler_;
    std::map<net::Address, std::unique_ptr<Connection>> conns_;
    std::deque<Connection*> accepted_;
    uint64_t next_request_id_ = 1;
    uint64_t next_cookie_ = 1;
    bool shutdown_ = false;
};

// Pump the runtime until the connection to peer is established.
// Throws Timeout if the handshake does not complete in time.
Connection& connect_blocking(sim::Runtime& rt, TransportHost& host, const net::Address& peer,
                             double timeout_ms = 5000.0);

// Send one request and pump until its response arrives.
Bytes request_blocking(sim::Runtime& rt, Connection& conn, std::span<const uint8_t> payload,
                       double timeout_ms = 10000.0);

// Pump until everything handed to send_stream has been acknowledged.
void flush_blocking(sim::Runtime& rt, Connection& conn, double timeout_ms = 60000.0);

}  // namespace ss::transport
