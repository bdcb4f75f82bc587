#include "ss/transport/transport.hpp"

#include <algorithm>

#include "ss/common/error.hpp"

namespace ss::transport {

namespace {

Bytes handshake_payload() {
    ByteWriter w;
    w.u32(uint32_t(net::kMaxDatagramPayload));
    return w.take();
}

}  // namespace

// ---------------------------------------------------------------- Connection

Connection::Connection(TransportHost& host, net::Address peer, const TransportConfig& cfg)
    : host_(host), peer_(std::move(peer)), cfg_(cfg), rc_(cfg.rate) {}

void Connection::start_connect(double now) {
    initiated_ = true;
    cookie_ = host_.next_cookie_++;
    Frame f;
    f.kind = FrameKind::Handshake;
    f.request_id = cookie_;
    f.payload = handshake_payload();
    hs_sent_ms_ = now;
    next_hs_ms_ = now + cfg_.handshake_retx_ms;
    send_control(std::move(f), now);
}

void Connection::send_stream(std::span<const uint8_t> data) {
    if (state_ == State::Closed) throw Error(Err::ConnectionClosed, peer_.str());
    stream_out_.insert(stream_out_.end(), data.begin(), data.end());
}

Bytes Connection::recv_stream(size_t max_bytes) {
    size_t avail = stream_in_.size() - stream_in_head_;
    if (avail == 0) {
        if (state_ == State::Closed) throw Error(Err::ConnectionClosed, peer_.str());
        return {};
    }
    size_t n = std::min(avail, max_bytes);
    Bytes out(stream_in_.begin() + stream_in_head_, stream_in_.begin() + stream_in_head_ + n);
    stream_in_head_ += n;
    if (stream_in_head_ == stream_in_.size()) {
        stream_in_.clear();
        stream_in_head_ = 0;
    } else if (stream_in_head_ > (1u << 20)) {
        stream_in_.erase(stream_in_.begin(), stream_in_.begin() + stream_in_head_);
        stream_in_head_ = 0;
    }
    return out;
}

size_t Connection::send_backlog() const {
    size_t msg_bytes = 0;
    for (const auto& m : msg_q_) msg_bytes += m.data.size() - m.off;
    return (stream_out_.size() - stream_out_head_) + unacked_bytes_ + msg_bytes;
}

uint64_t Connection::begin_request(std::span<const uint8_t> payload) {
    if (state_ == State::Closed) throw Error(Err::ConnectionClosed, peer_.str());
    uint64_t id = host_.next_request_id_++;
    resp_wait_.emplace(id, std::nullopt);
    msg_q_.push_back({id, 0, Bytes(payload.begin(), payload.end()), 0});
    return id;
}

void Connection::send_oneway(std::span<const uint8_t> payload) {
    if (state_ == State::Closed) throw Error(Err::ConnectionClosed, peer_.str());
    uint64_t id = host_.next_request_id_++;
    msg_q_.push_back({id, kFlagOneway, Bytes(payload.begin(), payload.end()), 0});
}

std::optional<Bytes> Connection::take_response(uint64_t request_id) {
    auto it = resp_wait_.find(request_id);
    if (it == resp_wait_.end()) throw Error(Err::Internal, "unknown request id");
    if (it->second.has_value()) {
        Bytes b = std::move(*it->second);
        resp_wait_.erase(it);
        return b;
    }
    if (state_ == State::Closed) throw Error(Err::ConnectionClosed, peer_.str());
    return std::nullopt;
}

void Connection::cancel_request(uint64_t request_id) { resp_wait_.erase(request_id); }

void Connection::close() {
    if (state_ == State::Closed) return;
    Frame f;
    f.kind = FrameKind::Keepalive;
    f.flags = kFlagFin;
    send_control(std::move(f), host_.net_.now_ms());
    mark_closed();
}

void Connection::mark_closed() { state_ = State::Closed; }

ConnStats Connection::stats() const {
    ConnStats s = st_;
    s.current_rate_pps = rc_.rate_pps;
    return s;
}

void Connection::establish(double now) {
    state_ = State::Established;
    last_refill_ms_ = now;
    last_recv_ms_ = now;
    last_send_ms_ = now;
    last_progress_ms_ = now;
    next_sync_ms_ = now + cfg_.sync_interval_ms;
    next_ack_ms_ = now + cfg_.ack_interval_ms;
    next_nak_ms_ = now;
}

void Connection::rtt_sample(double sample) {
    if (sample < 0) return;
    st_.rtt_est_ms = st_.rtt_est_ms <= 0 ? sample : 0.875 * st_.rtt_est_ms + 0.125 * sample;
    rto_ms_ = std::clamp(4.0 * st_.rtt_est_ms, 200.0, 4000.0);
}

double Connection::nak_interval() const {
    return st_.rtt_est_ms > 0 ? std::max(20.0, 1.5 * st_.rtt_est_ms) : 50.0;
}

void Connection::on_frame(Frame f, double now) {
    if (state_ == State::Closed) return;
    last_recv_ms_ = now;

    switch (f.kind) {
        case FrameKind::Handshake:
            // RESP completes our own connect; bare handshakes are handled by
            // the host before frames reach the connection.
            if ((f.flags & kFlagResp) && state_ == State::Connecting &&
                f.request_id == cookie_) {
                establish(now);
                rtt_sample(now - hs_sent_ms_);
            }
            return;
        case FrameKind::Keepalive:
            if (f.flags & kFlagFin) mark_closed();
            return;
        case FrameKind::Ack:
            if (state_ == State::Established) handle_ack(f.ack, now);
            return;
        case FrameKind::Nak:
            if (state_ == State::Established) handle_nak(f, now);
            return;
        case FrameKind::Data:
        case FrameKind::Msg:
            if (state_ != State::Established) return;
            note_gap_and_buffer(std::move(f), now);
            return;
    }
}

void Connection::note_gap_and_buffer(Frame f, double now) {
    recv_since_ack_ = true;  // even duplicates deserve a fresh cumulative ACK
    uint32_t s = f.seq;
    if (s < rcv_next_ || ooo_.count(s)) {
        ++st_.duplicate_frames;
        return;
    }
    std::set<uint32_t> fresh;
    if (s >= high_water_) {
        for (uint32_t q = high_water_; q < s; ++q) {
            missing_.insert(q);
            fresh.insert(q);
        }
        high_water_ = s + 1;
    } else {
        missing_.erase(s);
    }
    ooo_.emplace(s, std::move(f));
    while (true) {
        auto it = ooo_.find(rcv_next_);
        if (it == ooo_.end()) break;
        Frame fr = std::move(it->second);
        ooo_.erase(it);
        ++rcv_next_;
        consume_in_order(fr);
    }
    if (!fresh.empty()) {
        send_nak(fresh, now);
        next_nak_ms_ = now + nak_interval();
    }
}

void Connection::consume_in_order(const Frame& f) {
    st_.bytes_received += f.payload.size();
    if (f.kind == FrameKind::Data) {
        stream_in_.insert(stream_in_.end(), f.payload.begin(), f.payload.end());
        return;
    }
    // message fragment
    if (!msg_in_active_) {
        msg_in_active_ = true;
        msg_in_id_ = f.request_id;
        msg_in_flags_ = f.flags;
        msg_in_.clear();
    }
    msg_in_.insert(msg_in_.end(), f.payload.begin(), f.payload.end());
    if (!(f.flags & kFlagMore)) {
        msg_in_active_ = false;
        Bytes payload = std::move(msg_in_);
        msg_in_ = {};
        deliver_message(msg_in_id_, msg_in_flags_ | f.flags, std::move(payload));
    }
}

void Connection::deliver_message(uint64_t id, uint16_t flags, Bytes payload) {
    if (flags & kFlagResp) {
        auto it = resp_wait_.find(id);
        if (it != resp_wait_.end() && !it->second.has_value()) it->second = std::move(payload);
        return;
    }
    Bytes resp;
    if (host_.handler_) {
        try {
            resp = host_.handler_(peer_, payload);
        } catch (const std::exception&) {
            resp.clear();  // the layer above encodes its own failures
        }
    }
    if (!(flags & kFlagOneway)) msg_q_.push_back({id, kFlagResp, std::move(resp), 0});
}

void Connection::send_nak(const std::set<uint32_t>& seqs, double now) {
    if (seqs.empty()) return;
    // Merge into inclusive ranges; a periodic re-ask covers anything beyond
    // what fits in one frame.
    std::vector<std::pair<uint32_t, uint32_t>> ranges;
    for (uint32_t s : seqs) {
        if (!ranges.empty() && ranges.back().second + 1 == s)
            ranges.back().second = s;
        else
            ranges.push_back({s, s});
    }
    constexpr size_t kMaxRanges = 170;
    if (ranges.size() > kMaxRanges) ranges.resize(kMaxRanges);
    ByteWriter w;
    w.u32(uint32_t(ranges.size()));
    for (auto [lo, hi] : ranges) {
        w.u32(lo);
        w.u32(hi);
    }
    Frame f;
    f.kind = FrameKind::Nak;
    f.payload = w.take();
    send_control(std::move(f), now);
}

void Connection::handle_ack(uint32_t ack, double now) {
    if (ack <= snd_una_) return;
    auto newest = send_buf_.find(ack - 1);
    if (newest != send_buf_.end() && !newest->second.ever_retx)
        rtt_sample(now - newest->second.first_send_ms);
    for (auto it = send_buf_.begin(); it != send_buf_.end() && it->first < ack;) {
        st_.bytes_delivered += it->second.payload_len;
        unacked_bytes_ -= it->second.payload_len;
        it = send_buf_.erase(it);
    }
    snd_una_ = ack;
    last_progress_ms_ = now;
    rto_ms_ = std::clamp(4.0 * st_.rtt_est_ms, 200.0, 4000.0);
}

void Connection::handle_nak(const Frame& f, double now) {
    ByteReader r(f.payload);
    uint32_t count;
    uint32_t max_reported = 0;
    try {
        count = r.u32();
        for (uint32_t i = 0; i < count; ++i) {
            uint32_t lo = r.u32();
            uint32_t hi = r.u32();
            if (lo > hi || hi >= snd_next_) continue;
            max_reported = std::max(max_reported, hi);
            for (uint32_t s = lo; s <= hi; ++s) {
                auto it = send_buf_.find(s);
                if (it == send_buf_.end() || it->second.retx_queued) continue;
                if (it->second.kind == FrameKind::Msg) {
                    resend(s, now);  // control traffic repairs immediately
                } else {
                    it->second.retx_queued = true;
                    retx_q_.push_back(s);
                }
            }
        }
    } catch (const Error&) {
        return;  // malformed loss report
    }
    loss_since_sync_ = true;
    // One decrease per congestion epoch: only a loss of something sent after
    // the previous penalty cuts the rate again.
    if (max_reported >= epoch_floor_) {
        rc_ = rate_control_update(rc_, RateEvent::Nak);
        epoch_floor_ = snd_next_;
    }
}

void Connection::emit_messages(double now, bool& work) {
    while (state_ == State::Established && !msg_q_.empty()) {
        PendingMsg& m = msg_q_.front();
        size_t n = std::min(m.data.size() - m.off, kMaxFramePayload);
        bool last = m.off + n == m.data.size();
        uint16_t flags = m.flags | (last ? 0 : kFlagMore);
        emit_frame(FrameKind::Msg, flags, m.id,
                   std::span(m.data).subspan(m.off, n), now);
        m.off += n;
        work = true;
        if (last) msg_q_.pop_front();
    }
}

bool Connection::emit_frame(FrameKind kind, uint16_t flags, uint64_t req_id,
                            std::span<const uint8_t> payload, double now) {
    Frame f;
    f.kind = kind;
    f.flags = flags;
    f.seq = snd_next_++;
    f.request_id = req_id;
    f.payload.assign(payload.begin(), payload.end());
    SentFrame sf;
    sf.wire = encode_frame(f);
    sf.first_send_ms = now;
    sf.payload_len = uint32_t(payload.size());
    sf.kind = kind;
    host_.ep_->send(peer_, sf.wire);
    last_send_ms_ = now;
    st_.bytes_sent += payload.size();
    unacked_bytes_ += payload.size();
    send_buf_.emplace(f.seq, std::move(sf));
    return true;
}

void Connection::resend(uint32_t seq, double now) {
    auto it = send_buf_.find(seq);
    if (it == send_buf_.end()) return;
    host_.ep_->send(peer_, it->second.wire);
    it->second.ever_retx = true;
    ++st_.retransmissions;
    last_send_ms_ = now;
}

void Connection::send_control(Frame f, double now) {
    host_.ep_->send(peer_, encode_frame(f));
    last_send_ms_ = now;
}

bool Connection::tick(double now) {
    bool work = false;
    if (state_ == State::Connecting) {
        if (initiated_ && now >= next_hs_ms_) {
            Frame f;
            f.kind = FrameKind::Handshake;
            f.request_id = cookie_;
            f.payload = handshake_payload();
            hs_sent_ms_ = now;
            next_hs_ms_ = now + cfg_.handshake_retx_ms;
            send_control(std::move(f), now);
            work = true;
        }
        return work;
    }
    if (state_ == State::Closed) return false;

    if (now - last_recv_ms_ >= cfg_.dead_after_ms) {
        mark_closed();
        return true;
    }

    if (now >= next_sync_ms_) {
        if (!loss_since_sync_) rc_ = rate_control_update(rc_, RateEvent::SyncTick);
        loss_since_sync_ = false;
        next_sync_ms_ = now + cfg_.sync_interval_ms;
    }

    emit_messages(now, work);

    double dt = now - last_refill_ms_;
    if (dt > 0) {
        tokens_ += rc_.rate_pps * dt / 1000.0;
        last_refill_ms_ = now;
    }
    while (tokens_ >= 1.0) {
        if (!retx_q_.empty()) {
            uint32_t s = retx_q_.front();
            retx_q_.pop_front();
            auto it = send_buf_.find(s);
            if (it == send_buf_.end()) continue;  // acknowledged meanwhile
            it->second.retx_queued = false;
            resend(s, now);
            tokens_ -= 1.0;
            work = true;
            continue;
        }
        size_t avail = stream_out_.size() - stream_out_head_;
        if (avail == 0) break;
        size_t n = std::min(avail, kMaxFramePayload);
        emit_frame(FrameKind::Data, 0, 0,
                   std::span(stream_out_).subspan(stream_out_head_, n), now);
        stream_out_head_ += n;
        tokens_ -= 1.0;
        work = true;
    }
    if (tokens_ > 1.0) tokens_ = 1.0;  // idle credit never exceeds one frame
    if (stream_out_head_ == stream_out_.size() && stream_out_head_ > 0) {
        stream_out_.clear();
        stream_out_head_ = 0;
    } else if (stream_out_head_ > (8u << 20)) {
        stream_out_.erase(stream_out_.begin(), stream_out_.begin() + stream_out_head_);
        stream_out_head_ = 0;
    }

    if (now >= next_ack_ms_) {
        if (recv_since_ack_) {
            Frame f;
            f.kind = FrameKind::Ack;
            f.ack = rcv_next_;
            send_control(std::move(f), now);
            recv_since_ack_ = false;
            work = true;
        }
        next_ack_ms_ = now + cfg_.ack_interval_ms;
    }

    if (!missing_.empty() && now >= next_nak_ms_) {
        send_nak(missing_, now);
        next_nak_ms_ = now + nak_interval();
        work = true;
    }

    // Tail probe: with no ACK progress for a full RTO, nudge the peer by
    // resending the oldest unacknowledged frame. Recovers lost ACKs/NAKs.
    if (!send_buf_.empty() && now - last_progress_ms_ >= rto_ms_) {
        resend(send_buf_.begin()->first, now);
        last_progress_ms_ = now;
        rto_ms_ = std::min(rto_ms_ * 2.0, 4000.0);
        work = true;
    }

    if (now - last_send_ms_ >= cfg_.keepalive_interval_ms) {
        Frame f;
        f.kind = FrameKind::Keepalive;
        send_control(std::move(f), now);
        work = true;
    }
    return work;
}

// -------------------------------------------------------------- TransportHost

TransportHost::TransportHost(net::Network& net, const net::Address& addr, TransportConfig cfg)
    : net_(net), ep_(net.bind(addr)), cfg_(cfg) {}

TransportHost::~TransportHost() { ep_->close(); }

Connection* TransportHost::connect(const net::Address& peer) {
    if (shutdown_) throw Error(Err::ConnectionClosed, "host is shut down");
    auto it = conns_.find(peer);
    if (it != conns_.end()) return it->second.get();
    auto c = std::unique_ptr<Connection>(new Connection(*this, peer, cfg_));
    Connection* raw = c.get();
    conns_.emplace(peer, std::move(c));
    raw->start_connect(net_.now_ms());
    return raw;
}

Connection* TransportHost::accept() {
    while (!accepted_.empty()) {
        Connection* c = accepted_.front();
        accepted_.pop_front();
        if (!c->closed()) return c;
    }
    return nullptr;
}

Connection* TransportHost::connection(const net::Address& peer) {
    auto it = conns_.find(peer);
    return it == conns_.end() ? nullptr : it->second.get();
}

Connection& TransportHost::ensure_connection(const net::Address& peer) {
    auto it = conns_.find(peer);
    if (it != conns_.end()) return *it->second;
    auto c = std::unique_ptr<Connection>(new Connection(*this, peer, cfg_));
    Connection* raw = c.get();
    conns_.emplace(peer, std::move(c));
    return *raw;
}

void TransportHost::handle_datagram(const net::Datagram& d, double now) {
    Frame f;
    try {
        f = decode_frame(d.payload);
    } catch (const Error&) {
        return;  // not ours / corrupted
    }

    if (f.kind == FrameKind::Handshake && !(f.flags & kFlagResp)) {
        // A fresh handshake supersedes a dead connection to the same peer so a
        // restarted process can reconnect.
        auto it = conns_.find(d.src);
        if (it != conns_.end() && it->second->closed()) conns_.erase(it);
        Connection& c = ensure_connection(d.src);
        if (c.state_ == Connection::State::Connecting) {
            bool initiator = c.initiated_;
            c.establish(now);
            if (!initiator) accepted_.push_back(&c);
        }
        if (c.state_ == Connection::State::Established) {
            Frame r;
            r.kind = FrameKind::Handshake;
            r.flags = kFlagResp;
            r.request_id = f.request_id;
            r.payload = handshake_payload();
            c.send_control(std::move(r), now);
        }
        return;
    }

    auto it = conns_.find(d.src);
    if (it == conns_.end()) return;  // stray frame from an unknown peer
    it->second->on_frame(std::move(f), now);
}

bool TransportHost::process(double now_ms) {
    if (shutdown_) return false;
    bool work = false;
    while (auto d = ep_->poll()) {
        handle_datagram(*d, now_ms);
        work = true;
    }
    for (auto& [addr, conn] : conns_) {
        if (conn->tick(now_ms)) work = true;
    }
    return work;
}

void TransportHost::shutdown() {
    if (shutdown_) return;
    shutdown_ = true;
    for (auto& [addr, conn] : conns_) conn->mark_closed();
    ep_->close();
}

// ------------------------------------------------------------------- helpers

Connection& connect_blocking(sim::Runtime& rt, TransportHost& host, const net::Address& peer,
                             double timeout_ms) {
    Connection* c = host.connect(peer);
    rt.wait_until([&] { return c->established() || c->closed(); }, timeout_ms);
    if (!c->established())
        throw Error(Err::Timeout, "connect to " + peer.str());
    return *c;
}

Bytes request_blocking(sim::Runtime& rt, Connection& conn, std::span<const uint8_t> payload,
                       double timeout_ms) {
    uint64_t id = conn.begin_request(payload);
    std::optional<Bytes> result;
    rt.wait_until(
        [&] {
            if (conn.closed()) return true;
            if (auto r = conn.take_response(id)) {
                result = std::move(r);
                return true;
            }
            return false;
        },
        timeout_ms);
    if (result) return std::move(*result);
    if (conn.closed()) throw Error(Err::ConnectionClosed, conn.peer().str());
    conn.cancel_request(id);
    throw Error(Err::Timeout, "request to " + conn.peer().str());
}

void flush_blocking(sim::Runtime& rt, Connection& conn, double timeout_ms) {
    bool ok = rt.wait_until([&] { return conn.closed() || conn.send_backlog() == 0; },
                            timeout_ms);
    if (conn.closed() && conn.send_backlog() > 0)
        throw Error(Err::ConnectionClosed, conn.peer().str());
    if (!ok) throw Error(Err::Timeout, "flush to " + conn.peer().str());
}

}  // namespace ss::transport
