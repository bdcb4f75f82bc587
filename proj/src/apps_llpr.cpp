#include "ss/apps/llpr.hpp"

#include <algorithm>

#include "ss/common/error.hpp"
#include "ss/sim/runtime.hpp"
#include "ss/transport/transport.hpp"

namespace ss::apps {

namespace {

Bytes pattern_blob(size_t n) {
    Bytes out(n);
    uint64_t x = 0x243f6a8885a308d3ull;
    for (size_t i = 0; i < n; ++i) {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        out[i] = uint8_t(x);
    }
    return out;
}

// One timed stream between a fresh host pair; ports keep legs apart.
double measure_bps(net::SimNetwork& net, const net::LinkProfile& link, const Bytes& blob,
                   uint16_t port) {
    sim::Runtime rt(net);
    net::Address src_at{"llpr-src", port};
    net::Address dst_at{"llpr-dst", port};
    transport::TransportHost src(net, src_at);
    transport::TransportHost dst(net, dst_at);
    net.set_link(src_at, dst_at, link);
    rt.add_actor(&src);
    rt.add_actor(&dst);

    auto& conn = transport::connect_blocking(rt, src, dst_at);
    double t0 = rt.now_ms();
    conn.send_stream(blob);

    // a stalled clock would make the wait spin forever, so budget generously
    // off the bandwidth cap plus slack for handshakes and a slow start
    double floor_ms = link.bandwidth_bps > 0
                          ? double(blob.size()) * 8.0 / link.bandwidth_bps * 1000.0
                          : 1000.0;
    double budget_ms = floor_ms * 50.0 + 600000.0;

    Bytes got;
    bool done = rt.wait_until(
        [&] {
            auto* peer = dst.connection(src_at);
            if (!peer) return false;
            Bytes part = peer->recv_stream();
            got.insert(got.end(), part.begin(), part.end());
            return got.size() >= blob.size();
        },
        budget_ms);
    if (!done) throw Error(Err::Timeout, "stream never finished within budget");
    double elapsed_ms = std::max(rt.now_ms() - t0, 1e-6);

    rt.remove_actor(&src);
    rt.remove_actor(&dst);
    return double(blob.size()) * 8.0 / (elapsed_ms / 1000.0);
}

}  // namespace

double llpr(double wan_bps, double local_bps) {
    if (local_bps <= 0.0) throw Error(Err::InvalidInput, "local throughput must be positive");
    return wan_bps / local_bps;
}

LlprReport llpr_harness(net::SimNetwork& net, const net::LinkProfile& wan_profile,
                        uint64_t size_bytes) {
    Bytes blob = pattern_blob(size_bytes);

    net::LinkProfile local = wan_profile;
    local.latency_ms = 0.5;  // 1 ms round trip
    local.loss_rate = 0.0;
    local.jitter_ms = 0.0;

    LlprReport rep;
    rep.local_throughput_bps = measure_bps(net, local, blob, 1);
    rep.wan_throughput_bps = measure_bps(net, wan_profile, blob, 2);
    rep.llpr = llpr(rep.wan_throughput_bps, rep.local_throughput_bps);
    return rep;
}

}  // namespace ss::apps
