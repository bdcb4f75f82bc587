#pragma once

// Long-distance-to-local performance ratio: how much of a transfer's local
// throughput survives when the same endpoints talk over a wide-area link.

#include <cstdint>

#include "ss/net/sim_network.hpp"

namespace ss::apps {

struct LlprReport {
    double wan_throughput_bps = 0.0;
    double local_throughput_bps = 0.0;
    double llpr = 0.0;
};

// The ratio itself. local_bps must be positive.
double llpr(double wan_bps, double local_bps);

// Streams size_bytes twice across the given network, once over a local
// profile (1 ms round trip, no loss, same bandwidth cap) and once over
// wan_profile, and reports both throughputs with their ratio.
LlprReport llpr_harness(net::SimNetwork& net, const net::LinkProfile& wan_profile,
                        uint64_t size_bytes);

}  // namespace ss::apps
