#pragma once

#include <algorithm>

namespace ss::transport {

// Rate controller state. The connection sends at rate_pps, raising it by a
// fixed step on every loss-free sync tick and cutting it to 8/9 when the peer
// reports loss. The fixed additive step (rather than a bandwidth-probing one)
// keeps runs reproducible while preserving the fair/friendly AIMD shape.
struct RateControl {
    double rate_pps = 100.0;
    double min_rate_pps = 10.0;
    double max_rate_pps = 1e6;
    double increase_pps = 10.0;
    double decrease_factor = 8.0 / 9.0;
};

enum class RateEvent {
    Ack,       // positive progress; no rate change in this scheme
    Nak,       // peer reported a fresh loss batch
    SyncTick,  // sync interval elapsed with no loss since the previous tick
};

inline RateControl rate_control_update(RateControl rc, RateEvent ev) {
    switch (ev) {
        case RateEvent::Ack:
            break;
        case RateEvent::Nak:
            rc.rate_pps *= rc.decrease_factor;
            break;
        case RateEvent::SyncTick:
            rc.rate_pps += rc.increase_pps;
            break;
    }
    rc.rate_pps = std::clamp(rc.rate_pps, rc.min_rate_pps, rc.max_rate_pps);
    return rc;
}

}  // namespace ss::transport
