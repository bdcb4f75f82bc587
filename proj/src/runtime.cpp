#include "ss/sim/runtime.hpp"

#include <algorithm>
#include <chrono>
#include <thread>

#include "ss/common/error.hpp"

namespace ss::sim {

void Runtime::add_actor(Actor* a) {
    if (std::find(actors_.begin(), actors_.end(), a) == actors_.end())
        actors_.push_back(a);
}

void Runtime::remove_actor(Actor* a) {
    actors_.erase(std::remove(actors_.begin(), actors_.end(), a), actors_.end());
}

void Runtime::settle() {
    // Zero-latency exchanges can bounce between actors several times within
    // one instant; keep sweeping until a full pass makes no progress.  The
    // iteration cap guards against an actor that always claims progress.
    // The sweep start rotates so that symmetric actors (e.g. competing
    // senders) share any position-dependent resource evenly over time.
    for (int sweep = 0; sweep < 1000; ++sweep) {
        bool progressed = false;
        double now = net_.now_ms();
        size_t n = actors_.size();
        size_t start = n ? sweep_base_++ % n : 0;
        for (size_t i = 0; i < n; ++i)
            if (actors_[(start + i) % n]->process(now)) progressed = true;
        if (!progressed) return;
    }
    throw Error(Err::Internal, "actors did not quiesce within one instant");
}

void Runtime::advance(double dt_ms) {
    if (net_.simulated()) {
        net_.advance_time(dt_ms);
    } else {
        std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(dt_ms));
    }
}

void Runtime::step() {
    settle();
    advance(quantum_ms);
}

bool Runtime::wait_until(const std::function<bool()>& pred, double timeout_ms) {
    double deadline = net_.now_ms() + timeout_ms;
    while (true) {
        settle();
        if (pred()) return true;
        if (net_.now_ms() >= deadline) return false;
        advance(std::min(quantum_ms, deadline - net_.now_ms()));
    }
}

void Runtime::run_for(double duration_ms) {
    double deadline = net_.now_ms() + duration_ms;
    while (net_.now_ms() < deadline) {
        settle();
        advance(std::min(quantum_ms, deadline - net_.now_ms()));
    }
    settle();
}

}  // namespace ss::sim
