#pragma once

#include <functional>
#include <vector>

#include "ss/net/network.hpp"

namespace ss::sim {

// A participant in the cooperative event loop.  process() is called with the
// current time and should do any work that is ready (drain sockets, fire
// timers, step protocol state machines).  It returns true when it made
// progress, which keeps the loop cascading within the same instant until
// everything is quiescent.
class Actor {
public:
    virtual ~Actor() = default;
    virtual bool process(double now_ms) = 0;
};

// Wraps a callable as an actor; handy for services that expose a tick method.
class FnActor : public Actor {
public:
    explicit FnActor(std::function<bool(double)> fn) : fn_(std::move(fn)) {}
    bool process(double now_ms) override { return fn_(now_ms); }

private:
    std::function<bool(double)> fn_;
};

// Drives a set of actors over a Network.  With a simulated network, time only
// moves via advance(); with a real one, advance() sleeps so the same calling
// code works in both modes.
class Runtime {
public:
    explicit Runtime(net::Network& net) : net_(net) {}

    net::Network& network() { return net_; }
    double now_ms() const { return net_.now_ms(); }

    void add_actor(Actor* a);
    void remove_actor(Actor* a);

    // Runs every actor until none reports progress.  Does not move time.
    void settle();

    // settle(), then move time forward one quantum.
    void step();

    // Pumps until pred() holds or timeout_ms of (sim or wall) time passes.
    // Returns true if the predicate was satisfied.
    bool wait_until(const std::function<bool()>& pred, double timeout_ms);

    // Pumps for a fixed duration.
    void run_for(double duration_ms);

    double quantum_ms = 1.0;

private:
    void advance(double dt_ms);

    net::Network& net_;
    std::vector<Actor*> actors_;
    size_t sweep_base_ = 0;
};

}  // namespace ss::sim
