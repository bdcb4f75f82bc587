#pragma once

#include <chrono>
#include <map>
#include <memory>

#include "ss/net/network.hpp"

namespace ss::net {

class UdpEndpoint;

// Thin binding of the endpoint abstraction onto real UDP sockets. Best
// effort, wall-clock driven; advance_time is rejected. Hosts must be IPv4
// literals or "localhost".
class UdpNetwork final : public Network {
public:
    UdpNetwork();
    ~UdpNetwork() override;

    Endpoint* bind(const Address& addr) override;
    double now_ms() const override;
    void advance_time(double) override;
    bool simulated() const override { return false; }

private:
    std::chrono::steady_clock::time_point epoch_;
    std::map<Address, std::unique_ptr<UdpEndpoint>> endpoints_;
};

}  // namespace ss::net
