#include "ss/net/udp_network.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "ss/common/error.hpp"

namespace ss::net {

namespace {

sockaddr_in to_sockaddr(const Address& a) {
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(a.port);
    const char* host = (a.host == "localhost" || a.host.empty()) ? "127.0.0.1" : a.host.c_str();
    if (inet_pton(AF_INET, host, &sa.sin_addr) != 1)
        throw Error(Err::BadConfig, "not an IPv4 address: " + a.host);
    return sa;
}

Address from_sockaddr(const sockaddr_in& sa) {
    char buf[INET_ADDRSTRLEN] = {0};
    inet_ntop(AF_INET, &sa.sin_addr, buf, sizeof buf);
    return Address{buf, ntohs(sa.sin_port)};
}

}  // namespace

class UdpEndpoint final : public Endpoint {
public:
    UdpEndpoint(Address addr, int fd) : addr_(std::move(addr)), fd_(fd) {}
    ~UdpEndpoint() override { close(); }

    const Address& address() const override { return addr_; }

    void send(const Address& dst, std::span<const uint8_t> payload) override {
        if (payload.size() > kMaxDatagramPayload)
            throw Error(Err::PayloadTooLarge, std::to_string(payload.size()));
        if (fd_ < 0) return;
        sockaddr_in sa = to_sockaddr(dst);
        ::sendto(fd_, payload.data(), payload.size(), 0,
                 reinterpret_cast<sockaddr*>(&sa), sizeof sa);
    }

    std::optional<Datagram> poll() override {
        if (fd_ < 0) return std::nullopt;
        uint8_t buf[kMaxDatagramPayload];
        sockaddr_in sa{};
        socklen_t slen = sizeof sa;
        ssize_t n = ::recvfrom(fd_, buf, sizeof buf, MSG_DONTWAIT,
                               reinterpret_cast<sockaddr*>(&sa), &slen);
        if (n < 0) return std::nullopt;
        Datagram d;
        d.src = from_sockaddr(sa);
        d.dst = addr_;
        d.payload.assign(buf, buf + n);
        return d;
    }

    void close() override {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

    bool closed() const override { return fd_ < 0; }

private:
    Address addr_;
    int fd_;
};

UdpNetwork::UdpNetwork() : epoch_(std::chrono::steady_clock::now()) {}

UdpNetwork::~UdpNetwork() = default;

Endpoint* UdpNetwork::bind(const Address& addr) {
    int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd < 0) throw Error(Err::Io, std::strerror(errno));
    sockaddr_in sa = to_sockaddr(addr);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0) {
        int e = errno;
        ::close(fd);
        if (e == EADDRINUSE) throw Error(Err::AddressInUse, addr.str());
        throw Error(Err::Io, std::strerror(e));
    }
    auto ep = std::make_unique<UdpEndpoint>(addr, fd);
    auto* raw = ep.get();
    endpoints_[addr] = std::move(ep);
    return raw;
}

double UdpNetwork::now_ms() const {
    auto d = std::chrono::steady_clock::now() - epoch_;
    return std::chrono::duration<double, std::milli>(d).count();
}

void UdpNetwork::advance_time(double) {
    throw Error(Err::SimOnly, "advance_time requires the simulated backend");
}

}  // namespace ss::net
