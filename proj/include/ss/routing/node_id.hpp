#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace ss::routing {

// Unsigned 160-bit ring position, big-endian bytes, numeric order via
// lexicographic compare. Rings narrower than 160 bits simply keep the high
// bits zero, so one representation serves every m.
struct NodeId {
    std::array<uint8_t, 20> b{};

    auto operator<=>(const NodeId&) const = default;

    std::string hex() const;
    uint64_t low64() const;
    static NodeId from_u64(uint64_t v);
};

// SHA-1(key) truncated to its top m bits, right-aligned. m in [1, 160].
NodeId hash_id(std::span<const uint8_t> key, int m);
NodeId hash_id(std::string_view key, int m);

// (a + 2^i) mod 2^m, for 0 <= i < m <= 160.
NodeId add_pow2(NodeId a, int i, int m);

// (to - from) mod 2^m: how far to travel clockwise from `from` to reach `to`.
NodeId ring_offset(const NodeId& from, const NodeId& to, int m);

// x in (a, b) walking clockwise, wrapping when a >= b; (a, a) is the whole
// ring minus a itself. inclusive_end admits x == b.
bool in_ring_interval(const NodeId& x, const NodeId& a, const NodeId& b,
                      bool inclusive_end = false);

}  // namespace ss::routing
