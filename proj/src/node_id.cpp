#include "ss/routing/node_id.hpp"

#include <openssl/evp.h>

#include "ss/common/error.hpp"

namespace ss::routing {

std::string NodeId::hex() const {
    static const char* digits = "0123456789abcdef";
    std::string s;
    s.reserve(40);
    for (uint8_t byte : b) {
        s.push_back(digits[byte >> 4]);
        s.push_back(digits[byte & 0xf]);
    }
    return s;
}

uint64_t NodeId::low64() const {
    uint64_t v = 0;
    for (int i = 12; i < 20; ++i) v = v << 8 | b[i];
    return v;
}

NodeId NodeId::from_u64(uint64_t v) {
    NodeId id;
    for (int i = 19; i >= 12; --i) {
        id.b[i] = uint8_t(v);
        v >>= 8;
    }
    return id;
}

NodeId hash_id(std::span<const uint8_t> key, int m) {
    if (m < 1 || m > 160) throw Error(Err::InvalidInput, "m must be in [1,160]");
    NodeId id;
    unsigned int len = 0;
    if (!EVP_Digest(key.data(), key.size(), id.b.data(), &len, EVP_sha1(), nullptr) ||
        len != 20)
        throw Error(Err::Internal, "sha1 failed");

    // Keep the top m bits: shift the whole digest right by 160-m.
    int shift = 160 - m;
    int bytes = shift / 8;
    int bits = shift % 8;
    if (bytes > 0) {
        for (int i = 19; i >= 0; --i) id.b[i] = i - bytes >= 0 ? id.b[i - bytes] : 0;
    }
    if (bits > 0) {
        uint8_t carry = 0;
        for (int i = 0; i < 20; ++i) {
            uint8_t next_carry = uint8_t(id.b[i] << (8 - bits));
            id.b[i] = uint8_t(id.b[i] >> bits) | carry;
            carry = next_carry;
        }
    }
    return id;
}

NodeId hash_id(std::string_view key, int m) {
    return hash_id(std::span(reinterpret_cast<const uint8_t*>(key.data()), key.size()), m);
}

namespace {

// Zero every bit at position >= m (LSB = bit 0).
void mask_to(NodeId& a, int m) {
    int clear = 160 - m;
    int full = clear / 8;
    for (int i = 0; i < full; ++i) a.b[i] = 0;
    if (int rem = clear % 8; rem > 0) a.b[full] &= uint8_t(0xff >> rem);
}

}  // namespace

NodeId add_pow2(NodeId a, int i, int m) {
    if (m < 1 || m > 160 || i < 0 || i >= m)
        throw Error(Err::InvalidInput, "bit index outside ring width");
    int byte = 19 - i / 8;
    unsigned carry = 1u << (i % 8);
    for (int j = byte; j >= 0 && carry; --j) {
        unsigned v = a.b[j] + carry;
        a.b[j] = uint8_t(v);
        carry = v >> 8;
    }
    mask_to(a, m);
    return a;
}

NodeId ring_offset(const NodeId& from, const NodeId& to, int m) {
    NodeId out;
    int borrow = 0;
    for (int i = 19; i >= 0; --i) {
        int v = int(to.b[i]) - int(from.b[i]) - borrow;
        borrow = v < 0;
        out.b[i] = uint8_t(v + (borrow ? 256 : 0));
    }
    mask_to(out, m);
    return out;
}

bool in_ring_interval(const NodeId& x, const NodeId& a, const NodeId& b, bool inclusive_end) {
    if (inclusive_end && x == b) return true;
    if (a < b) return a < x && x < b;
    if (b < a) return x > a || x < b;
    return x != a;  // a == b: full circle except the point itself
}

}  // namespace ss::routing
