// Big-endian byte serialization used by every wire format in the project.
#pragma once

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ss/common/error.hpp"

namespace ss {

using Bytes = std::vector<uint8_t>;

inline Bytes to_bytes(std::string_view s) {
    return Bytes(s.begin(), s.end());
}

inline std::string to_string(std::span<const uint8_t> b) {
    return std::string(b.begin(), b.end());
}

class ByteWriter {
public:
    ByteWriter() = default;

    void u8(uint8_t v) { buf_.push_back(v); }
    void u16(uint16_t v) {
        buf_.push_back(uint8_t(v >> 8));
        buf_.push_back(uint8_t(v));
    }
    void u32(uint32_t v) {
        for (int i = 3; i >= 0; --i) buf_.push_back(uint8_t(v >> (8 * i)));
    }
    void u64(uint64_t v) {
        for (int i = 7; i >= 0; --i) buf_.push_back(uint8_t(v >> (8 * i)));
    }
    void f64(double v) {
        uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        u64(bits);
    }
    void raw(std::span<const uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    void bytes(std::span<const uint8_t> b) {
        u32(uint32_t(b.size()));
        raw(b);
    }
    void str(std::string_view s) {
        u32(uint32_t(s.size()));
        buf_.insert(buf_.end(), s.begin(), s.end());
    }

    Bytes take() { return std::move(buf_); }
    const Bytes& data() const { return buf_; }
    size_t size() const { return buf_.size(); }

private:
    Bytes buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const uint8_t> b) : buf_(b) {}
    // A reader only views the buffer; reading a temporary would be a dangling
    // view, so force callers to keep the bytes alive.
    explicit ByteReader(Bytes&&) = delete;

    uint8_t u8() { return take(1)[0]; }
    uint16_t u16() {
        auto b = take(2);
        return uint16_t(b[0]) << 8 | b[1];
    }
    uint32_t u32() {
        auto b = take(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = v << 8 | b[i];
        return v;
    }
    uint64_t u64() {
        auto b = take(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v = v << 8 | b[i];
        return v;
    }
    double f64() {
        uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }
    std::span<const uint8_t> raw(size_t n) { return take(n); }
    Bytes bytes() {
        auto n = u32();
        auto b = take(n);
        return Bytes(b.begin(), b.end());
    }
    std::string str() {
        auto n = u32();
        auto b = take(n);
        return std::string(b.begin(), b.end());
    }

    size_t remaining() const { return buf_.size() - pos_; }
    bool done() const { return remaining() == 0; }

private:
    std::span<const uint8_t> take(size_t n) {
        if (remaining() < n) throw Error(Err::Decode, "message truncated");
        auto s = buf_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::span<const uint8_t> buf_;
    size_t pos_ = 0;
};

}  // namespace ss
