#include "ss/sphere/records.hpp"

#include "ss/common/error.hpp"

namespace ss::sphere {

std::vector<Bytes> split_records(std::span<const uint8_t> data, const RecordFormat& fmt) {
    std::vector<Bytes> out;
    if (fmt.framing == Framing::Fixed) {
        if (fmt.width == 0) throw Error(Err::Decode, "fixed record width of zero");
        if (data.size() % fmt.width != 0)
            throw Error(Err::Decode, "data does not divide into " +
                                         std::to_string(fmt.width) + "-byte records");
        out.reserve(data.size() / fmt.width);
        for (size_t off = 0; off < data.size(); off += fmt.width)
            out.emplace_back(data.begin() + off, data.begin() + off + fmt.width);
        return out;
    }
    size_t off = 0;
    while (off < data.size()) {
        if (data.size() - off < 4) throw Error(Err::Decode, "truncated record length");
        uint32_t len = uint32_t(data[off]) << 24 | uint32_t(data[off + 1]) << 16 |
                       uint32_t(data[off + 2]) << 8 | uint32_t(data[off + 3]);
        off += 4;
        if (data.size() - off < len) throw Error(Err::Decode, "record runs past the buffer");
        out.emplace_back(data.begin() + off, data.begin() + off + len);
        off += len;
    }
    return out;
}

Bytes join_length_prefixed(const std::vector<Bytes>& records) {
    size_t total = 0;
    for (const auto& r : records) total += 4 + r.size();
    Bytes out;
    out.reserve(total);
    for (const auto& r : records) {
        uint32_t len = uint32_t(r.size());
        out.push_back(uint8_t(len >> 24));
        out.push_back(uint8_t(len >> 16));
        out.push_back(uint8_t(len >> 8));
        out.push_back(uint8_t(len));
        out.insert(out.end(), r.begin(), r.end());
    }
    return out;
}

}  // namespace ss::sphere
