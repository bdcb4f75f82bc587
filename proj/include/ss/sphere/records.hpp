#pragma once

#include <span>
#include <vector>

#include "ss/common/bytes.hpp"

namespace ss::sphere {

enum class Framing : uint8_t { Fixed = 0, LengthPrefixed = 1 };

// How a byte sequence divides into records. Input datasets declare their
// framing up front; everything a job produces (bucket contents, output
// files) is length-prefixed so records of any width survive the trip.
struct RecordFormat {
    Framing framing = Framing::Fixed;
    uint32_t width = 0;  // bytes per record under Fixed, ignored otherwise

    static RecordFormat fixed(uint32_t w) { return {Framing::Fixed, w}; }
    static RecordFormat length_prefixed() { return {Framing::LengthPrefixed, 0}; }
};

// Splits data into records; throws Decode when the bytes do not frame
// cleanly (trailing partial record, truncated prefix, zero width).
std::vector<Bytes> split_records(std::span<const uint8_t> data, const RecordFormat& fmt);

// u32 length before each record, the inter-stage wire and file layout.
Bytes join_length_prefixed(const std::vector<Bytes>& records);

}  // namespace ss::sphere
