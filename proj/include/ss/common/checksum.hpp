#pragma once

#include <cstdint>
#include <span>

namespace ss {

// CRC-32 (IEEE, zlib polynomial).
uint32_t crc32(std::span<const uint8_t> data);

// FNV-1a 64-bit; used for order-independent multiset checksums.
uint64_t fnv1a64(std::span<const uint8_t> data);

}  // namespace ss
