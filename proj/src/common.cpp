#include "ss/common/checksum.hpp"
#include "ss/common/error.hpp"

#include <zlib.h>

namespace ss {

uint32_t crc32(std::span<const uint8_t> data) {
    return uint32_t(::crc32(0L, data.data(), uInt(data.size())));
}

uint64_t fnv1a64(std::span<const uint8_t> data) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (uint8_t b : data) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

const char* err_name(Err e) {
    switch (e) {
        case Err::AddressInUse: return "AddressInUse";
        case Err::PayloadTooLarge: return "PayloadTooLarge";
        case Err::SimOnly: return "SimOnly";
        case Err::BadProfile: return "BadProfile";
        case Err::Timeout: return "Timeout";
        case Err::ConnectionClosed: return "ConnectionClosed";
        case Err::LookupTimeout: return "LookupTimeout";
        case Err::JoinFailed: return "JoinFailed";
        case Err::AccessDenied: return "AccessDenied";
        case Err::NotFound: return "NotFound";
        case Err::NameConflict: return "NameConflict";
        case Err::NotEnoughNodes: return "NotEnoughNodes";
        case Err::ChunkCorrupt: return "ChunkCorrupt";
        case Err::AllReplicasDown: return "AllReplicasDown";
        case Err::SourceUnreachable: return "SourceUnreachable";
        case Err::DuplicateName: return "DuplicateName";
        case Err::UnknownUdf: return "UnknownUdf";
        case Err::UnknownInput: return "UnknownInput";
        case Err::AdmissionFailed: return "AdmissionFailed";
        case Err::UdfError: return "UdfError";
        case Err::ChunkUnavailable: return "ChunkUnavailable";
        case Err::JobAborted: return "JobAborted";
        case Err::JobNotDone: return "JobNotDone";
        case Err::BadDimension: return "BadDimension";
        case Err::KTooLarge: return "KTooLarge";
        case Err::InvalidInput: return "InvalidInput";
        case Err::BadConfig: return "BadConfig";
        case Err::Decode: return "Decode";
        case Err::Io: return "Io";
        case Err::Internal: return "Internal";
    }
    return "Unknown";
}

}  // namespace ss
