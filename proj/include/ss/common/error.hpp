#pragma once

#include <stdexcept>
#include <string>

namespace ss {

enum class Err {
    // net
    AddressInUse,
    PayloadTooLarge,
    SimOnly,
    BadProfile,
    // transport
    Timeout,
    ConnectionClosed,
    // routing
    LookupTimeout,
    JoinFailed,
    // storage
    AccessDenied,
    NotFound,
    NameConflict,
    NotEnoughNodes,
    ChunkCorrupt,
    AllReplicasDown,
    SourceUnreachable,
    // sphere
    DuplicateName,
    UnknownUdf,
    UnknownInput,
    AdmissionFailed,
    UdfError,
    ChunkUnavailable,
    JobAborted,
    JobNotDone,
    // apps
    BadDimension,
    KTooLarge,
    InvalidInput,
    // cli / plumbing
    BadConfig,
    Decode,
    Io,
    Internal,
};

const char* err_name(Err e);

class Error : public std::runtime_error {
public:
    Error(Err code, const std::string& what)
        : std::runtime_error(std::string(err_name(code)) + ": " + what), code_(code) {}

    Err code() const { return code_; }

private:
    Err code_;
};

}  // namespace ss
