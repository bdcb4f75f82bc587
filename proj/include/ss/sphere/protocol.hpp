#pragma once

#include <cstdint>

namespace ss::sphere {

// Job RPC types; the storage module owns 10-31 on the shared dispatcher.
inline constexpr uint8_t kRpcJobSubmit = 40;  // announce a stage to a worker
inline constexpr uint8_t kRpcSegAssign = 41;  // hand one segment to a worker
inline constexpr uint8_t kRpcSegResult = 42;  // worker -> runner, one-way
inline constexpr uint8_t kRpcBucketPut = 43;  // shuffle transfer, piecewise
inline constexpr uint8_t kRpcJobStatus = 44;  // progress poll on the runner
inline constexpr uint8_t kRpcBucketGet = 45;  // read a bucket back, piecewise
inline constexpr uint8_t kRpcJobEnd = 46;     // drop all state for a job

enum class SegOutcome : uint8_t {
    Ok = 0,
    UdfFailed = 1,  // the processing function threw; fail_index says where
    IoFailed = 2,   // input fetch or shuffle delivery never completed
};

}  // namespace ss::sphere
