#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ss/net/address.hpp"
#include "ss/sphere/records.hpp"
#include "ss/storage/types.hpp"

namespace ss::sphere {

// A dataset to process: stored files plus how their bytes divide into
// records. total_records of zero means "count while running", which is the
// only option for length-prefixed data whose counts are not knowable from
// file sizes alone.
struct RecordStream {
    std::vector<std::string> files;
    RecordFormat format;
    uint64_t total_records = 0;
};

struct StageSpec {
    std::string udf;
    uint32_t n_buckets = 0;  // 0 = no shuffle, outputs stay where produced
    Bytes arg;               // opaque parameter blob passed to every invocation
};

struct JobSpec {
    RecordStream input;
    std::vector<StageSpec> stages;
    std::string output_name;
};

// The schedulable unit: one chunk's worth of records in the first stage, one
// bucket of the previous stage's output afterwards.
struct Segment {
    uint32_t id = 0;
    std::string file;
    uint32_t chunk_index = 0;
    uint32_t version = 0;
    // global record offsets, half-open; equal when the count is unknown
    uint64_t first_record = 0;
    uint64_t last_record = 0;
    std::vector<net::Address> preferred;  // nodes already holding the data
    bool from_bucket = false;
    uint32_t bucket = 0;        // meaningful when from_bucket
    uint32_t bucket_stage = 0;  // the stage that produced it
};

// One segment per chunk, ranges partitioning the stream in file order.
// Throws AdmissionFailed when fixed-width records do not align with chunk
// boundaries or a declared total contradicts the file sizes.
std::vector<Segment> plan_segments(const std::vector<storage::FileMetadata>& files,
                                   const RecordStream& input);

enum class SegState : uint8_t { Pending, Running, Done };

struct WorkerSlot {
    net::Address addr;
    bool idle = true;
    uint64_t load = 0;  // segments this worker has completed in the stage
};

struct SchedulerState {
    const std::vector<Segment>* segments = nullptr;
    std::vector<SegState> state;  // parallel to *segments
    std::vector<WorkerSlot> workers;
};

struct Assignment {
    uint32_t segment = 0;
    net::Address worker;
};

// Picks the next pending segment and idle worker, or nothing when either is
// missing. A worker already holding a pending segment's data wins; otherwise
// the least-loaded idle worker takes the lowest-numbered segment. Ties break
// toward the lowest segment id, then the lowest address.
std::optional<Assignment> assign_segment(const SchedulerState& s);

// bucket -> owning worker, fixed for the job's lifetime (per worker list).
net::Address shuffle_route(uint32_t bucket, const std::vector<net::Address>& workers);

}  // namespace ss::sphere
