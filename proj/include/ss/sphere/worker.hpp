#pragma once

#include <map>
#include <memory>
#include <optional>
#include <tuple>

#include "ss/rpc/rpc.hpp"
#include "ss/sim/runtime.hpp"
#include "ss/sphere/job.hpp"
#include "ss/sphere/protocol.hpp"
#include "ss/sphere/udf.hpp"
#include "ss/storage/server.hpp"

namespace ss::sphere {

struct WorkerStats {
    uint64_t segments_run = 0;          // completed successfully
    uint64_t remote_chunk_fetches = 0;  // first-stage inputs pulled over the wire
    uint64_t bucket_bytes_stored = 0;   // shuffle data this node holds
    uint64_t bucket_bytes_sent = 0;     // shuffle data pushed to other nodes
};

// Node-resident executor. Runs at most one segment at a time: load the input
// (from the colocated chunk store when possible), apply the stage's UDF,
// push each output bucket to its owner, then report back to the job runner.
// Everything network-bound is polled from process(), never blocking.
class WorkerService : public sim::Actor {
public:
    WorkerService(transport::TransportHost& host, rpc::Dispatcher& disp,
                  std::shared_ptr<const UdfRegistry> udfs,
                  storage::StorageService* colocated = nullptr,
                  uint32_t piece_bytes = storage::kPieceBytes,
                  double io_timeout_ms = 8000.0);

    bool process(double now_ms) override;

    const WorkerStats& stats() const { return stats_; }
    const net::Address& address() const { return host_.address(); }
    bool busy() const { return task_.has_value(); }

private:
    struct JobCtx {
        uint32_t epoch = 0;
        uint32_t stage = 0;
        std::string udf;
        uint32_t n_buckets = 0;
        Bytes arg;
        std::vector<net::Address> workers;
        net::Address runner;
        // (producing stage, bucket) -> contributing segment -> records
        std::map<std::pair<uint32_t, uint32_t>, std::map<uint32_t, Bytes>> buckets;
        struct Staging {
            Bytes buf;
            uint64_t have = 0;
        };
        // in-flight transfers keyed by (stage, bucket, segment, sender)
        std::map<std::tuple<uint32_t, uint32_t, uint32_t, net::Address>, Staging> staging;
    };

    struct Task {
        uint32_t job = 0, epoch = 0, stage = 0, seg = 0;
        bool from_bucket = false;
        std::string file;
        uint32_t chunk = 0;
        uint32_t version = 0;
        RecordFormat fmt;
        uint32_t bucket = 0, bucket_stage = 0;
        std::vector<net::Address> sources;

        enum class Phase { Load, Run, Ship, Report } phase = Phase::Load;
        size_t src = 0;
        Bytes data;
        uint64_t have = 0;
        uint64_t total = 0;
        bool total_known = false;
        uint32_t expect_crc = 0;
        rpc::AsyncCall call;

        std::vector<std::pair<uint32_t, Bytes>> outgoing;  // (bucket, bytes)
        size_t out_idx = 0;
        uint64_t out_off = 0;

        SegOutcome outcome = SegOutcome::Ok;
        uint64_t fail_index = 0;
        uint64_t records_in = 0, records_out = 0;
    };

    Bytes on_job_submit(const net::Address& peer, ByteReader& r);
    Bytes on_seg_assign(const net::Address& peer, ByteReader& r);
    Bytes on_bucket_put(const net::Address& peer, ByteReader& r);
    Bytes on_bucket_get(const net::Address& peer, ByteReader& r);
    Bytes on_job_end(const net::Address& peer, ByteReader& r);

    bool step_load(Task& t, JobCtx& ctx, double now);
    void run_segment(Task& t, JobCtx& ctx);
    bool step_ship(Task& t, JobCtx& ctx, double now);
    void report(Task& t, JobCtx& ctx);
    bool try_local_load(Task& t, JobCtx& ctx);
    void next_source(Task& t);

    transport::TransportHost& host_;
    std::shared_ptr<const UdfRegistry> udfs_;
    storage::StorageService* colocated_;
    uint32_t piece_bytes_;
    double io_timeout_ms_;

    std::map<uint32_t, JobCtx> jobs_;
    std::optional<Task> task_;
    WorkerStats stats_;
};

}  // namespace ss::sphere
