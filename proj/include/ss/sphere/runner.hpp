#pragma once

#include <deque>
#include <map>
#include <memory>

#include "ss/rpc/rpc.hpp"
#include "ss/sphere/job.hpp"
#include "ss/sphere/protocol.hpp"
#include "ss/sphere/udf.hpp"
#include "ss/storage/client.hpp"

namespace ss::sphere {

struct RunnerConfig {
    net::Address coordinator;     // storage coordinator, the live-node source
    uint32_t max_retries = 3;     // failures a segment may accumulate beyond its first try
    uint32_t buckets_per_node = 64;  // admission ceiling on n_buckets
    double rpc_timeout_ms = 8000.0;
    double poll_ms = 200.0;       // result-wait and dead-worker-sweep cadence
    uint32_t piece_bytes = storage::kPieceBytes;
};

struct JobProgress {
    uint8_t state = 0;  // 0 running, 1 done, 2 aborted
    uint32_t stage = 0;
    uint32_t done = 0;
    uint32_t total = 0;
    uint64_t records = 0;  // input records consumed by finished segments
};

class JobRunner;

// One submitted job. The runner keeps it alive; callers hold a reference and
// may poll progress() at any time, including from another actor mid-run.
class JobHandle {
public:
    uint32_t id() const { return id_; }
    bool done() const { return finished_; }
    bool aborted() const { return aborted_; }
    JobProgress progress() const;
    const JobSpec& spec() const { return spec_; }
    const std::vector<net::Address>& workers() const { return workers_; }

private:
    friend class JobRunner;

    struct SegRt {
        Segment seg;
        SegState state = SegState::Pending;
        net::Address ran_on;
    };
    struct Result {
        uint32_t job = 0, epoch = 0, stage = 0, seg = 0;
        SegOutcome outcome = SegOutcome::Ok;
        uint64_t fail_index = 0, records_in = 0, records_out = 0;
        net::Address from;
    };

    uint32_t id_ = 0;
    JobSpec spec_;
    std::vector<Segment> plan_;  // stage-0 segments, re-used on restarts
    uint32_t stage_ = 0;
    uint32_t epoch_ = 0;
    std::vector<SegRt> segs_;
    std::map<std::pair<uint32_t, uint32_t>, uint32_t> retries_;  // (stage, seg)
    std::vector<net::Address> workers_;
    std::map<net::Address, bool> busy_;
    std::map<net::Address, uint64_t> load_;
    std::deque<Result> inbox_;
    uint64_t records_done_ = 0;
    bool announced_ = false;
    bool finished_ = false;
    bool aborted_ = false;
    std::string abort_reason_;
};

// The master side of a job: plans segments, announces stages, hands segments
// to idle workers (data-local first), reacts to failures, and finally writes
// the output buckets back to storage. Lives with the submitting client and
// drives everything from the caller's context.
class JobRunner {
public:
    JobRunner(sim::Runtime& rt, transport::TransportHost& host, rpc::Dispatcher& disp,
              storage::StorageClient& files, std::shared_ptr<const UdfRegistry> udfs,
              RunnerConfig cfg);

    // Validates and plans; the job starts moving once drive() runs.
    JobHandle& submit_job(const JobSpec& spec);

    // Runs the job to completion. between_pumps, when given, is called after
    // every scheduling pass so a caller can watch or perturb the cluster.
    void drive(JobHandle& h, const std::function<void(double)>& between_pumps = {});

    // Uploads "<output_name>/bucket_<k>" files and releases worker state.
    std::vector<std::string> collect(JobHandle& h);

    // Pulls the final-stage buckets straight back to the caller instead of
    // uploading them; for drivers that consume results between rounds.
    std::vector<std::pair<uint32_t, Bytes>> take_outputs(JobHandle& h);

    const RunnerConfig& config() const { return cfg_; }
    transport::TransportHost& host() { return host_; }

private:
    std::vector<net::Address> live_workers();
    void announce(JobHandle& h);
    void on_worker_lost(JobHandle& h, const net::Address& w);
    void drain_results(JobHandle& h);
    void dispatch_pending(JobHandle& h);
    void advance_stage(JobHandle& h);
    void abort(JobHandle& h, const std::string& why);
    void end_job(JobHandle& h);
    Bytes fetch_bucket(const net::Address& owner, uint32_t job, uint32_t stage, uint32_t bucket);
    transport::Connection& dial(const net::Address& at);

    sim::Runtime& rt_;
    transport::TransportHost& host_;
    storage::StorageClient& files_;
    std::shared_ptr<const UdfRegistry> udfs_;
    RunnerConfig cfg_;
    std::map<uint32_t, std::unique_ptr<JobHandle>> jobs_;
    uint32_t next_id_ = 1;
};

}  // namespace ss::sphere
