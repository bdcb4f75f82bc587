#include "ss/sphere/runner.hpp"

#include <algorithm>

#include "ss/storage/protocol.hpp"

namespace ss::sphere {

namespace {

bool is_gone(const Error& e) {
    return e.code() == Err::Timeout || e.code() == Err::ConnectionClosed;
}

}  // namespace

JobProgress JobHandle::progress() const {
    JobProgress p;
    p.state = aborted_ ? 2 : finished_ ? 1 : 0;
    p.stage = stage_;
    p.total = uint32_t(segs_.size());
    for (const auto& s : segs_)
        if (s.state == SegState::Done) ++p.done;
    p.records = records_done_;
    return p;
}

JobRunner::JobRunner(sim::Runtime& rt, transport::TransportHost& host, rpc::Dispatcher& disp,
                     storage::StorageClient& files, std::shared_ptr<const UdfRegistry> udfs,
                     RunnerConfig cfg)
    : rt_(rt), host_(host), files_(files), udfs_(std::move(udfs)), cfg_(std::move(cfg)) {
    disp.on(kRpcSegResult, [this](const net::Address& peer, ByteReader& r) -> Bytes {
        JobHandle::Result res;
        res.job = r.u32();
        res.epoch = r.u32();
        res.stage = r.u32();
        res.seg = r.u32();
        res.outcome = SegOutcome(r.u8());
        res.fail_index = r.u64();
        res.records_in = r.u64();
        res.records_out = r.u64();
        res.from = peer;
        auto it = jobs_.find(res.job);
        if (it != jobs_.end()) it->second->inbox_.push_back(std::move(res));
        return {};
    });
    disp.on(kRpcJobStatus, [this](const net::Address&, ByteReader& r) -> Bytes {
        auto it = jobs_.find(r.u32());
        if (it == jobs_.end()) throw Error(Err::NotFound, "no such job");
        JobProgress p = it->second->progress();
        ByteWriter w;
        w.u8(p.state);
        w.u32(p.stage);
        w.u32(p.done);
        w.u32(p.total);
        w.u64(p.records);
        return w.take();
    });
}

transport::Connection& JobRunner::dial(const net::Address& at) {
    return transport::connect_blocking(rt_, host_, at, cfg_.rpc_timeout_ms);
}

std::vector<net::Address> JobRunner::live_workers() {
    auto& conn = dial(cfg_.coordinator);
    Bytes resp = rpc::call(rt_, conn, storage::kRpcGetNodes, {}, cfg_.rpc_timeout_ms);
    ByteReader r(resp);
    std::vector<net::Address> out;
    uint32_t n = r.u32();
    for (uint32_t i = 0; i < n; ++i) {
        out.push_back(storage::read_address(r));
        r.u32();  // chunk count, not interesting here
    }
    std::sort(out.begin(), out.end());
    return out;
}

JobHandle& JobRunner::submit_job(const JobSpec& spec) {
    if (spec.stages.empty()) throw Error(Err::InvalidInput, "a job needs at least one stage");
    if (spec.output_name.empty()) throw Error(Err::InvalidInput, "a job needs an output name");
    if (spec.input.files.empty()) throw Error(Err::UnknownInput, "no input files named");
    for (const auto& st : spec.stages)
        if (!udfs_->contains(st.udf))
            throw Error(Err::UnknownUdf, "'" + st.udf + "' is not registered");

    std::vector<storage::FileMetadata> metas;
    for (const auto& name : spec.input.files) {
        try {
            metas.push_back(files_.locate(name));
        } catch (const Error& e) {
            if (e.code() == Err::NotFound)
                throw Error(Err::UnknownInput, "input '" + name + "' does not exist");
            throw;
        }
    }

    auto handle = std::make_unique<JobHandle>();
    JobHandle& h = *handle;
    h.id_ = next_id_++;
    h.spec_ = spec;
    h.plan_ = plan_segments(metas, spec.input);
    h.workers_ = live_workers();
    if (h.workers_.empty()) throw Error(Err::NotEnoughNodes, "no live workers");
    uint64_t cap = uint64_t(h.workers_.size()) * cfg_.buckets_per_node;
    for (const auto& st : spec.stages)
        if (st.n_buckets > cap)
            throw Error(Err::AdmissionFailed, std::to_string(st.n_buckets) +
                                                  " buckets exceeds the ceiling of " +
                                                  std::to_string(cap));

    h.segs_.clear();
    for (const auto& s : h.plan_) h.segs_.push_back({s, SegState::Pending, {}});
    for (const auto& w : h.workers_) {
        h.busy_[w] = false;
        h.load_[w] = 0;
    }
    jobs_[h.id_] = std::move(handle);
    return h;
}

void JobRunner::abort(JobHandle& h, const std::string& why) {
    h.aborted_ = true;
    h.abort_reason_ = why;
}

void JobRunner::end_job(JobHandle& h) {
    ByteWriter w;
    w.u32(h.id_);
    Bytes body = w.take();
    for (const auto& addr : h.workers_) {
        try {
            rpc::cast(dial(addr), kRpcJobEnd, body);
        } catch (const Error&) {
            // a worker we cannot reach has nothing worth cleaning up
        }
    }
}

void JobRunner::on_worker_lost(JobHandle& h, const net::Address& w) {
    auto it = std::find(h.workers_.begin(), h.workers_.end(), w);
    if (it == h.workers_.end()) return;
    h.workers_.erase(it);
    if (h.workers_.empty()) {
        abort(h, "every worker is gone");
        return;
    }

    // whatever was running on the lost node failed with it
    for (auto& s : h.segs_) {
        if (s.state == SegState::Running && s.ran_on == w) {
            uint32_t& tries = h.retries_[{h.stage_, s.seg.id}];
            if (++tries > cfg_.max_retries) {
                abort(h, "segment " + std::to_string(s.seg.id) + " of stage " +
                             std::to_string(h.stage_) + " failed " + std::to_string(tries) +
                             " times");
                return;
            }
        }
    }

    // Bucket ownership is bucket % worker_count, so losing a node remaps
    // nearly every bucket, and any shuffle data the dead node held is gone
    // regardless. Start the job over on the survivors; deterministic
    // processing functions make the rerun indistinguishable.
    ++h.epoch_;
    h.stage_ = 0;
    h.segs_.clear();
    for (const auto& s : h.plan_) h.segs_.push_back({s, SegState::Pending, {}});
    h.busy_.clear();
    h.load_.clear();
    for (const auto& a : h.workers_) {
        h.busy_[a] = false;
        h.load_[a] = 0;
    }
    h.records_done_ = 0;
    h.inbox_.clear();
    h.announced_ = false;
    h.finished_ = false;
}

void JobRunner::announce(JobHandle& h) {
    while (!h.aborted_) {
        const StageSpec& st = h.spec_.stages[h.stage_];
        ByteWriter w;
        w.u32(h.id_);
        w.u32(h.epoch_);
        w.u32(h.stage_);
        w.str(st.udf);
        w.u32(st.n_buckets);
        w.bytes(st.arg);
        w.u32(uint32_t(h.workers_.size()));
        for (const auto& a : h.workers_) storage::write_address(w, a);
        Bytes body = w.take();

        bool lost_one = false;
        for (const auto& addr : std::vector<net::Address>(h.workers_)) {
            try {
                rpc::call(rt_, dial(addr), kRpcJobSubmit, body, cfg_.rpc_timeout_ms);
            } catch (const Error& e) {
                if (!is_gone(e)) throw;
                on_worker_lost(h, addr);
                lost_one = true;
                break;  // the worker list changed; start the round over
            }
        }
        if (!lost_one) {
            h.announced_ = true;
            return;
        }
    }
}

void JobRunner::drain_results(JobHandle& h) {
    while (!h.inbox_.empty()) {
        JobHandle::Result res = std::move(h.inbox_.front());
        h.inbox_.pop_front();
        if (res.epoch != h.epoch_ || res.stage != h.stage_ || res.seg >= h.segs_.size()) continue;
        auto& s = h.segs_[res.seg];
        if (s.state != SegState::Running || s.ran_on != res.from) continue;

        h.busy_[res.from] = false;
        if (res.outcome == SegOutcome::Ok) {
            s.state = SegState::Done;
            h.load_[res.from] += 1;
            h.records_done_ += res.records_in;
            continue;
        }
        uint32_t& tries = h.retries_[{h.stage_, res.seg}];
        if (++tries > cfg_.max_retries) {
            std::string what = res.outcome == SegOutcome::UdfFailed
                                   ? "processing failed at record " +
                                         std::to_string(res.fail_index)
                                   : "input or shuffle transfer kept failing";
            abort(h, "segment " + std::to_string(res.seg) + " of stage " +
                         std::to_string(h.stage_) + ": " + what + " (" +
                         std::to_string(tries) + " attempts)");
            return;
        }
        s.state = SegState::Pending;
    }
}

void JobRunner::dispatch_pending(JobHandle& h) {
    while (true) {
        SchedulerState st;
        std::vector<Segment> segs;
        segs.reserve(h.segs_.size());
        for (const auto& s : h.segs_) {
            segs.push_back(s.seg);
            st.state.push_back(s.state);
        }
        st.segments = &segs;
        for (const auto& a : h.workers_)
            st.workers.push_back({a, !h.busy_[a], h.load_[a]});

        auto pick = assign_segment(st);
        if (!pick) return;

        auto& s = h.segs_[pick->segment];  // ids are positional in every stage
        ByteWriter w;
        w.u32(h.id_);
        w.u32(h.epoch_);
        w.u32(h.stage_);
        w.u32(s.seg.id);
        w.u8(s.seg.from_bucket ? 1 : 0);
        if (s.seg.from_bucket) {
            w.u32(s.seg.bucket);
            w.u32(s.seg.bucket_stage);
            storage::write_address(w, s.seg.preferred.at(0));
        } else {
            w.str(s.seg.file);
            w.u32(s.seg.chunk_index);
            w.u32(s.seg.version);
            w.u8(uint8_t(h.spec_.input.format.framing));
            w.u32(h.spec_.input.format.width);
            w.u8(uint8_t(s.seg.preferred.size()));
            for (const auto& a : s.seg.preferred) storage::write_address(w, a);
        }
        Bytes body = w.take();
        try {
            rpc::call(rt_, dial(pick->worker), kRpcSegAssign, body, cfg_.rpc_timeout_ms);
        } catch (const Error& e) {
            if (!is_gone(e)) throw;
            on_worker_lost(h, pick->worker);
            return;  // the drive loop re-announces before dispatching again
        }
        s.state = SegState::Running;
        s.ran_on = pick->worker;
        h.busy_[pick->worker] = true;
    }
}

void JobRunner::advance_stage(JobHandle& h) {
    uint32_t produced = h.spec_.stages[h.stage_].n_buckets;
    std::vector<JobHandle::SegRt> next;
    if (produced > 0) {
        for (uint32_t b = 0; b < produced; ++b) {
            Segment s;
            s.id = b;
            s.from_bucket = true;
            s.bucket = b;
            s.bucket_stage = h.stage_;
            s.preferred = {shuffle_route(b, h.workers_)};
            next.push_back({std::move(s), SegState::Pending, {}});
        }
    } else {
        // no shuffle happened: each segment's output sits where it ran
        for (const auto& prev : h.segs_) {
            Segment s;
            s.id = prev.seg.id;
            s.from_bucket = true;
            s.bucket = prev.seg.id;
            s.bucket_stage = h.stage_;
            s.preferred = {prev.ran_on};
            next.push_back({std::move(s), SegState::Pending, {}});
        }
    }
    ++h.stage_;
    h.segs_ = std::move(next);
    for (const auto& a : h.workers_) {
        h.busy_[a] = false;
        h.load_[a] = 0;
    }
    h.announced_ = false;
}

void JobRunner::drive(JobHandle& h, const std::function<void(double)>& between_pumps) {
    double next_sweep = 0;
    while (!h.finished_) {
        if (h.aborted_) {
            end_job(h);
            throw Error(Err::JobAborted, h.abort_reason_);
        }
        drain_results(h);
        if (h.aborted_) continue;

        bool stage_done = std::all_of(h.segs_.begin(), h.segs_.end(), [](const auto& s) {
            return s.state == SegState::Done;
        });
        if (stage_done && h.announced_) {
            if (h.stage_ + 1 == h.spec_.stages.size()) {
                h.finished_ = true;
                break;
            }
            advance_stage(h);
            continue;
        }

        if (!h.announced_) {
            announce(h);
            continue;
        }

        double now = rt_.now_ms();
        if (now >= next_sweep) {
            next_sweep = now + cfg_.poll_ms;
            try {
                auto live = live_workers();
                for (const auto& w : std::vector<net::Address>(h.workers_))
                    if (!std::binary_search(live.begin(), live.end(), w)) on_worker_lost(h, w);
            } catch (const Error&) {
                // the coordinator not answering is not a worker's fault
            }
            if (h.aborted_ || !h.announced_) continue;
        }

        dispatch_pending(h);
        if (h.aborted_ || !h.announced_) continue;

        rt_.wait_until([&] { return !h.inbox_.empty(); }, cfg_.poll_ms);
        if (between_pumps) between_pumps(rt_.now_ms());
    }
}

Bytes JobRunner::fetch_bucket(const net::Address& owner, uint32_t job, uint32_t stage,
                              uint32_t bucket) {
    Bytes out;
    uint64_t total = 0;
    do {
        ByteWriter w;
        w.u32(job);
        w.u32(stage);
        w.u32(bucket);
        w.u64(out.size());
        w.u32(cfg_.piece_bytes);
        Bytes body = w.take();
        Bytes resp = rpc::call(rt_, dial(owner), kRpcBucketGet, body, cfg_.rpc_timeout_ms);
        ByteReader r(resp);
        total = r.u64();
        Bytes piece = r.bytes();
        if (piece.empty() && out.size() < total)
            throw Error(Err::Decode, "bucket transfer stalled");
        out.insert(out.end(), piece.begin(), piece.end());
    } while (out.size() < total);
    return out;
}

std::vector<std::pair<uint32_t, Bytes>> JobRunner::take_outputs(JobHandle& h) {
    if (h.aborted_) throw Error(Err::JobAborted, h.abort_reason_);
    if (!h.finished_) throw Error(Err::JobNotDone, "the job is still running");

    std::vector<std::pair<uint32_t, Bytes>> out;
    for (bool settled = false; !settled;) {
        std::vector<std::pair<uint32_t, net::Address>> outputs;
        if (h.spec_.stages.back().n_buckets > 0) {
            for (uint32_t b = 0; b < h.spec_.stages.back().n_buckets; ++b)
                outputs.emplace_back(b, shuffle_route(b, h.workers_));
        } else {
            for (const auto& s : h.segs_) outputs.emplace_back(s.seg.id, s.ran_on);
        }

        out.clear();
        settled = true;
        for (const auto& [bucket, owner] : outputs) {
            Bytes data;
            try {
                data = fetch_bucket(owner, h.id_, h.stage_, bucket);
            } catch (const Error& e) {
                // an owner that died after its last result landed takes its
                // share of the output with it; redo the job without it
                if (!is_gone(e)) throw;
                on_worker_lost(h, owner);
                if (h.aborted_) throw Error(Err::JobAborted, h.abort_reason_);
                drive(h);
                settled = false;
                break;
            }
            out.emplace_back(bucket, std::move(data));
        }
    }
    end_job(h);
    return out;
}

std::vector<std::string> JobRunner::collect(JobHandle& h) {
    std::vector<std::string> names;
    for (auto& [bucket, data] : take_outputs(h)) {
        std::string name = h.spec_.output_name + "/bucket_" + std::to_string(bucket);
        files_.upload(name, data);
        names.push_back(std::move(name));
    }
    return names;
}

}  // namespace ss::sphere
