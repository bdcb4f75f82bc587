#include "ss/sphere/worker.hpp"

#include <algorithm>

#include "ss/common/checksum.hpp"
#include "ss/storage/protocol.hpp"

namespace ss::sphere {

WorkerService::WorkerService(transport::TransportHost& host, rpc::Dispatcher& disp,
                             std::shared_ptr<const UdfRegistry> udfs,
                             storage::StorageService* colocated, uint32_t piece_bytes,
                             double io_timeout_ms)
    : host_(host),
      udfs_(std::move(udfs)),
      colocated_(colocated),
      piece_bytes_(piece_bytes),
      io_timeout_ms_(io_timeout_ms) {
    auto bind = [this](Bytes (WorkerService::*fn)(const net::Address&, ByteReader&)) {
        return [this, fn](const net::Address& peer, ByteReader& r) { return (this->*fn)(peer, r); };
    };
    disp.on(kRpcJobSubmit, bind(&WorkerService::on_job_submit));
    disp.on(kRpcSegAssign, bind(&WorkerService::on_seg_assign));
    disp.on(kRpcBucketPut, bind(&WorkerService::on_bucket_put));
    disp.on(kRpcBucketGet, bind(&WorkerService::on_bucket_get));
    disp.on(kRpcJobEnd, bind(&WorkerService::on_job_end));
}

Bytes WorkerService::on_job_submit(const net::Address& peer, ByteReader& r) {
    uint32_t job = r.u32();
    uint32_t epoch = r.u32();
    auto it = jobs_.find(job);
    if (it == jobs_.end() || epoch > it->second.epoch) {
        // a new epoch starts the job over: whatever we held is void
        if (task_ && task_->job == job) task_.reset();
        jobs_[job] = JobCtx{};
        it = jobs_.find(job);
        it->second.epoch = epoch;
    } else if (epoch < it->second.epoch) {
        throw Error(Err::Internal, "stale job epoch");
    }
    JobCtx& c = it->second;
    c.stage = r.u32();
    c.udf = r.str();
    c.n_buckets = r.u32();
    c.arg = r.bytes();
    c.workers.clear();
    uint32_t n = r.u32();
    for (uint32_t i = 0; i < n; ++i) c.workers.push_back(storage::read_address(r));
    c.runner = peer;
    // a stage announcement never arrives while this worker still runs a
    // segment of the previous stage; dropping a leftover task is defensive
    if (task_ && task_->job == job && task_->stage != c.stage) task_.reset();
    return {};
}

Bytes WorkerService::on_seg_assign(const net::Address&, ByteReader& r) {
    uint32_t job = r.u32();
    uint32_t epoch = r.u32();
    auto it = jobs_.find(job);
    if (it == jobs_.end() || it->second.epoch != epoch)
        throw Error(Err::Internal, "assignment for an unannounced job");
    if (task_) throw Error(Err::Internal, "worker already busy");

    Task t;
    t.job = job;
    t.epoch = epoch;
    t.stage = r.u32();
    if (t.stage != it->second.stage) throw Error(Err::Internal, "assignment for the wrong stage");
    t.seg = r.u32();
    t.from_bucket = r.u8() != 0;
    if (t.from_bucket) {
        t.bucket = r.u32();
        t.bucket_stage = r.u32();
        t.sources.push_back(storage::read_address(r));
    } else {
        t.file = r.str();
        t.chunk = r.u32();
        t.version = r.u32();
        t.fmt.framing = Framing(r.u8());
        t.fmt.width = r.u32();
        uint8_t n = r.u8();
        for (uint8_t i = 0; i < n; ++i) t.sources.push_back(storage::read_address(r));
    }
    task_ = std::move(t);
    return {};
}

Bytes WorkerService::on_bucket_put(const net::Address& peer, ByteReader& r) {
    uint32_t job = r.u32();
    uint32_t epoch = r.u32();
    auto it = jobs_.find(job);
    // transfers from a superseded epoch are void; swallow them quietly
    if (it == jobs_.end() || it->second.epoch != epoch) return {};
    JobCtx& c = it->second;

    uint32_t stage = r.u32();
    uint32_t bucket = r.u32();
    uint32_t seg = r.u32();
    uint64_t offset = r.u64();
    uint64_t total = r.u64();
    Bytes piece = r.bytes();

    auto key = std::make_tuple(stage, bucket, seg, peer);
    if (offset == 0) c.staging[key] = JobCtx::Staging{Bytes(total), 0};
    auto st = c.staging.find(key);
    if (st == c.staging.end() || st->second.buf.size() != total || st->second.have != offset ||
        offset + piece.size() > total)
        throw Error(Err::Decode, "bucket transfer out of step");
    std::copy(piece.begin(), piece.end(), st->second.buf.begin() + offset);
    st->second.have += piece.size();
    if (st->second.have == total) {
        c.buckets[{stage, bucket}][seg] = std::move(st->second.buf);
        c.staging.erase(st);
        stats_.bucket_bytes_stored += total;
    }
    return {};
}

Bytes WorkerService::on_bucket_get(const net::Address&, ByteReader& r) {
    uint32_t job = r.u32();
    auto it = jobs_.find(job);
    if (it == jobs_.end()) throw Error(Err::Internal, "unknown job");
    uint32_t stage = r.u32();
    uint32_t bucket = r.u32();
    uint64_t offset = r.u64();
    uint32_t max = r.u32();

    Bytes whole;
    auto b = it->second.buckets.find({stage, bucket});
    if (b != it->second.buckets.end())
        for (const auto& [seg, bytes] : b->second)
            whole.insert(whole.end(), bytes.begin(), bytes.end());
    if (offset > whole.size()) throw Error(Err::InvalidInput, "offset past the bucket");

    size_t n = std::min<size_t>(max, whole.size() - offset);
    ByteWriter w;
    w.u64(whole.size());
    w.bytes({whole.data() + offset, n});
    return w.take();
}

Bytes WorkerService::on_job_end(const net::Address&, ByteReader& r) {
    uint32_t job = r.u32();
    jobs_.erase(job);
    if (task_ && task_->job == job) task_.reset();
    return {};
}

bool WorkerService::process(double now_ms) {
    if (!task_) return false;
    Task& t = *task_;
    auto it = jobs_.find(t.job);
    if (it == jobs_.end() || it->second.epoch != t.epoch) {
        task_.reset();
        return true;
    }
    JobCtx& ctx = it->second;
    switch (t.phase) {
        case Task::Phase::Load:
            return step_load(t, ctx, now_ms);
        case Task::Phase::Run:
            run_segment(t, ctx);
            return true;
        case Task::Phase::Ship:
            return step_ship(t, ctx, now_ms);
        case Task::Phase::Report:
            report(t, ctx);
            return true;
    }
    return false;
}

bool WorkerService::try_local_load(Task& t, JobCtx& ctx) {
    if (t.from_bucket) {
        if (t.sources.empty() || t.sources[0] != host_.address()) return false;
        // we own this bucket; an absent entry just means nothing was emitted
        Bytes whole;
        auto b = ctx.buckets.find({t.bucket_stage, t.bucket});
        if (b != ctx.buckets.end())
            for (const auto& [seg, bytes] : b->second)
                whole.insert(whole.end(), bytes.begin(), bytes.end());
        t.data = std::move(whole);
        return true;
    }
    if (!colocated_) return false;
    const auto* block =
        colocated_->chunks().find(storage::ChunkKey{t.file, t.chunk, t.version});
    if (!block || crc32(block->data) != block->crc) return false;
    t.data = block->data;
    return true;
}

void WorkerService::next_source(Task& t) {
    t.call.abandon();
    ++t.src;
    t.data.clear();
    t.have = 0;
    t.total_known = false;
    if (t.src >= t.sources.size()) {
        t.outcome = SegOutcome::IoFailed;
        t.phase = Task::Phase::Report;
    }
}

bool WorkerService::step_load(Task& t, JobCtx& ctx, double now) {
    if (t.src == 0 && t.have == 0 && !t.call.active() && try_local_load(t, ctx)) {
        t.phase = Task::Phase::Run;
        return true;
    }

    if (!t.call.active()) {
        if (t.src >= t.sources.size()) {
            t.outcome = SegOutcome::IoFailed;
            t.phase = Task::Phase::Report;
            return true;
        }
        if (t.src == 0 && t.have == 0 && !t.from_bucket) ++stats_.remote_chunk_fetches;
        ByteWriter w;
        if (t.from_bucket) {
            w.u32(t.job);
            w.u32(t.bucket_stage);
            w.u32(t.bucket);
            w.u64(t.have);
            w.u32(piece_bytes_);
        } else {
            storage::write_chunk_key(w, {t.file, t.chunk, t.version});
            w.u64(t.have);
            w.u32(piece_bytes_);
        }
        Bytes body = w.take();
        uint8_t type = t.from_bucket ? kRpcBucketGet : storage::kRpcChunkGet;
        t.call.start(*host_.connect(t.sources[t.src]), type, body, now + io_timeout_ms_);
        return true;
    }

    Bytes resp;
    auto state = t.call.poll(now, resp);
    if (state == rpc::AsyncCall::Outcome::Pending) return false;
    if (state == rpc::AsyncCall::Outcome::Failed) {
        next_source(t);
        return true;
    }

    ByteReader r(resp);
    uint64_t total = r.u64();
    uint32_t crc = t.from_bucket ? 0 : r.u32();
    Bytes piece = r.bytes();
    if (!t.total_known) {
        t.total = total;
        t.total_known = true;
        t.expect_crc = crc;
    }
    if (total != t.total || (piece.empty() && t.have < t.total)) {
        next_source(t);
        return true;
    }
    t.data.insert(t.data.end(), piece.begin(), piece.end());
    t.have += piece.size();
    if (t.have >= t.total) {
        if (!t.from_bucket && crc32(t.data) != t.expect_crc) {
            next_source(t);  // rotten copy; try another holder
            return true;
        }
        t.phase = Task::Phase::Run;
    }
    return true;
}

void WorkerService::run_segment(Task& t, JobCtx& ctx) {
    std::vector<Bytes> records;
    try {
        RecordFormat fmt = t.from_bucket ? RecordFormat::length_prefixed() : t.fmt;
        records = split_records(t.data, fmt);
    } catch (const Error&) {
        t.outcome = SegOutcome::IoFailed;
        t.phase = Task::Phase::Report;
        return;
    }
    t.records_in = records.size();
    t.data.clear();

    const Udf* udf = udfs_->find(ctx.udf);
    if (!udf) {
        t.outcome = SegOutcome::IoFailed;
        t.phase = Task::Phase::Report;
        return;
    }
    std::vector<Emit> emits;
    try {
        emits = apply_udf(*udf, records, ctx.arg, &t.fail_index);
    } catch (const Error&) {
        t.outcome = SegOutcome::UdfFailed;
        t.phase = Task::Phase::Report;
        return;
    }
    t.records_out = emits.size();

    std::map<uint32_t, std::vector<Bytes>> grouped;
    for (auto& [bucket, rec] : emits) {
        uint32_t b = ctx.n_buckets == 0 ? t.seg : bucket % ctx.n_buckets;
        grouped[b].push_back(std::move(rec));
    }
    for (auto& [bucket, recs] : grouped) {
        Bytes bytes = join_length_prefixed(recs);
        net::Address dest = ctx.n_buckets == 0 ? host_.address()
                                               : shuffle_route(bucket, ctx.workers);
        if (dest == host_.address()) {
            stats_.bucket_bytes_stored += bytes.size();
            ctx.buckets[{t.stage, bucket}][t.seg] = std::move(bytes);
        } else {
            t.outgoing.emplace_back(bucket, std::move(bytes));
        }
    }
    t.phase = t.outgoing.empty() ? Task::Phase::Report : Task::Phase::Ship;
}

bool WorkerService::step_ship(Task& t, JobCtx& ctx, double now) {
    const auto& [bucket, bytes] = t.outgoing[t.out_idx];
    uint64_t piece = std::min<uint64_t>(piece_bytes_, bytes.size() - t.out_off);

    if (!t.call.active()) {
        ByteWriter w;
        w.u32(t.job);
        w.u32(t.epoch);
        w.u32(t.stage);
        w.u32(bucket);
        w.u32(t.seg);
        w.u64(t.out_off);
        w.u64(bytes.size());
        w.bytes({bytes.data() + t.out_off, size_t(piece)});
        Bytes body = w.take();
        t.call.start(*host_.connect(shuffle_route(bucket, ctx.workers)), kRpcBucketPut, body,
                     now + io_timeout_ms_);
        return true;
    }

    Bytes resp;
    auto state = t.call.poll(now, resp);
    if (state == rpc::AsyncCall::Outcome::Pending) return false;
    if (state == rpc::AsyncCall::Outcome::Failed) {
        t.outcome = SegOutcome::IoFailed;
        t.phase = Task::Phase::Report;
        return true;
    }
    stats_.bucket_bytes_sent += piece;
    t.out_off += piece;
    if (t.out_off >= bytes.size()) {
        ++t.out_idx;
        t.out_off = 0;
        if (t.out_idx >= t.outgoing.size()) t.phase = Task::Phase::Report;
    }
    return true;
}

void WorkerService::report(Task& t, JobCtx& ctx) {
    ByteWriter w;
    w.u32(t.job);
    w.u32(t.epoch);
    w.u32(t.stage);
    w.u32(t.seg);
    w.u8(uint8_t(t.outcome));
    w.u64(t.fail_index);
    w.u64(t.records_in);
    w.u64(t.records_out);
    Bytes body = w.take();
    rpc::cast(*host_.connect(ctx.runner), kRpcSegResult, body);
    if (t.outcome == SegOutcome::Ok) ++stats_.segments_run;
    task_.reset();
}

}  // namespace ss::sphere
