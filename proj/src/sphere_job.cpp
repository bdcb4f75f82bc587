#include "ss/sphere/job.hpp"

#include <algorithm>

#include "ss/common/error.hpp"

namespace ss::sphere {

std::vector<Segment> plan_segments(const std::vector<storage::FileMetadata>& files,
                                   const RecordStream& input) {
    const RecordFormat& fmt = input.format;
    bool fixed = fmt.framing == Framing::Fixed;
    if (fixed && fmt.width == 0)
        throw Error(Err::AdmissionFailed, "fixed record width of zero");

    std::vector<Segment> segs;
    uint64_t global = 0;
    for (const auto& meta : files) {
        if (fixed) {
            if (meta.size_bytes % fmt.width != 0)
                throw Error(Err::AdmissionFailed, "'" + meta.name + "' ends mid-record");
            if (meta.chunk_count() > 1 && meta.chunk_size % fmt.width != 0)
                throw Error(Err::AdmissionFailed,
                            "'" + meta.name + "' has chunk boundaries inside records");
        }
        for (uint32_t c = 0; c < meta.chunk_count(); ++c) {
            uint64_t bytes = (c + 1 < meta.chunk_count())
                                 ? meta.chunk_size
                                 : meta.size_bytes - meta.chunk_size * (meta.chunk_count() - 1);
            Segment s;
            s.id = uint32_t(segs.size());
            s.file = meta.name;
            s.chunk_index = c;
            s.version = meta.version;
            s.first_record = global;
            s.last_record = fixed ? global + bytes / fmt.width : global;
            s.preferred = meta.replicas[c];
            global = s.last_record;
            segs.push_back(std::move(s));
        }
    }
    if (fixed && input.total_records != 0 && global != input.total_records)
        throw Error(Err::AdmissionFailed,
                    "dataset holds " + std::to_string(global) + " records, not " +
                        std::to_string(input.total_records));
    return segs;
}

std::optional<Assignment> assign_segment(const SchedulerState& s) {
    const auto& segs = *s.segments;

    // data-local pass: first pending segment with any idle holder, lowest
    // holder address
    for (size_t i = 0; i < segs.size(); ++i) {
        if (s.state[i] != SegState::Pending) continue;
        const net::Address* best = nullptr;
        for (const auto& w : s.workers) {
            if (!w.idle) continue;
            if (std::find(segs[i].preferred.begin(), segs[i].preferred.end(), w.addr) ==
                segs[i].preferred.end())
                continue;
            if (!best || w.addr < *best) best = &w.addr;
        }
        if (best) return Assignment{segs[i].id, *best};
    }

    // otherwise move data: least-loaded idle worker takes the first pending
    const WorkerSlot* pick = nullptr;
    for (const auto& w : s.workers) {
        if (!w.idle) continue;
        if (!pick || w.load < pick->load || (w.load == pick->load && w.addr < pick->addr))
            pick = &w;
    }
    if (!pick) return std::nullopt;
    for (size_t i = 0; i < segs.size(); ++i)
        if (s.state[i] == SegState::Pending) return Assignment{segs[i].id, pick->addr};
    return std::nullopt;
}

net::Address shuffle_route(uint32_t bucket, const std::vector<net::Address>& workers) {
    if (workers.empty()) throw Error(Err::Internal, "no workers to route a bucket to");
    return workers[bucket % workers.size()];
}

}  // namespace ss::sphere
