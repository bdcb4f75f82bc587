#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ss/common/bytes.hpp"

namespace ss::sphere {

// One emitted record, tagged with the shuffle bucket it belongs in. Stages
// that do not shuffle ignore the tag.
using Emit = std::pair<uint32_t, Bytes>;

// Per-record function: invoked once for every record, in order. arg is the
// job-supplied parameter blob (the same bytes on every node).
using RecordFn =
    std::function<std::vector<Emit>(std::span<const uint8_t> record, const Bytes& arg)>;

// Whole-segment function: sees all of a segment's records at once. Needed
// for work that cannot be expressed record-by-record, like sorting a bucket
// or emitting one partial aggregate per segment.
using SegmentFn =
    std::function<std::vector<Emit>(const std::vector<Bytes>& records, const Bytes& arg)>;

struct Udf {
    RecordFn record;    // exactly one of the two is set
    SegmentFn segment;
};

// Processing functions are registered by name on every node before a job
// references them; jobs carry only the name and the arg blob.
class UdfRegistry {
public:
    void register_udf(const std::string& name, RecordFn fn);
    void register_segment_udf(const std::string& name, SegmentFn fn);

    bool contains(const std::string& name) const { return fns_.count(name) > 0; }
    const Udf* find(const std::string& name) const;

private:
    std::map<std::string, Udf> fns_;
};

// Runs a UDF over one segment's records in order and returns the emissions
// in emission order. Any exception out of the function surfaces as UdfError;
// for per-record functions *fail_index receives the offending record.
std::vector<Emit> apply_udf(const Udf& udf, const std::vector<Bytes>& records,
                            const Bytes& arg, uint64_t* fail_index = nullptr);

}  // namespace ss::sphere
