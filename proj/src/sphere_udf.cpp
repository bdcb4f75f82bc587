#include "ss/sphere/udf.hpp"

#include "ss/common/error.hpp"

namespace ss::sphere {

void UdfRegistry::register_udf(const std::string& name, RecordFn fn) {
    if (fns_.count(name)) throw Error(Err::DuplicateName, "udf '" + name + "' already registered");
    fns_[name].record = std::move(fn);
}

void UdfRegistry::register_segment_udf(const std::string& name, SegmentFn fn) {
    if (fns_.count(name)) throw Error(Err::DuplicateName, "udf '" + name + "' already registered");
    fns_[name].segment = std::move(fn);
}

const Udf* UdfRegistry::find(const std::string& name) const {
    auto it = fns_.find(name);
    return it == fns_.end() ? nullptr : &it->second;
}

std::vector<Emit> apply_udf(const Udf& udf, const std::vector<Bytes>& records,
                            const Bytes& arg, uint64_t* fail_index) {
    if (fail_index) *fail_index = 0;
    if (udf.segment) {
        try {
            return udf.segment(records, arg);
        } catch (const std::exception& e) {
            throw Error(Err::UdfError, e.what());
        }
    }
    std::vector<Emit> out;
    for (size_t i = 0; i < records.size(); ++i) {
        try {
            auto emitted = udf.record(records[i], arg);
            out.insert(out.end(), std::make_move_iterator(emitted.begin()),
                       std::make_move_iterator(emitted.end()));
        } catch (const std::exception& e) {
            if (fail_index) *fail_index = i;
            throw Error(Err::UdfError,
                        "record " + std::to_string(i) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace ss::sphere
