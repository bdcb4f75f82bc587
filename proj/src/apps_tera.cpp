#include "ss/apps/tera.hpp"

#include <algorithm>
#include <random>

#include "ss/common/error.hpp"

namespace ss::apps {

namespace {

uint64_t fnv1a(std::span<const uint8_t> b) {
    uint64_t h = 14695981039346656037ull;
    for (uint8_t c : b) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::span<const uint8_t> key_of(const Bytes& rec) {
    return {rec.data(), std::min<size_t>(rec.size(), kTeraKeyBytes)};
}

}  // namespace

Bytes teragen_records(uint64_t n, uint64_t seed) {
    std::mt19937_64 rng(seed);
    Bytes out;
    out.reserve(n * kTeraRecordBytes);
    for (uint64_t i = 0; i < n; ++i) {
        uint64_t fill = 0;
        int left = 0;
        for (uint32_t b = 0; b < kTeraRecordBytes; ++b) {
            if (left == 0) {
                fill = rng();
                left = 8;
            }
            out.push_back(uint8_t(fill));
            fill >>= 8;
            --left;
        }
    }
    return out;
}

std::vector<std::string> teragen(storage::StorageClient& files, const std::string& prefix,
                                 uint64_t n, uint64_t seed, uint32_t parts) {
    if (parts == 0) throw Error(Err::InvalidInput, "teragen needs at least one part");
    std::vector<std::string> names;
    uint64_t done = 0;
    for (uint32_t p = 0; p < parts; ++p) {
        uint64_t count = n / parts + (p < n % parts ? 1 : 0);
        // each part gets its own stream so the layout never depends on how
        // the records are divided up
        Bytes data = teragen_records(count, seed ^ (p + 1) * 0x9e3779b97f4a7c15ull);
        std::string name = prefix + "/part" + std::to_string(p);
        files.upload(name, data);
        names.push_back(std::move(name));
        done += count;
    }
    (void)done;
    return names;
}

void register_tera_udfs(sphere::UdfRegistry& reg) {
    if (!reg.contains("tera/partition")) {
        // keys are uniform, so equal slices of the two-byte prefix space
        // spread records evenly and keep bucket ranges in bucket-id order
        reg.register_udf("tera/partition",
                         [](std::span<const uint8_t> rec, const Bytes& arg) {
                             ByteReader r(arg);
                             uint32_t buckets = r.u32();
                             uint32_t prefix = rec.size() >= 2
                                                   ? uint32_t(rec[0]) << 8 | rec[1]
                                                   : uint32_t(rec.empty() ? 0 : rec[0]) << 8;
                             uint32_t b = uint32_t(uint64_t(prefix) * buckets >> 16);
                             return std::vector<sphere::Emit>{
                                 {b, Bytes(rec.begin(), rec.end())}};
                         });
    }
    if (!reg.contains("tera/sort")) {
        reg.register_segment_udf("tera/sort",
                                 [](const std::vector<Bytes>& recs, const Bytes&) {
                                     auto sorted = recs;
                                     std::sort(sorted.begin(), sorted.end());
                                     std::vector<sphere::Emit> out;
                                     out.reserve(sorted.size());
                                     for (auto& r : sorted) out.emplace_back(0, std::move(r));
                                     return out;
                                 });
    }
}

std::vector<std::string> terasort(sphere::JobRunner& jr, const std::vector<std::string>& inputs,
                                  uint32_t n_buckets, const std::string& output_name) {
    if (n_buckets == 0) throw Error(Err::InvalidInput, "sorting needs at least one bucket");
    ByteWriter arg;
    arg.u32(n_buckets);
    sphere::JobSpec js;
    js.input.files = inputs;
    js.input.format = sphere::RecordFormat::fixed(kTeraRecordBytes);
    js.stages = {{"tera/partition", n_buckets, arg.take()}, {"tera/sort", 0, {}}};
    js.output_name = output_name;
    auto& h = jr.submit_job(js);
    jr.drive(h);
    return jr.collect(h);
}

SortCheck verify_sorted(storage::StorageClient& files, const std::vector<std::string>& ordered,
                        const sphere::RecordFormat& format) {
    SortCheck out;
    out.ok = true;
    Bytes prev;
    bool have_prev = false;
    for (const auto& name : ordered) {
        Bytes data = files.download(name);
        for (auto& rec : sphere::split_records(data, format)) {
            auto key = key_of(rec);
            if (have_prev) {
                auto pk = key_of(prev);
                if (std::lexicographical_compare(key.begin(), key.end(), pk.begin(), pk.end()))
                    out.ok = false;
            }
            out.key_checksum += fnv1a(key);
            ++out.records;
            prev = std::move(rec);
            have_prev = true;
        }
    }
    return out;
}

}  // namespace ss::apps
