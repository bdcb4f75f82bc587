#pragma once

#include "ss/sphere/runner.hpp"

namespace ss::apps {

inline constexpr uint32_t kTeraRecordBytes = 100;
inline constexpr uint32_t kTeraKeyBytes = 10;

// n records of 100 bytes each, the first 10 uniformly random from the seed.
Bytes teragen_records(uint64_t n, uint64_t seed);

// Generates the dataset and uploads it as <prefix>/part<i>, records split
// evenly across `parts` files. Returns the file names in order.
std::vector<std::string> teragen(storage::StorageClient& files, const std::string& prefix,
                                 uint64_t n, uint64_t seed, uint32_t parts = 1);

// The two stage functions the sort uses; call once per registry.
void register_tera_udfs(sphere::UdfRegistry& reg);

// Distributed sort: range-partition records by the leading two key bytes,
// then sort each bucket on its owner. Outputs <output_name>/bucket_<k>;
// their concatenation in k order is the sorted dataset.
std::vector<std::string> terasort(sphere::JobRunner& jr, const std::vector<std::string>& inputs,
                                  uint32_t n_buckets, const std::string& output_name);

struct SortCheck {
    bool ok = false;            // keys non-decreasing across the whole walk
    uint64_t records = 0;
    uint64_t key_checksum = 0;  // order-independent sum of key hashes
};

// Walks the files in the order given, checking key order across all of
// them. Compare checksums and counts against the input's to confirm nothing
// was dropped, duplicated, or altered.
SortCheck verify_sorted(storage::StorageClient& files, const std::vector<std::string>& ordered,
                        const sphere::RecordFormat& format);

}  // namespace ss::apps
