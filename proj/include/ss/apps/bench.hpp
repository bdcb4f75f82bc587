#pragma once

// Benchmark drivers: each one builds a simulated cluster, runs one workload,
// and reports timings in simulated seconds so results replay bit-for-bit.

#include <cstdint>
#include <string>
#include <vector>

namespace ss::apps {

struct TeraBench {
    int nodes = 0;
    uint64_t records = 0;
    double seconds = 0.0;
    bool ok = false;
};

struct KmeansBench {
    uint64_t records = 0;
    uint32_t k = 0;
    uint32_t iters = 0;
    double seconds = 0.0;
    double inertia = 0.0;
};

struct LlprBench {
    double rtt_ms = 0.0;
    double loss = 0.0;
    double throughput_wan = 0.0;
    double throughput_local = 0.0;
    double llpr = 0.0;
};

// Generates records, sorts them across the cluster, and verifies order plus
// key checksum against the input.
TeraBench bench_terasort(int nodes, uint64_t records, uint64_t seed);

// Clusters synthetic gaussian blobs (8 dimensions, 5 blobs).
KmeansBench bench_kmeans(int nodes, uint64_t records, uint32_t k, uint32_t iters,
                         uint64_t seed);

// Measures the wide-area-to-local throughput ratio at each round-trip time.
std::vector<LlprBench> bench_llpr(const std::vector<double>& rtts_ms, double loss,
                                  double bandwidth_bps, uint64_t size_bytes, uint64_t seed);

std::string csv_terasort(const std::vector<TeraBench>& rows);
std::string csv_kmeans(const std::vector<KmeansBench>& rows);
std::string csv_llpr(const std::vector<LlprBench>& rows);

}  // namespace ss::apps
