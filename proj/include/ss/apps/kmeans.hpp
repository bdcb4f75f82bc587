#pragma once

#include "ss/sphere/runner.hpp"

namespace ss::apps {

struct KMeansModel {
    uint32_t k = 0;
    uint32_t d = 0;
    std::vector<std::vector<double>> centers;  // k rows of d coordinates
    uint32_t iterations = 0;
    // sum of squared distances to the nearest center, as measured by the
    // final assignment pass; zero when no iteration ran
    double inertia = 0.0;
};

// Per-iteration center history, outermost index = iteration.
using CenterTrace = std::vector<std::vector<std::vector<double>>>;

// n points with d coordinates each (big-endian doubles, 8*d bytes per
// record), drawn around `blobs` seeded cluster centers.
Bytes kmeans_points(uint64_t n, uint32_t d, uint32_t blobs, uint64_t seed);

std::vector<std::vector<double>> parse_points(const Bytes& data, uint32_t d);

void register_kmeans_udfs(sphere::UdfRegistry& reg);

// Picks the first k distinct points under a seeded shuffle of the order.
std::vector<std::vector<double>> kmeans_init(const std::vector<std::vector<double>>& points,
                                             uint32_t k, uint64_t seed);

// Lloyd's iterations over stored points: each one is a job that assigns
// every point to its nearest center (ties to the lowest index) and emits
// per-segment partial sums, reduced here into the next centers. A center
// whose cluster comes up empty stays where it was.
KMeansModel kmeans_run(sphere::JobRunner& jr, storage::StorageClient& files,
                       const std::vector<std::string>& inputs, uint32_t k, uint32_t d,
                       uint32_t iters, uint64_t seed, CenterTrace* trace = nullptr);

// The same algorithm on one machine with explicit starting centers.
KMeansModel kmeans_reference(const std::vector<std::vector<double>>& points,
                             std::vector<std::vector<double>> centers, uint32_t iters,
                             CenterTrace* trace = nullptr);

}  // namespace ss::apps
