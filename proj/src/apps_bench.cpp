#include "ss/apps/bench.hpp"

#include <algorithm>
#include <cstdio>

#include "ss/apps/kmeans.hpp"
#include "ss/apps/llpr.hpp"
#include "ss/apps/tera.hpp"
#include "ss/cluster/sim_cluster.hpp"

namespace ss::apps {

namespace {

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

cluster::ClusterConfig bench_cluster(int nodes, uint64_t seed, uint64_t chunk_size,
                                     int replicas) {
    cluster::ClusterConfig cfg;
    cfg.nodes = nodes;
    cfg.seed = seed;
    cfg.chunk_size = chunk_size;
    cfg.target_replicas = std::min(replicas, nodes);
    cfg.default_link.latency_ms = 0.1;
    cfg.default_link.bandwidth_bps = 1e9;
    return cfg;
}

}  // namespace

TeraBench bench_terasort(int nodes, uint64_t records, uint64_t seed) {
    cluster::SimCluster cl(bench_cluster(nodes, seed, 200000, 3));
    cl.converge_ring();
    register_tera_udfs(cl.udfs());

    auto& files = cl.make_client("bench");
    auto inputs = teragen(files, "tera/in", records, seed, uint32_t(nodes));
    SortCheck before = verify_sorted(files, inputs, sphere::RecordFormat::fixed(kTeraRecordBytes));

    auto& jr = cl.make_runner("bench");
    double t0 = cl.runtime().now_ms();
    auto outputs = terasort(jr, inputs, uint32_t(2 * nodes), "tera/out");
    double seconds = (cl.runtime().now_ms() - t0) / 1000.0;

    SortCheck after =
        verify_sorted(files, outputs, sphere::RecordFormat::length_prefixed());

    TeraBench r;
    r.nodes = nodes;
    r.records = records;
    r.seconds = seconds;
    r.ok = after.ok && after.records == records && after.key_checksum == before.key_checksum;
    return r;
}

KmeansBench bench_kmeans(int nodes, uint64_t records, uint32_t k, uint32_t iters,
                         uint64_t seed) {
    const uint32_t d = 8;
    cluster::SimCluster cl(bench_cluster(nodes, seed, 64000, 1));
    cl.converge_ring();
    register_kmeans_udfs(cl.udfs());

    auto& files = cl.make_client("bench");
    files.upload("km/points", kmeans_points(records, d, 5, seed));

    auto& jr = cl.make_runner("bench");
    double t0 = cl.runtime().now_ms();
    KMeansModel m = kmeans_run(jr, files, {"km/points"}, k, d, iters, seed);
    double seconds = (cl.runtime().now_ms() - t0) / 1000.0;

    KmeansBench r;
    r.records = records;
    r.k = k;
    r.iters = m.iterations;
    r.seconds = seconds;
    r.inertia = m.inertia;
    return r;
}

std::vector<LlprBench> bench_llpr(const std::vector<double>& rtts_ms, double loss,
                                  double bandwidth_bps, uint64_t size_bytes, uint64_t seed) {
    std::vector<LlprBench> rows;
    for (double rtt : rtts_ms) {
        net::SimNetwork net(seed);
        net::LinkProfile wan;
        wan.latency_ms = rtt / 2.0;
        wan.loss_rate = loss;
        wan.bandwidth_bps = bandwidth_bps;
        LlprReport rep = llpr_harness(net, wan, size_bytes);

        LlprBench r;
        r.rtt_ms = rtt;
        r.loss = loss;
        r.throughput_wan = rep.wan_throughput_bps;
        r.throughput_local = rep.local_throughput_bps;
        r.llpr = rep.llpr;
        rows.push_back(r);
    }
    return rows;
}

std::string csv_terasort(const std::vector<TeraBench>& rows) {
    std::string out = "nodes,records,seconds,ok\n";
    for (const auto& r : rows) {
        out += std::to_string(r.nodes) + "," + std::to_string(r.records) + "," +
               fmt("%.6f", r.seconds) + "," + (r.ok ? "1" : "0") + "\n";
    }
    return out;
}

std::string csv_kmeans(const std::vector<KmeansBench>& rows) {
    std::string out = "records,k,iters,seconds,inertia\n";
    for (const auto& r : rows) {
        out += std::to_string(r.records) + "," + std::to_string(r.k) + "," +
               std::to_string(r.iters) + "," + fmt("%.6f", r.seconds) + "," +
               fmt("%.6f", r.inertia) + "\n";
    }
    return out;
}

std::string csv_llpr(const std::vector<LlprBench>& rows) {
    std::string out = "rtt_ms,loss,throughput_wan,throughput_local,llpr\n";
    for (const auto& r : rows) {
        out += fmt("%.3f", r.rtt_ms) + "," + fmt("%.4f", r.loss) + "," +
               fmt("%.3f", r.throughput_wan) + "," + fmt("%.3f", r.throughput_local) + "," +
               fmt("%.6f", r.llpr) + "\n";
    }
    return out;
}

}  // namespace ss::apps
