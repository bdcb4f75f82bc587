#pragma once

#include <memory>

#include "ss/net/sim_network.hpp"
#include "ss/routing/chord.hpp"
#include "ss/sim/runtime.hpp"
#include "ss/sphere/runner.hpp"
#include "ss/sphere/worker.hpp"
#include "ss/storage/client.hpp"
#include "ss/storage/coordinator.hpp"
#include "ss/storage/server.hpp"

namespace ss::cluster {

struct ClusterConfig {
    int nodes = 8;
    int ring_bits = 16;
    uint64_t seed = 1;
    net::LinkProfile default_link;  // applied between every host pair when non-ideal
    net::SimConfig sim;
    uint64_t chunk_size = 64ull << 20;
    int target_replicas = 3;
    double heartbeat_interval_ms = 1000.0;
    double dead_after_ms = 5000.0;
    std::string data_dir;  // per-node subdirectories when set
    bool background_maintenance = true;
};

// A whole storage cluster inside one simulated network: chord ring, storage
// service on every node, coordinator on node 0, plus client hosts on demand.
// Tests and the sim tool drive it through the runtime.
class SimCluster {
public:
    explicit SimCluster(ClusterConfig cfg);
    SimCluster(const SimCluster&) = delete;
    SimCluster& operator=(const SimCluster&) = delete;

    sim::Runtime& runtime() { return rt_; }
    net::SimNetwork& network() { return net_; }
    const ClusterConfig& config() const { return cfg_; }

    size_t size() const { return nodes_.size(); }
    const net::Address& address(size_t i) const { return nodes_[i]->host->address(); }
    routing::ChordService& chord(size_t i) { return *nodes_[i]->chord; }
    storage::StorageService& storage(size_t i) { return *nodes_[i]->storage; }
    sphere::WorkerService& worker(size_t i) { return *nodes_[i]->worker; }
    storage::CoordinatorService& coordinator() { return *coordinator_; }
    sphere::UdfRegistry& udfs() { return *udfs_; }
    bool alive(size_t i) const { return nodes_[i]->alive; }
    std::vector<net::Address> node_addresses() const;

    // Joins every node through node 0 and stabilizes until lookups are exact,
    // then lets one heartbeat land so the coordinator knows everyone.
    void converge_ring();

    // Drops the node from the network mid-flight; nothing on it answers again.
    void kill(size_t i);

    // entry defaults to every node; pass a subset to pin the client's view
    storage::StorageClient& make_client(const std::string& user,
                                        std::vector<net::Address> entry = {});

    // a submitter with its own host: storage client plus job runner
    sphere::JobRunner& make_runner(const std::string& user);

private:
    struct Node {
        std::unique_ptr<transport::TransportHost> host;
        std::unique_ptr<rpc::Dispatcher> disp;
        std::unique_ptr<routing::ChordService> chord;
        std::unique_ptr<storage::StorageService> storage;
        std::unique_ptr<sphere::WorkerService> worker;
        std::unique_ptr<sim::FnActor> chord_tick;
        std::unique_ptr<sim::FnActor> beat_tick;
        bool alive = true;
    };
    struct Client {
        std::unique_ptr<transport::TransportHost> host;
        std::unique_ptr<rpc::Dispatcher> disp;  // only runners answer requests
        std::unique_ptr<storage::StorageClient> api;
        std::unique_ptr<sphere::JobRunner> runner;
    };

    void apply_default_links(const net::Address& added);

    ClusterConfig cfg_;
    net::SimNetwork net_;
    sim::Runtime rt_;
    std::shared_ptr<sphere::UdfRegistry> udfs_ = std::make_shared<sphere::UdfRegistry>();
    std::vector<std::unique_ptr<Node>> nodes_;
    std::unique_ptr<storage::CoordinatorService> coordinator_;
    std::vector<std::unique_ptr<Client>> clients_;
    std::vector<net::Address> hosts_seen_;  // for pairwise link profiles
};

}  // namespace ss::cluster
