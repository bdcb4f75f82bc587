#include "ss/cluster/sim_cluster.hpp"

#include <filesystem>
#include <set>

namespace ss::cluster {

SimCluster::SimCluster(ClusterConfig cfg)
    : cfg_(std::move(cfg)), net_(cfg_.seed, cfg_.sim), rt_(net_) {
    if (cfg_.nodes < 1) throw Error(Err::BadConfig, "a cluster needs at least one node");

    // Ring ids default to a hash of the listen address; with narrow rings two
    // names can collide, so nudge the port until every id is distinct.
    std::vector<net::Address> addrs;
    std::set<routing::NodeId> ids;
    for (int i = 0; i < cfg_.nodes; ++i) {
        net::Address addr{"node" + std::to_string(i), 7000};
        while (!ids.insert(routing::hash_id(addr.str(), cfg_.ring_bits)).second) ++addr.port;
        addrs.push_back(addr);
    }

    for (int i = 0; i < cfg_.nodes; ++i) {
        const net::Address& addr = addrs[size_t(i)];
        auto n = std::make_unique<Node>();
        n->host = std::make_unique<transport::TransportHost>(net_, addr);
        n->disp = std::make_unique<rpc::Dispatcher>();
        n->chord = std::make_unique<routing::ChordService>(*n->host, *n->disp,
                                                           cfg_.ring_bits);
        n->chord->enable_maintenance(cfg_.background_maintenance);

        storage::StorageConfig scfg;
        scfg.chunk_size = cfg_.chunk_size;
        scfg.target_replicas = cfg_.target_replicas;
        scfg.heartbeat_interval_ms = cfg_.heartbeat_interval_ms;
        scfg.coordinator = addrs[0];
        if (!cfg_.data_dir.empty())
            scfg.data_dir =
                (std::filesystem::path(cfg_.data_dir) / ("node" + std::to_string(i)))
                    .string();
        n->storage = std::make_unique<storage::StorageService>(*n->host, *n->disp, scfg);
        n->worker = std::make_unique<sphere::WorkerService>(*n->host, *n->disp, udfs_,
                                                            n->storage.get());

        n->disp->attach(*n->host);
        rt_.add_actor(n->worker.get());
        rt_.add_actor(n->host.get());
        if (cfg_.background_maintenance) {
            auto* c = n->chord.get();
            n->chord_tick =
                std::make_unique<sim::FnActor>([c](double now) { return c->tick(now); });
            rt_.add_actor(n->chord_tick.get());
        }
        auto* s = n->storage.get();
        n->beat_tick =
            std::make_unique<sim::FnActor>([s](double now) { return s->tick(now); });
        rt_.add_actor(n->beat_tick.get());

        apply_default_links(addr);
        nodes_.push_back(std::move(n));
    }

    storage::CoordinatorConfig ccfg;
    ccfg.target_replicas = cfg_.target_replicas;
    ccfg.dead_after_ms = cfg_.dead_after_ms;
    coordinator_ = std::make_unique<storage::CoordinatorService>(*nodes_[0]->host,
                                                                 *nodes_[0]->disp, ccfg);

    // Node 0 hosts the coordinator, so its own heartbeat skips the network.
    auto* co = coordinator_.get();
    nodes_[0]->storage->set_local_heartbeat(
        [co, this](const net::Address& a, size_t chunks) {
            co->note_heartbeat(a, chunks, net_.now_ms());
        });
}

std::vector<net::Address> SimCluster::node_addresses() const {
    std::vector<net::Address> out;
    out.reserve(nodes_.size());
    for (const auto& n : nodes_) out.push_back(n->host->address());
    return out;
}

void SimCluster::apply_default_links(const net::Address& added) {
    if (cfg_.default_link.latency_ms == 0 && cfg_.default_link.loss_rate == 0 &&
        cfg_.default_link.bandwidth_bps == 0 && cfg_.default_link.jitter_ms == 0) {
        hosts_seen_.push_back(added);
        return;
    }
    for (const auto& other : hosts_seen_) net_.set_link(other, added, cfg_.default_link);
    hosts_seen_.push_back(added);
}

void SimCluster::converge_ring() {
    nodes_[0]->chord->create();
    auto stabilize_all = [&] {
        for (auto& n : nodes_)
            if (n->alive && n->chord->joined()) n->chord->stabilize_blocking(rt_);
    };
    for (size_t i = 1; i < nodes_.size(); ++i) {
        nodes_[i]->chord->join_blocking(rt_, nodes_[0]->host->address());
        stabilize_all();
        stabilize_all();
    }
    stabilize_all();
    stabilize_all();
    for (auto& n : nodes_)
        for (int f = 0; f < cfg_.ring_bits; ++f) n->chord->fix_finger_blocking(rt_, f);
    rt_.run_for(cfg_.heartbeat_interval_ms + 50);
}

void SimCluster::kill(size_t i) {
    auto& n = *nodes_[i];
    n.alive = false;
    rt_.remove_actor(n.host.get());
    rt_.remove_actor(n.worker.get());
    if (n.chord_tick) rt_.remove_actor(n.chord_tick.get());
    rt_.remove_actor(n.beat_tick.get());
    n.host->shutdown();
}

storage::StorageClient& SimCluster::make_client(const std::string& user,
                                                std::vector<net::Address> entry) {
    net::Address addr{"client" + std::to_string(clients_.size()), 7900};
    auto c = std::make_unique<Client>();
    c->host = std::make_unique<transport::TransportHost>(net_, addr);
    rt_.add_actor(c->host.get());
    apply_default_links(addr);

    storage::ClientConfig ccfg;
    ccfg.servers = entry.empty() ? node_addresses() : std::move(entry);
    ccfg.coordinator = nodes_[0]->host->address();
    ccfg.user = user;
    ccfg.chunk_size = cfg_.chunk_size;
    ccfg.target_replicas = cfg_.target_replicas;
    ccfg.ring_bits = cfg_.ring_bits;
    c->api = std::make_unique<storage::StorageClient>(rt_, *c->host, ccfg);
    clients_.push_back(std::move(c));
    return *clients_.back()->api;
}

sphere::JobRunner& SimCluster::make_runner(const std::string& user) {
    net::Address addr{"client" + std::to_string(clients_.size()), 7900};
    auto c = std::make_unique<Client>();
    c->host = std::make_unique<transport::TransportHost>(net_, addr);
    rt_.add_actor(c->host.get());
    apply_default_links(addr);

    storage::ClientConfig ccfg;
    ccfg.servers = node_addresses();
    ccfg.coordinator = nodes_[0]->host->address();
    ccfg.user = user;
    ccfg.chunk_size = cfg_.chunk_size;
    ccfg.target_replicas = cfg_.target_replicas;
    ccfg.ring_bits = cfg_.ring_bits;
    c->api = std::make_unique<storage::StorageClient>(rt_, *c->host, ccfg);

    c->disp = std::make_unique<rpc::Dispatcher>();
    sphere::RunnerConfig rcfg;
    rcfg.coordinator = nodes_[0]->host->address();
    c->runner = std::make_unique<sphere::JobRunner>(rt_, *c->host, *c->disp, *c->api,
                                                    udfs_, rcfg);
    c->disp->attach(*c->host);
    clients_.push_back(std::move(c));
    return *clients_.back()->runner;
}

}  // namespace ss::cluster
