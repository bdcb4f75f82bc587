#include "ss/storage/client.hpp"

#include <algorithm>
#include <limits>
#include <set>

#include "ss/common/checksum.hpp"
#include "ss/storage/transfer.hpp"

namespace ss::storage {

StorageClient::StorageClient(sim::Runtime& rt, transport::TransportHost& host,
                             ClientConfig cfg)
    : rt_(rt), host_(host), cfg_(std::move(cfg)) {
    if (cfg_.servers.empty()) throw Error(Err::BadConfig, "no entry servers configured");
    if (cfg_.chunk_size == 0) throw Error(Err::BadConfig, "chunk_size must be positive");
}

transport::Connection& StorageClient::dial(const net::Address& at, double timeout_ms) {
    return transport::connect_blocking(rt_, host_, at,
                                       timeout_ms > 0 ? timeout_ms : cfg_.rpc_timeout_ms);
}

// A ring absorbing a death hands out stale ownership claims while the dead
// node's predecessor walks its successor pointer in. Before trusting a
// claim, make the named node vouch for itself: its predecessor and its own
// id must bracket the key.
bool StorageClient::owner_vouches(const routing::NodeId& key, const routing::NodeRef& who) {
    Bytes resp =
        rpc::call(rt_, dial(who.addr), routing::kRpcGetPredecessor, {}, cfg_.rpc_timeout_ms);
    ByteReader r(resp);
    if (r.u8() == 0) return false;  // no predecessor yet: still sorting itself out
    routing::NodeRef pred = routing::read_node_ref(r);
    return routing::in_ring_interval(key, pred.id, who.id, true);
}

net::Address StorageClient::resolve_owner(const std::string& name) {
    const routing::NodeId key = routing::hash_id(name, cfg_.ring_bits);
    const int hop_cap = 2 * cfg_.ring_bits + 8;
    const int restart_cap = int(cfg_.servers.size()) * 2 + 4;
    std::set<net::Address> dead;

    for (int attempt = 0; attempt < restart_cap; ++attempt) {
        net::Address cur = cfg_.servers[entry_rr_ % cfg_.servers.size()];
        std::optional<routing::NodeId> cur_id;  // unknown until the first reply
        if (dead.count(cur)) {
            ++entry_rr_;
            continue;
        }
        try {
            for (int hop = 0; hop < hop_cap; ++hop) {
                ByteWriter w;
                w.raw(key.b);
                Bytes resp = rpc::call(rt_, dial(cur), routing::kRpcFindSuccessor,
                                       w.data(), cfg_.rpc_timeout_ms);
                ByteReader r(resp);
                bool done = r.u8() != 0;
                routing::NodeRef nxt = routing::read_node_ref(r);
                if (done) {
                    if (dead.count(nxt.addr)) break;  // stale claim; try elsewhere
                    bool vouched;
                    try {
                        vouched = owner_vouches(key, nxt);
                    } catch (const Error&) {
                        dead.insert(nxt.addr);
                        break;
                    }
                    if (vouched) return nxt.addr;
                    rt_.run_for(250.0);  // give stabilization a beat, then rewalk
                    break;
                }
                if (dead.count(nxt.addr)) {
                    // The route points at a node we know is gone. Its
                    // predecessor's successor covers the gap once the ring
                    // notices; ask for it directly instead of hopping there.
                    Bytes sresp = rpc::call(rt_, dial(cur), routing::kRpcGetSuccessor,
                                            {}, cfg_.rpc_timeout_ms);
                    ByteReader sr(sresp);
                    routing::NodeRef side = routing::read_node_ref(sr);
                    if (side.addr == nxt.addr || dead.count(side.addr)) break;
                    if (cur_id &&
                        routing::in_ring_interval(key, *cur_id, side.id, true)) {
                        bool vouched;
                        try {
                            vouched = owner_vouches(key, side);
                        } catch (const Error&) {
                            dead.insert(side.addr);
                            break;
                        }
                        if (vouched) return side.addr;
                        rt_.run_for(250.0);
                        break;
                    }
                    cur = side.addr;
                    cur_id = side.id;
                    continue;
                }
                cur = nxt.addr;
                cur_id = nxt.id;
            }
        } catch (const Error&) {
            dead.insert(cur);
        }
        ++entry_rr_;
    }
    throw Error(Err::LookupTimeout, "cannot resolve the owner of " + name);
}

std::vector<std::pair<net::Address, size_t>> StorageClient::fetch_nodes() {
    Bytes resp = rpc::call(rt_, dial(cfg_.coordinator), kRpcGetNodes, {},
                           cfg_.rpc_timeout_ms);
    ByteReader r(resp);
    std::vector<std::pair<net::Address, size_t>> nodes;
    for (uint32_t i = r.u32(); i > 0; --i) {
        net::Address a = read_address(r);
        nodes.emplace_back(a, r.u32());
    }
    if (nodes.empty()) throw Error(Err::NotEnoughNodes, "no live storage nodes");
    return nodes;
}

double StorageClient::rtt_to(const net::Address& at) {
    auto it = rtt_cache_.find(at);
    if (it != rtt_cache_.end()) return it->second;
    double rtt = std::numeric_limits<double>::infinity();
    try {
        auto& conn = dial(at, std::min(cfg_.rpc_timeout_ms, 1500.0));
        rtt = conn.stats().rtt_est_ms;
    } catch (const Error&) {
        // unreachable: sort it last, the transfer loop may still try it
    }
    rtt_cache_[at] = rtt;
    return rtt;
}

FileMetadata StorageClient::upload(const std::string& name, std::span<const uint8_t> data,
                                   const std::optional<AccessControlList>& acl,
                                   uint32_t expected_version) {
    const uint32_t chunks = chunk_count_for(data.size(), cfg_.chunk_size);

    auto nodes = fetch_nodes();
    std::map<net::Address, size_t> load(nodes.begin(), nodes.end());
    const size_t fanout = std::min<size_t>(size_t(cfg_.target_replicas), load.size());

    std::vector<std::vector<net::Address>> placement(chunks);
    for (auto& slots : placement) {
        std::set<net::Address> chosen;
        while (chosen.size() < fanout) {
            const net::Address* best = nullptr;
            for (const auto& [addr, n] : load) {
                if (chosen.count(addr)) continue;
                if (!best || n < load[*best]) best = &addr;
            }
            chosen.insert(*best);
            slots.push_back(*best);
            ++load[*best];
        }
    }

    net::Address owner = resolve_owner(name);

    ByteWriter init;
    init.str(name);
    init.str(cfg_.user);
    init.u64(data.size());
    init.u64(cfg_.chunk_size);
    init.u32(expected_version);
    init.u8(acl ? 1 : 0);
    if (acl) write_acl(init, *acl);
    init.u32(chunks);
    for (const auto& slots : placement) {
        init.u8(uint8_t(slots.size()));
        for (const auto& a : slots) write_address(init, a);
    }
    Bytes vresp = rpc::call(rt_, dial(owner), kRpcUploadInit, init.data(),
                            cfg_.rpc_timeout_ms);
    ByteReader vr(vresp);
    const uint32_t version = vr.u32();

    std::vector<uint32_t> crcs(chunks);
    for (uint32_t i = 0; i < chunks; ++i) {
        const uint64_t begin = uint64_t(i) * cfg_.chunk_size;
        const uint64_t end = std::min<uint64_t>(begin + cfg_.chunk_size, data.size());
        auto slice = data.subspan(begin, end - begin);
        crcs[i] = crc32(slice);
        ChunkKey key{name, i, version};
        for (const auto& target : placement[i])
            push_chunk(rt_, dial(target), kRpcChunkPut, key, slice, crcs[i],
                       cfg_.piece_bytes, cfg_.rpc_timeout_ms);
    }

    ByteWriter commit;
    commit.str(name);
    commit.u32(version);
    commit.u32(chunks);
    for (uint32_t c : crcs) commit.u32(c);
    Bytes mresp = rpc::call(rt_, dial(owner), kRpcUploadCommit, commit.data(),
                            cfg_.rpc_timeout_ms);
    ByteReader mr(mresp);
    return read_metadata(mr);
}

FileMetadata StorageClient::locate(const std::string& name) {
    ByteWriter w;
    w.str(name);
    w.str(cfg_.user);
    Bytes resp = rpc::call(rt_, dial(resolve_owner(name)), kRpcLocate, w.data(),
                           cfg_.rpc_timeout_ms);
    ByteReader r(resp);
    return read_metadata(r);
}

Bytes StorageClient::download(const std::string& name) {
    FileMetadata meta = locate(name);
    const uint32_t n = meta.chunk_count();

    Bytes out;
    out.reserve(meta.size_bytes);
    for (uint32_t i = 0; i < n; ++i) {
        const uint64_t expect_len =
            (i + 1 < n) ? meta.chunk_size
                        : meta.size_bytes - meta.chunk_size * uint64_t(n - 1);

        auto order = meta.replicas[i];
        for (const auto& a : order) rtt_to(a);  // warm the cache before sorting
        std::stable_sort(order.begin(), order.end(),
                         [&](const net::Address& a, const net::Address& b) {
                             return rtt_to(a) < rtt_to(b);
                         });

        bool got = false;
        bool corrupt_seen = false;
        for (const auto& replica : order) {
            try {
                uint32_t held_crc = 0;
                Bytes block = fetch_chunk(rt_, dial(replica), ChunkKey{name, i, meta.version},
                                          held_crc, cfg_.piece_bytes, cfg_.rpc_timeout_ms);
                if (block.size() != expect_len || crc32(block) != meta.chunk_crcs[i]) {
                    corrupt_seen = true;
                    continue;
                }
                out.insert(out.end(), block.begin(), block.end());
                got = true;
                break;
            } catch (const Error& e) {
                if (e.code() == Err::ChunkCorrupt) corrupt_seen = true;
            }
        }
        if (!got) {
            if (corrupt_seen)
                throw Error(Err::ChunkCorrupt, name + "#" + std::to_string(i) +
                                                   " has no intact replica");
            throw Error(Err::AllReplicasDown,
                        name + "#" + std::to_string(i) + " has no reachable replica");
        }
    }
    if (out.size() != meta.size_bytes)
        throw Error(Err::Internal, "reassembled size does not match metadata");
    return out;
}

std::vector<FileMetadata> StorageClient::list_files(const std::string& prefix) {
    // Metadata shards over all live nodes; ask each for its slice. Fall back
    // to the configured entry servers when the coordinator is unreachable.
    std::vector<net::Address> targets;
    try {
        for (auto& [addr, count] : fetch_nodes()) targets.push_back(addr);
    } catch (const Error&) {
        targets = cfg_.servers;
    }

    std::map<std::string, FileMetadata> merged;
    for (const auto& node : targets) {
        try {
            ByteWriter w;
            w.str(prefix);
            Bytes resp = rpc::call(rt_, dial(node), kRpcList, w.data(), cfg_.rpc_timeout_ms);
            ByteReader r(resp);
            for (uint32_t i = r.u32(); i > 0; --i) {
                FileMetadata m = read_metadata(r);
                auto it = merged.find(m.name);
                if (it == merged.end() || it->second.version < m.version)
                    merged[m.name] = std::move(m);
            }
        } catch (const Error&) {
            // a node that cannot answer contributes nothing to the listing
        }
    }

    std::vector<FileMetadata> out;
    out.reserve(merged.size());
    for (auto& [_, m] : merged) out.push_back(std::move(m));
    return out;
}

FileMetadata StorageClient::remove(const std::string& name) {
    ByteWriter w;
    w.str(name);
    w.str(cfg_.user);
    Bytes resp = rpc::call(rt_, dial(resolve_owner(name)), kRpcDelete, w.data(),
                           cfg_.rpc_timeout_ms);
    ByteReader r(resp);
    FileMetadata meta = read_metadata(r);

    for (uint32_t i = 0; i < meta.chunk_count(); ++i) {
        ByteWriter dw;
        write_chunk_key(dw, ChunkKey{name, i, meta.version});
        for (const auto& replica : meta.replicas[i]) {
            try {
                rpc::call(rt_, dial(replica), kRpcChunkDrop, dw.data(), cfg_.rpc_timeout_ms);
            } catch (const Error&) {
                // a holder we cannot reach now will be swept as an orphan
            }
        }
    }
    return meta;
}

}  // namespace ss::storage
