#include "ss/storage/types.hpp"

#include <algorithm>

#include "ss/common/error.hpp"

namespace ss::storage {

bool check_access(const AccessControlList& acl, const std::string& user, AccessOp op) {
    if (op == AccessOp::Read && acl.public_read) return true;
    return acl.writers.count(user) > 0;
}

uint32_t chunk_count_for(uint64_t size_bytes, uint64_t chunk_size) {
    if (chunk_size == 0) throw Error(Err::InvalidInput, "chunk_size must be positive");
    return uint32_t((size_bytes + chunk_size - 1) / chunk_size);
}

void write_address(ByteWriter& w, const net::Address& a) {
    w.str(a.host);
    w.u16(a.port);
}

net::Address read_address(ByteReader& r) {
    net::Address a;
    a.host = r.str();
    a.port = r.u16();
    return a;
}

void write_chunk_key(ByteWriter& w, const ChunkKey& k) {
    w.str(k.name);
    w.u32(k.chunk_index);
    w.u32(k.version);
}

ChunkKey read_chunk_key(ByteReader& r) {
    ChunkKey k;
    k.name = r.str();
    k.chunk_index = r.u32();
    k.version = r.u32();
    return k;
}

void write_metadata(ByteWriter& w, const FileMetadata& m) {
    w.str(m.name);
    w.u64(m.size_bytes);
    w.u64(m.chunk_size);
    w.u32(m.version);
    w.str(m.owner);
    w.u32(uint32_t(m.replicas.size()));
    for (size_t i = 0; i < m.replicas.size(); ++i) {
        w.u32(m.chunk_crcs[i]);
        w.u8(uint8_t(m.replicas[i].size()));
        for (const auto& a : m.replicas[i]) write_address(w, a);
    }
}

FileMetadata read_metadata(ByteReader& r) {
    FileMetadata m;
    m.name = r.str();
    m.size_bytes = r.u64();
    m.chunk_size = r.u64();
    m.version = r.u32();
    m.owner = r.str();
    uint32_t chunks = r.u32();
    m.chunk_crcs.reserve(chunks);
    m.replicas.reserve(chunks);
    for (uint32_t i = 0; i < chunks; ++i) {
        m.chunk_crcs.push_back(r.u32());
        uint8_t n = r.u8();
        std::vector<net::Address> addrs;
        addrs.reserve(n);
        for (uint8_t j = 0; j < n; ++j) addrs.push_back(read_address(r));
        m.replicas.push_back(std::move(addrs));
    }
    return m;
}

void write_acl(ByteWriter& w, const AccessControlList& acl) {
    w.u8(acl.public_read ? 1 : 0);
    w.u32(uint32_t(acl.writers.size()));
    for (const auto& u : acl.writers) w.str(u);
}

AccessControlList read_acl(ByteReader& r) {
    AccessControlList acl;
    acl.public_read = r.u8() != 0;
    uint32_t n = r.u32();
    for (uint32_t i = 0; i < n; ++i) acl.writers.insert(r.str());
    return acl;
}

AuditPlan replication_audit(const ClusterView& view) {
    AuditPlan plan;
    std::set<net::Address> live(view.live.begin(), view.live.end());
    std::map<net::Address, size_t> load = view.chunk_counts;
    for (const auto& a : view.live) load.emplace(a, 0);

    auto holds = [&](const net::Address& node, const ChunkKey& key) {
        auto it = view.inventory.find(node);
        return it != view.inventory.end() && it->second.count(key) > 0;
    };

    auto chunks = view.chunks;
    std::sort(chunks.begin(), chunks.end(),
              [](const auto& a, const auto& b) { return a.key < b.key; });

    std::map<ChunkKey, std::set<net::Address>> wanted_at;
    for (const auto& c : chunks) {
        auto& at = wanted_at[c.key];
        at.insert(c.replicas.begin(), c.replicas.end());
        std::vector<net::Address> holders;
        for (const auto& rep : c.replicas)
            if (live.count(rep) && holds(rep, c.key)) holders.push_back(rep);
        std::sort(holders.begin(), holders.end());
        holders.erase(std::unique(holders.begin(), holders.end()), holders.end());

        if (holders.empty()) {
            plan.unrecoverable.push_back(c.key);
            continue;
        }

        int deficit = view.target_replicas - int(holders.size());
        for (int d = 0; d < deficit; ++d) {
            // least-loaded live node that does not already hold the chunk
            const net::Address* pick = nullptr;
            for (const auto& cand : view.live) {
                if (std::find(holders.begin(), holders.end(), cand) != holders.end())
                    continue;
                if (!pick || load[cand] < load[*pick] ||
                    (load[cand] == load[*pick] && cand < *pick))
                    pick = &cand;
            }
            if (!pick) break;  // fewer live nodes than the target copy count
            plan.actions.push_back({ReplicationAction::Kind::CreateReplica, c.key, c.crc,
                                    holders.front(), *pick});
            ++load[*pick];
            holders.push_back(*pick);
            at.insert(*pick);
        }
        for (int d = 0; d < -deficit; ++d) {
            // shed from the most loaded holder; ties break toward the highest
            // address so repeated audits stay deterministic
            auto victim = std::max_element(
                holders.begin(), holders.end(), [&](const auto& a, const auto& b) {
                    return load[a] != load[b] ? load[a] < load[b] : a < b;
                });
            plan.actions.push_back(
                {ReplicationAction::Kind::DropReplica, c.key, c.crc, {}, *victim});
            if (load[*victim] > 0) --load[*victim];
            holders.erase(victim);
        }
    }

    // blocks the metadata no longer places on their node (stale versions,
    // deleted files, or copies left behind by an earlier membership change)
    for (const auto& [addr, keys] : view.inventory) {
        if (!live.count(addr)) continue;
        for (const auto& k : keys) {
            auto w = wanted_at.find(k);
            if (w == wanted_at.end() || !w->second.count(addr))
                plan.actions.push_back({ReplicationAction::Kind::DropReplica, k, 0, {}, addr});
        }
    }
    return plan;
}

}  // namespace ss::storage
