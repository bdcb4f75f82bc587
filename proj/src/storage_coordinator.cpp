#include "ss/storage/coordinator.hpp"

#include <set>

#include "ss/common/checksum.hpp"
#include "ss/storage/transfer.hpp"

namespace ss::storage {

CoordinatorService::CoordinatorService(transport::TransportHost& host,
                                       rpc::Dispatcher& disp, CoordinatorConfig cfg)
    : host_(host), cfg_(cfg) {
    disp.on(kRpcHeartbeat, [this](const net::Address& peer, ByteReader& r) -> Bytes {
        note_heartbeat(peer, r.u32(), host_.network().now_ms());
        return {};
    });
    disp.on(kRpcGetNodes, [this](const net::Address&, ByteReader&) {
        double now = host_.network().now_ms();
        ByteWriter w;
        auto live = live_nodes(now);
        w.u32(uint32_t(live.size()));
        for (const auto& node : live) {
            write_address(w, node);
            w.u32(uint32_t(beats_.at(node).chunks));
        }
        return w.take();
    });
}

void CoordinatorService::note_heartbeat(const net::Address& node, size_t chunk_count,
                                        double now_ms) {
    beats_[node] = Beat{now_ms, chunk_count};
}

std::vector<net::Address> CoordinatorService::live_nodes(double now_ms) const {
    std::vector<net::Address> out;
    for (const auto& [node, beat] : beats_)
        if (now_ms - beat.last_ms < cfg_.dead_after_ms) out.push_back(node);
    return out;
}

AuditResult CoordinatorService::audit_round_blocking(sim::Runtime& rt) {
    double now = host_.network().now_ms();
    ClusterView view;
    view.target_replicas = cfg_.target_replicas;

    for (const auto& node : live_nodes(now)) {
        try {
            auto& conn = transport::connect_blocking(rt, host_, node, cfg_.rpc_timeout_ms);
            Bytes inv = rpc::call(rt, conn, kRpcChunkList, {}, cfg_.rpc_timeout_ms);
            ByteReader ir(inv);
            std::set<ChunkKey> held;
            for (uint32_t i = ir.u32(); i > 0; --i) held.insert(read_chunk_key(ir));
            view.chunk_counts[node] = held.size();
            view.inventory[node] = std::move(held);

            ByteWriter lw;
            lw.str("");
            Bytes listing = rpc::call(rt, conn, kRpcList, lw.data(), cfg_.rpc_timeout_ms);
            ByteReader lr(listing);
            for (uint32_t i = lr.u32(); i > 0; --i) {
                FileMetadata meta = read_metadata(lr);
                for (uint32_t c = 0; c < meta.chunk_count(); ++c)
                    view.chunks.push_back({ChunkKey{meta.name, c, meta.version},
                                           meta.chunk_crcs[c], node, meta.replicas[c]});
            }
            view.live.push_back(node);
        } catch (const Error&) {
            // unreachable this round; skipping it keeps the plan honest, and
            // a true death ages out of the heartbeat window on its own
            view.chunk_counts.erase(node);
            view.inventory.erase(node);
        }
    }

    AuditResult result;
    result.plan = replication_audit(view);

    std::map<ChunkKey, net::Address> owner_of;
    for (const auto& c : view.chunks) owner_of[c.key] = c.meta_owner;

    // Strike placements that point at dead nodes, or at live nodes whose
    // inventory no longer has the block, so metadata converges to the truth.
    // Runs before the create/drop actions: those re-add what they place.
    // Chunks with no live copy keep their placements: they record where the
    // data was, which is the only recovery path if that node comes back.
    std::set<ChunkKey> unrec(result.plan.unrecoverable.begin(),
                             result.plan.unrecoverable.end());
    std::set<net::Address> hb;
    for (const auto& a : live_nodes(host_.network().now_ms())) hb.insert(a);
    for (const auto& c : view.chunks) {
        if (unrec.count(c.key)) continue;
        for (const auto& rep : c.replicas) {
            bool dead = !hb.count(rep);
            auto inv = view.inventory.find(rep);
            bool vanished = inv != view.inventory.end() && !inv->second.count(c.key);
            if (!dead && !vanished) continue;
            try {
                ByteWriter w;
                w.str(c.key.name);
                w.u32(c.key.version);
                w.u32(c.key.chunk_index);
                w.u8(1);
                write_address(w, rep);
                auto& conn =
                    transport::connect_blocking(rt, host_, c.meta_owner, cfg_.rpc_timeout_ms);
                rpc::call(rt, conn, kRpcMetaUpdate, w.data(), cfg_.rpc_timeout_ms);
                ++result.pruned;
            } catch (const Error&) {
                ++result.requeued;
            }
        }
    }

    for (const auto& act : result.plan.actions) {
        auto owner = owner_of.find(act.key);
        try {
            if (act.kind == ReplicationAction::Kind::CreateReplica) {
                if (owner == owner_of.end())
                    throw Error(Err::Internal, "create planned for an uncataloged chunk");
                apply_create(rt, view, owner->second, act);
            } else {
                apply_drop(rt, owner == owner_of.end() ? nullptr : &owner->second, act);
            }
            ++result.applied;
        } catch (const Error&) {
            ++result.requeued;
        }
    }
    return result;
}

void CoordinatorService::apply_create(sim::Runtime& rt, const ClusterView& view,
                                      const net::Address& meta_owner,
                                      const ReplicationAction& act) {
    // The planned source first, then any other live holder if it fails or
    // hands back a block that no longer matches its recorded checksum.
    std::vector<net::Address> sources{act.source};
    for (const auto& [node, held] : view.inventory)
        if (node != act.source && held.count(act.key)) sources.push_back(node);

    Bytes block;
    bool have = false;
    for (const auto& src : sources) {
        try {
            auto& conn = transport::connect_blocking(rt, host_, src, cfg_.rpc_timeout_ms);
            uint32_t crc = 0;
            Bytes data = fetch_chunk(rt, conn, act.key, crc, cfg_.piece_bytes,
                                     cfg_.rpc_timeout_ms);
            if (crc != act.expected_crc || crc32(data) != act.expected_crc) continue;
            block = std::move(data);
            have = true;
            break;
        } catch (const Error&) {
            continue;
        }
    }
    if (!have)
        throw Error(Err::SourceUnreachable, "no clean copy of " + act.key.name + "#" +
                                                std::to_string(act.key.chunk_index));

    auto& tconn = transport::connect_blocking(rt, host_, act.target, cfg_.rpc_timeout_ms);
    push_chunk(rt, tconn, kRpcReplicaPut, act.key, block, act.expected_crc,
               cfg_.piece_bytes, cfg_.rpc_timeout_ms);

    ByteWriter w;
    w.str(act.key.name);
    w.u32(act.key.version);
    w.u32(act.key.chunk_index);
    w.u8(0);
    write_address(w, act.target);
    auto& oconn = transport::connect_blocking(rt, host_, meta_owner, cfg_.rpc_timeout_ms);
    rpc::call(rt, oconn, kRpcMetaUpdate, w.data(), cfg_.rpc_timeout_ms);
}

void CoordinatorService::apply_drop(sim::Runtime& rt, const net::Address* meta_owner,
                                    const ReplicationAction& act) {
    auto& conn = transport::connect_blocking(rt, host_, act.target, cfg_.rpc_timeout_ms);
    ByteWriter w;
    write_chunk_key(w, act.key);
    rpc::call(rt, conn, kRpcChunkDrop, w.data(), cfg_.rpc_timeout_ms);

    // Orphaned blocks have no catalog entry left to fix up.
    if (!meta_owner) return;
    ByteWriter mw;
    mw.str(act.key.name);
    mw.u32(act.key.version);
    mw.u32(act.key.chunk_index);
    mw.u8(1);
    write_address(mw, act.target);
    auto& oconn = transport::connect_blocking(rt, host_, *meta_owner, cfg_.rpc_timeout_ms);
    rpc::call(rt, oconn, kRpcMetaUpdate, mw.data(), cfg_.rpc_timeout_ms);
}

}  // namespace ss::storage
