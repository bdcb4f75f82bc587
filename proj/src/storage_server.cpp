#include "ss/storage/server.hpp"

#include <filesystem>
#include <fstream>

#include "ss/common/checksum.hpp"

namespace ss::storage {

namespace {

constexpr uint8_t kLogUpsert = 1;
constexpr uint8_t kLogDelete = 2;

}  // namespace

StorageService::StorageService(transport::TransportHost& host, rpc::Dispatcher& disp,
                               StorageConfig cfg)
    : host_(host),
      cfg_(std::move(cfg)),
      store_(cfg_.data_dir.empty() ? ChunkStore()
                                   : ChunkStore(std::filesystem::path(cfg_.data_dir) /
                                                "chunks")) {
    if (cfg_.chunk_size == 0) throw Error(Err::BadConfig, "chunk_size must be positive");
    log_replay();

    auto bind = [&](uint8_t type, Bytes (StorageService::*fn)(ByteReader&)) {
        disp.on(type, [this, fn](const net::Address&, ByteReader& r) { return (this->*fn)(r); });
    };
    bind(kRpcUploadInit, &StorageService::on_upload_init);
    bind(kRpcUploadCommit, &StorageService::on_upload_commit);
    bind(kRpcChunkPut, &StorageService::on_chunk_put);
    bind(kRpcReplicaPut, &StorageService::on_chunk_put);
    bind(kRpcChunkGet, &StorageService::on_chunk_get);
    bind(kRpcLocate, &StorageService::on_locate);
    bind(kRpcList, &StorageService::on_list);
    bind(kRpcDelete, &StorageService::on_delete);
    bind(kRpcChunkDrop, &StorageService::on_chunk_drop);
    bind(kRpcMetaUpdate, &StorageService::on_meta_update);
    disp.on(kRpcChunkList,
            [this](const net::Address&, ByteReader&) { return on_chunk_list(); });
}

bool StorageService::tick(double now_ms) {
    if (now_ms < next_beat_ms_) return false;
    next_beat_ms_ = now_ms + cfg_.heartbeat_interval_ms;
    if (cfg_.coordinator.host.empty()) return true;
    if (cfg_.coordinator == host_.address()) {
        if (local_beat_) local_beat_(host_.address(), store_.size());
        return true;
    }
    try {
        ByteWriter w;
        w.u32(uint32_t(store_.size()));
        rpc::cast(*host_.connect(cfg_.coordinator), kRpcHeartbeat, w.data());
    } catch (const Error&) {
        // unreachable coordinator; the next beat retries
    }
    return true;
}

Bytes StorageService::on_upload_init(ByteReader& r) {
    std::string name = r.str();
    std::string user = r.str();
    uint64_t size = r.u64();
    uint64_t chunk_size = r.u64();
    uint32_t expected_version = r.u32();
    std::optional<AccessControlList> provided;
    if (r.u8()) provided = read_acl(r);
    uint32_t chunks = r.u32();
    std::vector<std::vector<net::Address>> placement;
    placement.reserve(chunks);
    for (uint32_t i = 0; i < chunks; ++i) {
        uint8_t n = r.u8();
        std::vector<net::Address> addrs;
        for (uint8_t j = 0; j < n; ++j) addrs.push_back(read_address(r));
        placement.push_back(std::move(addrs));
    }

    if (chunk_size == 0) throw Error(Err::InvalidInput, "chunk_size must be positive");
    if (chunks != chunk_count_for(size, chunk_size))
        throw Error(Err::InvalidInput, "placement does not cover the file");
    for (const auto& addrs : placement) {
        if (addrs.empty()) throw Error(Err::NotEnoughNodes, "chunk with no replica target");
        auto sorted = addrs;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            throw Error(Err::InvalidInput, "duplicate replica target");
    }

    auto existing = shard_.find(name);
    if (existing != shard_.end() &&
        !check_access(existing->second.acl, user, AccessOp::Write))
        throw Error(Err::AccessDenied, user + " cannot write " + name);

    uint32_t committed = existing == shard_.end() ? 0 : existing->second.meta.version;
    uint32_t version = std::max(next_version_[name], committed) + 1;
    if (expected_version != 0 && expected_version != version)
        throw Error(Err::NameConflict,
                    name + " is already at version " + std::to_string(version - 1));
    next_version_[name] = version;

    Pending p;
    p.meta.name = name;
    p.meta.size_bytes = size;
    p.meta.chunk_size = chunk_size;
    p.meta.version = version;
    p.meta.owner = existing == shard_.end() ? user : existing->second.meta.owner;
    p.meta.chunk_crcs.assign(chunks, 0);
    p.meta.replicas = std::move(placement);
    if (provided) {
        p.acl = std::move(*provided);
    } else if (existing != shard_.end()) {
        p.acl = existing->second.acl;
    }
    p.acl.writers.insert(p.meta.owner);
    pending_[{name, version}] = std::move(p);

    ByteWriter w;
    w.u32(version);
    return w.take();
}

Bytes StorageService::on_upload_commit(ByteReader& r) {
    std::string name = r.str();
    uint32_t version = r.u32();
    uint32_t n = r.u32();
    std::vector<uint32_t> crcs;
    crcs.reserve(n);
    for (uint32_t i = 0; i < n; ++i) crcs.push_back(r.u32());

    auto it = pending_.find({name, version});
    if (it == pending_.end())
        throw Error(Err::NotFound, "no pending upload for " + name + " v" +
                                       std::to_string(version));
    if (n != it->second.meta.chunk_count())
        throw Error(Err::InvalidInput, "checksum count does not match chunk count");

    auto existing = shard_.find(name);
    if (existing != shard_.end() && version <= existing->second.meta.version) {
        pending_.erase(it);
        throw Error(Err::NameConflict, "version " + std::to_string(version) +
                                           " was overtaken by a later commit");
    }

    FileRecord rec{std::move(it->second.meta), std::move(it->second.acl)};
    rec.meta.chunk_crcs = std::move(crcs);
    pending_.erase(it);

    ByteWriter logw;
    write_metadata(logw, rec.meta);
    write_acl(logw, rec.acl);
    log_append(kLogUpsert, logw.data());

    ByteWriter w;
    write_metadata(w, rec.meta);
    shard_[name] = std::move(rec);
    return w.take();
}

Bytes StorageService::on_chunk_put(ByteReader& r) {
    ChunkKey key = read_chunk_key(r);
    uint64_t total = r.u64();
    uint32_t crc = r.u32();
    uint64_t offset = r.u64();
    Bytes piece = r.bytes();

    if (offset == 0) {
        assembling_[key] = Assembly{Bytes(total), 0, crc};
    }
    auto it = assembling_.find(key);
    if (it == assembling_.end())
        throw Error(Err::Decode, "piece for a transfer that never started");
    Assembly& a = it->second;
    if (a.buf.size() != total || a.crc != crc || offset != a.have ||
        offset + piece.size() > total) {
        assembling_.erase(it);
        throw Error(Err::Decode, "piece does not continue the transfer");
    }
    std::copy(piece.begin(), piece.end(), a.buf.begin() + std::ptrdiff_t(offset));
    a.have += piece.size();

    if (a.have == total) {
        Bytes block = std::move(a.buf);
        assembling_.erase(it);
        if (crc32(block) != crc)
            throw Error(Err::ChunkCorrupt, "checksum mismatch storing " + key.name);
        store_.put(key, std::move(block), crc);
    }
    return {};
}

Bytes StorageService::on_chunk_get(ByteReader& r) {
    ChunkKey key = read_chunk_key(r);
    uint64_t offset = r.u64();
    uint32_t max_len = r.u32();

    const auto* block = store_.find(key);
    if (!block)
        throw Error(Err::ChunkUnavailable,
                    key.name + "#" + std::to_string(key.chunk_index) + " not held here");
    if (offset > block->data.size())
        throw Error(Err::InvalidInput, "offset past end of chunk");

    size_t n = std::min<uint64_t>(max_len, block->data.size() - offset);
    ByteWriter w;
    w.u64(block->data.size());
    w.u32(block->crc);
    w.bytes(std::span(block->data).subspan(offset, n));
    return w.take();
}

Bytes StorageService::on_locate(ByteReader& r) {
    std::string name = r.str();
    std::string user = r.str();
    auto it = shard_.find(name);
    if (it == shard_.end()) throw Error(Err::NotFound, name);
    if (!check_access(it->second.acl, user, AccessOp::Read))
        throw Error(Err::AccessDenied, "read of " + name + " is restricted");
    ByteWriter w;
    write_metadata(w, it->second.meta);
    return w.take();
}

Bytes StorageService::on_list(ByteReader& r) {
    std::string prefix = r.str();
    ByteWriter w;
    uint32_t n = 0;
    for (const auto& [name, rec] : shard_)
        if (name.starts_with(prefix)) ++n;
    w.u32(n);
    for (const auto& [name, rec] : shard_)
        if (name.starts_with(prefix)) write_metadata(w, rec.meta);
    return w.take();
}

Bytes StorageService::on_delete(ByteReader& r) {
    std::string name = r.str();
    std::string user = r.str();
    auto it = shard_.find(name);
    if (it == shard_.end()) throw Error(Err::NotFound, name);
    if (!check_access(it->second.acl, user, AccessOp::Write))
        throw Error(Err::AccessDenied, user + " cannot delete " + name);

    ByteWriter w;
    write_metadata(w, it->second.meta);
    shard_.erase(it);
    next_version_.erase(name);  // a re-upload starts over at version 1
    std::erase_if(pending_, [&](const auto& kv) { return kv.first.first == name; });

    ByteWriter logw;
    logw.str(name);
    log_append(kLogDelete, logw.data());
    return w.take();
}

Bytes StorageService::on_chunk_drop(ByteReader& r) {
    ChunkKey key = read_chunk_key(r);
    store_.erase(key);  // idempotent
    return {};
}

Bytes StorageService::on_chunk_list() {
    auto keys = store_.keys();
    ByteWriter w;
    w.u32(uint32_t(keys.size()));
    for (const auto& k : keys) write_chunk_key(w, k);
    return w.take();
}

Bytes StorageService::on_meta_update(ByteReader& r) {
    std::string name = r.str();
    uint32_t version = r.u32();
    uint32_t chunk = r.u32();
    uint8_t op = r.u8();
    net::Address addr = read_address(r);

    auto it = shard_.find(name);
    if (it == shard_.end() || it->second.meta.version != version ||
        chunk >= it->second.meta.chunk_count())
        return {};  // stale update from an earlier audit; nothing to change

    auto& reps = it->second.meta.replicas[chunk];
    auto pos = std::find(reps.begin(), reps.end(), addr);
    if (op == 0 && pos == reps.end()) {
        reps.push_back(addr);
    } else if (op == 1 && pos != reps.end()) {
        reps.erase(pos);
    } else {
        return {};
    }

    ByteWriter logw;
    write_metadata(logw, it->second.meta);
    write_acl(logw, it->second.acl);
    log_append(kLogUpsert, logw.data());
    return {};
}

void StorageService::log_append(uint8_t kind, const Bytes& payload) {
    if (cfg_.data_dir.empty()) return;
    std::filesystem::create_directories(cfg_.data_dir);
    auto path = std::filesystem::path(cfg_.data_dir) / "meta.log";
    std::ofstream f(path, std::ios::binary | std::ios::app);
    if (!f) throw Error(Err::Io, "cannot append to " + path.string());
    ByteWriter w;
    w.u32(uint32_t(payload.size()) + 1);
    w.u8(kind);
    w.raw(payload);
    f.write(reinterpret_cast<const char*>(w.data().data()), std::streamsize(w.size()));
    if (!f) throw Error(Err::Io, "short write to " + path.string());
}

void StorageService::log_replay() {
    if (cfg_.data_dir.empty()) return;
    auto path = std::filesystem::path(cfg_.data_dir) / "meta.log";
    std::ifstream f(path, std::ios::binary);
    if (!f) return;
    Bytes raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    ByteReader records(raw);
    while (!records.done()) {
        uint32_t len = records.u32();
        auto body = records.raw(len);
        ByteReader rec(body);
        uint8_t kind = rec.u8();
        if (kind == kLogUpsert) {
            FileRecord r;
            r.meta = read_metadata(rec);
            r.acl = read_acl(rec);
            next_version_[r.meta.name] =
                std::max(next_version_[r.meta.name], r.meta.version);
            shard_[r.meta.name] = std::move(r);
        } else if (kind == kLogDelete) {
            std::string name = rec.str();
            shard_.erase(name);
            next_version_.erase(name);
        }
    }
}

}  // namespace ss::storage
