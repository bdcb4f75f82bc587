#pragma once

#include <filesystem>
#include <map>
#include <optional>

#include "ss/storage/types.hpp"

namespace ss::storage {

// Chunk blocks a node holds, keyed by (name, chunk index, version). With a
// directory configured every block also lands on disk and is recovered on
// restart; without one the store is memory only.
class ChunkStore {
public:
    ChunkStore() = default;
    explicit ChunkStore(std::filesystem::path dir);

    struct Block {
        Bytes data;
        uint32_t crc = 0;
    };

    void put(const ChunkKey& key, Bytes data, uint32_t crc);
    bool contains(const ChunkKey& key) const { return blocks_.count(key) > 0; }
    // nullptr when absent; the pointer stays valid until the next mutation
    const Block* find(const ChunkKey& key) const;
    Block* find(const ChunkKey& key);
    bool erase(const ChunkKey& key);

    size_t size() const { return blocks_.size(); }
    std::vector<ChunkKey> keys() const;

private:
    std::filesystem::path file_for(const ChunkKey& key) const;
    void load_dir();

    std::filesystem::path dir_;  // empty = no persistence
    std::map<ChunkKey, Block> blocks_;
};

}  // namespace ss::storage
