#include "ss/storage/chunk_store.hpp"

#include <fstream>

#include "ss/common/checksum.hpp"
#include "ss/common/error.hpp"

namespace ss::storage {

namespace {

constexpr char kMagic[4] = {'S', 'C', 'H', 'K'};
constexpr uint8_t kLayoutVersion = 1;
constexpr size_t kHeaderLen = 20;  // magic, version, padding, crc32, length

std::string hex_encode(std::string_view s) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(s.size() * 2);
    for (unsigned char c : s) {
        out.push_back(digits[c >> 4]);
        out.push_back(digits[c & 0xf]);
    }
    return out;
}

std::optional<std::string> hex_decode(std::string_view s) {
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        return -1;
    };
    if (s.size() % 2) return std::nullopt;
    std::string out;
    out.reserve(s.size() / 2);
    for (size_t i = 0; i < s.size(); i += 2) {
        int hi = nibble(s[i]), lo = nibble(s[i + 1]);
        if (hi < 0 || lo < 0) return std::nullopt;
        out.push_back(char(hi << 4 | lo));
    }
    return out;
}

}  // namespace

ChunkStore::ChunkStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
    load_dir();
}

std::filesystem::path ChunkStore::file_for(const ChunkKey& key) const {
    return dir_ / (hex_encode(key.name) + "_" + std::to_string(key.chunk_index) + "_" +
                   std::to_string(key.version) + ".schk");
}

void ChunkStore::put(const ChunkKey& key, Bytes data, uint32_t crc) {
    if (!dir_.empty()) {
        ByteWriter w;
        w.raw(std::span(reinterpret_cast<const uint8_t*>(kMagic), 4));
        w.u8(kLayoutVersion);
        w.u8(0);
        w.u8(0);
        w.u8(0);
        w.u32(crc);
        w.u64(data.size());
        std::ofstream f(file_for(key), std::ios::binary | std::ios::trunc);
        if (!f) throw Error(Err::Io, "cannot write " + file_for(key).string());
        f.write(reinterpret_cast<const char*>(w.data().data()),
                std::streamsize(w.size()));
        f.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size()));
        if (!f) throw Error(Err::Io, "short write to " + file_for(key).string());
    }
    blocks_[key] = Block{std::move(data), crc};
}

const ChunkStore::Block* ChunkStore::find(const ChunkKey& key) const {
    auto it = blocks_.find(key);
    return it == blocks_.end() ? nullptr : &it->second;
}

ChunkStore::Block* ChunkStore::find(const ChunkKey& key) {
    auto it = blocks_.find(key);
    return it == blocks_.end() ? nullptr : &it->second;
}

bool ChunkStore::erase(const ChunkKey& key) {
    if (!blocks_.erase(key)) return false;
    if (!dir_.empty()) {
        std::error_code ec;
        std::filesystem::remove(file_for(key), ec);
    }
    return true;
}

std::vector<ChunkKey> ChunkStore::keys() const {
    std::vector<ChunkKey> out;
    out.reserve(blocks_.size());
    for (const auto& [k, v] : blocks_) out.push_back(k);
    return out;
}

void ChunkStore::load_dir() {
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".schk") continue;

        std::string stem = entry.path().stem().string();
        size_t v_sep = stem.rfind('_');
        if (v_sep == std::string::npos) continue;
        size_t c_sep = stem.rfind('_', v_sep - 1);
        if (c_sep == std::string::npos) continue;
        auto name = hex_decode(stem.substr(0, c_sep));
        if (!name) continue;
        ChunkKey key{*name, uint32_t(std::stoul(stem.substr(c_sep + 1, v_sep - c_sep - 1))),
                     uint32_t(std::stoul(stem.substr(v_sep + 1)))};

        std::ifstream f(entry.path(), std::ios::binary);
        Bytes header(kHeaderLen);
        f.read(reinterpret_cast<char*>(header.data()), kHeaderLen);
        if (f.gcount() != std::streamsize(kHeaderLen)) continue;
        ByteReader r(header);
        auto magic = r.raw(4);
        if (!std::equal(magic.begin(), magic.end(), kMagic)) continue;
        if (r.u8() != kLayoutVersion) continue;
        r.raw(3);
        uint32_t crc = r.u32();
        uint64_t len = r.u64();

        Bytes data(len);
        f.read(reinterpret_cast<char*>(data.data()), std::streamsize(len));
        if (f.gcount() != std::streamsize(len)) continue;  // truncated block
        blocks_[key] = Block{std::move(data), crc};
    }
}

}  // namespace ss::storage
