#include "seqpan/serialize.hpp"

#include <cstring>
#include <fstream>

namespace seqpan {

namespace {

constexpr char kMagic[4] = {'S', 'Q', 'P', 'N'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f32(std::ostream& os, float f) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(os, bits);
}

std::uint32_t get_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw DataError("checkpoint '" + path + "' is truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& is, const std::string& path) {
    std::uint64_t v = 0;
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
        throw DataError("checkpoint '" + path + "' is truncated");
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

float get_f32(std::istream& is, const std::string& path) {
    std::uint32_t bits = get_u32(is, path);
    float f;
    std::memcpy(&f, &bits, 4);
    return f;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u64(os, entries.size());
    for (const auto& e : entries) {
        put_u32(os, static_cast<std::uint32_t>(e.name.size()));
        os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        put_u32(os, static_cast<std::uint32_t>(e.shape.size()));
        std::uint64_t numel = 1;
        for (std::uint64_t d : e.shape) {
            put_u64(os, d);
            numel *= d;
        }
        if (numel != e.data.size())
            throw DataError("checkpoint entry '" + e.name + "' has inconsistent payload size");
        for (float f : e.data) put_f32(os, f);
    }
    if (!os) throw DataError("failed writing checkpoint '" + path + "'");
}

std::vector<CheckpointEntry> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint '" + path + "'");
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("'" + path + "' is not a parameter checkpoint (bad magic)");
    const std::uint32_t version = get_u32(is, path);
    if (version != kVersion)
        throw DataError("checkpoint '" + path + "' has unsupported version " +
                        std::to_string(version));
    const std::uint64_t count = get_u64(is, path);
    std::vector<CheckpointEntry> entries;
    entries.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        CheckpointEntry e;
        const std::uint32_t name_len = get_u32(is, path);
        e.name.resize(name_len);
        if (!is.read(e.name.data(), name_len))
            throw DataError("checkpoint '" + path + "' is truncated");
        const std::uint32_t rank = get_u32(is, path);
        std::uint64_t numel = 1;
        for (std::uint32_t r = 0; r < rank; ++r) {
            e.shape.push_back(get_u64(is, path));
            numel *= e.shape.back();
        }
        e.data.reserve(numel);
        for (std::uint64_t k = 0; k < numel; ++k) e.data.push_back(get_f32(is, path));
        entries.push_back(std::move(e));
    }
    return entries;
}

}  // namespace seqpan
