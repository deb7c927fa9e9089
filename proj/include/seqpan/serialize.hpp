#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seqpan/errors.hpp"
#include "seqpan/layers.hpp"

namespace seqpan {

// Flat binary parameter checkpoint:
//   magic "SQPN" | u32 version | u64 count |
//   per parameter: u32 name_len | name bytes | u32 rank | u64 extents... |
//                  f32 data, little-endian.
struct CheckpointEntry {
    std::string name;
    std::vector<std::uint64_t> shape;
    std::vector<float> data;
};

void save_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> load_checkpoint(const std::string& path);

template <typename T>
void save_model(const std::string& path, const ParamList<T>& params) {
    std::vector<CheckpointEntry> entries;
    entries.reserve(params.size());
    for (const auto& p : params) {
        CheckpointEntry e;
        e.name = p.name;
        for (int d : p.tensor.shape()) e.shape.push_back(static_cast<std::uint64_t>(d));
        e.data.reserve(p.tensor.numel());
        for (std::size_t i = 0; i < p.tensor.numel(); ++i)
            e.data.push_back(static_cast<float>(p.tensor.data()[i]));
        entries.push_back(std::move(e));
    }
    save_checkpoint(path, entries);
}

template <typename T>
void load_model(const std::string& path, ParamList<T>& params) {
    auto entries = load_checkpoint(path);
    if (entries.size() != params.size())
        throw DataError("checkpoint '" + path + "' holds " + std::to_string(entries.size()) +
                        " parameters, model expects " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& e = entries[i];
        auto& p = params[i];
        if (e.name != p.name)
            throw DataError("checkpoint parameter '" + e.name + "' does not match model parameter '" +
                            p.name + "'");
        std::vector<std::uint64_t> want;
        for (int d : p.tensor.shape()) want.push_back(static_cast<std::uint64_t>(d));
        if (e.shape != want) {
            auto fmt = [](const std::vector<std::uint64_t>& s) {
                std::string r = "[";
                for (std::size_t k = 0; k < s.size(); ++k)
                    r += (k ? "x" : "") + std::to_string(s[k]);
                return r + "]";
            };
            throw DataError("checkpoint parameter '" + e.name + "' has shape " + fmt(e.shape) +
                            " but the model expects " + fmt(want));
        }
        for (std::size_t k = 0; k < e.data.size(); ++k)
            p.tensor.data()[k] = static_cast<T>(e.data[k]);
    }
}

}  // namespace seqpan
