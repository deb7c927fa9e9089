#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "seqpan/errors.hpp"
#include "seqpan/rng.hpp"
#include "seqpan/tensor.hpp"

namespace seqpan {

// One moment-query annotation. Queries are whitespace-tokenized, lowercased.
struct AnnotationRecord {
    std::string video_id;
    double duration = 0.0;
    double t_start = 0.0;
    double t_end = 0.0;
    std::vector<std::string> tokens;
};

// JSONL: one object per line with keys video_id, duration, start, end, query.
// Malformed or invalid lines are reported (with line numbers) to `report` and
// skipped; the valid records are returned.
std::vector<AnnotationRecord> load_annotations(const std::string& path,
                                               std::vector<std::string>* report = nullptr);
void save_annotations(const std::string& path, const std::vector<AnnotationRecord>& records);

// Feature file, as stored: magic "SQFT" | u32 version | u64 d_v | u64 t_raw |
// f32 row-major [d_v x t_raw], little-endian.
struct FeatureFile {
    std::string video_id;
    int d_v = 0;
    int t_raw = 0;
    std::vector<float> data;  // [d_v x t_raw] row-major, as in the file

    float at(int channel, int t) const { return data[static_cast<std::size_t>(channel) * t_raw + t]; }
};

FeatureFile load_features(const std::string& path);
void save_features(const std::string& path, const FeatureFile& f);

// Fixed-length fitting: uniform downsample when t_raw > n (index j picks raw
// round(j*(t_raw-1)/(n-1))), zero-pad otherwise. Output is position-major
// [n x d_v]; index_map records the raw index behind each valid position.
struct FitResult {
    std::vector<float> features;  // [n x d_v]
    std::vector<float> mask;      // [n], 1 on the valid prefix
    std::vector<int> index_map;   // size n_valid
    int n_valid = 0;
};

FitResult fit_length(const FeatureFile& f, int n);

// Nearest valid position for a raw index (lower index wins ties).
int remap_raw_index(const std::vector<int>& index_map, int raw_index);

// token ids; 0 is padding, 1 is unknown. Tokens are lowercased.
struct Vocabulary {
    std::unordered_map<std::string, int> token_to_id;
    std::vector<std::string> id_to_token;

    Vocabulary();
    int add(const std::string& token);
    int lookup(const std::string& token) const;  // unknown -> 1
    int size() const { return static_cast<int>(id_to_token.size()); }

    static Vocabulary build(const std::vector<AnnotationRecord>& records);
};

// A model-ready sample: features fitted to n positions, ground truth mapped
// onto the valid prefix.
struct Sample {
    std::string video_id;
    double duration = 0.0;
    double t_start = 0.0, t_end = 0.0;
    std::vector<int> token_ids;   // unpadded
    std::vector<float> features;  // [n x d_v]
    std::vector<float> vmask;     // [n]
    int n_valid = 0;
    int i_start = 0, i_end = 0;  // fitted indices
};

struct Dataset {
    int n = 0;    // fitted video length
    int d_v = 0;  // video feature dim
    std::vector<Sample> samples;
};

// Assemble samples from annotations plus per-video feature files.
Dataset make_dataset(const std::vector<AnnotationRecord>& records,
                     const std::unordered_map<std::string, FeatureFile>& features,
                     const Vocabulary& vocab, int n);

// ---------------------------------------------------------------------------
// synthetic planted-span task
// ---------------------------------------------------------------------------

struct SynthSpec {
    int n_samples = 1000;
    int n = 32;     // raw video length (== fitted length for synthetic data)
    int d_v = 128;  // class directions separate cleanly at this width
    int vocab_size = 60;
    int n_classes = 4;
    double signal = 1.0;  // norm of each planted class direction
    std::uint64_t seed = 0;
};

struct SynthData {
    std::vector<AnnotationRecord> annotations;
    std::vector<FeatureFile> features;               // one video per sample
    std::vector<int> pattern_class;                  // per sample
    std::vector<std::pair<int, int>> spans;          // planted [i_s, i_e]
    std::vector<std::vector<float>> class_direction; // [n_classes][d_v]
};

// Each video is unit gaussian noise with a class-specific direction added on
// the target span; a distractor span of a different class is planted
// elsewhere so that query-blind models cannot solve the task. The query
// encodes the class through a dedicated keyword token.
SynthData synth_dataset(const SynthSpec& spec);

// GloVe-style text vectors: token then d_w floats per line. Throws on
// inconsistent widths.
std::vector<std::pair<std::string, std::vector<float>>> read_word_vector_file(
    const std::string& path, int d_w);

// Build the frozen [vocab x d_w] word table. Tokens not in the file get
// N(0, 0.1^2) rows; the padding row stays zero. With an empty path the whole
// table (except padding) is random. Never registered with the optimizer.
template <typename T>
Tensor<T> load_word_vectors(const std::string& path, const Vocabulary& vocab, int d_w,
                            std::uint64_t seed) {
    Rng rng(seed ^ 0x9e3779b97f4a7c15ull);
    Tensor<T> table = Tensor<T>::zeros({vocab.size(), d_w});
    std::unordered_map<std::string, std::size_t> file_index;
    std::vector<std::pair<std::string, std::vector<float>>> file_rows;
    if (!path.empty()) {
        file_rows = read_word_vector_file(path, d_w);
        for (std::size_t i = 0; i < file_rows.size(); ++i)
            file_index.emplace(file_rows[i].first, i);
    }
    for (int id = 1; id < vocab.size(); ++id) {
        const std::string& tok = vocab.id_to_token[id];
        auto it = file_index.find(tok);
        T* row = table.data() + static_cast<std::size_t>(id) * d_w;
        if (it != file_index.end()) {
            for (int k = 0; k < d_w; ++k) row[k] = static_cast<T>(file_rows[it->second].second[k]);
        } else {
            for (int k = 0; k < d_w; ++k) row[k] = static_cast<T>(rng.normal(0.0, 0.1));
        }
    }
    return table;
}

}  // namespace seqpan
