#include "seqpan/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "seqpan/labeling.hpp"

namespace seqpan {

namespace {

std::string lowercased(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string tok;
    while (is >> tok) out.push_back(lowercased(tok));
    return out;
}

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw DataError("feature file '" + path + "' is truncated");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& is, const std::string& path) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
        throw DataError("feature file '" + path + "' is truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

std::string path_stem(const std::string& path) {
    std::size_t slash = path.find_last_of("/\\");
    std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
    std::size_t dot = base.find_last_of('.');
    return dot == std::string::npos ? base : base.substr(0, dot);
}

constexpr char kFeatureMagic[4] = {'S', 'Q', 'F', 'T'};
constexpr std::uint32_t kFeatureVersion = 1;

}  // namespace

std::vector<AnnotationRecord> load_annotations(const std::string& path,
                                               std::vector<std::string>* report) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open annotation file '" + path + "'");
    std::vector<AnnotationRecord> out;
    auto note = [&](const std::string& msg) {
        if (report) report->push_back(msg);
        else std::cerr << msg << "\n";
    };
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            note(path + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
            continue;
        }
        AnnotationRecord rec;
        try {
            rec.video_id = j.at("video_id").get<std::string>();
            rec.duration = j.at("duration").get<double>();
            rec.t_start = j.at("start").get<double>();
            rec.t_end = j.at("end").get<double>();
            rec.tokens = tokenize(j.at("query").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            note(path + ":" + std::to_string(line_no) + ": missing or mistyped field: " + e.what());
            continue;
        }
        if (rec.t_start < 0.0) {
            note(path + ":" + std::to_string(line_no) + ": rejected: start < 0");
            continue;
        }
        if (rec.t_start > rec.t_end) {
            note(path + ":" + std::to_string(line_no) + ": rejected: start > end");
            continue;
        }
        if (rec.t_end > rec.duration) {
            note(path + ":" + std::to_string(line_no) + ": rejected: end > duration");
            continue;
        }
        if (rec.tokens.empty()) {
            note(path + ":" + std::to_string(line_no) + ": rejected: empty query");
            continue;
        }
        out.push_back(std::move(rec));
    }
    if (out.empty()) note(path + ": no valid annotation records");
    return out;
}

void save_annotations(const std::string& path, const std::vector<AnnotationRecord>& records) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    for (const auto& r : records) {
        std::string query;
        for (std::size_t i = 0; i < r.tokens.size(); ++i) {
            if (i) query += ' ';
            query += r.tokens[i];
        }
        nlohmann::json j{{"video_id", r.video_id},
                         {"duration", r.duration},
                         {"start", r.t_start},
                         {"end", r.t_end},
                         {"query", query}};
        os << j.dump() << "\n";
    }
    if (!os) throw DataError("failed writing '" + path + "'");
}

FeatureFile load_features(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open feature file '" + path + "'");
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kFeatureMagic, 4) != 0)
        throw DataError("'" + path + "' is not a feature file (bad magic)");
    const std::uint32_t version = get_u32(is, path);
    if (version != kFeatureVersion)
        throw DataError("feature file '" + path + "' has unsupported version " +
                        std::to_string(version));
    FeatureFile f;
    f.video_id = path_stem(path);
    const std::uint64_t d_v = get_u64(is, path);
    const std::uint64_t t_raw = get_u64(is, path);
    if (d_v == 0 || t_raw == 0)
        throw DataError("feature file '" + path + "' declares an empty matrix");
    f.d_v = static_cast<int>(d_v);
    f.t_raw = static_cast<int>(t_raw);
    f.data.resize(d_v * t_raw);
    for (auto& v : f.data) {
        std::uint32_t bits = get_u32(is, path);
        std::memcpy(&v, &bits, 4);
    }
    return f;
}

void save_features(const std::string& path, const FeatureFile& f) {
    if (f.data.size() != static_cast<std::size_t>(f.d_v) * f.t_raw)
        throw DataError("feature matrix for '" + f.video_id + "' has inconsistent size");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open '" + path + "' for writing");
    os.write(kFeatureMagic, 4);
    put_u32(os, kFeatureVersion);
    put_u64(os, static_cast<std::uint64_t>(f.d_v));
    put_u64(os, static_cast<std::uint64_t>(f.t_raw));
    for (float v : f.data) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_u32(os, bits);
    }
    if (!os) throw DataError("failed writing '" + path + "'");
}

FitResult fit_length(const FeatureFile& f, int n) {
    if (n < 2) throw ConfigError("fit_length: n must be at least 2");
    FitResult r;
    r.features.assign(static_cast<std::size_t>(n) * f.d_v, 0.0f);
    r.mask.assign(n, 0.0f);
    if (f.t_raw > n) {
        r.n_valid = n;
        r.index_map.resize(n);
        for (int j = 0; j < n; ++j)
            r.index_map[j] = static_cast<int>(
                std::lround(static_cast<double>(j) * (f.t_raw - 1) / (n - 1)));
    } else {
        r.n_valid = f.t_raw;
        r.index_map.resize(f.t_raw);
        for (int j = 0; j < f.t_raw; ++j) r.index_map[j] = j;
    }
    for (int j = 0; j < r.n_valid; ++j) {
        r.mask[j] = 1.0f;
        const int raw = r.index_map[j];
        for (int c = 0; c < f.d_v; ++c)
            r.features[static_cast<std::size_t>(j) * f.d_v + c] = f.at(c, raw);
    }
    return r;
}

int remap_raw_index(const std::vector<int>& index_map, int raw_index) {
    int best = 0;
    int best_dist = std::abs(index_map[0] - raw_index);
    for (int j = 1; j < static_cast<int>(index_map.size()); ++j) {
        const int d = std::abs(index_map[j] - raw_index);
        if (d < best_dist) {
            best = j;
            best_dist = d;
        }
    }
    return best;
}

Vocabulary::Vocabulary() {
    id_to_token = {"<pad>", "<unk>"};
    token_to_id = {{"<pad>", 0}, {"<unk>", 1}};
}

int Vocabulary::add(const std::string& token) {
    const std::string t = lowercased(token);
    auto it = token_to_id.find(t);
    if (it != token_to_id.end()) return it->second;
    const int id = static_cast<int>(id_to_token.size());
    token_to_id.emplace(t, id);
    id_to_token.push_back(t);
    return id;
}

int Vocabulary::lookup(const std::string& token) const {
    auto it = token_to_id.find(lowercased(token));
    return it == token_to_id.end() ? 1 : it->second;
}

Vocabulary Vocabulary::build(const std::vector<AnnotationRecord>& records) {
    Vocabulary v;
    for (const auto& r : records)
        for (const auto& t : r.tokens) v.add(t);
    return v;
}

Dataset make_dataset(const std::vector<AnnotationRecord>& records,
                     const std::unordered_map<std::string, FeatureFile>& features,
                     const Vocabulary& vocab, int n) {
    Dataset ds;
    ds.n = n;
    for (const auto& rec : records) {
        auto it = features.find(rec.video_id);
        if (it == features.end())
            throw DataError("no feature file for video '" + rec.video_id + "'");
        const FeatureFile& f = it->second;
        if (ds.d_v == 0) ds.d_v = f.d_v;
        if (f.d_v != ds.d_v)
            throw DataError("feature dim for '" + rec.video_id + "' is " + std::to_string(f.d_v) +
                            ", expected " + std::to_string(ds.d_v));
        FitResult fit = fit_length(f, n);

        Sample s;
        s.video_id = rec.video_id;
        s.duration = rec.duration;
        s.t_start = rec.t_start;
        s.t_end = rec.t_end;
        for (const auto& t : rec.tokens) s.token_ids.push_back(vocab.lookup(t));
        s.features = std::move(fit.features);
        s.vmask = std::move(fit.mask);
        s.n_valid = fit.n_valid;
        // ground-truth times land on raw indices first, then on the nearest
        // kept position
        const int raw_s = time_to_index(rec.t_start, rec.duration, f.t_raw);
        const int raw_e = time_to_index(rec.t_end, rec.duration, f.t_raw);
        s.i_start = remap_raw_index(fit.index_map, raw_s);
        s.i_end = remap_raw_index(fit.index_map, raw_e);
        if (s.i_start > s.i_end) std::swap(s.i_start, s.i_end);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

SynthData synth_dataset(const SynthSpec& spec) {
    if (spec.n_samples <= 0) throw ConfigError("synth: n_samples must be positive");
    if (spec.n < 8) throw ConfigError("synth: n must be at least 8");
    // pattern keyword + a filler pool must fit in the vocabulary budget
    static const std::vector<std::string> kFillers = {
        "the", "a",  "person", "is",  "seen", "in", "video", "then", "while",
        "on",  "at", "near",   "and", "with", "to", "scene", "shot", "clip"};
    if (spec.vocab_size < spec.n_classes + static_cast<int>(kFillers.size()))
        throw ConfigError("synth: vocab_size too small for " + std::to_string(spec.n_classes) +
                          " classes plus filler tokens");

    Rng rng(spec.seed);
    SynthData out;

    out.class_direction.resize(spec.n_classes);
    for (int c = 0; c < spec.n_classes; ++c) {
        auto& dir = out.class_direction[c];
        dir.resize(spec.d_v);
        double norm = 0.0;
        for (auto& v : dir) {
            v = static_cast<float>(rng.normal());
            norm += static_cast<double>(v) * v;
        }
        norm = std::sqrt(norm);
        for (auto& v : dir) v = static_cast<float>(v / norm * spec.signal);
    }

    auto keyword = [](int c) { return "action" + std::to_string(c); };

    // span length uniform over the integers inside [n/10, n/3]
    const int min_len = std::max(1, static_cast<int>(std::ceil(spec.n / 10.0)));
    const int max_len = std::max(min_len, spec.n / 3);
    const double duration = static_cast<double>(spec.n);

    for (int s = 0; s < spec.n_samples; ++s) {
        const int cls = static_cast<int>(rng.uniform_int(0, spec.n_classes - 1));
        const int span_len = static_cast<int>(rng.uniform_int(min_len, max_len));
        const int i_s = static_cast<int>(rng.uniform_int(0, spec.n - span_len));
        const int i_e = i_s + span_len - 1;

        FeatureFile f;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "synth_%06d", s);
        f.video_id = buf;
        f.d_v = spec.d_v;
        f.t_raw = spec.n;
        f.data.resize(static_cast<std::size_t>(spec.d_v) * spec.n);
        for (auto& v : f.data) v = static_cast<float>(rng.normal());
        auto plant = [&](int cls_id, int lo, int hi) {
            for (int c = 0; c < spec.d_v; ++c)
                for (int t = lo; t <= hi; ++t)
                    f.data[static_cast<std::size_t>(c) * spec.n + t] +=
                        out.class_direction[cls_id][c];
        };
        plant(cls, i_s, i_e);

        // distractor span of a different class, disjoint from the target
        int distractor = static_cast<int>(rng.uniform_int(0, spec.n_classes - 2));
        if (distractor >= cls) ++distractor;
        for (int attempt = 0; attempt < 10; ++attempt) {
            const int dlen = static_cast<int>(rng.uniform_int(min_len, max_len));
            const int ds = static_cast<int>(rng.uniform_int(0, spec.n - dlen));
            const int de = ds + dlen - 1;
            if (de < i_s || ds > i_e) {
                plant(distractor, ds, de);
                break;
            }
        }

        AnnotationRecord rec;
        rec.video_id = f.video_id;
        rec.duration = duration;
        rec.t_start = index_to_time(i_s, duration, spec.n);
        rec.t_end = index_to_time(i_e, duration, spec.n);
        const int n_tokens = static_cast<int>(rng.uniform_int(3, 8));
        const int kw_pos = static_cast<int>(rng.uniform_int(0, n_tokens - 1));
        for (int t = 0; t < n_tokens; ++t) {
            if (t == kw_pos)
                rec.tokens.push_back(keyword(cls));
            else
                rec.tokens.push_back(
                    kFillers[static_cast<std::size_t>(rng.uniform_int(0, kFillers.size() - 1))]);
        }

        out.annotations.push_back(std::move(rec));
        out.features.push_back(std::move(f));
        out.pattern_class.push_back(cls);
        out.spans.emplace_back(i_s, i_e);
    }
    return out;
}

std::vector<std::pair<std::string, std::vector<float>>> read_word_vector_file(
    const std::string& path, int d_w) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open word vector file '" + path + "'");
    std::vector<std::pair<std::string, std::vector<float>>> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        std::vector<float> vals;
        double v;
        while (ls >> v) vals.push_back(static_cast<float>(v));
        if (static_cast<int>(vals.size()) != d_w)
            throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(d_w) + " values, found " +
                            std::to_string(vals.size()));
        rows.emplace_back(lowercased(tok), std::move(vals));
    }
    return rows;
}

}  // namespace seqpan
