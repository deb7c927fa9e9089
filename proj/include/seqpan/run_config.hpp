#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "seqpan/model.hpp"
#include "seqpan/training.hpp"

namespace seqpan {

// Everything one run needs, serialized as flat JSON so experiment records
// diff cleanly. Command-line flags override file values.
struct RunConfig {
    ModelConfig model;
    int epochs = 100;
    int batch_size = 16;
    double lr = 1e-4;
    double weight_decay = 0.01;
    double clip_norm = 1.0;
    int patience = 10;
    std::uint64_t seed = 0;
    int eval_threads = 1;
    std::string precision = "f32";  // f32 for training runs, f64 for verification
    std::string word_vectors;       // optional GloVe-style file; empty -> random init

    void validate() const {
        model.validate();
        if (epochs <= 0 || batch_size <= 0) throw ConfigError("epochs/batch_size must be positive");
        if (precision != "f32" && precision != "f64")
            throw ConfigError("precision must be f32 or f64, got '" + precision + "'");
    }
};

inline nlohmann::json to_json(const RunConfig& c) {
    return nlohmann::json{{"d", c.model.d},
                          {"heads", c.model.heads},
                          {"n_sgpa", c.model.n_sgpa},
                          {"tau", c.model.tau},
                          {"max_video_len", c.model.max_video_len},
                          {"max_query_len", c.model.max_query_len},
                          {"dropout", c.model.dropout},
                          {"variant", to_string(c.model.variant)},
                          {"match_mode", to_string(c.model.match)},
                          {"eta", c.model.eta},
                          {"conv_depth", c.model.conv_depth},
                          {"conv_kernel", c.model.conv_kernel},
                          {"attn_dropout", c.model.attn_dropout},
                          {"sublayer_dropout", c.model.sublayer_dropout},
                          {"cqa_share_w", c.model.cqa_share_w},
                          {"stochastic_eval_labels", c.model.stochastic_eval_labels},
                          {"video_feat_dim", c.model.video_feat_dim},
                          {"word_dim", c.model.word_dim},
                          {"epochs", c.epochs},
                          {"batch_size", c.batch_size},
                          {"lr", c.lr},
                          {"weight_decay", c.weight_decay},
                          {"clip_norm", c.clip_norm},
                          {"patience", c.patience},
                          {"seed", c.seed},
                          {"eval_threads", c.eval_threads},
                          {"precision", c.precision},
                          {"word_vectors", c.word_vectors}};
}

inline void from_json_into(const nlohmann::json& j, RunConfig& c) {
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("d", c.model.d);
    get("heads", c.model.heads);
    get("n_sgpa", c.model.n_sgpa);
    get("tau", c.model.tau);
    get("max_video_len", c.model.max_video_len);
    get("max_query_len", c.model.max_query_len);
    get("dropout", c.model.dropout);
    if (j.contains("variant"))
        c.model.variant = attention_variant_from_string(j.at("variant").get<std::string>());
    if (j.contains("match_mode"))
        c.model.match = match_mode_from_string(j.at("match_mode").get<std::string>());
    get("eta", c.model.eta);
    get("conv_depth", c.model.conv_depth);
    get("conv_kernel", c.model.conv_kernel);
    get("attn_dropout", c.model.attn_dropout);
    get("sublayer_dropout", c.model.sublayer_dropout);
    get("cqa_share_w", c.model.cqa_share_w);
    get("stochastic_eval_labels", c.model.stochastic_eval_labels);
    get("video_feat_dim", c.model.video_feat_dim);
    get("word_dim", c.model.word_dim);
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("lr", c.lr);
    get("weight_decay", c.weight_decay);
    get("clip_norm", c.clip_norm);
    get("patience", c.patience);
    get("seed", c.seed);
    get("eval_threads", c.eval_threads);
    get("precision", c.precision);
    get("word_vectors", c.word_vectors);
}

}  // namespace seqpan
