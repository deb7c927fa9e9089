#pragma once

#include <string>
#include <vector>

#include "seqpan/labeling.hpp"
#include "seqpan/layers.hpp"
#include "seqpan/ops.hpp"

namespace seqpan {

enum class AttentionVariant { sgpa, pa, se_trm, co_trm };
enum class MatchMode { sq_match, fb_match, gumbel_no_emb, none };

inline const char* to_string(AttentionVariant v) {
    switch (v) {
        case AttentionVariant::sgpa: return "sgpa";
        case AttentionVariant::pa: return "pa";
        case AttentionVariant::se_trm: return "se_trm";
        case AttentionVariant::co_trm: return "co_trm";
    }
    return "sgpa";
}

inline const char* to_string(MatchMode m) {
    switch (m) {
        case MatchMode::sq_match: return "sq_match";
        case MatchMode::fb_match: return "fb_match";
        case MatchMode::gumbel_no_emb: return "gumbel_no_emb";
        case MatchMode::none: return "none";
    }
    return "sq_match";
}

inline AttentionVariant attention_variant_from_string(const std::string& s) {
    if (s == "sgpa") return AttentionVariant::sgpa;
    if (s == "pa") return AttentionVariant::pa;
    if (s == "se_trm") return AttentionVariant::se_trm;
    if (s == "co_trm") return AttentionVariant::co_trm;
    throw ConfigError("unknown attention variant '" + s + "'");
}

inline MatchMode match_mode_from_string(const std::string& s) {
    if (s == "sq_match") return MatchMode::sq_match;
    if (s == "fb_match") return MatchMode::fb_match;
    if (s == "gumbel_no_emb") return MatchMode::gumbel_no_emb;
    if (s == "none") return MatchMode::none;
    throw ConfigError("unknown match mode '" + s + "'");
}

struct ModelConfig {
    int d = 128;
    int heads = 8;
    int n_sgpa = 2;
    double tau = 0.3;
    int max_video_len = 64;   // N
    int max_query_len = 32;   // M
    double dropout = 0.2;
    AttentionVariant variant = AttentionVariant::sgpa;
    MatchMode match = MatchMode::sq_match;
    double eta = 0.25;  // boundary-region extension fraction
    int conv_depth = 2;
    int conv_kernel = 7;
    bool attn_dropout = true;
    bool sublayer_dropout = true;
    bool cqa_share_w = true;
    bool stochastic_eval_labels = false;
    int video_feat_dim = 1024;
    int word_dim = 300;

    int match_classes() const { return match == MatchMode::fb_match ? 2 : kNumRegionLabels; }

    void validate() const {
        if (d <= 0 || heads <= 0 || d % heads != 0)
            throw ConfigError("model: d=" + std::to_string(d) + " must be divisible by heads=" +
                              std::to_string(heads));
        if (tau <= 0.0) throw ConfigError("model: tau must be positive");
        if (eta < 0.0) throw ConfigError("model: eta must be non-negative");
        if (n_sgpa < 1) throw ConfigError("model: n_sgpa must be at least 1");
        if (max_video_len < 2 || max_query_len < 1)
            throw ConfigError("model: sequence length limits too small");
        if (conv_kernel % 2 == 0) throw ConfigError("model: conv kernel width must be odd");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model: dropout must be in [0, 1)");
    }
};

// One padded sample as the network consumes it.
template <typename T>
struct ModelInput {
    Tensor<T> video;   // [N x d_v]
    Tensor<T> query;   // [M x d_w]
    Tensor<T> vmask;   // [N]
    Tensor<T> qmask;   // [M]
};

// Named intermediate activations of one sample's forward pass.
template <typename T>
struct ForwardTrace {
    Tensor<T> v_enc;        // encoder output, video stream
    Tensor<T> q_enc;        // encoder output, query stream
    Tensor<T> v_bar;        // after attention blocks
    Tensor<T> q_bar;
    Tensor<T> h_bar;        // query-attended video representation
    Tensor<T> s_seq;        // per-frame region distribution
    Tensor<T> l_bar;        // relaxed label sample (train) used by the matching loss
    Tensor<T> match_logits; // scores behind l_bar, for the fused-XE loss path
    Tensor<T> labels_hard;  // one-hot region decisions
    Tensor<T> h_tilde;      // label-infused representation
    Tensor<T> p_start;      // [N x 1]
    Tensor<T> p_end;        // [N x 1]
    Tensor<T> s_start;      // masked boundary scores behind p_start/p_end
    Tensor<T> s_end;
};

// Parallel attention block. The variant decides which paths exist:
// sgpa/pa keep both attention streams plus cross-gating; se_trm keeps only
// self-attention, co_trm only cross-attention; pa swaps the self-guided head
// for a plain affine.
template <typename T>
class SgpaBlock {
public:
    SgpaBlock() = default;
    SgpaBlock(const ModelConfig& cfg, Rng& rng) : variant_(cfg.variant) {
        const int d = cfg.d;
        for (int s = 0; s < 2; ++s) {
            Stream& st = stream_[s];
            const bool has_self = variant_ != AttentionVariant::co_trm;
            const bool has_cross = variant_ != AttentionVariant::se_trm;
            if (has_self) {
                st.self_attn = MultiHeadAttention<T>(d, cfg.heads, rng);
                st.norm_self = LayerNorm<T>(d);
            }
            if (has_cross) {
                st.cross_attn = MultiHeadAttention<T>(d, cfg.heads, rng);
                st.norm_cross = LayerNorm<T>(d);
            }
            if (has_self && has_cross) {
                st.gate_from_cross = Linear<T>(d, d, rng);
                st.gate_from_self = Linear<T>(d, d, rng);
            }
            if (variant_ == AttentionVariant::sgpa) st.head_gate = Linear<T>(d, d, rng);
            st.head_out = Linear<T>(d, d, rng);
            st.norm_out = LayerNorm<T>(d);
        }
    }

    std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& v, const Tensor<T>& q,
                                            const Tensor<T>& vmask, const Tensor<T>& qmask,
                                            const RunCtx& ctx) const {
        auto v_out = stream_forward(stream_[0], v, q, vmask, qmask, ctx);
        auto q_out = stream_forward(stream_[1], q, v, qmask, vmask, ctx);
        return {v_out, q_out};
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        const char* names[2] = {"v", "q"};
        for (int s = 0; s < 2; ++s) {
            Stream& st = stream_[s];
            const std::string p = prefix + "." + names[s];
            if (st.norm_self.gain.defined()) {
                st.self_attn.collect(p + ".self_attn", out);
                st.norm_self.collect(p + ".norm_self", out);
            }
            if (st.norm_cross.gain.defined()) {
                st.cross_attn.collect(p + ".cross_attn", out);
                st.norm_cross.collect(p + ".norm_cross", out);
            }
            if (st.gate_from_cross.weight.defined()) {
                st.gate_from_cross.collect(p + ".gate_from_cross", out);
                st.gate_from_self.collect(p + ".gate_from_self", out);
            }
            if (st.head_gate.weight.defined()) st.head_gate.collect(p + ".head_gate", out);
            st.head_out.collect(p + ".head_out", out);
            st.norm_out.collect(p + ".norm_out", out);
        }
    }

    struct Stream {
        MultiHeadAttention<T> self_attn;
        MultiHeadAttention<T> cross_attn;
        LayerNorm<T> norm_self, norm_cross, norm_out;
        Linear<T> gate_from_cross, gate_from_self;  // cross-gating affines
        Linear<T> head_gate;                        // self-guided head: confidence gate
        Linear<T> head_out;                         // self-guided head / plain FFN output
    };

    Stream stream_[2];  // 0: video, 1: query

private:
    Tensor<T> stream_forward(const Stream& st, const Tensor<T>& x, const Tensor<T>& other,
                             const Tensor<T>& x_mask, const Tensor<T>& other_mask,
                             const RunCtx& ctx) const {
        auto sublayer = [&](const Tensor<T>& base, Tensor<T> s, const LayerNorm<T>& norm) {
            if (ctx.train && ctx.sublayer_dropout) s = ops::dropout(s, ctx.dropout, *ctx.rng, true);
            return norm.forward(ops::add(base, s));
        };

        Tensor<T> merged;
        if (variant_ == AttentionVariant::se_trm) {
            merged = sublayer(x, st.self_attn.forward(x, x, x_mask, ctx), st.norm_self);
        } else if (variant_ == AttentionVariant::co_trm) {
            merged = sublayer(x, st.cross_attn.forward(x, other, other_mask, ctx), st.norm_cross);
        } else {
            auto a_self = sublayer(x, st.self_attn.forward(x, x, x_mask, ctx), st.norm_self);
            auto a_cross =
                sublayer(x, st.cross_attn.forward(x, other, other_mask, ctx), st.norm_cross);
            merged = ops::add(
                ops::mul(ops::sigmoid(st.gate_from_cross.forward(a_cross)), a_self),
                ops::mul(ops::sigmoid(st.gate_from_self.forward(a_self)), a_cross));
        }

        Tensor<T> head = st.head_out.forward(merged);
        if (variant_ == AttentionVariant::sgpa)
            head = ops::mul(ops::sigmoid(st.head_gate.forward(merged)), head);
        return sublayer(merged, head, st.norm_out);
    }

    AttentionVariant variant_ = AttentionVariant::sgpa;
};

// Context-query attention fusion of the two streams plus sentence pooling.
template <typename T>
class VideoQueryIntegrator {
public:
    VideoQueryIntegrator() = default;
    VideoQueryIntegrator(const ModelConfig& cfg, Rng& rng) {
        const int d = cfg.d;
        w_sim = Tensor<T>::param({d, d}, "");
        init::xavier_uniform(w_sim, d, d, rng);
        if (!cfg.cqa_share_w) {
            w_sim_rev = Tensor<T>::param({d, d}, "");
            init::xavier_uniform(w_sim_rev, d, d, rng);
        }
        fuse = Linear<T>(4 * d, d, rng);
        pool = AdditiveAttentionPool<T>(d, rng);
        h_fuse = Linear<T>(2 * d, d, rng);
    }

    // One CQA direction: context x attends over query y.
    Tensor<T> attend(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& x_mask,
                     const Tensor<T>& y_mask, const Tensor<T>& w) const {
        const int nx = x.dim(0), ny = y.dim(0);
        auto sim = ops::matmul(ops::matmul(x, w), y, false, true);  // [Nx x Ny]
        auto s_row = ops::softmax(ops::add(sim, mask_bias(y_mask)), 1);

        Tensor<T> col_bias = Tensor<T>::zeros({nx, ny});
        for (int i = 0; i < nx; ++i)
            if (x_mask.data()[i] <= T(0.5))
                for (int j = 0; j < ny; ++j) col_bias.data()[i * ny + j] = T(-1e9);
        auto s_col = ops::softmax(ops::add(sim, col_bias), 0);

        auto a_xy = ops::matmul(s_row, y);                                      // [Nx x d]
        auto a_yx = ops::matmul(ops::matmul(s_row, s_col, false, true), x);     // [Nx x d]
        return fuse.forward(
            ops::concat_cols<T>({x, a_xy, ops::mul(x, a_xy), ops::mul(x, a_yx)}));
    }

    Tensor<T> forward(const Tensor<T>& v_bar, const Tensor<T>& q_bar, const Tensor<T>& vmask,
                      const Tensor<T>& qmask) const {
        const Tensor<T>& w_rev = w_sim_rev.defined() ? w_sim_rev : w_sim;
        auto vq = attend(v_bar, q_bar, vmask, qmask, w_sim);
        auto qv = attend(q_bar, v_bar, qmask, vmask, w_rev);
        auto sentence = pool.forward(qv, qmask);  // [1 x d]
        auto h = h_fuse.forward(
            ops::concat_cols<T>({vq, ops::repeat_rows(sentence, v_bar.dim(0))}));
        return ops::mul_rows(h, vmask);
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        w_sim.set_name(prefix + ".w_sim");
        out.push_back({w_sim.name(), w_sim});
        if (w_sim_rev.defined()) {
            w_sim_rev.set_name(prefix + ".w_sim_rev");
            out.push_back({w_sim_rev.name(), w_sim_rev});
        }
        fuse.collect(prefix + ".fuse", out);
        pool.collect(prefix + ".pool", out);
        h_fuse.collect(prefix + ".h_fuse", out);
    }

    Tensor<T> w_sim;      // similarity bilinear form, shared between directions
    Tensor<T> w_sim_rev;  // optional separate form for the query->video direction
    Linear<T> fuse;
    AdditiveAttentionPool<T> pool;
    Linear<T> h_fuse;
};

template <typename T>
struct MatchResult {
    Tensor<T> s_seq;
    Tensor<T> l_bar;
    Tensor<T> logits;  // scores behind l_bar: (H_seq + g)/tau, or H_seq for fb
    Tensor<T> labels_hard;
    Tensor<T> h_tilde;
};

// Region matcher: classifies every frame into a region and, in the full
// mode, re-injects the sampled label's embedding into the frame features.
// Training samples hard labels with Gumbel noise on the unnormalized scores
// and routes gradients through the tau-relaxation (straight-through).
template <typename T>
class SequenceMatcher {
public:
    SequenceMatcher() = default;
    SequenceMatcher(const ModelConfig& cfg, Rng& rng) : mode_(cfg.match), tau_(cfg.tau) {
        if (mode_ == MatchMode::none) return;
        head = Linear<T>(cfg.d, cfg.match_classes(), rng);
        if (mode_ == MatchMode::sq_match) {
            e_lab = Tensor<T>::param({kNumRegionLabels, cfg.d}, "");
            init::normal(e_lab, 0.02, rng);
        }
    }

    MatchResult<T> forward(const Tensor<T>& h_bar, const RunCtx& ctx,
                           bool stochastic_eval = false) const {
        MatchResult<T> r;
        r.h_tilde = h_bar;
        if (mode_ == MatchMode::none) return r;

        auto scores = head.forward(h_bar);  // [N x C]
        r.s_seq = ops::softmax(scores, 1);

        if (mode_ == MatchMode::fb_match) {
            r.l_bar = r.s_seq;
            r.logits = scores;
            return r;
        }

        if (ctx.train || stochastic_eval) {
            auto noise = sample_gumbel<T>(scores.shape(), *ctx.rng);
            auto z = ops::scale(ops::add(scores, noise), T(1) / static_cast<T>(tau_));
            auto relaxed = ops::softmax(z, 1);
            r.l_bar = relaxed;
            r.logits = z;
            r.labels_hard = ops::straight_through_onehot(relaxed);
        } else {
            r.labels_hard = one_hot<T>(ops::argmax_rows(scores), kNumRegionLabels);
        }

        if (mode_ == MatchMode::sq_match) {
            const Tensor<T>& mix =
                (ctx.relaxed_labels && r.l_bar.defined()) ? r.l_bar : r.labels_hard;
            r.h_tilde = ops::add(ops::matmul(mix, e_lab), h_bar);
        }
        return r;
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        if (mode_ == MatchMode::none) return;
        head.collect(prefix + ".head", out);
        if (e_lab.defined()) {
            e_lab.set_name(prefix + ".e_lab");
            out.push_back({e_lab.name(), e_lab});
        }
    }

    MatchMode mode() const { return mode_; }

    Linear<T> head;
    Tensor<T> e_lab;  // [4 x d], one row per region label

private:
    MatchMode mode_ = MatchMode::sq_match;
    double tau_ = 0.3;
};

// Boundary localizer: the end-boundary block is conditioned on the start
// block's output so end never ignores where start points.
template <typename T>
class Localizer {
public:
    Localizer() = default;
    // The score heads carry no bias, and the end block's final norm none
    // either: uniform offsets on all positions fall out of the boundary
    // softmax.
    Localizer(const ModelConfig& cfg, Rng& rng)
        : trm_start(cfg.d, cfg.heads, rng),
          trm_end(cfg.d, cfg.heads, rng, false),
          w_start(2 * cfg.d, 1, rng, false),
          w_end(2 * cfg.d, 1, rng, false) {}

    struct Boundaries {
        Tensor<T> p_start, p_end;  // distributions over positions
        Tensor<T> s_start, s_end;  // masked scores behind them
    };

    Boundaries forward(const Tensor<T>& h_tilde, const Tensor<T>& vmask,
                       const RunCtx& ctx) const {
        const int n = h_tilde.dim(0);
        auto bias = ops::reshape(mask_bias(vmask), {n, 1});
        auto h_s = trm_start.forward(h_tilde, vmask, ctx);
        auto s_s = ops::add(w_start.forward(ops::concat_cols<T>({h_s, h_tilde})), bias);
        auto h_e = trm_end.forward(h_s, vmask, ctx);
        auto s_e = ops::add(w_end.forward(ops::concat_cols<T>({h_e, h_tilde})), bias);
        return {ops::softmax(s_s, 0), ops::softmax(s_e, 0), s_s, s_e};
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        trm_start.collect(prefix + ".trm_start", out);
        trm_end.collect(prefix + ".trm_end", out);
        w_start.collect(prefix + ".w_start", out);
        w_end.collect(prefix + ".w_end", out);
    }

    TransformerBlock<T> trm_start, trm_end;
    Linear<T> w_start, w_end;
};

template <typename T>
class Model {
public:
    Model() = default;
    Model(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
        cfg.validate();
        ffn_video = Linear<T>(cfg.video_feat_dim, cfg.d, rng);
        ffn_query = Linear<T>(cfg.word_dim, cfg.d, rng);
        // One positional table and one conv block, shared by both streams.
        pos = Embedding<T>(std::max(cfg.max_video_len, cfg.max_query_len), cfg.d, rng);
        conv = ConvBlock<T>(cfg.d, cfg.conv_depth, cfg.conv_kernel, rng);
        for (int i = 0; i < cfg.n_sgpa; ++i) blocks.emplace_back(cfg, rng);
        integrator = VideoQueryIntegrator<T>(cfg, rng);
        matcher = SequenceMatcher<T>(cfg, rng);
        localizer = Localizer<T>(cfg, rng);

        params_.clear();
        ffn_video.collect("encoder.ffn_video", params_);
        ffn_query.collect("encoder.ffn_query", params_);
        pos.collect("encoder.pos", params_);
        conv.collect("encoder.conv", params_);
        for (std::size_t i = 0; i < blocks.size(); ++i)
            blocks[i].collect("attn_block." + std::to_string(i), params_);
        integrator.collect("integrator", params_);
        matcher.collect("matcher", params_);
        localizer.collect("localizer", params_);
    }

    std::pair<Tensor<T>, Tensor<T>> encode(const ModelInput<T>& in, const RunCtx&) const {
        if (in.video.dim(1) != cfg_.video_feat_dim)
            throw ShapeError("encode: video feature dim " + std::to_string(in.video.dim(1)) +
                             " does not match configured " + std::to_string(cfg_.video_feat_dim));
        if (in.query.dim(1) != cfg_.word_dim)
            throw ShapeError("encode: word dim " + std::to_string(in.query.dim(1)) +
                             " does not match configured " + std::to_string(cfg_.word_dim));
        auto embed = [&](const Linear<T>& proj, const Tensor<T>& x, const Tensor<T>& mask) {
            auto h = ops::add(proj.forward(x), pos.prefix(x.dim(0)));
            return conv.forward(ops::mul_rows(h, mask), mask);
        };
        return {embed(ffn_video, in.video, in.vmask), embed(ffn_query, in.query, in.qmask)};
    }

    ForwardTrace<T> forward(const ModelInput<T>& in, const RunCtx& ctx) const {
        ForwardTrace<T> trace;
        auto [v, q] = encode(in, ctx);
        trace.v_enc = v;
        trace.q_enc = q;
        for (const auto& block : blocks) {
            auto [v2, q2] = block.forward(v, q, in.vmask, in.qmask, ctx);
            v = v2;
            q = q2;
        }
        trace.v_bar = v;
        trace.q_bar = q;
        trace.h_bar = integrator.forward(v, q, in.vmask, in.qmask);
        auto match = matcher.forward(trace.h_bar, ctx, cfg_.stochastic_eval_labels && !ctx.train);
        trace.s_seq = match.s_seq;
        trace.l_bar = match.l_bar;
        trace.match_logits = match.logits;
        trace.labels_hard = match.labels_hard;
        trace.h_tilde = match.h_tilde;
        auto bounds = localizer.forward(trace.h_tilde, in.vmask, ctx);
        trace.p_start = bounds.p_start;
        trace.p_end = bounds.p_end;
        trace.s_start = bounds.s_start;
        trace.s_end = bounds.s_end;
        return trace;
    }

    const ModelConfig& config() const { return cfg_; }
    const ParamList<T>& params() const { return params_; }
    ParamList<T>& params() { return params_; }

    Linear<T> ffn_video, ffn_query;
    Embedding<T> pos;
    ConvBlock<T> conv;
    std::vector<SgpaBlock<T>> blocks;
    VideoQueryIntegrator<T> integrator;
    SequenceMatcher<T> matcher;
    Localizer<T> localizer;

private:
    ModelConfig cfg_;
    ParamList<T> params_;
};

}  // namespace seqpan
