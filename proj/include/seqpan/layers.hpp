#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "seqpan/ops.hpp"
#include "seqpan/rng.hpp"
#include "seqpan/tensor.hpp"

namespace seqpan {

template <typename T>
struct ParamEntry {
    std::string name;
    Tensor<T> tensor;
};

template <typename T>
using ParamList = std::vector<ParamEntry<T>>;

// Dropout placement and mode for one forward pass.
struct RunCtx {
    Rng* rng = nullptr;
    bool train = false;
    double dropout = 0.0;
    bool attn_dropout = true;      // post-softmax, inside attention
    bool sublayer_dropout = true;  // on each sublayer output before residual
    // Mix the label relaxation itself instead of the hard one-hot sample.
    // This is the smooth surrogate whose gradient the straight-through pass
    // reports; the finite-difference harness runs with it enabled.
    bool relaxed_labels = false;
};

namespace init {

template <typename T>
void xavier_uniform(Tensor<T>& t, int fan_in, int fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (std::size_t i = 0; i < t.numel(); ++i)
        t.data()[i] = static_cast<T>(rng.uniform(-limit, limit));
}

template <typename T>
void normal(Tensor<T>& t, double stddev, Rng& rng) {
    for (std::size_t i = 0; i < t.numel(); ++i)
        t.data()[i] = static_cast<T>(rng.normal(0.0, stddev));
}

}  // namespace init

// Additive -1e9 bias for invalid positions, used ahead of softmax.
template <typename T>
Tensor<T> mask_bias(const Tensor<T>& mask) {
    Tensor<T> b = Tensor<T>::zeros(mask.shape());
    for (std::size_t i = 0; i < mask.numel(); ++i)
        b.data()[i] = mask.data()[i] > T(0.5) ? T(0) : T(-1e9);
    return b;
}

template <typename T>
T mask_count(const Tensor<T>& mask) {
    return kern::sum(mask.numel(), mask.data());
}

// Single affine layer; x is [L x d_in], weight is stored [d_in x d_out].
template <typename T>
class Linear {
public:
    Linear() = default;
    Linear(int d_in, int d_out, Rng& rng, bool with_bias = true) {
        weight = Tensor<T>::param({d_in, d_out}, "");
        init::xavier_uniform(weight, d_in, d_out, rng);
        if (with_bias) bias = Tensor<T>::param({d_out}, "");
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        auto y = ops::matmul(x, weight);
        return bias.defined() ? ops::add(y, bias) : y;
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        weight.set_name(prefix + ".weight");
        out.push_back({weight.name(), weight});
        if (bias.defined()) {
            bias.set_name(prefix + ".bias");
            out.push_back({bias.name(), bias});
        }
    }

    Tensor<T> weight;
    Tensor<T> bias;
};

// Lookup table with differentiable row gather.
template <typename T>
class Embedding {
public:
    Embedding() = default;
    Embedding(int rows, int dim, Rng& rng, double stddev = 0.02) {
        table = Tensor<T>::param({rows, dim}, "");
        init::normal(table, stddev, rng);
    }

    Tensor<T> lookup(const std::vector<int>& ids) const { return ops::gather_rows(table, ids); }
    Tensor<T> prefix(int len) const { return ops::slice_rows(table, 0, len); }

    void collect(const std::string& prefix_name, ParamList<T>& out) {
        table.set_name(prefix_name + ".table");
        out.push_back({table.name(), table});
    }

    Tensor<T> table;
};

template <typename T>
class LayerNorm {
public:
    LayerNorm() = default;
    explicit LayerNorm(int dim, bool with_bias = true) {
        gain = Tensor<T>::param({dim}, "");
        for (auto& v : gain.value()) v = T(1);
        bias = Tensor<T>::param({dim}, "");
        if (!with_bias) bias.set_requires_grad(false);
        bias_trainable_ = with_bias;
    }

    Tensor<T> forward(const Tensor<T>& x) const { return ops::layer_norm(x, gain, bias); }

    void collect(const std::string& prefix, ParamList<T>& out) {
        gain.set_name(prefix + ".gain");
        out.push_back({gain.name(), gain});
        if (bias_trainable_) {
            bias.set_name(prefix + ".bias");
            out.push_back({bias.name(), bias});
        }
    }

    Tensor<T> gain;
    Tensor<T> bias;

private:
    bool bias_trainable_ = true;
};

// Stacked 1D conv stages: x <- mask(layer_norm(x + relu(conv(x)))). Padded
// rows are re-zeroed after every stage so pad content never leaks through
// the receptive field.
template <typename T>
class ConvBlock {
public:
    ConvBlock() = default;
    ConvBlock(int dim, int depth, int kernel_width, Rng& rng) {
        for (int l = 0; l < depth; ++l) {
            Stage s;
            s.kernel = Tensor<T>::param({kernel_width, dim, dim}, "");
            init::xavier_uniform(s.kernel, kernel_width * dim, kernel_width * dim, rng);
            s.bias = Tensor<T>::param({dim}, "");
            s.norm = LayerNorm<T>(dim);
            stages_.push_back(std::move(s));
        }
    }

    Tensor<T> forward(Tensor<T> x, const Tensor<T>& mask) const {
        for (const auto& s : stages_) {
            auto h = ops::relu(ops::conv1d(x, s.kernel, s.bias));
            x = ops::mul_rows(s.norm.forward(ops::add(x, h)), mask);
        }
        return x;
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        for (std::size_t l = 0; l < stages_.size(); ++l) {
            const std::string p = prefix + "." + std::to_string(l);
            stages_[l].kernel.set_name(p + ".kernel");
            out.push_back({stages_[l].kernel.name(), stages_[l].kernel});
            stages_[l].bias.set_name(p + ".bias");
            out.push_back({stages_[l].bias.name(), stages_[l].bias});
            stages_[l].norm.collect(p + ".norm", out);
        }
    }

    int depth() const { return static_cast<int>(stages_.size()); }

private:
    struct Stage {
        Tensor<T> kernel;  // [K x d x d]
        Tensor<T> bias;
        LayerNorm<T> norm;
    };
    std::vector<Stage> stages_;
};

// Scaled dot-product attention with h heads over [L x d] inputs. Key
// positions with mask 0 receive a -1e9 logit bias; self-attention and
// cross-attention differ only in what kv_src is.
template <typename T>
class MultiHeadAttention {
public:
    MultiHeadAttention() = default;
    MultiHeadAttention(int dim, int heads, Rng& rng) : dim_(dim), heads_(heads) {
        if (dim % heads != 0)
            throw ConfigError("attention: dim " + std::to_string(dim) +
                              " not divisible by heads " + std::to_string(heads));
        wq = Linear<T>(dim, dim, rng);
        // no key bias: it shifts every score in a row equally, which the
        // softmax cancels exactly
        wk = Linear<T>(dim, dim, rng, false);
        wv = Linear<T>(dim, dim, rng);
        wo = Linear<T>(dim, dim, rng);
    }

    Tensor<T> forward(const Tensor<T>& q_src, const Tensor<T>& kv_src, const Tensor<T>& kv_mask,
                      const RunCtx& ctx, std::vector<Tensor<T>>* attn_out = nullptr) const {
        if (mask_count(kv_mask) <= T(0))
            throw ShapeError("attention: every key position is masked, no valid target");
        const int dh = dim_ / heads_;
        const T inv_scale = T(1) / static_cast<T>(std::sqrt(static_cast<double>(dh)));
        auto q = wq.forward(q_src);
        auto k = wk.forward(kv_src);
        auto v = wv.forward(kv_src);
        auto bias = mask_bias(kv_mask);  // [L_kv], broadcast across query rows

        std::vector<Tensor<T>> heads;
        heads.reserve(heads_);
        for (int h = 0; h < heads_; ++h) {
            auto qh = ops::slice_cols(q, h * dh, dh);
            auto kh = ops::slice_cols(k, h * dh, dh);
            auto vh = ops::slice_cols(v, h * dh, dh);
            auto scores = ops::add(ops::scale(ops::matmul(qh, kh, false, true), inv_scale), bias);
            auto attn = ops::softmax(scores, 1);
            if (attn_out) attn_out->push_back(attn);
            if (ctx.train && ctx.attn_dropout)
                attn = ops::dropout(attn, ctx.dropout, *ctx.rng, true);
            heads.push_back(ops::matmul(attn, vh));
        }
        return wo.forward(ops::concat_cols(heads));
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        wq.collect(prefix + ".wq", out);
        wk.collect(prefix + ".wk", out);
        wv.collect(prefix + ".wv", out);
        wo.collect(prefix + ".wo", out);
    }

    Linear<T> wq, wk, wv, wo;

private:
    int dim_ = 0;
    int heads_ = 0;
};

// Additive attention pooling of [M x d] token features into one [1 x d] row.
template <typename T>
class AdditiveAttentionPool {
public:
    AdditiveAttentionPool() = default;
    AdditiveAttentionPool(int dim, Rng& rng) { w_alpha = Linear<T>(dim, 1, rng, false); }

    Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& mask,
                      Tensor<T>* alpha_out = nullptr) const {
        if (mask_count(mask) <= T(0))
            throw ShapeError("additive pool: no unmasked token to pool over");
        auto scores = ops::add(w_alpha.forward(x), ops::reshape(mask_bias(mask), {x.dim(0), 1}));
        auto alpha = ops::softmax(scores, 0);  // [M x 1]
        if (alpha_out) *alpha_out = alpha;
        return ops::matmul(alpha, x, true, false);  // [1 x d]
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        w_alpha.collect(prefix + ".alpha", out);
    }

    Linear<T> w_alpha;
};

// Post-norm transformer block: attention and a single affine feed-forward,
// each wrapped in residual + layer norm.
template <typename T>
class TransformerBlock {
public:
    TransformerBlock() = default;
    // final_norm_bias=false when the block's output only feeds a softmax
    // score head: a uniform row offset cancels there, so the bias is inert.
    TransformerBlock(int dim, int heads, Rng& rng, bool final_norm_bias = true)
        : attn(dim, heads, rng),
          ffn(dim, dim, rng),
          norm_attn(dim),
          norm_ffn(dim, final_norm_bias) {}

    Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& mask, const RunCtx& ctx) const {
        auto a = attn.forward(x, x, mask, ctx);
        if (ctx.train && ctx.sublayer_dropout) a = ops::dropout(a, ctx.dropout, *ctx.rng, true);
        auto h = norm_attn.forward(ops::add(x, a));
        auto f = ffn.forward(h);
        if (ctx.train && ctx.sublayer_dropout) f = ops::dropout(f, ctx.dropout, *ctx.rng, true);
        return norm_ffn.forward(ops::add(h, f));
    }

    void collect(const std::string& prefix, ParamList<T>& out) {
        attn.collect(prefix + ".attn", out);
        ffn.collect(prefix + ".ffn", out);
        norm_attn.collect(prefix + ".norm_attn", out);
        norm_ffn.collect(prefix + ".norm_ffn", out);
    }

    MultiHeadAttention<T> attn;
    Linear<T> ffn;
    LayerNorm<T> norm_attn, norm_ffn;
};

}  // namespace seqpan
