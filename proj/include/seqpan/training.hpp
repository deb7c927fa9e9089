#pragma once

#include <cmath>
#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "seqpan/data.hpp"
#include "seqpan/evaluation.hpp"
#include "seqpan/model.hpp"
#include "seqpan/serialize.hpp"

namespace seqpan {

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

// 0.5 * [XE(P_s, Y_s) + XE(P_e, Y_e)] for one sample; P are [N x 1] columns.
template <typename T>
Tensor<T> loc_loss(const Tensor<T>& p_start, const Tensor<T>& p_end, const Tensor<T>& y_start,
                   const Tensor<T>& y_end) {
    const int n = p_start.dim(0);
    auto xe_s = ops::cross_entropy(ops::reshape(p_start, {1, n}), ops::reshape(y_start, {1, n}));
    auto xe_e = ops::cross_entropy(ops::reshape(p_end, {1, n}), ops::reshape(y_end, {1, n}));
    return ops::scale(ops::add(xe_s, xe_e), T(0.5));
}

// Same quantity computed from the masked boundary scores through the fused
// log-softmax form; this is what training uses so gradients stay bounded
// when distributions sharpen.
template <typename T>
Tensor<T> loc_loss_scores(const Tensor<T>& s_start, const Tensor<T>& s_end,
                          const Tensor<T>& y_start, const Tensor<T>& y_end) {
    const int n = s_start.dim(0);
    auto xe_s =
        ops::cross_entropy_logits(ops::reshape(s_start, {1, n}), ops::reshape(y_start, {1, n}),
                                  Tensor<T>());
    auto xe_e = ops::cross_entropy_logits(ops::reshape(s_end, {1, n}),
                                          ops::reshape(y_end, {1, n}), Tensor<T>());
    return ops::scale(ops::add(xe_s, xe_e), T(0.5));
}

// Squared Frobenius norm of the off-diagonal label-embedding gram matrix;
// zero exactly when the rows of e_lab are mutually orthogonal.
template <typename T>
Tensor<T> orthogonality_penalty(const Tensor<T>& e_lab) {
    const int k = e_lab.dim(0);
    auto gram = ops::matmul(e_lab, e_lab, false, true);
    Tensor<T> off_mask = Tensor<T>::full({k, k}, T(1));
    for (int i = 0; i < k; ++i) off_mask.data()[i * k + i] = T(0);
    auto off = ops::mul(gram, off_mask);
    return ops::sum_all(ops::mul(off, off));
}

// Region-label cross entropy over unmasked frames. The orthogonality term is
// added at the batch level (it does not depend on the sample).
template <typename T>
Tensor<T> seq_xe_loss(const Tensor<T>& l_bar, const Tensor<T>& y_region, const Tensor<T>& vmask) {
    return ops::cross_entropy(l_bar, y_region, vmask);
}

// ---------------------------------------------------------------------------
// optimizer
// ---------------------------------------------------------------------------

inline double lr_schedule(int epoch, double lr0, int total_epochs) {
    if (epoch < 0 || epoch >= total_epochs)
        throw ConfigError("lr_schedule: epoch " + std::to_string(epoch) + " outside [0, " +
                          std::to_string(total_epochs) + ")");
    return lr0 * (1.0 - static_cast<double>(epoch) / total_epochs);
}

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;  // decoupled
    double clip_norm = 1.0;      // global norm; <= 0 disables
};

template <typename T>
class AdamOptimizer {
public:
    explicit AdamOptimizer(ParamList<T>& params, AdamOptions opt = {})
        : params_(&params), opt_(opt) {
        for (auto& p : params) {
            m_.emplace_back(p.tensor.numel(), T(0));
            v_.emplace_back(p.tensor.numel(), T(0));
        }
    }

    // Scales all gradients so the global norm is at most clip_norm; a norm
    // already within the bound leaves them bit-identical. Missing gradients
    // count as zero. NaN/Inf aborts the step naming the offending parameter.
    double clip_gradients() {
        double sq = 0.0;
        for (auto& p : *params_) {
            if (!p.tensor.has_grad()) continue;
            const auto& g = p.tensor.grad();
            for (T v : g)
                if (!std::isfinite(static_cast<double>(v)))
                    throw NumericError("non-finite gradient in parameter '" + p.name + "'");
            sq += static_cast<double>(kern::dot(g.size(), g.data(), g.data()));
        }
        const double norm = std::sqrt(sq);
        if (opt_.clip_norm > 0.0 && norm > opt_.clip_norm) {
            const T s = static_cast<T>(opt_.clip_norm / norm);
            for (auto& p : *params_) {
                if (!p.tensor.has_grad()) continue;
                auto& g = p.tensor.grad_data();
                kern::scale(g.size(), s, g.data(), g.data());
            }
        }
        return norm;
    }

    void step(double lr) {
        clip_gradients();
        ++t_;
        const double bc1 = 1.0 - std::pow(opt_.beta1, t_);
        const double bc2 = 1.0 - std::pow(opt_.beta2, t_);
        for (std::size_t i = 0; i < params_->size(); ++i) {
            auto& p = (*params_)[i].tensor;
            const T* g = p.has_grad() ? p.grad().data() : nullptr;
            T* m = m_[i].data();
            T* v = v_[i].data();
            T* w = p.data();
            for (std::size_t k = 0; k < p.numel(); ++k) {
                const double gk = g ? static_cast<double>(g[k]) : 0.0;
                const double mk = opt_.beta1 * m[k] + (1.0 - opt_.beta1) * gk;
                const double vk = opt_.beta2 * v[k] + (1.0 - opt_.beta2) * gk * gk;
                m[k] = static_cast<T>(mk);
                v[k] = static_cast<T>(vk);
                const double update = lr * (mk / bc1) / (std::sqrt(vk / bc2) + opt_.eps);
                w[k] = static_cast<T>(w[k] - update - lr * opt_.weight_decay * w[k]);
            }
        }
    }

    void zero_grad() {
        for (auto& p : *params_) p.tensor.drop_grad();
    }

    std::int64_t step_count() const { return t_; }
    const AdamOptions& options() const { return opt_; }

private:
    ParamList<T>* params_;
    AdamOptions opt_;
    std::vector<std::vector<T>> m_, v_;
    std::int64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// batching
// ---------------------------------------------------------------------------

template <typename T>
ModelInput<T> build_input(const Sample& s, const Tensor<T>& word_table, const ModelConfig& cfg) {
    const int n = cfg.max_video_len;
    const int m = cfg.max_query_len;
    if (static_cast<int>(s.vmask.size()) != n)
        throw ShapeError("sample '" + s.video_id + "' was fitted to " +
                         std::to_string(s.vmask.size()) + " positions, model expects " +
                         std::to_string(n));
    ModelInput<T> in;
    in.video = Tensor<T>::zeros({n, static_cast<int>(s.features.size()) / n});
    for (std::size_t i = 0; i < s.features.size(); ++i)
        in.video.data()[i] = static_cast<T>(s.features[i]);
    in.vmask = Tensor<T>::zeros({n});
    for (int i = 0; i < n; ++i) in.vmask.data()[i] = static_cast<T>(s.vmask[i]);

    std::vector<int> ids(m, 0);
    in.qmask = Tensor<T>::zeros({m});
    const int q_len = std::min<int>(m, static_cast<int>(s.token_ids.size()));
    for (int i = 0; i < q_len; ++i) {
        ids[i] = s.token_ids[i];
        in.qmask.data()[i] = T(1);
    }
    in.query = ops::gather_rows(word_table, ids);
    return in;
}

template <typename T>
struct SampleTargets {
    Tensor<T> y_start;  // [N], one-hot
    Tensor<T> y_end;
    Tensor<T> y_region;  // [N x 4] (or [N x 2] for foreground/background)
};

template <typename T>
SampleTargets<T> build_targets(const Sample& s, const ModelConfig& cfg) {
    const int n = cfg.max_video_len;
    SampleTargets<T> t;
    t.y_start = Tensor<T>::zeros({n});
    t.y_end = Tensor<T>::zeros({n});
    t.y_start.data()[s.i_start] = T(1);
    t.y_end.data()[s.i_end] = T(1);
    if (cfg.match == MatchMode::none) return t;
    std::vector<int> region;
    if (cfg.match == MatchMode::fb_match)
        region = fb_labels(s.i_start, s.i_end, s.n_valid, cfg.eta);
    else
        region = assign_bieo(s.i_start, s.i_end, s.n_valid, cfg.eta).labels;
    region.resize(n, cfg.match == MatchMode::fb_match ? 0 : kLabelO);
    t.y_region = one_hot<T>(region, cfg.match_classes());
    return t;
}

template <typename T>
struct BatchLosses {
    Tensor<T> total;
    Tensor<T> loc;
    Tensor<T> seq;  // undefined when the matcher is disabled
};

// Mean sample loss over a batch; the orthogonality penalty enters once.
template <typename T>
BatchLosses<T> batch_loss(const Model<T>& model,
                          const std::vector<ForwardTrace<T>>& traces,
                          const std::vector<const Sample*>& samples,
                          const std::vector<ModelInput<T>>& inputs, const ModelConfig& cfg) {
    BatchLosses<T> out;
    Tensor<T> loc_sum, seq_sum;
    for (std::size_t i = 0; i < traces.size(); ++i) {
        auto targets = build_targets<T>(*samples[i], cfg);
        auto loc =
            loc_loss_scores(traces[i].s_start, traces[i].s_end, targets.y_start, targets.y_end);
        loc_sum = loc_sum.defined() ? ops::add(loc_sum, loc) : loc;
        if (cfg.match != MatchMode::none) {
            auto seq = ops::cross_entropy_logits(traces[i].match_logits, targets.y_region,
                                                 inputs[i].vmask);
            seq_sum = seq_sum.defined() ? ops::add(seq_sum, seq) : seq;
        }
    }
    const T inv = T(1) / static_cast<T>(traces.size());
    out.loc = ops::scale(loc_sum, inv);
    if (cfg.match == MatchMode::none) {
        out.total = out.loc;
        return out;
    }
    out.seq = ops::scale(seq_sum, inv);
    if (cfg.match == MatchMode::sq_match)
        out.seq = ops::add(out.seq, orthogonality_penalty(model.matcher.e_lab));
    out.total = ops::add(out.loc, out.seq);
    return out;
}

// ---------------------------------------------------------------------------
// evaluation runner (forward-only; parallel across samples)
// ---------------------------------------------------------------------------

template <typename T>
struct EvalOutput {
    EvalReport report;
    std::vector<Prediction> predictions;
};

template <typename T>
EvalOutput<T> evaluate(const Model<T>& model, const Dataset& ds, const Tensor<T>& word_table,
                       int threads = 1, std::uint64_t noise_seed = 0) {
    if (ds.samples.empty()) throw ConfigError("evaluate: empty dataset");
    const ModelConfig& cfg = model.config();
    std::vector<Prediction> preds(ds.samples.size());
    std::vector<double> ious(ds.samples.size());

    auto run_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const Sample& s = ds.samples[i];
            Rng noise(noise_seed ^ (0x2545F4914F6CDD1Dull * (i + 1)));
            RunCtx ctx;
            ctx.train = false;
            ctx.rng = &noise;
            auto input = build_input<T>(s, word_table, cfg);
            auto trace = model.forward(input, ctx);

            std::vector<double> p_s(cfg.max_video_len), p_e(cfg.max_video_len),
                mask(cfg.max_video_len);
            for (int k = 0; k < cfg.max_video_len; ++k) {
                p_s[k] = static_cast<double>(trace.p_start.data()[k]);
                p_e[k] = static_cast<double>(trace.p_end.data()[k]);
                mask[k] = static_cast<double>(input.vmask.data()[k]);
            }
            auto [a, b] = infer_span(p_s, p_e, mask);
            Prediction p;
            p.video_id = s.video_id;
            p.i_start = a;
            p.i_end = b;
            p.t_start = index_to_time(a, s.duration, s.n_valid);
            p.t_end = index_to_time(b, s.duration, s.n_valid);
            p.score = p_s[a] * p_e[b];
            preds[i] = p;
            ious[i] = iou({p.t_start, p.t_end}, {s.t_start, s.t_end});
        }
    };

    if (threads <= 1 || ds.samples.size() < 2) {
        run_range(0, ds.samples.size());
    } else {
        const std::size_t nt = std::min<std::size_t>(threads, ds.samples.size());
        std::vector<std::thread> pool;
        const std::size_t chunk = (ds.samples.size() + nt - 1) / nt;
        for (std::size_t t = 0; t < nt; ++t) {
            const std::size_t lo = t * chunk;
            const std::size_t hi = std::min(ds.samples.size(), lo + chunk);
            if (lo < hi) pool.emplace_back(run_range, lo, hi);
        }
        for (auto& th : pool) th.join();
    }

    EvalOutput<T> out;
    out.report = aggregate(ious);
    out.predictions = std::move(preds);
    return out;
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

struct TrainOptions {
    int epochs = 100;
    int batch_size = 16;
    double lr0 = 1e-4;
    AdamOptions adam;
    int patience = 10;
    std::uint64_t seed = 0;
    int eval_threads = 1;
    std::string checkpoint_path;      // best parameters land here when set
    std::ostream* log_stream = nullptr;
};

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double r1_03 = 0.0, r1_05 = 0.0, r1_07 = 0.0, miou = 0.0;

    std::string line() const {
        std::ostringstream os;
        os << epoch << ',' << lr << ',' << train_loss << ',' << r1_03 << ',' << r1_05 << ','
           << r1_07 << ',' << miou;
        return os.str();
    }
};

struct TrainResult {
    std::vector<EpochLog> log;
    int best_epoch = -1;
    double best_miou = -1.0;
    EvalReport best_report;
    bool stopped_early = false;
};

template <typename T>
TrainResult train_loop(Model<T>& model, const Dataset& train_ds, const Dataset& val_ds,
                       const Tensor<T>& word_table, const TrainOptions& opt) {
    if (train_ds.samples.empty()) throw ConfigError("train_loop: empty training dataset");
    if (val_ds.samples.empty()) throw ConfigError("train_loop: empty validation dataset");
    const ModelConfig& cfg = model.config();

    AdamOptimizer<T> optimizer(model.params(), opt.adam);
    Rng train_rng(opt.seed);
    TrainResult result;
    std::vector<std::vector<T>> best_params;
    int stale_epochs = 0;

    std::vector<std::size_t> order(train_ds.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        const double lr = lr_schedule(epoch, opt.lr0, opt.epochs);
        train_rng.shuffle(order.begin(), order.end());

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
            const std::size_t stop = std::min(order.size(), start + opt.batch_size);
            Tape<T> tape;
            TapeScope<T> scope(tape);
            RunCtx ctx;
            ctx.rng = &train_rng;
            ctx.train = true;
            ctx.dropout = cfg.dropout;
            ctx.attn_dropout = cfg.attn_dropout;
            ctx.sublayer_dropout = cfg.sublayer_dropout;

            std::vector<const Sample*> samples;
            std::vector<ModelInput<T>> inputs;
            std::vector<ForwardTrace<T>> traces;
            for (std::size_t k = start; k < stop; ++k) {
                samples.push_back(&train_ds.samples[order[k]]);
                inputs.push_back(build_input<T>(*samples.back(), word_table, cfg));
                traces.push_back(model.forward(inputs.back(), ctx));
            }
            auto losses = batch_loss(model, traces, samples, inputs, cfg);
            tape.backward(losses.total);
            optimizer.step(lr);
            optimizer.zero_grad();
            loss_sum += static_cast<double>(losses.total.item()) * samples.size();
        }

        auto eval_out = evaluate(model, val_ds, word_table, opt.eval_threads);
        EpochLog log;
        log.epoch = epoch;
        log.lr = lr;
        log.train_loss = loss_sum / train_ds.samples.size();
        log.r1_03 = eval_out.report.r1_03;
        log.r1_05 = eval_out.report.r1_05;
        log.r1_07 = eval_out.report.r1_07;
        log.miou = eval_out.report.miou;
        result.log.push_back(log);
        if (opt.log_stream) (*opt.log_stream) << log.line() << "\n" << std::flush;

        if (log.miou > result.best_miou) {
            result.best_miou = log.miou;
            result.best_epoch = epoch;
            result.best_report = eval_out.report;
            best_params.clear();
            for (const auto& p : model.params()) best_params.push_back(p.tensor.value());
            if (!opt.checkpoint_path.empty()) save_model(opt.checkpoint_path, model.params());
            stale_epochs = 0;
        } else if (++stale_epochs >= opt.patience) {
            result.stopped_early = true;
            break;
        }
    }

    // leave the model holding its best parameters
    if (!best_params.empty())
        for (std::size_t i = 0; i < best_params.size(); ++i)
            model.params()[i].tensor.value() = best_params[i];
    return result;
}

}  // namespace seqpan
