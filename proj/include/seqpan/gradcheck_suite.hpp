#pragma once

#include <string>
#include <vector>

#include "seqpan/gradcheck.hpp"
#include "seqpan/training.hpp"

// Finite-difference verification suite: every primitive, then the full model
// loss on a toy batch. Double precision throughout, dropout off, sampling
// noise frozen by re-seeding the noise stream on every forward evaluation.
namespace seqpan {

struct GradCheckCase {
    std::string name;
    double max_rel_err = 0.0;
    double threshold = 1e-4;
    bool passed() const { return max_rel_err < threshold; }
};

struct GradCheckDims {
    int d = 8;
    int heads = 2;
    int n = 6;
    int m = 4;
    int batch = 2;
    int d_v = 16;
    int d_w = 12;
};

namespace detail_gc {

inline Tensor<double> uniform_tensor(std::vector<int> shape, Rng& rng, double lo, double hi) {
    auto t = Tensor<double>::zeros(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
    return t;
}

}  // namespace detail_gc

inline std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed,
                                                      const GradCheckDims& dims = {},
                                                      double eps = 1e-5) {
    using D = Tensor<double>;
    using detail_gc::uniform_tensor;
    std::vector<GradCheckCase> cases;
    Rng rng(seed);

    auto add_case = [&](const std::string& name, const std::function<Tensor<double>()>& loss,
                        std::vector<D> tensors, double threshold = 1e-4) {
        auto rep = grad_check_tensors<double>(loss, std::move(tensors), eps);
        cases.push_back({name, rep.max_rel_err, threshold});
    };

    // --- elementwise primitives ---
    {
        D x = uniform_tensor({3, 5}, rng, -1.2, 1.2).set_requires_grad(true);
        add_case("sigmoid", [&]() { return ops::sum_all(ops::mul(ops::sigmoid(x), x)); }, {x});
        add_case("exp", [&]() { return ops::sum_all(ops::mul(ops::exp(x), x)); }, {x});
        add_case("relu+scale",
                 [&]() { return ops::sum_all(ops::scale(ops::relu(x), 1.7)); }, {x});
    }
    {
        D x = uniform_tensor({8}, rng, 0.3, 2.0).set_requires_grad(true);
        add_case("log", [&]() { return ops::sum_all(ops::mul(ops::log(x), x)); }, {x});
    }
    {
        D a = uniform_tensor({4, 3}, rng, -1, 1).set_requires_grad(true);
        D b = uniform_tensor({3}, rng, -1, 1).set_requires_grad(true);
        D c = uniform_tensor({1}, rng, 0.5, 1.5).set_requires_grad(true);
        add_case("add/sub/mul with broadcasting",
                 [&]() {
                     auto t = ops::mul(ops::add(a, b), ops::sub(a, c));
                     return ops::sum_all(ops::mul(t, t));
                 },
                 {a, b, c});
    }

    // --- matmul in every transpose mode plus the batched form ---
    for (bool ta : {false, true}) {
        for (bool tb : {false, true}) {
            D a = uniform_tensor(ta ? std::vector<int>{4, 3} : std::vector<int>{3, 4}, rng, -1, 1)
                      .set_requires_grad(true);
            D b = uniform_tensor(tb ? std::vector<int>{5, 4} : std::vector<int>{4, 5}, rng, -1, 1)
                      .set_requires_grad(true);
            std::string name = std::string("matmul(") + (ta ? "T" : "N") + (tb ? "T" : "N") + ")";
            add_case(name,
                     [&, ta, tb]() {
                         auto y = ops::matmul(a, b, ta, tb);
                         return ops::sum_all(ops::mul(y, y));
                     },
                     {a, b});
        }
    }
    {
        D a = uniform_tensor({2, 3, 4}, rng, -1, 1).set_requires_grad(true);
        D b = uniform_tensor({2, 4, 3}, rng, -1, 1).set_requires_grad(true);
        add_case("matmul(batched)",
                 [&]() {
                     auto y = ops::matmul(a, b);
                     return ops::sum_all(ops::mul(y, y));
                 },
                 {a, b});
    }

    // --- softmax on both axes ---
    for (int axis : {0, 1}) {
        D x = uniform_tensor({4, 6}, rng, -2, 2).set_requires_grad(true);
        add_case("softmax(axis=" + std::to_string(axis) + ")",
                 [&, axis]() {
                     auto y = ops::softmax(x, axis);
                     return ops::sum_all(ops::mul(y, y));
                 },
                 {x});
    }

    // --- conv1d ---
    {
        D x = uniform_tensor({8, 3}, rng, -1, 1).set_requires_grad(true);
        D k = uniform_tensor({5, 3, 3}, rng, -0.6, 0.6).set_requires_grad(true);
        D b = uniform_tensor({3}, rng, -0.4, 0.4).set_requires_grad(true);
        add_case("conv1d",
                 [&]() {
                     auto y = ops::conv1d(x, k, b);
                     return ops::sum_all(ops::mul(y, y));
                 },
                 {x, k, b});
    }

    // --- layer_norm ---
    {
        D x = uniform_tensor({5, 6}, rng, -1.5, 1.5).set_requires_grad(true);
        D g = uniform_tensor({6}, rng, 0.5, 1.5).set_requires_grad(true);
        D b = uniform_tensor({6}, rng, -0.5, 0.5).set_requires_grad(true);
        add_case("layer_norm",
                 [&]() {
                     auto y = ops::layer_norm(x, g, b);
                     return ops::sum_all(ops::mul(y, y));
                 },
                 {x, g, b});
    }

    // --- masked cross entropy on softmax rows ---
    {
        D logits = uniform_tensor({4, 5}, rng, -1.5, 1.5).set_requires_grad(true);
        D target = D::zeros({4, 5});
        for (int r = 0; r < 4; ++r)
            target.data()[r * 5 + rng.uniform_int(0, 4)] = 1.0;
        D mask = D::from({4}, {1, 1, 1, 0});
        add_case("cross_entropy",
                 [&]() { return ops::cross_entropy(ops::softmax(logits, 1), target, mask); },
                 {logits});
    }

    // --- straight-through: analytic hard-path gradient vs finite differences
    //     of the soft relaxation at the same noise realization ---
    {
        const double tau = 1.0;  // unsaturated: every relaxation gradient stays measurable
        D noise = sample_gumbel<double>({dims.n, 4}, rng);
        D coeff = uniform_tensor({dims.n, 4}, rng, -1, 1);
        D x = uniform_tensor({dims.n, 4}, rng, -1.5, 1.5).set_requires_grad(true);
        auto soft_of = [&]() {
            return ops::softmax(ops::scale(ops::add(x, noise), 1.0 / tau), 1);
        };
        x.drop_grad();
        Tape<double> tape;
        {
            TapeScope<double> scope(tape);
            auto hard = ops::straight_through_onehot(soft_of());
            tape.backward(ops::sum_all(ops::mul(coeff, hard)));
        }
        auto analytic = x.grad();
        double worst = 0.0;
        {
            TapeSuspend<double> suspend;
            for (std::size_t i = 0; i < x.numel(); ++i) {
                const double saved = x.data()[i];
                x.data()[i] = saved + eps;
                const double up = ops::sum_all(ops::mul(coeff, soft_of())).item();
                x.data()[i] = saved - eps;
                const double down = ops::sum_all(ops::mul(coeff, soft_of())).item();
                x.data()[i] = saved;
                worst = std::max(worst, rel_err(analytic[i], (up - down) / (2.0 * eps)));
            }
        }
        cases.push_back({"straight-through vs relaxation", worst, 1e-4});
    }

    // --- the full model loss on a toy batch, every parameter entry ---
    {
        ModelConfig cfg;
        cfg.d = dims.d;
        cfg.heads = dims.heads;
        cfg.n_sgpa = 1;
        cfg.max_video_len = dims.n;
        cfg.max_query_len = dims.m;
        cfg.video_feat_dim = dims.d_v;
        cfg.word_dim = dims.d_w;
        cfg.conv_depth = 1;
        cfg.conv_kernel = 3;
        cfg.dropout = 0.0;
        cfg.tau = 1.0;  // keeps relaxation probabilities off the XE clamp
        Rng init_rng(seed ^ 0xabcdef);
        Model<double> model(cfg, init_rng);
        // healthy parameter magnitudes keep every gradient entry out of the
        // finite-difference noise floor
        for (auto& p : model.params())
            for (auto& v : p.tensor.value()) v += init_rng.uniform(-0.4, 0.4);

        std::vector<Sample> samples(dims.batch);
        std::vector<ModelInput<double>> inputs;
        Rng data_rng(seed ^ 0x1234567);
        for (int b = 0; b < dims.batch; ++b) {
            Sample& s = samples[b];
            s.video_id = "toy" + std::to_string(b);
            s.n_valid = dims.n - b;  // one sample carries padding
            s.i_start = 1;
            s.i_end = std::max(1, s.n_valid - 2);
            ModelInput<double> in;
            in.video = uniform_tensor({dims.n, dims.d_v}, data_rng, -1, 1);
            in.query = uniform_tensor({dims.m, dims.d_w}, data_rng, -1, 1);
            in.vmask = Tensor<double>::zeros({dims.n});
            in.qmask = Tensor<double>::zeros({dims.m});
            for (int i = 0; i < s.n_valid; ++i) in.vmask.data()[i] = 1.0;
            for (int i = 0; i < dims.m - b; ++i) in.qmask.data()[i] = 1.0;
            inputs.push_back(std::move(in));
        }
        std::vector<const Sample*> sample_ptrs;
        for (auto& s : samples) sample_ptrs.push_back(&s);

        const std::uint64_t noise_seed = seed ^ 0x5eed;
        auto loss_fn = [&]() {
            Rng noise(noise_seed);  // frozen: identical draws on every call
            RunCtx ctx;
            ctx.rng = &noise;
            ctx.train = true;
            ctx.dropout = 0.0;
            // central differences need the smooth surrogate; the hard path's
            // straight-through gradient is checked against it separately
            ctx.relaxed_labels = true;
            std::vector<ForwardTrace<double>> traces;
            for (int b = 0; b < dims.batch; ++b) traces.push_back(model.forward(inputs[b], ctx));
            return batch_loss(model, traces, sample_ptrs, inputs, cfg).total;
        };
        std::vector<D> params;
        for (auto& p : model.params()) params.push_back(p.tensor);
        auto rep = grad_check_tensors<double>(loss_fn, params, eps);
        cases.push_back({"full model loss (" + std::to_string(params.size()) + " tensors, worst: " +
                             rep.worst_tensor + ")",
                         rep.max_rel_err, 1e-4});
    }

    return cases;
}

}  // namespace seqpan
