#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "seqpan/gradcheck.hpp"
#include "seqpan/layers.hpp"

using namespace seqpan;
using D = Tensor<double>;

namespace {

D random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    D t = D::zeros(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
    return t;
}

void set_identity(Linear<double>& lin) {
    std::fill(lin.weight.value().begin(), lin.weight.value().end(), 0.0);
    const int d = lin.weight.dim(0);
    for (int i = 0; i < d; ++i) lin.weight.data()[i * lin.weight.dim(1) + i] = 1.0;
    if (lin.bias.defined()) std::fill(lin.bias.value().begin(), lin.bias.value().end(), 0.0);
}

RunCtx eval_ctx() {
    RunCtx ctx;
    ctx.train = false;
    return ctx;
}

}  // namespace

TEST_CASE("linear layer applies an affine map") {
    Rng rng(1);
    Linear<double> id(3, 3, rng);
    set_identity(id);
    D x = random_tensor({4, 3}, rng);
    CHECK(id.forward(x).value() == x.value());

    // weights [1x2]=[1,1], bias [1], input column [2,3] -> 6
    Linear<double> lin(2, 1, rng);
    lin.weight.value() = {1.0, 1.0};
    lin.bias.value() = {1.0};
    D col = D::from({1, 2}, {2.0, 3.0});
    CHECK(lin.forward(col).item() == doctest::Approx(6.0).epsilon(1e-12));

    CHECK_THROWS_AS(lin.forward(D::zeros({1, 3})), ShapeError);

    Linear<double> l2(3, 4, rng);
    D xin = random_tensor({5, 3}, rng).set_requires_grad(true);
    l2.weight.set_requires_grad(true);
    l2.bias.set_requires_grad(true);
    auto rep = grad_check_tensors<double>(
        [&]() {
            auto y = l2.forward(xin);
            return ops::sum_all(ops::mul(y, y));
        },
        {xin, l2.weight, l2.bias}, 1e-5);
    CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("conv block: depth, masking and shape") {
    Rng rng(2);
    // depth 0 is the identity
    ConvBlock<double> empty(8, 0, 7, rng);
    D x = random_tensor({6, 8}, rng);
    D mask = D::full({6}, 1.0);
    CHECK(empty.forward(x, mask).value() == x.value());

    // masked rows stay exactly zero; shape is preserved
    ConvBlock<double> block(16, 2, 7, rng);
    D x2 = random_tensor({12, 16}, rng);
    D mask2 = D::zeros({12});
    for (int i = 0; i < 9; ++i) mask2.data()[i] = 1.0;
    auto y = block.forward(x2, mask2);
    CHECK(y.shape() == x2.shape());
    for (int i = 9; i < 12; ++i)
        for (int c = 0; c < 16; ++c) CHECK(y.value()[i * 16 + c] == 0.0);

    // spec-scale shape contract
    ConvBlock<double> big(128, 2, 7, rng);
    D xb = random_tensor({64, 128}, rng);
    CHECK(big.forward(xb, D::full({64}, 1.0)).shape() == std::vector<int>{64, 128});
}

TEST_CASE("attention: masking, weights and degenerate cases") {
    Rng rng(3);
    const int d = 8, L = 5;
    MultiHeadAttention<double> mha(d, 2, rng);
    D x = random_tensor({L, d}, rng);
    D kv = random_tensor({L, d}, rng);

    // single valid key -> weight exactly 1 on it regardless of scores
    D one_valid = D::zeros({L});
    one_valid.data()[2] = 1.0;
    std::vector<D> attn;
    mha.forward(x, kv, one_valid, eval_ctx(), &attn);
    for (const auto& a : attn)
        for (int i = 0; i < L; ++i)
            for (int j = 0; j < L; ++j)
                CHECK(a.value()[i * L + j] == (j == 2 ? 1.0 : 0.0));

    // attention rows sum to 1 over unmasked keys
    D mask = D::from({L}, {1, 1, 1, 0, 0});
    attn.clear();
    mha.forward(x, kv, mask, eval_ctx(), &attn);
    for (const auto& a : attn)
        for (int i = 0; i < L; ++i) {
            double s = 0;
            for (int j = 0; j < L; ++j) s += a.value()[i * L + j];
            CHECK(std::fabs(s - 1.0) < 1e-9);
        }

    // all keys masked -> error
    CHECK_THROWS_AS(mha.forward(x, kv, D::zeros({L}), eval_ctx()), ShapeError);
}

TEST_CASE("attention with zero query projection averages the value rows") {
    Rng rng(4);
    const int d = 2, L = 3;
    MultiHeadAttention<double> mha(d, 1, rng);
    set_identity(mha.wq);
    set_identity(mha.wk);
    set_identity(mha.wv);
    set_identity(mha.wo);
    std::fill(mha.wq.weight.value().begin(), mha.wq.weight.value().end(), 0.0);  // uniform scores

    D kv = D::from({L, d}, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
    D q = random_tensor({L, d}, rng);
    auto y = mha.forward(q, kv, D::full({L}, 1.0), eval_ctx());
    for (int i = 0; i < L; ++i) {
        CHECK(y.value()[i * d + 0] == doctest::Approx(3.0).epsilon(1e-12));
        CHECK(y.value()[i * d + 1] == doctest::Approx(4.0).epsilon(1e-12));
    }
}

TEST_CASE("masking invariance: padded key content cannot leak") {
    Rng rng(5);
    const int d = 8, L = 6;
    MultiHeadAttention<double> mha(d, 2, rng);
    D q = random_tensor({L, d}, rng);
    D kv1 = random_tensor({L, d}, rng);
    D kv2 = D::from(kv1.shape(), kv1.value());
    D mask = D::from({L}, {1, 1, 1, 1, 0, 0});
    for (int i = 4; i < 6; ++i)
        for (int c = 0; c < d; ++c) kv2.data()[i * d + c] = rng.uniform(-100.0, 100.0);

    auto y1 = mha.forward(q, kv1, mask, eval_ctx());
    auto y2 = mha.forward(q, kv2, mask, eval_ctx());
    CHECK(y1.value() == y2.value());  // exact equality in double
}

TEST_CASE("permuting keys together with their mask only reorders attention") {
    Rng rng(6);
    const int d = 8, L = 5;
    MultiHeadAttention<double> mha(d, 2, rng);
    AdditiveAttentionPool<double> pool(d, rng);
    D q = random_tensor({2, d}, rng);
    D kv = random_tensor({L, d}, rng);
    D mask = D::from({L}, {1, 0, 1, 1, 0});

    std::vector<int> perm = {3, 0, 4, 1, 2};
    D kv_p = D::zeros({L, d});
    D mask_p = D::zeros({L});
    for (int i = 0; i < L; ++i) {
        mask_p.data()[i] = mask.value()[perm[i]];
        for (int c = 0; c < d; ++c) kv_p.data()[i * d + c] = kv.value()[perm[i] * d + c];
    }

    auto y1 = mha.forward(q, kv, mask, eval_ctx());
    auto y2 = mha.forward(q, kv_p, mask_p, eval_ctx());
    for (std::size_t i = 0; i < y1.numel(); ++i)
        CHECK(y1.value()[i] == doctest::Approx(y2.value()[i]).epsilon(1e-12));

    auto p1 = pool.forward(kv, mask);
    auto p2 = pool.forward(kv_p, mask_p);
    for (std::size_t i = 0; i < p1.numel(); ++i)
        CHECK(p1.value()[i] == doctest::Approx(p2.value()[i]).epsilon(1e-12));
}

TEST_CASE("positional embedding table") {
    Rng rng(7);
    Embedding<double> pos(10, 4, rng);

    // zero table -> identity add
    std::fill(pos.table.value().begin(), pos.table.value().end(), 0.0);
    D x = random_tensor({6, 4}, rng);
    auto y = ops::add(x, pos.prefix(6));
    CHECK(y.value() == x.value());

    // gradient wrt the table is the sum of output grads at each position
    init::normal(pos.table, 0.02, rng);
    Tape<double> tape;
    {
        TapeScope<double> scope(tape);
        auto out = ops::add(x, pos.prefix(6));
        tape.backward(ops::sum_all(out));
    }
    const auto& g = pos.table.grad();
    for (int r = 0; r < 10; ++r)
        for (int c = 0; c < 4; ++c) CHECK(g[r * 4 + c] == (r < 6 ? 1.0 : 0.0));

    CHECK_THROWS_AS(pos.prefix(11), ShapeError);
}

TEST_CASE("additive attention pooling") {
    Rng rng(8);
    const int d = 6;
    AdditiveAttentionPool<double> pool(d, rng);

    // a single token pools to itself
    D x1 = random_tensor({1, d}, rng);
    CHECK(pool.forward(x1, D::full({1}, 1.0)).value() == x1.value());

    // zero scoring weights -> uniform average over unmasked tokens
    std::fill(pool.w_alpha.weight.value().begin(), pool.w_alpha.weight.value().end(), 0.0);
    D x = random_tensor({4, d}, rng);
    D mask = D::from({4}, {1, 1, 1, 0});
    D alpha;
    auto pooled = pool.forward(x, mask, &alpha);
    double asum = 0;
    for (int i = 0; i < 4; ++i) asum += alpha.value()[i];
    CHECK(std::fabs(asum - 1.0) < 1e-9);
    for (int c = 0; c < d; ++c) {
        double mean = (x.value()[0 * d + c] + x.value()[1 * d + c] + x.value()[2 * d + c]) / 3.0;
        CHECK(pooled.value()[c] == doctest::Approx(mean).epsilon(1e-12));
    }

    CHECK_THROWS_AS(pool.forward(x, D::zeros({4})), ShapeError);
}

TEST_CASE("attention and transformer block pass gradient checks") {
    Rng rng(9);
    const int d = 8, L = 4;
    MultiHeadAttention<double> mha(d, 2, rng);
    TransformerBlock<double> trm(d, 2, rng);
    D x = random_tensor({L, d}, rng).set_requires_grad(true);
    D mask = D::from({L}, {1, 1, 1, 0});

    ParamList<double> params;
    mha.collect("mha", params);
    trm.collect("trm", params);
    std::vector<D> tensors = {x};
    for (auto& p : params) tensors.push_back(p.tensor);

    RunCtx ctx = eval_ctx();
    Rng dir_rng(77);
    double err = grad_check_directional<double>(
        [&]() {
            auto y = mha.forward(x, x, mask, ctx);
            auto z = trm.forward(y, mask, ctx);
            return ops::sum_all(ops::mul(z, z));
        },
        tensors, dir_rng);
    CHECK(err < 1e-4);
}
