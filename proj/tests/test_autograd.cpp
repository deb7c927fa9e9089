#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "seqpan/gradcheck.hpp"
#include "seqpan/ops.hpp"
#include "seqpan/rng.hpp"

using namespace seqpan;
using D = Tensor<double>;

namespace {

D random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.5, double hi = 1.5) {
    D t = D::zeros(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("elementwise forward values") {
    D x = D::from({1}, {0.0});
    CHECK(ops::sigmoid(x).item() == doctest::Approx(0.5));

    D a = D::from({2}, {1.0, 2.0});
    D b = D::from({2}, {3.0, 4.0});
    D h = ops::hadamard(a, b);
    CHECK(h.value() == std::vector<double>{3.0, 8.0});

    CHECK_THROWS_AS(ops::add(D::zeros({2, 3}), D::zeros({3, 2})), ShapeError);
    CHECK_THROWS_AS(ops::log(D::from({1}, {-1.0})), NumericError);
    try {
        ops::add(D::zeros({2, 3}), D::zeros({3, 2}));
    } catch (const ShapeError& e) {
        std::string msg = e.what();
        CHECK(msg.find("[2x3]") != std::string::npos);
        CHECK(msg.find("[3x2]") != std::string::npos);
    }
}

TEST_CASE("sigmoid derivative at zero matches central differences") {
    double err = grad_check<double>(
        [](const D& x) { return ops::sum_all(ops::sigmoid(x)); }, D::from({1}, {0.0}), 1e-5);
    CHECK(err < 1e-8);
    // analytic value is 0.25
    Tape<double> tape;
    D x = D::from({1}, {0.0}).set_requires_grad(true);
    {
        TapeScope<double> scope(tape);
        tape.backward(ops::sum_all(ops::sigmoid(x)));
    }
    CHECK(x.grad()[0] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("matmul forward values") {
    D eye = D::from({2, 2}, {1, 0, 0, 1});
    D a = D::from({2, 2}, {1, 2, 3, 4});
    CHECK(ops::matmul(eye, a).value() == a.value());

    D b = D::from({2, 1}, {5, 6});
    D c = ops::matmul(a, b);
    CHECK(c.value() == std::vector<double>{17, 39});

    CHECK_THROWS_AS(ops::matmul(D::zeros({2, 3}), D::zeros({2, 3})), ShapeError);
}

TEST_CASE("matmul gradients match finite differences") {
    Rng rng(3);
    D b = random_tensor({3, 4}, rng);
    double err = grad_check<double>(
        [&](const D& a) { return ops::sum_all(ops::matmul(a, b)); }, random_tensor({2, 3}, rng),
        1e-5);
    CHECK(err < 1e-6);

    // all transpose combinations and the batched form
    for (bool ta : {false, true}) {
        for (bool tb : {false, true}) {
            D a0 = random_tensor(ta ? std::vector<int>{3, 2} : std::vector<int>{2, 3}, rng);
            D b0 = random_tensor(tb ? std::vector<int>{4, 3} : std::vector<int>{3, 4}, rng);
            a0.set_requires_grad(true);
            b0.set_requires_grad(true);
            auto rep = grad_check_tensors<double>(
                [&]() { return ops::sum_all(ops::mul(ops::matmul(a0, b0, ta, tb),
                                                     ops::matmul(a0, b0, ta, tb))); },
                {a0, b0}, 1e-5);
            CHECK(rep.max_rel_err < 1e-6);
        }
    }
    D a3 = random_tensor({2, 2, 3}, rng).set_requires_grad(true);
    D b3 = random_tensor({2, 3, 2}, rng).set_requires_grad(true);
    auto rep = grad_check_tensors<double>(
        [&]() { return ops::sum_all(ops::matmul(a3, b3)); }, {a3, b3}, 1e-5);
    CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("softmax values and invariances") {
    D x = D::from({2}, {0.0, 0.0});
    auto s = ops::softmax(x, 0);
    CHECK(s.value()[0] == doctest::Approx(0.5));
    CHECK(s.value()[1] == doctest::Approx(0.5));

    D y = ops::softmax(D::from({3}, {1.0, 2.0, 3.0}), 0);
    CHECK(y.value()[0] == doctest::Approx(0.0900).epsilon(1e-2));
    CHECK(std::fabs(y.value()[0] - 0.0900) < 1e-4);
    CHECK(std::fabs(y.value()[1] - 0.2447) < 1e-4);
    CHECK(std::fabs(y.value()[2] - 0.6652) < 1e-4);

    // shift invariance
    Rng rng(5);
    D z = random_tensor({4, 6}, rng);
    D zc = D::from(z.shape(), z.value());
    for (auto& v : zc.value()) v += 37.25;
    auto s1 = ops::softmax(z, 1);
    auto s2 = ops::softmax(zc, 1);
    for (std::size_t i = 0; i < s1.numel(); ++i)
        CHECK(std::fabs(s1.value()[i] - s2.value()[i]) < 1e-12);

    // rows sum to one, entries in [0,1]
    for (int r = 0; r < 4; ++r) {
        double acc = 0;
        for (int c = 0; c < 6; ++c) {
            double v = s1.value()[r * 6 + c];
            acc += v;
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        CHECK(std::fabs(acc - 1.0) < 1e-9);
    }

    // both axes differentiate correctly
    for (int axis : {0, 1}) {
        double err = grad_check<double>(
            [axis](const D& t) {
                auto sm = ops::softmax(t, axis);
                return ops::sum_all(ops::mul(sm, sm));
            },
            random_tensor({3, 5}, rng), 1e-5);
        CHECK(err < 1e-6);
    }
    CHECK_THROWS_AS(ops::softmax(D::zeros({2, 2}), 2), ShapeError);
}

TEST_CASE("conv1d forward values") {
    // all-ones kernel, width 3, one channel
    D x = D::from({4, 1}, {1, 1, 1, 1});
    D k = D::from({3, 1, 1}, {1, 1, 1});
    D bias = D::zeros({1});
    auto y = ops::conv1d(x, k, bias);
    CHECK(y.value() == std::vector<double>{2, 3, 3, 2});

    // identity kernel (center tap only) preserves the input
    Rng rng(9);
    D x2 = random_tensor({6, 3}, rng);
    D k2 = D::zeros({3, 3, 3});
    for (int c = 0; c < 3; ++c) k2.data()[(1 * 3 + c) * 3 + c] = 1.0;
    auto y2 = ops::conv1d(x2, k2, D::zeros({3}));
    for (std::size_t i = 0; i < x2.numel(); ++i)
        CHECK(y2.value()[i] == doctest::Approx(x2.value()[i]).epsilon(1e-12));

    CHECK_THROWS_AS(ops::conv1d(x2, D::zeros({4, 3, 3}), D::zeros({3})), ConfigError);
}

TEST_CASE("conv1d gradients match finite differences") {
    Rng rng(21);
    D x = random_tensor({8, 2}, rng);
    D k = random_tensor({3, 2, 2}, rng).set_requires_grad(true);
    D b = random_tensor({2}, rng).set_requires_grad(true);
    x.set_requires_grad(true);
    auto rep = grad_check_tensors<double>(
        [&]() {
            auto y = ops::conv1d(x, k, b);
            return ops::sum_all(ops::mul(y, y));
        },
        {x, k, b}, 1e-5);
    CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("layer_norm values and gradients") {
    D gain = D::from({2}, {1.0, 1.0});
    D bias = D::from({2}, {0.0, 0.0});

    // constant row normalizes to zero (eps guards the zero variance)
    auto y0 = ops::layer_norm(D::from({1, 2}, {3.0, 3.0}), gain, bias);
    CHECK(std::fabs(y0.value()[0]) < 1e-9);
    CHECK(std::fabs(y0.value()[1]) < 1e-9);

    auto y1 = ops::layer_norm(D::from({1, 2}, {1.0, 3.0}), gain, bias);
    CHECK(std::fabs(y1.value()[0] + 1.0) < 1e-5);
    CHECK(std::fabs(y1.value()[1] - 1.0) < 1e-5);

    Rng rng(17);
    D x = random_tensor({4, 6}, rng).set_requires_grad(true);
    D g = random_tensor({6}, rng).set_requires_grad(true);
    D b = random_tensor({6}, rng).set_requires_grad(true);
    auto rep = grad_check_tensors<double>(
        [&]() {
            auto y = ops::layer_norm(x, g, b);
            return ops::sum_all(ops::mul(y, y));
        },
        {x, g, b}, 1e-5);
    CHECK(rep.max_rel_err < 1e-5);
}

TEST_CASE("cross_entropy values and gradients") {
    D onehot = D::from({1, 4}, {0, 0, 1, 0});
    CHECK(ops::cross_entropy(onehot, onehot).item() == doctest::Approx(0.0).epsilon(1e-9));

    D uniform = D::full({1, 4}, 0.25);
    CHECK(ops::cross_entropy(uniform, onehot).item() ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));

    // masked rows are excluded from the average
    D pred = D::from({2, 2}, {0.9, 0.1, 0.5, 0.5});
    D targ = D::from({2, 2}, {1, 0, 0, 1});
    D mask = D::from({2}, {1.0, 0.0});
    CHECK(ops::cross_entropy(pred, targ, mask).item() ==
          doctest::Approx(-std::log(0.9)).epsilon(1e-12));
    CHECK_THROWS_AS(ops::cross_entropy(pred, targ, D::from({2}, {0.0, 0.0})), NumericError);

    Rng rng(31);
    D logits = random_tensor({3, 4}, rng).set_requires_grad(true);
    D target = D::zeros({3, 4});
    target.data()[1] = 1.0;
    target.data()[4 + 2] = 1.0;
    target.data()[8 + 0] = 1.0;
    D m = D::from({3}, {1.0, 1.0, 0.0});
    auto rep = grad_check_tensors<double>(
        [&]() { return ops::cross_entropy(ops::softmax(logits, 1), target, m); }, {logits}, 1e-5);
    CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("backward basics") {
    Rng rng(1);
    {
        Tape<double> tape;
        D x = random_tensor({5}, rng).set_requires_grad(true);
        TapeScope<double> scope(tape);
        tape.backward(ops::sum_all(x));
        for (double g : x.grad()) CHECK(g == 1.0);
    }
    {
        Tape<double> tape;
        D x = random_tensor({5}, rng).set_requires_grad(true);
        TapeScope<double> scope(tape);
        tape.backward(ops::sum_all(ops::mul(x, x)));
        for (std::size_t i = 0; i < 5; ++i)
            CHECK(x.grad()[i] == doctest::Approx(2.0 * x.value()[i]).epsilon(1e-12));
    }
    {
        // fan-out accumulates: x -> (x, x) -> add
        Tape<double> tape;
        D x = random_tensor({3}, rng).set_requires_grad(true);
        TapeScope<double> scope(tape);
        tape.backward(ops::sum_all(ops::add(x, x)));
        for (double g : x.grad()) CHECK(g == 2.0);
    }
    {
        // non-scalar loss rejected
        Tape<double> tape;
        D x = random_tensor({3}, rng).set_requires_grad(true);
        TapeScope<double> scope(tape);
        auto y = ops::mul(x, x);
        CHECK_THROWS_AS(tape.backward(y), ShapeError);
    }
    {
        // a node off the loss path keeps no gradient
        Tape<double> tape;
        D x = random_tensor({3}, rng).set_requires_grad(true);
        D z = random_tensor({3}, rng).set_requires_grad(true);
        TapeScope<double> scope(tape);
        auto dead = ops::sigmoid(z);
        tape.backward(ops::sum_all(ops::mul(x, x)));
        CHECK(!z.has_grad());
        CHECK(!dead.has_grad());
    }
}

TEST_CASE("determinism: same graph twice gives identical bits") {
    auto run = [](std::vector<double>& grads) {
        Rng rng(77);
        Tape<double> tape;
        D x = D::zeros({4, 4});
        for (auto& v : x.value()) v = rng.uniform(-1, 1);
        x.set_requires_grad(true);
        TapeScope<double> scope(tape);
        auto y = ops::softmax(ops::matmul(x, x), 1);
        tape.backward(ops::sum_all(ops::mul(y, y)));
        grads = x.grad();
        return y.value();
    };
    std::vector<double> g1, g2;
    auto v1 = run(g1);
    auto v2 = run(g2);
    CHECK(v1 == v2);
    CHECK(g1 == g2);
}

TEST_CASE("grad_check classifies linear and composite functions") {
    Rng rng(41);
    double lin_err = grad_check<double>(
        [](const D& x) { return ops::sum_all(ops::scale(x, 3.0)); }, random_tensor({6}, rng));
    CHECK(lin_err < 1e-10);

    D w = random_tensor({5, 4}, rng);
    double comp_err = grad_check<double>(
        [&](const D& x) {
            auto s = ops::softmax(ops::matmul(x, w), 1);
            return ops::sum_all(ops::mul(s, s));
        },
        random_tensor({3, 5}, rng));
    CHECK(comp_err < 1e-6);
}

TEST_CASE("straight-through hard forward checks against the soft relaxation path") {
    Rng rng(55);
    const double tau = 0.5;
    D g = random_tensor({4, 3}, rng);  // frozen noise
    D coeff = random_tensor({4, 3}, rng);
    D x = random_tensor({4, 3}, rng).set_requires_grad(true);

    auto soft_of = [&](const D& t) {
        return ops::softmax(ops::scale(ops::add(t, g), 1.0 / tau), 1);
    };

    // analytic gradient through the hard forward / straight-through backward
    Tape<double> tape;
    {
        TapeScope<double> scope(tape);
        auto hard = ops::straight_through_onehot(soft_of(x));
        // forward is exactly one-hot
        for (int r = 0; r < 4; ++r) {
            double s = 0;
            for (int c = 0; c < 3; ++c) {
                double v = hard.value()[r * 3 + c];
                CHECK((v == 0.0 || v == 1.0));
                s += v;
            }
            CHECK(s == 1.0);
        }
        tape.backward(ops::sum_all(ops::mul(coeff, hard)));
    }
    auto analytic = x.grad();

    // numeric derivative of the *soft* objective
    double max_err = 0.0;
    {
        TapeSuspend<double> suspend;
        for (std::size_t i = 0; i < x.numel(); ++i) {
            const double saved = x.data()[i];
            x.data()[i] = saved + 1e-5;
            double up = ops::sum_all(ops::mul(coeff, soft_of(x))).item();
            x.data()[i] = saved - 1e-5;
            double down = ops::sum_all(ops::mul(coeff, soft_of(x))).item();
            x.data()[i] = saved;
            max_err = std::max(max_err, rel_err(analytic[i], (up - down) / 2e-5));
        }
    }
    CHECK(max_err < 1e-4);
}

TEST_CASE("every primitive passes grad_check below 1e-4") {
    Rng rng(101);
    auto check = [](double err) { CHECK(err < 1e-4); };

    check(grad_check<double>(
        [&](const D& x) { return ops::sum_all(ops::sigmoid(x)); }, random_tensor({7}, rng)));
    check(grad_check<double>(
        [&](const D& x) { return ops::sum_all(ops::exp(x)); }, random_tensor({7}, rng)));
    check(grad_check<double>(
        [&](const D& x) { return ops::sum_all(ops::log(x)); }, random_tensor({7}, rng, 0.2, 2.0)));
    check(grad_check<double>(
        [&](const D& x) { return ops::sum_all(ops::relu(x)); }, random_tensor({7}, rng)));
    check(grad_check<double>(
        [&](const D& x) { return ops::sum_all(ops::mul(ops::transpose(x), ops::transpose(x))); },
        random_tensor({3, 4}, rng)));
    check(grad_check<double>(
        [&](const D& x) { return ops::sum_all(ops::reshape(ops::mul(x, x), {12})); },
        random_tensor({3, 4}, rng)));
    check(grad_check<double>(
        [&](const D& x) { return ops::sum_all(ops::slice_cols(x, 1, 2)); },
        random_tensor({3, 4}, rng)));
    check(grad_check<double>(
        [&](const D& x) { return ops::sum_all(ops::slice_rows(x, 1, 2)); },
        random_tensor({4, 3}, rng)));
    check(grad_check<double>(
        [&](const D& x) { return ops::sum_all(ops::mul(ops::repeat_rows(x, 5),
                                                       ops::repeat_rows(x, 5))); },
        random_tensor({1, 4}, rng)));

    // broadcast forms: suffix and scalar, both sides
    D big = random_tensor({4, 3}, rng).set_requires_grad(true);
    D small = random_tensor({3}, rng).set_requires_grad(true);
    D sc = random_tensor({1}, rng).set_requires_grad(true);
    auto rep = grad_check_tensors<double>(
        [&]() {
            auto a = ops::add(big, small);
            auto s = ops::sub(small, big);
            auto m = ops::mul(big, sc);
            auto m2 = ops::mul(sc, ops::sub(big, sc));
            return ops::sum_all(
                ops::mul(ops::add(a, s), ops::add(m, m2)));
        },
        {big, small, sc}, 1e-5);
    check(rep.max_rel_err);

    // concat + mul_rows + gather_rows
    D xa = random_tensor({3, 2}, rng).set_requires_grad(true);
    D xb = random_tensor({3, 4}, rng).set_requires_grad(true);
    D rows = random_tensor({3}, rng).set_requires_grad(true);
    D table = random_tensor({5, 3}, rng).set_requires_grad(true);
    auto rep2 = grad_check_tensors<double>(
        [&]() {
            auto cat = ops::concat_cols<double>({xa, xb});
            auto mr = ops::mul_rows(cat, rows);
            auto gat = ops::gather_rows(table, {0, 2, 2, 4});
            return ops::add(ops::sum_all(ops::mul(mr, mr)), ops::sum_all(ops::mul(gat, gat)));
        },
        {xa, xb, rows, table}, 1e-5);
    check(rep2.max_rel_err);
}

TEST_CASE("dropout is inverted at train time and identity at eval") {
    Rng rng(5);
    D x = D::full({1000}, 1.0);
    Rng drop_rng(42);
    auto y = ops::dropout(x, 0.25, drop_rng, true);
    double mean = 0;
    int zeros = 0;
    for (double v : y.value()) {
        mean += v;
        if (v == 0.0) ++zeros;
        else CHECK(v == doctest::Approx(1.0 / 0.75));
    }
    mean /= 1000.0;
    CHECK(mean == doctest::Approx(1.0).epsilon(0.1));
    CHECK(zeros > 150);
    CHECK(zeros < 350);

    Rng r2(42);
    auto ye = ops::dropout(x, 0.25, r2, false);
    CHECK(ye.raw() == x.raw());  // identity, not a copy

    // gradient equals the keep mask
    Tape<double> tape;
    D x2 = D::full({50}, 2.0).set_requires_grad(true);
    Rng r3(7);
    {
        TapeScope<double> scope(tape);
        auto yd = ops::dropout(x2, 0.5, r3, true);
        tape.backward(ops::sum_all(yd));
        for (std::size_t i = 0; i < 50; ++i)
            CHECK(x2.grad()[i] == doctest::Approx(yd.value()[i] / 2.0));
    }
}
