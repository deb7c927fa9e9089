#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <vector>

#include "seqpan/kernels.hpp"
#include "seqpan/rng.hpp"
#include "seqpan/tensor.hpp"

// Differentiable primitives. Value layout is row-major; sequence tensors are
// [length x features]. Broadcasting is deliberately narrow: equal shapes, a
// scalar on either side, or the smaller operand's shape being a suffix of the
// larger's (broadcast across leading axes). Anything else must be an explicit
// reshape/op.
namespace seqpan::ops {

using detail::shape_str;

template <typename T>
inline bool tracking(std::initializer_list<const Tensor<T>*> parents) {
    if (!active_tape<T>()) return false;
    for (const Tensor<T>* p : parents)
        if (p->defined() && p->requires_grad()) return true;
    return false;
}

template <typename T>
inline Tensor<T> finish(std::shared_ptr<detail::Node<T>> n, bool rec,
                        std::vector<typename Tensor<T>::NodePtr> parents,
                        std::function<void()> bw) {
    if (rec) {
        n->requires_grad = true;
        for (auto& p : parents)
            if (p) n->parents.push_back(std::move(p));
        n->backward_fn = std::move(bw);
        active_tape<T>()->record(n);
    }
    return Tensor<T>(n);
}

// ---------------------------------------------------------------------------
// elementwise binary (add / sub / mul) with narrow broadcasting
// ---------------------------------------------------------------------------

namespace detail_bc {

enum class Kind { same, rhs_small, lhs_small };

struct Plan {
    Kind kind;
    std::size_t repeat;  // leading repetitions of the small operand
    std::size_t block;   // numel of the small operand
};

template <typename T>
inline Plan plan(const Tensor<T>& a, const Tensor<T>& b, const char* opname) {
    if (a.shape() == b.shape()) return {Kind::same, 1, a.numel()};
    const bool a_small = a.numel() < b.numel();
    const Tensor<T>& big = a_small ? b : a;
    const Tensor<T>& small = a_small ? a : b;
    bool ok = false;
    if (small.numel() == 1) {
        ok = true;
    } else if (small.rank() < big.rank()) {
        ok = true;
        int off = big.rank() - small.rank();
        for (int i = 0; i < small.rank(); ++i)
            if (small.dim(i) != big.dim(off + i)) ok = false;
    }
    if (!ok || big.numel() % std::max<std::size_t>(small.numel(), 1) != 0)
        throw ShapeError(std::string(opname) + ": shapes not broadcast-compatible: " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    std::size_t block = small.numel();
    return {a_small ? Kind::lhs_small : Kind::rhs_small, big.numel() / block, block};
}

}  // namespace detail_bc

template <typename T, typename Fwd, typename Bwd>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, const char* opname, Fwd fwd, Bwd bwd) {
    auto pl = detail_bc::plan(a, b, opname);
    const Tensor<T>& big = (pl.kind == detail_bc::Kind::lhs_small) ? b : a;
    auto out = std::make_shared<detail::Node<T>>();
    out->shape = big.shape();
    out->value.resize(big.numel());
    fwd(pl, out->value.data());
    bool rec = tracking<T>({&a, &b});
    auto bw = [o = out.get(), an = a.node(), bn = b.node(), pl, bwd]() {
        bwd(pl, o->grad.data(), an.get(), bn.get());
    };
    return finish<T>(out, rec, {a.node(), b.node()}, bw);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    const T* pa = a.data();
    const T* pb = b.data();
    auto fwd = [&](const detail_bc::Plan& pl, T* y) {
        if (pl.kind == detail_bc::Kind::same) {
            kern::add(pl.block, pa, pb, y);
        } else {
            const T* big = pl.kind == detail_bc::Kind::rhs_small ? pa : pb;
            const T* small = pl.kind == detail_bc::Kind::rhs_small ? pb : pa;
            if (pl.block == 1)
                for (std::size_t i = 0; i < pl.repeat; ++i) y[i] = big[i] + small[0];
            else
                for (std::size_t r = 0; r < pl.repeat; ++r)
                    kern::add(pl.block, big + r * pl.block, small, y + r * pl.block);
        }
    };
    auto bwd = [](const detail_bc::Plan& pl, const T* g, detail::Node<T>* an, detail::Node<T>* bn) {
        auto acc_big = [&](detail::Node<T>* n) {
            if (!n->requires_grad) return;
            n->ensure_grad();
            kern::axpy(n->numel(), T(1), g, n->grad.data());
        };
        auto acc_small = [&](detail::Node<T>* n) {
            if (!n->requires_grad) return;
            n->ensure_grad();
            for (std::size_t r = 0; r < pl.repeat; ++r)
                kern::axpy(pl.block, T(1), g + r * pl.block, n->grad.data());
        };
        if (pl.kind == detail_bc::Kind::same) {
            acc_big(an);
            acc_big(bn);
        } else if (pl.kind == detail_bc::Kind::rhs_small) {
            acc_big(an);
            acc_small(bn);
        } else {
            acc_small(an);
            acc_big(bn);
        }
    };
    return binary_op(a, b, "add", fwd, bwd);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    const T* pa = a.data();
    const T* pb = b.data();
    auto fwd = [&](const detail_bc::Plan& pl, T* y) {
        if (pl.kind == detail_bc::Kind::same) {
            kern::sub(pl.block, pa, pb, y);
        } else if (pl.kind == detail_bc::Kind::rhs_small) {
            for (std::size_t r = 0; r < pl.repeat; ++r)
                for (std::size_t j = 0; j < pl.block; ++j)
                    y[r * pl.block + j] = pa[r * pl.block + j] - pb[j];
        } else {
            for (std::size_t r = 0; r < pl.repeat; ++r)
                for (std::size_t j = 0; j < pl.block; ++j)
                    y[r * pl.block + j] = pa[j] - pb[r * pl.block + j];
        }
    };
    auto bwd = [](const detail_bc::Plan& pl, const T* g, detail::Node<T>* an, detail::Node<T>* bn) {
        auto acc = [&](detail::Node<T>* n, T sign, bool small) {
            if (!n->requires_grad) return;
            n->ensure_grad();
            if (!small) {
                kern::axpy(n->numel(), sign, g, n->grad.data());
            } else {
                for (std::size_t r = 0; r < pl.repeat; ++r)
                    kern::axpy(pl.block, sign, g + r * pl.block, n->grad.data());
            }
        };
        acc(an, T(1), pl.kind == detail_bc::Kind::lhs_small);
        acc(bn, T(-1), pl.kind == detail_bc::Kind::rhs_small);
    };
    return binary_op(a, b, "sub", fwd, bwd);
}

// Hadamard product (elementwise multiply).
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    const T* pa = a.data();
    const T* pb = b.data();
    auto fwd = [&](const detail_bc::Plan& pl, T* y) {
        if (pl.kind == detail_bc::Kind::same) {
            kern::mul(pl.block, pa, pb, y);
        } else {
            const T* big = pl.kind == detail_bc::Kind::rhs_small ? pa : pb;
            const T* small = pl.kind == detail_bc::Kind::rhs_small ? pb : pa;
            if (pl.block == 1)
                kern::scale(pl.repeat, small[0], big, y);
            else
                for (std::size_t r = 0; r < pl.repeat; ++r)
                    kern::mul(pl.block, big + r * pl.block, small, y + r * pl.block);
        }
    };
    auto bwd = [](const detail_bc::Plan& pl, const T* g, detail::Node<T>* an, detail::Node<T>* bn) {
        detail::Node<T>* big = pl.kind == detail_bc::Kind::lhs_small ? bn : an;
        detail::Node<T>* small = pl.kind == detail_bc::Kind::lhs_small ? an : bn;
        if (pl.kind == detail_bc::Kind::same) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < an->numel(); ++i)
                    an->grad[i] += g[i] * bn->value[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < bn->numel(); ++i)
                    bn->grad[i] += g[i] * an->value[i];
            }
            return;
        }
        if (big->requires_grad) {
            big->ensure_grad();
            if (pl.block == 1) {
                kern::axpy(pl.repeat, small->value[0], g, big->grad.data());
            } else {
                for (std::size_t r = 0; r < pl.repeat; ++r)
                    for (std::size_t j = 0; j < pl.block; ++j)
                        big->grad[r * pl.block + j] += g[r * pl.block + j] * small->value[j];
            }
        }
        if (small->requires_grad) {
            small->ensure_grad();
            if (pl.block == 1) {
                small->grad[0] += kern::dot(pl.repeat, g, big->value.data());
            } else {
                for (std::size_t r = 0; r < pl.repeat; ++r)
                    for (std::size_t j = 0; j < pl.block; ++j)
                        small->grad[j] += g[r * pl.block + j] * big->value[r * pl.block + j];
            }
        }
    };
    return binary_op(a, b, "mul", fwd, bwd);
}

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
    return mul(a, b);
}

// ---------------------------------------------------------------------------
// elementwise unary
// ---------------------------------------------------------------------------

template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary_op(const Tensor<T>& x, Fwd fwd, Bwd bwd) {
    auto out = std::make_shared<detail::Node<T>>();
    out->shape = x.shape();
    out->value.resize(x.numel());
    fwd(x.data(), out->value.data(), x.numel());
    bool rec = tracking<T>({&x});
    auto bw = [o = out.get(), xn = x.node(), bwd]() {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        bwd(o->grad.data(), o->value.data(), xn->value.data(), xn->grad.data(), xn->numel());
    };
    return finish<T>(out, rec, {x.node()}, bw);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
    return unary_op(
        x, [c](const T* in, T* y, std::size_t n) { kern::scale(n, c, in, y); },
        [c](const T* g, const T*, const T*, T* gx, std::size_t n) { kern::axpy(n, c, g, gx); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return unary_op(
        x,
        [](const T* in, T* y, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) y[i] = T(1) / (T(1) + std::exp(-in[i]));
        },
        [](const T* g, const T* y, const T*, T* gx, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * y[i] * (T(1) - y[i]);
        });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    return unary_op(
        x, [](const T* in, T* y, std::size_t n) { kern::relu(n, in, y); },
        [](const T* g, const T*, const T* in, T* gx, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i)
                if (in[i] > T(0)) gx[i] += g[i];
        });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
    return unary_op(
        x,
        [](const T* in, T* y, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(in[i]);
        },
        [](const T* g, const T* y, const T*, T* gx, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * y[i];
        });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
    for (std::size_t i = 0; i < x.numel(); ++i)
        if (x.data()[i] <= T(0))
            throw NumericError("log of non-positive value at flat index " + std::to_string(i));
    return unary_op(
        x,
        [](const T* in, T* y, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) y[i] = std::log(in[i]);
        },
        [](const T* g, const T*, const T* in, T* gx, std::size_t n) {
            for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] / in[i];
        });
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

// 2-D (or batched 3-D with equal leading extents) matrix product with
// optional transposes: out = op(a) * op(b).
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool trans_a = false,
                 bool trans_b = false) {
    if (a.rank() != b.rank() || (a.rank() != 2 && a.rank() != 3))
        throw ShapeError("matmul: expected two rank-2 or two rank-3 tensors, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
    int batch = 1, ao = 0;
    if (a.rank() == 3) {
        if (a.dim(0) != b.dim(0))
            throw ShapeError("matmul: batch extents differ: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
        batch = a.dim(0);
        ao = 1;
    }
    const int m = a.dim(ao + (trans_a ? 1 : 0));
    const int ka = a.dim(ao + (trans_a ? 0 : 1));
    const int kb = b.dim(ao + (trans_b ? 1 : 0));
    const int n = b.dim(ao + (trans_b ? 0 : 1));
    if (ka != kb)
        throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape()) +
                         (trans_a ? "^T" : "") + " * " + shape_str(b.shape()) +
                         (trans_b ? "^T" : ""));
    const std::size_t as = static_cast<std::size_t>(m) * ka;
    const std::size_t bs = static_cast<std::size_t>(ka) * n;
    const std::size_t cs = static_cast<std::size_t>(m) * n;

    auto out = std::make_shared<detail::Node<T>>();
    out->shape = a.rank() == 3 ? std::vector<int>{batch, m, n} : std::vector<int>{m, n};
    out->value.resize(static_cast<std::size_t>(batch) * cs);
    for (int bi = 0; bi < batch; ++bi)
        kern::gemm(trans_a, trans_b, m, n, ka, a.data() + bi * as, b.data() + bi * bs,
                   out->value.data() + bi * cs, false);

    bool rec = tracking<T>({&a, &b});
    auto bw = [o = out.get(), an = a.node(), bn = b.node(), trans_a, trans_b, batch, m, n, ka, as,
               bs, cs]() {
        for (int bi = 0; bi < batch; ++bi) {
            const T* g = o->grad.data() + bi * cs;
            const T* A = an->value.data() + bi * as;
            const T* B = bn->value.data() + bi * bs;
            if (an->requires_grad) {
                an->ensure_grad();
                T* dA = an->grad.data() + bi * as;
                if (!trans_a && !trans_b) kern::gemm(false, true, m, ka, n, g, B, dA, true);
                else if (!trans_a && trans_b) kern::gemm(false, false, m, ka, n, g, B, dA, true);
                else if (trans_a && !trans_b) kern::gemm(false, true, ka, m, n, B, g, dA, true);
                else kern::gemm(true, true, ka, m, n, B, g, dA, true);
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                T* dB = bn->grad.data() + bi * bs;
                if (!trans_a && !trans_b) kern::gemm(true, false, ka, n, m, A, g, dB, true);
                else if (!trans_a && trans_b) kern::gemm(true, false, n, ka, m, g, A, dB, true);
                else if (trans_a && !trans_b) kern::gemm(false, false, ka, n, m, A, g, dB, true);
                else kern::gemm(true, true, n, ka, m, g, A, dB, true);
            }
        }
    };
    return finish<T>(out, rec, {a.node(), b.node()}, bw);
}

// ---------------------------------------------------------------------------
// softmax
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
    if (axis < 0) axis += x.rank();
    if (axis < 0 || axis >= x.rank())
        throw ShapeError("softmax: axis out of range for " + shape_str(x.shape()));
    std::size_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
    const std::size_t len = x.dim(axis);

    auto out = std::make_shared<detail::Node<T>>();
    out->shape = x.shape();
    out->value.resize(x.numel());
    const T* in = x.data();
    T* y = out->value.data();
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t c = 0; c < inner; ++c) {
            const std::size_t base = o * len * inner + c;
            T mx = in[base];
            for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, in[base + i * inner]);
            T z = T(0);
            for (std::size_t i = 0; i < len; ++i) {
                T e = std::exp(in[base + i * inner] - mx);
                y[base + i * inner] = e;
                z += e;
            }
            const T iz = T(1) / z;
            for (std::size_t i = 0; i < len; ++i) y[base + i * inner] *= iz;
        }
    }

    bool rec = tracking<T>({&x});
    auto bw = [o = out.get(), xn = x.node(), outer, inner, len]() {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const T* y = o->value.data();
        const T* g = o->grad.data();
        T* gx = xn->grad.data();
        for (std::size_t ob = 0; ob < outer; ++ob) {
            for (std::size_t c = 0; c < inner; ++c) {
                const std::size_t base = ob * len * inner + c;
                T dotgy = T(0);
                for (std::size_t i = 0; i < len; ++i)
                    dotgy += g[base + i * inner] * y[base + i * inner];
                for (std::size_t i = 0; i < len; ++i)
                    gx[base + i * inner] +=
                        y[base + i * inner] * (g[base + i * inner] - dotgy);
            }
        }
    };
    return finish<T>(out, rec, {x.node()}, bw);
}

// ---------------------------------------------------------------------------
// conv1d: x [L x Cin], kernel [K x Cin x Cout], bias [Cout]; stride 1,
// same-padding (zeros), K must be odd.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias) {
    if (x.rank() != 2 || kernel.rank() != 3)
        throw ShapeError("conv1d: expected x rank 2 and kernel rank 3");
    const int L = x.dim(0), cin = x.dim(1);
    const int K = kernel.dim(0), cout = kernel.dim(2);
    if (K % 2 == 0) throw ConfigError("conv1d: kernel width must be odd, got " + std::to_string(K));
    if (kernel.dim(1) != cin)
        throw ShapeError("conv1d: kernel expects " + std::to_string(kernel.dim(1)) +
                         " input channels, x has " + std::to_string(cin));
    if (bias.defined() && static_cast<int>(bias.numel()) != cout)
        throw ShapeError("conv1d: bias size mismatch");
    const int half = K / 2;

    auto out = std::make_shared<detail::Node<T>>();
    out->shape = {L, cout};
    out->value.assign(static_cast<std::size_t>(L) * cout, T(0));
    const T* px = x.data();
    const T* pk = kernel.data();
    T* py = out->value.data();
    for (int i = 0; i < L; ++i) {
        T* yrow = py + static_cast<std::size_t>(i) * cout;
        if (bias.defined()) kern::add(cout, yrow, bias.data(), yrow);
        for (int t = 0; t < K; ++t) {
            const int j = i + t - half;
            if (j < 0 || j >= L) continue;
            const T* xrow = px + static_cast<std::size_t>(j) * cin;
            const T* krow = pk + static_cast<std::size_t>(t) * cin * cout;
            for (int c = 0; c < cin; ++c)
                kern::axpy(cout, xrow[c], krow + static_cast<std::size_t>(c) * cout, yrow);
        }
    }

    bool rec = tracking<T>({&x, &kernel, &bias});
    auto bw = [o = out.get(), xn = x.node(), kn = kernel.node(), bn = bias.node(), L, cin, K, cout,
               half]() {
        const T* g = o->grad.data();
        if (bn && bn->requires_grad) {
            bn->ensure_grad();
            for (int i = 0; i < L; ++i)
                kern::axpy(cout, T(1), g + static_cast<std::size_t>(i) * cout, bn->grad.data());
        }
        const bool need_x = xn->requires_grad;
        const bool need_k = kn->requires_grad;
        if (need_x) xn->ensure_grad();
        if (need_k) kn->ensure_grad();
        for (int i = 0; i < L; ++i) {
            const T* grow = g + static_cast<std::size_t>(i) * cout;
            for (int t = 0; t < K; ++t) {
                const int j = i + t - half;
                if (j < 0 || j >= L) continue;
                for (int c = 0; c < cin; ++c) {
                    const std::size_t koff = (static_cast<std::size_t>(t) * cin + c) * cout;
                    if (need_x)
                        xn->grad[static_cast<std::size_t>(j) * cin + c] +=
                            kern::dot(cout, grow, kn->value.data() + koff);
                    if (need_k)
                        kern::axpy(cout, xn->value[static_cast<std::size_t>(j) * cin + c], grow,
                                   kn->grad.data() + koff);
                }
            }
        }
    };
    return finish<T>(out, rec, {x.node(), kernel.node(), bias.node()}, bw);
}

// ---------------------------------------------------------------------------
// layer norm over the last axis, then affine with gain/bias of that width
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-6)) {
    if (eps <= T(0)) throw ConfigError("layer_norm: eps must be positive");
    const int d = x.dim(x.rank() - 1);
    if (static_cast<int>(gain.numel()) != d || static_cast<int>(bias.numel()) != d)
        throw ShapeError("layer_norm: gain/bias width must match last axis of " +
                         shape_str(x.shape()));
    const std::size_t rows = x.numel() / d;

    auto out = std::make_shared<detail::Node<T>>();
    out->shape = x.shape();
    out->value.resize(x.numel());
    // xhat kept for backward
    auto xhat = std::make_shared<std::vector<T>>(x.numel());
    auto inv_std = std::make_shared<std::vector<T>>(rows);
    const T* in = x.data();
    T* y = out->value.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = in + r * d;
        T mean = kern::sum(d, row) / T(d);
        T var = T(0);
        for (int i = 0; i < d; ++i) {
            T c = row[i] - mean;
            var += c * c;
        }
        var /= T(d);
        const T is = T(1) / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (int i = 0; i < d; ++i) {
            T h = (row[i] - mean) * is;
            (*xhat)[r * d + i] = h;
            y[r * d + i] = gain.data()[i] * h + bias.data()[i];
        }
    }

    bool rec = tracking<T>({&x, &gain, &bias});
    auto bw = [o = out.get(), xn = x.node(), gn = gain.node(), bn = bias.node(), xhat, inv_std,
               rows, d]() {
        const T* g = o->grad.data();
        if (gn->requires_grad) {
            gn->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (int i = 0; i < d; ++i) gn->grad[i] += g[r * d + i] * (*xhat)[r * d + i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
                kern::axpy(d, T(1), g + r * d, bn->grad.data());
        }
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                T sum_dh = T(0), sum_dh_h = T(0);
                for (int i = 0; i < d; ++i) {
                    T dh = g[r * d + i] * gn->value[i];
                    sum_dh += dh;
                    sum_dh_h += dh * (*xhat)[r * d + i];
                }
                const T is = (*inv_std)[r];
                for (int i = 0; i < d; ++i) {
                    T dh = g[r * d + i] * gn->value[i];
                    xn->grad[r * d + i] +=
                        is * (dh - sum_dh / T(d) - (*xhat)[r * d + i] * sum_dh_h / T(d));
                }
            }
        }
    };
    return finish<T>(out, rec, {x.node(), gain.node(), bias.node()}, bw);
}

// ---------------------------------------------------------------------------
// cross entropy on probability rows: mean over unmasked rows of
// -sum(target * log(max(pred, 1e-12))). mask may be undefined (all rows).
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& pred, const Tensor<T>& target, const Tensor<T>& mask) {
    if (pred.shape() != target.shape())
        throw ShapeError("cross_entropy: pred " + shape_str(pred.shape()) + " vs target " +
                         shape_str(target.shape()));
    const int C = pred.dim(pred.rank() - 1);
    const std::size_t rows = pred.numel() / C;
    if (mask.defined() && mask.numel() != rows)
        throw ShapeError("cross_entropy: mask size must equal row count");
    constexpr T kClamp = T(1e-12);

    T wsum = T(0);
    if (mask.defined()) {
        wsum = kern::sum(rows, mask.data());
    } else {
        wsum = T(rows);
    }
    if (wsum <= T(0)) throw NumericError("cross_entropy: all rows are masked out");

    T loss = T(0);
    const T* p = pred.data();
    const T* t = target.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T w = mask.defined() ? mask.data()[r] : T(1);
        if (w == T(0)) continue;
        T row = T(0);
        for (int c = 0; c < C; ++c) {
            const T pv = std::max(p[r * C + c], kClamp);
            if (t[r * C + c] != T(0)) row -= t[r * C + c] * std::log(pv);
        }
        loss += w * row;
    }
    loss /= wsum;

    auto out = std::make_shared<detail::Node<T>>();
    out->shape = {1};
    out->value = {loss};
    bool rec = tracking<T>({&pred});
    auto bw = [o = out.get(), pn = pred.node(), tn = target.node(), mn = mask.node(), rows, C,
               wsum]() {
        if (!pn->requires_grad) return;
        pn->ensure_grad();
        const T g = o->grad[0] / wsum;
        for (std::size_t r = 0; r < rows; ++r) {
            const T w = mn ? mn->value[r] : T(1);
            if (w == T(0)) continue;
            for (int c = 0; c < C; ++c) {
                const T tv = tn->value[r * C + c];
                if (tv == T(0)) continue;
                const T pv = pn->value[r * C + c];
                if (pv >= T(1e-12)) pn->grad[r * C + c] -= g * w * tv / pv;
            }
        }
    };
    return finish<T>(out, rec, {pred.node()}, bw);
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& pred, const Tensor<T>& target) {
    return cross_entropy(pred, target, Tensor<T>());
}

// Fused log-softmax cross entropy on unnormalized scores. Same value as
// cross_entropy(softmax(z), target) but the gradient is softmax(z) - target,
// which stays bounded however sharp the distribution gets.
template <typename T>
Tensor<T> cross_entropy_logits(const Tensor<T>& z, const Tensor<T>& target,
                               const Tensor<T>& mask) {
    if (z.shape() != target.shape())
        throw ShapeError("cross_entropy_logits: scores " + shape_str(z.shape()) + " vs target " +
                         shape_str(target.shape()));
    const int C = z.dim(z.rank() - 1);
    const std::size_t rows = z.numel() / C;
    if (mask.defined() && mask.numel() != rows)
        throw ShapeError("cross_entropy_logits: mask size must equal row count");

    T wsum = mask.defined() ? kern::sum(rows, mask.data()) : T(rows);
    if (wsum <= T(0)) throw NumericError("cross_entropy_logits: all rows are masked out");

    auto probs = std::make_shared<std::vector<T>>(z.numel());
    T loss = T(0);
    const T* pz = z.data();
    const T* pt = target.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T mx = kern::max_value(C, pz + r * C);
        T lse = T(0);
        for (int c = 0; c < C; ++c) {
            const T e = std::exp(pz[r * C + c] - mx);
            (*probs)[r * C + c] = e;
            lse += e;
        }
        const T inv = T(1) / lse;
        for (int c = 0; c < C; ++c) (*probs)[r * C + c] *= inv;
        const T w = mask.defined() ? mask.data()[r] : T(1);
        if (w == T(0)) continue;
        T row = T(0);
        for (int c = 0; c < C; ++c)
            if (pt[r * C + c] != T(0))
                row += pt[r * C + c] * (mx + std::log(lse) - pz[r * C + c]);
        loss += w * row;
    }
    loss /= wsum;

    auto out = std::make_shared<detail::Node<T>>();
    out->shape = {1};
    out->value = {loss};
    bool rec = tracking<T>({&z});
    auto bw = [o = out.get(), zn = z.node(), tn = target.node(), mn = mask.node(), probs, rows, C,
               wsum]() {
        if (!zn->requires_grad) return;
        zn->ensure_grad();
        const T g = o->grad[0] / wsum;
        for (std::size_t r = 0; r < rows; ++r) {
            const T w = mn ? mn->value[r] : T(1);
            if (w == T(0)) continue;
            T ysum = T(0);
            for (int c = 0; c < C; ++c) ysum += tn->value[r * C + c];
            for (int c = 0; c < C; ++c)
                zn->grad[r * C + c] +=
                    g * w * (ysum * (*probs)[r * C + c] - tn->value[r * C + c]);
        }
    };
    return finish<T>(out, rec, {z.node()}, bw);
}

// ---------------------------------------------------------------------------
// reductions / reshaping / gluing
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    auto out = std::make_shared<detail::Node<T>>();
    out->shape = {1};
    out->value = {kern::sum(x.numel(), x.data())};
    bool rec = tracking<T>({&x});
    auto bw = [o = out.get(), xn = x.node()]() {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const T g = o->grad[0];
        for (std::size_t i = 0; i < xn->numel(); ++i) xn->grad[i] += g;
    };
    return finish<T>(out, rec, {x.node()}, bw);
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
    return scale(sum_all(x), T(1) / T(x.numel()));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<int> shape) {
    if (detail::shape_numel(shape) != x.numel())
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
    auto out = std::make_shared<detail::Node<T>>();
    out->shape = std::move(shape);
    out->value = x.value();
    bool rec = tracking<T>({&x});
    auto bw = [o = out.get(), xn = x.node()]() {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        kern::axpy(xn->numel(), T(1), o->grad.data(), xn->grad.data());
    };
    return finish<T>(out, rec, {x.node()}, bw);
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
    if (x.rank() != 2) throw ShapeError("transpose: rank-2 only, got " + shape_str(x.shape()));
    const int R = x.dim(0), C = x.dim(1);
    auto out = std::make_shared<detail::Node<T>>();
    out->shape = {C, R};
    out->value.resize(x.numel());
    for (int i = 0; i < R; ++i)
        for (int j = 0; j < C; ++j)
            out->value[static_cast<std::size_t>(j) * R + i] =
                x.data()[static_cast<std::size_t>(i) * C + j];
    bool rec = tracking<T>({&x});
    auto bw = [o = out.get(), xn = x.node(), R, C]() {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (int i = 0; i < R; ++i)
            for (int j = 0; j < C; ++j)
                xn->grad[static_cast<std::size_t>(i) * C + j] +=
                    o->grad[static_cast<std::size_t>(j) * R + i];
    };
    return finish<T>(out, rec, {x.node()}, bw);
}

// Concatenate along the last axis; inputs share the leading extent.
template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& xs) {
    if (xs.empty()) throw ShapeError("concat_cols: empty input list");
    const int R = xs[0].dim(0);
    int total = 0;
    for (const auto& x : xs) {
        if (x.rank() != 2 || x.dim(0) != R)
            throw ShapeError("concat_cols: inputs must be rank-2 with equal row count");
        total += x.dim(1);
    }
    auto out = std::make_shared<detail::Node<T>>();
    out->shape = {R, total};
    out->value.resize(static_cast<std::size_t>(R) * total);
    int off = 0;
    for (const auto& x : xs) {
        const int c = x.dim(1);
        for (int i = 0; i < R; ++i)
            std::copy_n(x.data() + static_cast<std::size_t>(i) * c, c,
                        out->value.data() + static_cast<std::size_t>(i) * total + off);
        off += c;
    }
    bool rec = false;
    std::vector<typename Tensor<T>::NodePtr> parents;
    for (const auto& x : xs) {
        parents.push_back(x.node());
        if (active_tape<T>() && x.requires_grad()) rec = true;
    }
    auto bw = [o = out.get(), parents, R, total]() {
        int off = 0;
        for (const auto& p : parents) {
            const int c = static_cast<int>(p->numel()) / R;
            if (p->requires_grad) {
                p->ensure_grad();
                for (int i = 0; i < R; ++i)
                    kern::axpy(c, T(1), o->grad.data() + static_cast<std::size_t>(i) * total + off,
                               p->grad.data() + static_cast<std::size_t>(i) * c);
            }
            off += c;
        }
    };
    return finish<T>(out, rec, parents, bw);
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, int start, int len) {
    if (x.rank() != 2 || start < 0 || start + len > x.dim(1))
        throw ShapeError("slice_cols: bad range [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") for " + shape_str(x.shape()));
    const int R = x.dim(0), C = x.dim(1);
    auto out = std::make_shared<detail::Node<T>>();
    out->shape = {R, len};
    out->value.resize(static_cast<std::size_t>(R) * len);
    for (int i = 0; i < R; ++i)
        std::copy_n(x.data() + static_cast<std::size_t>(i) * C + start, len,
                    out->value.data() + static_cast<std::size_t>(i) * len);
    bool rec = tracking<T>({&x});
    auto bw = [o = out.get(), xn = x.node(), R, C, start, len]() {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (int i = 0; i < R; ++i)
            kern::axpy(len, T(1), o->grad.data() + static_cast<std::size_t>(i) * len,
                       xn->grad.data() + static_cast<std::size_t>(i) * C + start);
    };
    return finish<T>(out, rec, {x.node()}, bw);
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, int start, int len) {
    if (x.rank() != 2 || start < 0 || start + len > x.dim(0))
        throw ShapeError("slice_rows: bad range for " + shape_str(x.shape()));
    const int C = x.dim(1);
    auto out = std::make_shared<detail::Node<T>>();
    out->shape = {len, C};
    out->value.assign(x.data() + static_cast<std::size_t>(start) * C,
                      x.data() + static_cast<std::size_t>(start + len) * C);
    bool rec = tracking<T>({&x});
    auto bw = [o = out.get(), xn = x.node(), start, len, C]() {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        kern::axpy(static_cast<std::size_t>(len) * C, T(1), o->grad.data(),
                   xn->grad.data() + static_cast<std::size_t>(start) * C);
    };
    return finish<T>(out, rec, {x.node()}, bw);
}

// Tile a [1 x C] row R times; backward sums the rows back.
template <typename T>
Tensor<T> repeat_rows(const Tensor<T>& x, int reps) {
    if (x.rank() != 2 || x.dim(0) != 1)
        throw ShapeError("repeat_rows: expected [1 x C], got " + shape_str(x.shape()));
    const int C = x.dim(1);
    auto out = std::make_shared<detail::Node<T>>();
    out->shape = {reps, C};
    out->value.resize(static_cast<std::size_t>(reps) * C);
    for (int i = 0; i < reps; ++i)
        std::copy_n(x.data(), C, out->value.data() + static_cast<std::size_t>(i) * C);
    bool rec = tracking<T>({&x});
    auto bw = [o = out.get(), xn = x.node(), reps, C]() {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (int i = 0; i < reps; ++i)
            kern::axpy(C, T(1), o->grad.data() + static_cast<std::size_t>(i) * C,
                       xn->grad.data());
    };
    return finish<T>(out, rec, {x.node()}, bw);
}

// Per-row scale: y[i, :] = x[i, :] * r[i].
template <typename T>
Tensor<T> mul_rows(const Tensor<T>& x, const Tensor<T>& r) {
    if (x.rank() != 2 || r.numel() != static_cast<std::size_t>(x.dim(0)))
        throw ShapeError("mul_rows: row factor size must equal row count of " +
                         shape_str(x.shape()));
    const int R = x.dim(0), C = x.dim(1);
    auto out = std::make_shared<detail::Node<T>>();
    out->shape = x.shape();
    out->value.resize(x.numel());
    for (int i = 0; i < R; ++i)
        kern::scale(C, r.data()[i], x.data() + static_cast<std::size_t>(i) * C,
                    out->value.data() + static_cast<std::size_t>(i) * C);
    bool rec = tracking<T>({&x, &r});
    auto bw = [o = out.get(), xn = x.node(), rn = r.node(), R, C]() {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (int i = 0; i < R; ++i)
                kern::axpy(C, rn->value[i], o->grad.data() + static_cast<std::size_t>(i) * C,
                           xn->grad.data() + static_cast<std::size_t>(i) * C);
        }
        if (rn->requires_grad) {
            rn->ensure_grad();
            for (int i = 0; i < R; ++i)
                rn->grad[i] += kern::dot(C, o->grad.data() + static_cast<std::size_t>(i) * C,
                                         xn->value.data() + static_cast<std::size_t>(i) * C);
        }
    };
    return finish<T>(out, rec, {x.node(), r.node()}, bw);
}

// Row gather (embedding lookup): out[i, :] = table[ids[i], :].
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<int>& ids) {
    if (table.rank() != 2) throw ShapeError("gather_rows: table must be rank 2");
    const int V = table.dim(0), C = table.dim(1);
    for (int id : ids)
        if (id < 0 || id >= V)
            throw ShapeError("gather_rows: index " + std::to_string(id) + " out of [0, " +
                             std::to_string(V) + ")");
    auto out = std::make_shared<detail::Node<T>>();
    out->shape = {static_cast<int>(ids.size()), C};
    out->value.resize(ids.size() * C);
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy_n(table.data() + static_cast<std::size_t>(ids[i]) * C, C,
                    out->value.data() + i * C);
    bool rec = tracking<T>({&table});
    auto bw = [o = out.get(), tn = table.node(), ids, C]() {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        for (std::size_t i = 0; i < ids.size(); ++i)
            kern::axpy(C, T(1), o->grad.data() + i * C,
                       tn->grad.data() + static_cast<std::size_t>(ids[i]) * C);
    };
    return finish<T>(out, rec, {table.node()}, bw);
}

// ---------------------------------------------------------------------------
// inverted dropout: scale kept entries by 1/(1-rate) at train time.
// Identity (the same tensor) when disabled.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, Rng& rng, bool enabled) {
    if (!enabled || rate <= 0.0) return x;
    if (rate >= 1.0) throw ConfigError("dropout: rate must be < 1");
    auto keep = std::make_shared<std::vector<T>>(x.numel());
    const T inv = T(1.0 / (1.0 - rate));
    for (std::size_t i = 0; i < x.numel(); ++i)
        (*keep)[i] = rng.uniform() < rate ? T(0) : inv;
    auto out = std::make_shared<detail::Node<T>>();
    out->shape = x.shape();
    out->value.resize(x.numel());
    kern::mul(x.numel(), x.data(), keep->data(), out->value.data());
    bool rec = tracking<T>({&x});
    auto bw = [o = out.get(), xn = x.node(), keep]() {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < xn->numel(); ++i)
            xn->grad[i] += o->grad[i] * (*keep)[i];
    };
    return finish<T>(out, rec, {x.node()}, bw);
}

// ---------------------------------------------------------------------------
// straight-through hard selection: forward emits the one-hot argmax of each
// row of `soft`; backward passes the incoming gradient to `soft` unchanged,
// so the gradient reaching the logits is exactly the relaxation's gradient.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> straight_through_onehot(const Tensor<T>& soft) {
    if (soft.rank() != 2) throw ShapeError("straight_through_onehot: rank-2 input expected");
    const int R = soft.dim(0), C = soft.dim(1);
    auto out = std::make_shared<detail::Node<T>>();
    out->shape = soft.shape();
    out->value.assign(soft.numel(), T(0));
    for (int i = 0; i < R; ++i) {
        const T* row = soft.data() + static_cast<std::size_t>(i) * C;
        int best = 0;
        for (int c = 1; c < C; ++c)
            if (row[c] > row[best]) best = c;
        out->value[static_cast<std::size_t>(i) * C + best] = T(1);
    }
    bool rec = tracking<T>({&soft});
    auto bw = [o = out.get(), sn = soft.node()]() {
        if (!sn->requires_grad) return;
        sn->ensure_grad();
        kern::axpy(sn->numel(), T(1), o->grad.data(), sn->grad.data());
    };
    return finish<T>(out, rec, {soft.node()}, bw);
}

// Non-differentiating row argmax.
template <typename T>
std::vector<int> argmax_rows(const Tensor<T>& x) {
    const int C = x.dim(x.rank() - 1);
    const std::size_t rows = x.numel() / C;
    std::vector<int> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = x.data() + r * C;
        int best = 0;
        for (int c = 1; c < C; ++c)
            if (row[c] > row[best]) best = c;
        out[r] = best;
    }
    return out;
}

}  // namespace seqpan::ops
