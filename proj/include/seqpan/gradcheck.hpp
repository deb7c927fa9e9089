#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "seqpan/rng.hpp"
#include "seqpan/tensor.hpp"

// Central finite-difference verification of backward rules. The numeric side
// only ever evaluates forward passes, so it stays independent of the gradient
// code it is checking. The function under test must be deterministic (dropout
// off, any sampling noise frozen).
namespace seqpan {

template <typename T>
struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_tensor;
    std::size_t worst_index = 0;
};

inline double rel_err(double analytic, double numeric) {
    return std::fabs(analytic - numeric) /
           std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
}

// Checks d(loss_fn)/d(tensor) for every entry of every listed tensor.
template <typename T>
GradCheckReport<T> grad_check_tensors(const std::function<Tensor<T>()>& loss_fn,
                                      std::vector<Tensor<T>> tensors, double eps = 1e-5) {
    GradCheckReport<T> report;

    for (auto& t : tensors) t.drop_grad();
    Tape<T> tape;
    std::vector<std::vector<T>> analytic;
    {
        TapeScope<T> scope(tape);
        Tensor<T> loss = loss_fn();
        tape.backward(loss);
    }
    for (auto& t : tensors)
        analytic.push_back(t.has_grad() ? t.grad() : std::vector<T>(t.numel(), T(0)));

    TapeSuspend<T> suspend;
    for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
        Tensor<T>& t = tensors[ti];
        for (std::size_t i = 0; i < t.numel(); ++i) {
            const T saved = t.data()[i];
            t.data()[i] = saved + T(eps);
            const double up = static_cast<double>(loss_fn().item());
            t.data()[i] = saved - T(eps);
            const double down = static_cast<double>(loss_fn().item());
            t.data()[i] = saved;
            const double numeric = (up - down) / (2.0 * eps);
            const double err = rel_err(static_cast<double>(analytic[ti][i]), numeric);
            if (err > report.max_rel_err) {
                report.max_rel_err = err;
                report.worst_tensor = t.name().empty() ? ("tensor#" + std::to_string(ti)) : t.name();
                report.worst_index = i;
            }
        }
    }
    return report;
}

// Single-input convenience form: max relative error of df/dx.
template <typename T>
double grad_check(const std::function<Tensor<T>(const Tensor<T>&)>& f, Tensor<T> x,
                  double eps = 1e-5) {
    x.set_requires_grad(true);
    auto report = grad_check_tensors<T>([&]() { return f(x); }, {x}, eps);
    return report.max_rel_err;
}

// Multi-step variant: per entry, the best agreement across the given step
// sizes counts. Central differences on near-zero gradient entries drown in
// rounding noise at any single step size, but a genuinely wrong rule stays
// wrong at every eps, so taking the minimum separates the two.
template <typename T>
GradCheckReport<T> grad_check_tensors_multi_eps(const std::function<Tensor<T>()>& loss_fn,
                                                std::vector<Tensor<T>> tensors,
                                                const std::vector<double>& epses = {1e-5, 1e-4,
                                                                                    1e-3}) {
    GradCheckReport<T> report;

    for (auto& t : tensors) t.drop_grad();
    Tape<T> tape;
    std::vector<std::vector<T>> analytic;
    {
        TapeScope<T> scope(tape);
        Tensor<T> loss = loss_fn();
        tape.backward(loss);
    }
    for (auto& t : tensors)
        analytic.push_back(t.has_grad() ? t.grad() : std::vector<T>(t.numel(), T(0)));

    TapeSuspend<T> suspend;
    for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
        Tensor<T>& t = tensors[ti];
        for (std::size_t i = 0; i < t.numel(); ++i) {
            const T saved = t.data()[i];
            double best = 1e300;
            for (double eps : epses) {
                t.data()[i] = saved + T(eps);
                const double up = static_cast<double>(loss_fn().item());
                t.data()[i] = saved - T(eps);
                const double down = static_cast<double>(loss_fn().item());
                t.data()[i] = saved;
                best = std::min(best,
                                rel_err(static_cast<double>(analytic[ti][i]),
                                        (up - down) / (2.0 * eps)));
            }
            if (best > report.max_rel_err) {
                report.max_rel_err = best;
                report.worst_tensor = t.name().empty() ? ("tensor#" + std::to_string(ti)) : t.name();
                report.worst_index = i;
            }
        }
    }
    return report;
}

// Directional form for composite graphs: perturbs every tensor along a random
// direction at once and compares the analytic directional derivative with
// central differences. Individual near-zero gradient entries cannot drown the
// comparison in rounding noise the way per-entry checks do.
template <typename T>
double grad_check_directional(const std::function<Tensor<T>()>& loss_fn,
                              std::vector<Tensor<T>> tensors, Rng& rng, int n_directions = 4,
                              double eps = 1e-6) {
    for (auto& t : tensors) t.drop_grad();
    Tape<T> tape;
    {
        TapeScope<T> scope(tape);
        tape.backward(loss_fn());
    }
    std::vector<std::vector<T>> grads;
    for (auto& t : tensors)
        grads.push_back(t.has_grad() ? t.grad() : std::vector<T>(t.numel(), T(0)));

    TapeSuspend<T> suspend;
    double worst = 0.0;
    for (int dir = 0; dir < n_directions; ++dir) {
        std::vector<std::vector<T>> v(tensors.size());
        double analytic = 0.0;
        for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
            v[ti].resize(tensors[ti].numel());
            for (std::size_t i = 0; i < v[ti].size(); ++i) {
                v[ti][i] = static_cast<T>(rng.normal());
                analytic += static_cast<double>(grads[ti][i]) * static_cast<double>(v[ti][i]);
            }
        }
        auto shift = [&](double step) {
            for (std::size_t ti = 0; ti < tensors.size(); ++ti)
                for (std::size_t i = 0; i < v[ti].size(); ++i)
                    tensors[ti].data()[i] += static_cast<T>(step) * v[ti][i];
        };
        shift(eps);
        const double up = static_cast<double>(loss_fn().item());
        shift(-2.0 * eps);
        const double down = static_cast<double>(loss_fn().item());
        shift(eps);
        worst = std::max(worst, rel_err(analytic, (up - down) / (2.0 * eps)));
    }
    return worst;
}

}  // namespace seqpan
