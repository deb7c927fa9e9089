#pragma once

#include <vector>

#include "seqpan/rng.hpp"
#include "seqpan/tensor.hpp"

namespace seqpan {

// Frame region classes. The order is fixed; checkpoints and the matcher head
// depend on it.
inline constexpr int kLabelO = 0;
inline constexpr int kLabelB = 1;
inline constexpr int kLabelI = 2;
inline constexpr int kLabelE = 3;
inline constexpr int kNumRegionLabels = 4;

struct RegionLabels {
    std::vector<int> labels;  // one class id per frame

    int begin_lo() const;
    int begin_hi() const;
    int end_lo() const;
    int end_hi() const;
};

// Map a timestamp to a feature index: round(t / duration * (n - 1)), clamped
// to [0, n-1]. Inverse of index_to_time.
int time_to_index(double t, double duration, int n);
double index_to_time(int index, double duration, int n);

// Region labels for a span [i_s, i_e] on n frames. The begin/end regions
// extend the boundaries by ceil(eta * span_length) frames each way; regions
// that collide are split at their midpoint with the middle frame going to E,
// and a span pinned to a single frame still yields non-empty B and E.
RegionLabels assign_bieo(int i_s, int i_e, int n, double eta);

// Binary foreground/background labels: foreground is exactly the union of
// the B, I and E regions from assign_bieo.
std::vector<int> fb_labels(int i_s, int i_e, int n, double eta);

template <typename T>
Tensor<T> one_hot(const std::vector<int>& labels, int num_classes) {
    Tensor<T> t = Tensor<T>::zeros({static_cast<int>(labels.size()), num_classes});
    for (std::size_t i = 0; i < labels.size(); ++i)
        t.data()[i * num_classes + labels[i]] = T(1);
    return t;
}

// Gumbel(0,1) noise tensor: g = -log(-log(u)), u clamped away from {0,1}.
template <typename T>
Tensor<T> sample_gumbel(std::vector<int> shape, Rng& rng) {
    Tensor<T> t = Tensor<T>::zeros(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<T>(rng.gumbel());
    return t;
}

}  // namespace seqpan
