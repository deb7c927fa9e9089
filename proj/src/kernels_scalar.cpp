#include "seqpan/kernels.hpp"

#include <algorithm>

namespace seqpan::kern::scalar {

template <typename T>
static void axpy_impl(std::size_t n, T a, const T* x, T* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
static T dot_impl(std::size_t n, const T* a, const T* b) {
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

template <typename T>
static T sum_impl(std::size_t n, const T* x) {
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

void axpy(std::size_t n, float a, const float* x, float* y) { axpy_impl(n, a, x, y); }
void axpy(std::size_t n, double a, const double* x, double* y) { axpy_impl(n, a, x, y); }
float dot(std::size_t n, const float* a, const float* b) { return dot_impl(n, a, b); }
double dot(std::size_t n, const double* a, const double* b) { return dot_impl(n, a, b); }

void add(std::size_t n, const float* a, const float* b, float* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}
void add(std::size_t n, const double* a, const double* b, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}
void sub(std::size_t n, const float* a, const float* b, float* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}
void sub(std::size_t n, const double* a, const double* b, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] - b[i];
}
void mul(std::size_t n, const float* a, const float* b, float* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}
void mul(std::size_t n, const double* a, const double* b, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}
void scale(std::size_t n, float a, const float* x, float* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i];
}
void scale(std::size_t n, double a, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i];
}
void relu(std::size_t n, const float* x, float* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}
void relu(std::size_t n, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}
float sum(std::size_t n, const float* x) { return sum_impl(n, x); }
double sum(std::size_t n, const double* x) { return sum_impl(n, x); }

float max_value(std::size_t n, const float* x) {
    float m = x[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
    return m;
}
double max_value(std::size_t n, const double* x) {
    double m = x[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
    return m;
}

}  // namespace seqpan::kern::scalar
