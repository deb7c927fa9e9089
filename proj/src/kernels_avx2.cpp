// AVX2+FMA lane. Built with -mavx2 -mfma when the compiler supports it;
// otherwise every entry point forwards to the scalar reference.

#include "seqpan/kernels.hpp"

#if SEQPAN_HAVE_AVX2
#include <immintrin.h>
#endif

namespace seqpan::kern::avx2 {

#if SEQPAN_HAVE_AVX2

static inline float hsum256_ps(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    __m128 s = _mm_add_ps(lo, hi);
    s = _mm_add_ps(s, _mm_movehl_ps(s, s));
    s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 1));
    return _mm_cvtss_f32(s);
}

static inline double hsum256_pd(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    __m128d s = _mm_add_pd(lo, hi);
    s = _mm_add_sd(s, _mm_unpackhi_pd(s, s));
    return _mm_cvtsd_f64(s);
}

void axpy(std::size_t n, float a, const float* x, float* y) {
    __m256 va = _mm256_set1_ps(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 vy = _mm256_loadu_ps(y + i);
        vy = _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), vy);
        _mm256_storeu_ps(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void axpy(std::size_t n, double a, const double* x, double* y) {
    __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

float dot(std::size_t n, const float* a, const float* b) {
    __m256 acc0 = _mm256_setzero_ps();
    __m256 acc1 = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
        acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
    }
    for (; i + 8 <= n; i += 8)
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    float r = hsum256_ps(_mm256_add_ps(acc0, acc1));
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

double dot(std::size_t n, const double* a, const double* b) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    double r = hsum256_pd(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

void add(std::size_t n, const float* a, const float* b, float* y) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) y[i] = a[i] + b[i];
}
void add(std::size_t n, const double* a, const double* b, double* y) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) y[i] = a[i] + b[i];
}
void sub(std::size_t n, const float* a, const float* b, float* y) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_sub_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) y[i] = a[i] - b[i];
}
void sub(std::size_t n, const double* a, const double* b, double* y) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) y[i] = a[i] - b[i];
}
void mul(std::size_t n, const float* a, const float* b, float* y) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) y[i] = a[i] * b[i];
}
void mul(std::size_t n, const double* a, const double* b, double* y) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) y[i] = a[i] * b[i];
}
void scale(std::size_t n, float a, const float* x, float* y) {
    __m256 va = _mm256_set1_ps(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) y[i] = a * x[i];
}
void scale(std::size_t n, double a, const double* x, double* y) {
    __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) y[i] = a * x[i];
}
void relu(std::size_t n, const float* x, float* y) {
    __m256 z = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), z));
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}
void relu(std::size_t n, const double* x, double* y) {
    __m256d z = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), z));
    for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}
float sum(std::size_t n, const float* x) {
    __m256 acc = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
    float r = hsum256_ps(acc);
    for (; i < n; ++i) r += x[i];
    return r;
}
double sum(std::size_t n, const double* x) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double r = hsum256_pd(acc);
    for (; i < n; ++i) r += x[i];
    return r;
}
float max_value(std::size_t n, const float* x) {
    float m = x[0];
    std::size_t i = 0;
    if (n >= 8) {
        __m256 vm = _mm256_loadu_ps(x);
        for (i = 8; i + 8 <= n; i += 8) vm = _mm256_max_ps(vm, _mm256_loadu_ps(x + i));
        __m128 lo = _mm256_castps256_ps128(vm);
        __m128 hi = _mm256_extractf128_ps(vm, 1);
        __m128 s = _mm_max_ps(lo, hi);
        s = _mm_max_ps(s, _mm_movehl_ps(s, s));
        s = _mm_max_ss(s, _mm_shuffle_ps(s, s, 1));
        m = _mm_cvtss_f32(s);
    }
    for (; i < n; ++i) m = x[i] > m ? x[i] : m;
    return m;
}
double max_value(std::size_t n, const double* x) {
    double m = x[0];
    std::size_t i = 0;
    if (n >= 4) {
        __m256d vm = _mm256_loadu_pd(x);
        for (i = 4; i + 4 <= n; i += 4) vm = _mm256_max_pd(vm, _mm256_loadu_pd(x + i));
        __m128d lo = _mm256_castpd256_pd128(vm);
        __m128d hi = _mm256_extractf128_pd(vm, 1);
        __m128d s = _mm_max_pd(lo, hi);
        s = _mm_max_sd(s, _mm_unpackhi_pd(s, s));
        m = _mm_cvtsd_f64(s);
    }
    for (; i < n; ++i) m = x[i] > m ? x[i] : m;
    return m;
}

#else  // !SEQPAN_HAVE_AVX2: forward to scalar so the symbol set stays identical

void axpy(std::size_t n, float a, const float* x, float* y) { scalar::axpy(n, a, x, y); }
void axpy(std::size_t n, double a, const double* x, double* y) { scalar::axpy(n, a, x, y); }
float dot(std::size_t n, const float* a, const float* b) { return scalar::dot(n, a, b); }
double dot(std::size_t n, const double* a, const double* b) { return scalar::dot(n, a, b); }
void add(std::size_t n, const float* a, const float* b, float* y) { scalar::add(n, a, b, y); }
void add(std::size_t n, const double* a, const double* b, double* y) { scalar::add(n, a, b, y); }
void sub(std::size_t n, const float* a, const float* b, float* y) { scalar::sub(n, a, b, y); }
void sub(std::size_t n, const double* a, const double* b, double* y) { scalar::sub(n, a, b, y); }
void mul(std::size_t n, const float* a, const float* b, float* y) { scalar::mul(n, a, b, y); }
void mul(std::size_t n, const double* a, const double* b, double* y) { scalar::mul(n, a, b, y); }
void scale(std::size_t n, float a, const float* x, float* y) { scalar::scale(n, a, x, y); }
void scale(std::size_t n, double a, const double* x, double* y) { scalar::scale(n, a, x, y); }
void relu(std::size_t n, const float* x, float* y) { scalar::relu(n, x, y); }
void relu(std::size_t n, const double* x, double* y) { scalar::relu(n, x, y); }
float sum(std::size_t n, const float* x) { return scalar::sum(n, x); }
double sum(std::size_t n, const double* x) { return scalar::sum(n, x); }
float max_value(std::size_t n, const float* x) { return scalar::max_value(n, x); }
double max_value(std::size_t n, const double* x) { return scalar::max_value(n, x); }

#endif

}  // namespace seqpan::kern::avx2
