#include "seqpan/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <string>

namespace seqpan::kern {

bool avx2_available() {
#if SEQPAN_HAVE_AVX2
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

static Isa detect_isa() {
    if (const char* env = std::getenv("SEQPAN_ISA")) {
        if (std::strcmp(env, "scalar") == 0) return Isa::scalar;
        if (std::strcmp(env, "avx2") == 0 && avx2_available()) return Isa::avx2;
    }
    return avx2_available() ? Isa::avx2 : Isa::scalar;
}

static Isa g_isa = detect_isa();

Isa active_isa() { return g_isa; }

const char* isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

void force_isa(Isa isa) {
    g_isa = (isa == Isa::avx2 && avx2_available()) ? Isa::avx2 : Isa::scalar;
}

#define SEQPAN_DISPATCH(call) \
    (g_isa == Isa::avx2 ? avx2::call : scalar::call)

void axpy(std::size_t n, float a, const float* x, float* y) { SEQPAN_DISPATCH(axpy(n, a, x, y)); }
void axpy(std::size_t n, double a, const double* x, double* y) { SEQPAN_DISPATCH(axpy(n, a, x, y)); }
float dot(std::size_t n, const float* a, const float* b) { return SEQPAN_DISPATCH(dot(n, a, b)); }
double dot(std::size_t n, const double* a, const double* b) { return SEQPAN_DISPATCH(dot(n, a, b)); }
void add(std::size_t n, const float* a, const float* b, float* y) { SEQPAN_DISPATCH(add(n, a, b, y)); }
void add(std::size_t n, const double* a, const double* b, double* y) { SEQPAN_DISPATCH(add(n, a, b, y)); }
void sub(std::size_t n, const float* a, const float* b, float* y) { SEQPAN_DISPATCH(sub(n, a, b, y)); }
void sub(std::size_t n, const double* a, const double* b, double* y) { SEQPAN_DISPATCH(sub(n, a, b, y)); }
void mul(std::size_t n, const float* a, const float* b, float* y) { SEQPAN_DISPATCH(mul(n, a, b, y)); }
void mul(std::size_t n, const double* a, const double* b, double* y) { SEQPAN_DISPATCH(mul(n, a, b, y)); }
void scale(std::size_t n, float a, const float* x, float* y) { SEQPAN_DISPATCH(scale(n, a, x, y)); }
void scale(std::size_t n, double a, const double* x, double* y) { SEQPAN_DISPATCH(scale(n, a, x, y)); }
void relu(std::size_t n, const float* x, float* y) { SEQPAN_DISPATCH(relu(n, x, y)); }
void relu(std::size_t n, const double* x, double* y) { SEQPAN_DISPATCH(relu(n, x, y)); }
float sum(std::size_t n, const float* x) { return SEQPAN_DISPATCH(sum(n, x)); }
double sum(std::size_t n, const double* x) { return SEQPAN_DISPATCH(sum(n, x)); }
float max_value(std::size_t n, const float* x) { return SEQPAN_DISPATCH(max_value(n, x)); }
double max_value(std::size_t n, const double* x) { return SEQPAN_DISPATCH(max_value(n, x)); }

#undef SEQPAN_DISPATCH

// GEMM decomposed onto the dispatched dot/axpy row kernels. Matrices are
// compact row-major: A is [m x k] (or [k x m] when trans_a), B is [k x n]
// (or [n x k] when trans_b), C is [m x n].
template <typename T>
static void gemm_impl(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                      const T* a, const T* b, T* c, bool accumulate) {
    if (!accumulate) std::memset(c, 0, m * n * sizeof(T));
    if (!trans_a && !trans_b) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t l = 0; l < k; ++l)
                axpy(n, a[i * k + l], b + l * n, c + i * n);
    } else if (!trans_a && trans_b) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                c[i * n + j] += dot(k, a + i * k, b + j * k);
    } else if (trans_a && !trans_b) {
        for (std::size_t l = 0; l < k; ++l)
            for (std::size_t i = 0; i < m; ++i)
                axpy(n, a[l * m + i], b + l * n, c + i * n);
    } else {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                T acc = T(0);
                for (std::size_t l = 0; l < k; ++l) acc += a[l * m + i] * b[j * k + l];
                c[i * n + j] += acc;
            }
    }
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const float* a, const float* b, float* c, bool accumulate) {
    gemm_impl(trans_a, trans_b, m, n, k, a, b, c, accumulate);
}
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c, bool accumulate) {
    gemm_impl(trans_a, trans_b, m, n, k, a, b, c, accumulate);
}

}  // namespace seqpan::kern
