#pragma once

#include <cstddef>

// Hot numeric inner loops. Every routine has a scalar reference version and,
// on x86 with AVX2+FMA, a vectorized one; the active lane is picked once at
// startup (override with env SEQPAN_ISA=scalar|avx2 or force_isa()).
// Scalar and AVX2 lanes are equivalence-tested in tests/test_kernels.cpp.
namespace seqpan::kern {

enum class Isa { scalar, avx2 };

Isa active_isa();
const char* isa_name(Isa isa);
bool avx2_available();
// Force a lane (tests). Requests for an unavailable lane fall back to scalar.
void force_isa(Isa isa);

// y += a*x
void axpy(std::size_t n, float a, const float* x, float* y);
void axpy(std::size_t n, double a, const double* x, double* y);

float dot(std::size_t n, const float* a, const float* b);
double dot(std::size_t n, const double* a, const double* b);

// elementwise y = a op b
void add(std::size_t n, const float* a, const float* b, float* y);
void add(std::size_t n, const double* a, const double* b, double* y);
void sub(std::size_t n, const float* a, const float* b, float* y);
void sub(std::size_t n, const double* a, const double* b, double* y);
void mul(std::size_t n, const float* a, const float* b, float* y);
void mul(std::size_t n, const double* a, const double* b, double* y);

// y = a*x
void scale(std::size_t n, float a, const float* x, float* y);
void scale(std::size_t n, double a, const double* x, double* y);

// y = max(x, 0)
void relu(std::size_t n, const float* x, float* y);
void relu(std::size_t n, const double* x, double* y);

float sum(std::size_t n, const float* x);
double sum(std::size_t n, const double* x);

float max_value(std::size_t n, const float* x);
double max_value(std::size_t n, const double* x);

// Row-major compact GEMM on top of dot/axpy:
//   C[m x n] = op(A) * op(B) (+= when accumulate), op(A) is [m x k].
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const float* a, const float* b, float* c, bool accumulate);
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, const double* b, double* c, bool accumulate);

namespace scalar {
void axpy(std::size_t n, float a, const float* x, float* y);
void axpy(std::size_t n, double a, const double* x, double* y);
float dot(std::size_t n, const float* a, const float* b);
double dot(std::size_t n, const double* a, const double* b);
void add(std::size_t n, const float* a, const float* b, float* y);
void add(std::size_t n, const double* a, const double* b, double* y);
void sub(std::size_t n, const float* a, const float* b, float* y);
void sub(std::size_t n, const double* a, const double* b, double* y);
void mul(std::size_t n, const float* a, const float* b, float* y);
void mul(std::size_t n, const double* a, const double* b, double* y);
void scale(std::size_t n, float a, const float* x, float* y);
void scale(std::size_t n, double a, const double* x, double* y);
void relu(std::size_t n, const float* x, float* y);
void relu(std::size_t n, const double* x, double* y);
float sum(std::size_t n, const float* x);
double sum(std::size_t n, const double* x);
float max_value(std::size_t n, const float* x);
double max_value(std::size_t n, const double* x);
}  // namespace scalar

namespace avx2 {
void axpy(std::size_t n, float a, const float* x, float* y);
void axpy(std::size_t n, double a, const double* x, double* y);
float dot(std::size_t n, const float* a, const float* b);
double dot(std::size_t n, const double* a, const double* b);
void add(std::size_t n, const float* a, const float* b, float* y);
void add(std::size_t n, const double* a, const double* b, double* y);
void sub(std::size_t n, const float* a, const float* b, float* y);
void sub(std::size_t n, const double* a, const double* b, double* y);
void mul(std::size_t n, const float* a, const float* b, float* y);
void mul(std::size_t n, const double* a, const double* b, double* y);
void scale(std::size_t n, float a, const float* x, float* y);
void scale(std::size_t n, double a, const double* x, double* y);
void relu(std::size_t n, const float* x, float* y);
void relu(std::size_t n, const double* x, double* y);
float sum(std::size_t n, const float* x);
double sum(std::size_t n, const double* x);
float max_value(std::size_t n, const float* x);
double max_value(std::size_t n, const double* x);
}  // namespace avx2

}  // namespace seqpan::kern
