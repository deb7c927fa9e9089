#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "seqpan/kernels.hpp"
#include "seqpan/rng.hpp"

using namespace seqpan;

namespace {

std::vector<float> random_vec_f32(std::size_t n, Rng& rng) {
    std::vector<float> v(n);
    for (auto& x : v) x = static_cast<float>(rng.uniform(-2.0, 2.0));
    return v;
}

std::vector<double> random_vec_f64(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-2.0, 2.0);
    return v;
}

// Naive reference used as an independent oracle for the gemm wiring.
template <typename T>
void gemm_naive(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const T* a,
                const T* b, T* c, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            T acc = accumulate ? c[i * n + j] : T(0);
            for (std::size_t l = 0; l < k; ++l) {
                T av = ta ? a[l * m + i] : a[i * k + l];
                T bv = tb ? b[j * k + l] : b[l * n + j];
                acc += av * bv;
            }
            c[i * n + j] = acc;
        }
    }
}

}  // namespace

TEST_CASE("isa forcing falls back to scalar when avx2 unavailable") {
    kern::Isa before = kern::active_isa();
    kern::force_isa(kern::Isa::avx2);
    if (kern::avx2_available())
        CHECK(kern::active_isa() == kern::Isa::avx2);
    else
        CHECK(kern::active_isa() == kern::Isa::scalar);
    kern::force_isa(kern::Isa::scalar);
    CHECK(kern::active_isa() == kern::Isa::scalar);
    kern::force_isa(before);
}

TEST_CASE("scalar and avx2 lanes agree") {
    if (!kern::avx2_available()) {
        MESSAGE("avx2 not available; lane equivalence not exercised on this host");
        return;
    }
    Rng rng(7);
    // Sizes straddle the vector width and include remainders.
    for (std::size_t n : {1u, 3u, 7u, 8u, 9u, 16u, 31u, 64u, 257u}) {
        auto a = random_vec_f32(n, rng);
        auto b = random_vec_f32(n, rng);
        auto ad = random_vec_f64(n, rng);
        auto bd = random_vec_f64(n, rng);

        // Single-rounding elementwise ops must agree bit-for-bit.
        std::vector<float> y1(n), y2(n);
        kern::scalar::add(n, a.data(), b.data(), y1.data());
        kern::avx2::add(n, a.data(), b.data(), y2.data());
        CHECK(y1 == y2);
        kern::scalar::sub(n, a.data(), b.data(), y1.data());
        kern::avx2::sub(n, a.data(), b.data(), y2.data());
        CHECK(y1 == y2);
        kern::scalar::mul(n, a.data(), b.data(), y1.data());
        kern::avx2::mul(n, a.data(), b.data(), y2.data());
        CHECK(y1 == y2);
        kern::scalar::scale(n, 1.7f, a.data(), y1.data());
        kern::avx2::scale(n, 1.7f, a.data(), y2.data());
        CHECK(y1 == y2);
        kern::scalar::relu(n, a.data(), y1.data());
        kern::avx2::relu(n, a.data(), y2.data());
        CHECK(y1 == y2);

        CHECK(kern::scalar::max_value(n, a.data()) == kern::avx2::max_value(n, a.data()));

        // Reductions and fma reassociate; compare within a width-scaled bound.
        const double ftol = 1e-5 * static_cast<double>(n);
        CHECK(std::fabs(kern::scalar::dot(n, a.data(), b.data()) -
                        kern::avx2::dot(n, a.data(), b.data())) < ftol);
        CHECK(std::fabs(kern::scalar::sum(n, a.data()) - kern::avx2::sum(n, a.data())) < ftol);

        const double dtol = 1e-13 * static_cast<double>(n);
        CHECK(std::fabs(kern::scalar::dot(n, ad.data(), bd.data()) -
                        kern::avx2::dot(n, ad.data(), bd.data())) < dtol);
        CHECK(std::fabs(kern::scalar::sum(n, ad.data()) - kern::avx2::sum(n, ad.data())) < dtol);

        auto ya = random_vec_f32(n, rng);
        auto yb = ya;
        kern::scalar::axpy(n, 0.9f, a.data(), ya.data());
        kern::avx2::axpy(n, 0.9f, a.data(), yb.data());
        for (std::size_t i = 0; i < n; ++i) CHECK(std::fabs(ya[i] - yb[i]) < 1e-5);

        auto yda = random_vec_f64(n, rng);
        auto ydb = yda;
        kern::scalar::axpy(n, 0.9, ad.data(), yda.data());
        kern::avx2::axpy(n, 0.9, ad.data(), ydb.data());
        for (std::size_t i = 0; i < n; ++i) CHECK(std::fabs(yda[i] - ydb[i]) < 1e-14);
    }
}

TEST_CASE("gemm matches the naive oracle in all transpose modes") {
    Rng rng(11);
    for (auto [m, n, k] : std::vector<std::array<std::size_t, 3>>{
             {1, 1, 1}, {2, 3, 4}, {5, 7, 3}, {8, 8, 8}, {13, 9, 17}}) {
        for (bool ta : {false, true}) {
            for (bool tb : {false, true}) {
                for (bool acc : {false, true}) {
                    auto a = random_vec_f64(m * k, rng);
                    auto b = random_vec_f64(k * n, rng);
                    auto c0 = random_vec_f64(m * n, rng);
                    auto c1 = c0;
                    auto c2 = c0;
                    kern::gemm(ta, tb, m, n, k, a.data(), b.data(), c1.data(), acc);
                    gemm_naive(ta, tb, m, n, k, a.data(), b.data(), c2.data(), acc);
                    for (std::size_t i = 0; i < m * n; ++i)
                        CHECK(c1[i] == doctest::Approx(c2[i]).epsilon(1e-12));
                }
            }
        }
    }
}

TEST_CASE("gemm f32 scalar vs avx2 lanes agree within tolerance") {
    if (!kern::avx2_available()) return;
    Rng rng(13);
    kern::Isa before = kern::active_isa();
    const std::size_t m = 9, n = 14, k = 33;
    auto a = random_vec_f32(m * k, rng);
    auto b = random_vec_f32(k * n, rng);
    std::vector<float> c1(m * n), c2(m * n);
    kern::force_isa(kern::Isa::scalar);
    kern::gemm(false, false, m, n, k, a.data(), b.data(), c1.data(), false);
    kern::force_isa(kern::Isa::avx2);
    kern::gemm(false, false, m, n, k, a.data(), b.data(), c2.data(), false);
    kern::force_isa(before);
    for (std::size_t i = 0; i < m * n; ++i) CHECK(std::fabs(c1[i] - c2[i]) < 1e-4);
}
