#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <regex>
#include <string>

#include "seqpan/labeling.hpp"
#include "seqpan/errors.hpp"

using namespace seqpan;

namespace {

std::string label_string(const RegionLabels& rl) {
    std::string s;
    for (int v : rl.labels) s += "OBIE"[v];
    return s;
}

bool regular_pattern(const RegionLabels& rl) {
    static const std::regex re("^O*B+I*E+O*$");
    return std::regex_match(label_string(rl), re);
}

}  // namespace

TEST_CASE("time_to_index endpoints, rounding and round trip") {
    CHECK(time_to_index(0.0, 30.0, 16) == 0);
    CHECK(time_to_index(30.0, 30.0, 16) == 15);
    CHECK(time_to_index(15.0, 30.0, 65) == 32);  // t = duration/2, N = 65

    for (int n : {2, 5, 16, 64}) {
        for (int i = 0; i < n; ++i) {
            double t = index_to_time(i, 41.7, n);
            CHECK(time_to_index(t, 41.7, n) == i);
        }
    }

    // monotone non-decreasing in t
    int prev = 0;
    for (double t = 0.0; t <= 12.0; t += 0.05) {
        int idx = time_to_index(t, 12.0, 24);
        CHECK(idx >= prev);
        prev = idx;
    }

    CHECK_THROWS_AS(time_to_index(1.0, 0.0, 8), ConfigError);
    CHECK_THROWS_AS(time_to_index(1.0, -3.0, 8), ConfigError);
}

TEST_CASE("assign_bieo hand-checked examples") {
    {
        // N=16, span [4,11], eta=0.25 -> ext=2
        auto rl = assign_bieo(4, 11, 16, 0.25);
        CHECK(label_string(rl) == "OOBBBBBIIEEEEEOO");
        CHECK(rl.begin_lo() == 2);
        CHECK(rl.begin_hi() == 6);
        CHECK(rl.end_lo() == 9);
        CHECK(rl.end_hi() == 13);
    }
    {
        // N=16, span [6,9], eta=0.25 -> ext=1, I empty
        auto rl = assign_bieo(6, 9, 16, 0.25);
        CHECK(label_string(rl) == "OOOOOBBBEEEOOOOO");
    }
    {
        // degenerate: eta=0, single-frame span [3,3]
        auto rl = assign_bieo(3, 3, 16, 0.0);
        CHECK(rl.labels[3] == kLabelE);
        CHECK(rl.labels[2] == kLabelB);
        CHECK(regular_pattern(rl));
    }
    {
        // degenerate at the left edge: span [0,0], eta=0 -> E shifts right
        auto rl = assign_bieo(0, 0, 8, 0.0);
        CHECK(rl.labels[0] == kLabelB);
        CHECK(rl.labels[1] == kLabelE);
        CHECK(regular_pattern(rl));
    }
    CHECK_THROWS_AS(assign_bieo(5, 3, 16, 0.25), ConfigError);
    CHECK_THROWS_AS(assign_bieo(-1, 3, 16, 0.25), ConfigError);
    CHECK_THROWS_AS(assign_bieo(0, 16, 16, 0.25), ConfigError);
}

TEST_CASE("bieo invariants hold over random spans including degenerates") {
    Rng rng(2024);
    for (int iter = 0; iter < 10000; ++iter) {
        int n = static_cast<int>(rng.uniform_int(2, 96));
        int i_s = static_cast<int>(rng.uniform_int(0, n - 1));
        int i_e = static_cast<int>(rng.uniform_int(i_s, n - 1));
        double eta = (iter % 4 == 0) ? 0.0 : rng.uniform(0.0, 0.6);

        auto rl = assign_bieo(i_s, i_e, n, eta);
        CHECK(regular_pattern(rl));

        // B u I u E is one contiguous interval containing the span
        int lo = rl.begin_lo(), hi = rl.end_hi();
        REQUIRE(lo >= 0);
        REQUIRE(hi >= lo);
        for (int i = lo; i <= hi; ++i) CHECK(rl.labels[i] != kLabelO);
        CHECK(lo <= i_s);
        CHECK(hi >= i_e);

        // when B and E do not collide, the boundaries sit inside their regions
        const int ext = static_cast<int>(std::ceil(eta * (i_e - i_s + 1)));
        if (i_s + ext < i_e - ext) {
            CHECK(rl.labels[i_s] == kLabelB);
            CHECK(rl.labels[i_e] == kLabelE);
        }

        // fb foreground equals the set of non-O frames
        auto fb = fb_labels(i_s, i_e, n, eta);
        for (int i = 0; i < n; ++i) CHECK(fb[i] == (rl.labels[i] != kLabelO ? 1 : 0));
    }
}

TEST_CASE("fb_labels hand-checked examples") {
    auto fb = fb_labels(4, 11, 16, 0.25);
    for (int i = 0; i < 16; ++i) CHECK(fb[i] == ((i >= 2 && i <= 13) ? 1 : 0));

    // span covering the whole video -> all foreground
    auto all = fb_labels(0, 9, 10, 0.25);
    for (int v : all) CHECK(v == 1);
}

TEST_CASE("gumbel sampling follows the inverse transform") {
    // u = 1/e gives exactly 0
    CHECK(-std::log(-std::log(1.0 / std::exp(1.0))) == doctest::Approx(0.0).epsilon(1e-12));

    Rng rng(99);
    const int n = 100000;
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += rng.gumbel();
    mean /= n;
    CHECK(std::fabs(mean - 0.5772) < 0.02);

    Rng rng2(99);
    double m = 0.0, m2 = 0.0;
    for (int i = 0; i < n; ++i) {
        double g = rng2.gumbel();
        m += g;
        m2 += g * g;
    }
    m /= n;
    double var = m2 / n - m * m;
    CHECK(std::fabs(var - 1.6449) < 0.05);

    auto t = sample_gumbel<double>({4, 3}, rng);
    CHECK(t.numel() == 12);
}

TEST_CASE("one_hot layout") {
    auto t = one_hot<double>({2, 0, 3}, 4);
    CHECK(t.shape() == std::vector<int>{3, 4});
    CHECK(t.value() == std::vector<double>{0, 0, 1, 0, 1, 0, 0, 0, 0, 0, 0, 1});
}
