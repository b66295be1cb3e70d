// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "doctest.h"
#include "mxfp4/error.hpp"
#include "mxfp4/oscillation.hpp"
#include "mxfp4/quantized_matrix.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mxfp4;

namespace {

// Runs a scalar trajectory through a one-element tracker.
TrajectoryTracker track(const std::vector<double>& w, const std::vector<double>& q) {
    TrajectoryTracker t;
    t.reset(std::span(&w[0], 1), std::span(&q[0], 1));
    for (std::size_t i = 1; i < w.size(); ++i) t.update(std::span(&w[i], 1), std::span(&q[i], 1));
    return t;
}

}  // namespace

TEST_CASE("trajectory fixtures") {
    SUBCASE("constant trajectory") {
        const auto t = track({0.3, 0.3, 0.3}, {0.5, 0.5, 0.5});
        CHECK(t.dist_w()[0] == 0.0);
        CHECK(t.dist_q()[0] == 0.0);
        CHECK(oscillation_ratio(t)[0] == 0.0);
    }
    SUBCASE("steady drift without a flip") {
        std::vector<double> w{0.1};
        for (int i = 0; i < 4; ++i) w.push_back(w.back() + 0.01);
        const auto t = track(w, std::vector<double>(5, 0.0));
        CHECK(t.steps() == 4);
        CHECK(t.dist_w()[0] == doctest::Approx(0.04).epsilon(1e-14));
        CHECK(t.dist_q()[0] == 0.0);
    }
    SUBCASE("flip between -1 and -0.5 on every step") {
        const auto t = track({-0.74, -0.76, -0.74, -0.76, -0.74}, {-0.5, -1.0, -0.5, -1.0, -0.5});
        CHECK(t.dist_q()[0] == 2.0);
        const long double d = std::fabs(static_cast<long double>(-0.76) - static_cast<long double>(-0.74));
        const double exact = static_cast<double>(2.0L / (4 * d));
        CHECK(oscillation_ratio(t)[0] == exact);
        CHECK(std::fabs(oscillation_ratio(t)[0] - 25.0) < 1e-12);
    }
    SUBCASE("flip without master motion is infinite") {
        const auto t = track({1.0, 1.0}, {0.5, 1.0});
        CHECK(std::isinf(oscillation_ratio(t)[0]));
        CHECK(classify_oscillating(oscillation_ratio(t)).count == 1);
    }
    SUBCASE("ordinary motion has a ratio near one") {
        // Latent crossing one threshold per 0.5 of travel: dist_Q tracks dist_W.
        std::vector<double> w, q;
        for (int i = 0; i <= 40; ++i) {
            w.push_back(0.125 * i);
            q.push_back(oracle::nearest_grid(w.back(), e2m1()));
        }
        const double r = oscillation_ratio(track(w, q))[0];
        CHECK(r > 0.5);
        CHECK(r < 1.5);
    }
}

TEST_CASE("tracker rejects shape changes and resets on a new window") {
    TrajectoryTracker t;
    const std::vector<double> a{1.0, 2.0}, b{1.5, 2.0};
    t.reset(a, a);
    t.update(b, b);
    CHECK(t.dist_w()[0] == 0.5);
    CHECK_THROWS_AS(t.update(std::vector<double>{1.0}, std::vector<double>{1.0}), ContractError);
    t.reset(b, b);
    CHECK(t.steps() == 0);
    CHECK(t.dist_w()[0] == 0.0);
}

TEST_CASE("classification threshold") {
    const std::vector<double> r{1.0, 25.0};
    const auto s = classify_oscillating(r);
    CHECK(s.fraction == 0.5);
    CHECK(s.mask == std::vector<bool>{false, true});
    CHECK(classify_oscillating(std::vector<double>{}).fraction == 0.0);
    CHECK(classify_oscillating(std::vector<double>{16.0}).count == 0);  // strictly greater
    CHECK(classify_oscillating(std::vector<double>(10, 0.0)).fraction == 0.0);
}

TEST_CASE("R_w of a uniform cell transition is the cell width over the mean step") {
    for (double step : {0.01, 0.05, 0.2}) {
        std::vector<double> w, q;
        for (int i = 0; i <= 10; ++i) {
            w.push_back(-0.75 + ((i % 2) ? -step / 2 : step / 2));
            q.push_back((i % 2) ? -1.0 : -0.5);
        }
        const double r = oscillation_ratio(track(w, q))[0];
        CHECK(r == doctest::Approx(0.5 / step).epsilon(1e-12));
        CHECK(r >= 1.0);
    }
}

TEST_CASE("quantization confidence fixtures") {
    const auto& f = e2m1();
    CHECK(quant_confidence(-0.75, f) == 0.0);
    // Cell of -1 is [-1.25, -0.75]; the exact value for the double nearest -0.8.
    const double c = quant_confidence(-0.8, f);
    CHECK(c == 4.0 * (-0.75 - -0.8));
    CHECK(std::fabs(c - 0.2) < 4 * std::numeric_limits<double>::epsilon());
    CHECK(quant_confidence(-1.0, f) == 1.0);
    CHECK(quant_confidence(2.5, f) == 0.0);
    CHECK(quant_confidence(3.0, f) == 1.0);
    CHECK(quant_confidence(0.0, f) == 1.0);
    CHECK(quant_confidence(6.0, f) == 1.0);
    CHECK(quant_confidence(-6.0, f) == 1.0);
    CHECK_THROWS_AS(quant_confidence(6.5, f), RangeError);
    CHECK_THROWS_AS(quant_confidence(std::nan(""), f), RangeError);
}

TEST_CASE("confidence stays in [0, 1] and vanishes exactly on thresholds") {
    std::mt19937_64 gen(4);
    for (const Fp4Format* f : {&e2m1(), &e3m0()}) {
        std::uniform_real_distribution<double> u(f->q_neg, f->q_pos);
        std::vector<double> lat(100000);
        for (double& x : lat) x = u(gen);
        const auto rep = confidence_report(lat, *f, 50);
        std::size_t total = 0;
        for (auto h : rep.histogram) total += h;
        CHECK(total == lat.size());
        for (double c : rep.confidence) {
            CHECK(c >= 0.0);
            CHECK(c <= 1.0);
        }
        for (double t : f->thresholds) CHECK(quant_confidence(t, *f) == 0.0);
        for (std::size_t k = 1; k + 1 < kGridSize; ++k) {
            CHECK(quant_confidence(0.5 * (f->thresholds[k - 1] + f->thresholds[k]), *f) == 1.0);
        }
    }
    CHECK_THROWS_AS(confidence_report(std::vector<double>{0.0}, e2m1(), 0), ContractError);
}

TEST_CASE("confidence histogram places the closed last bin") {
    const auto rep = confidence_report(std::vector<double>{-0.75, 1.0, -0.8}, e2m1(), 10);
    CHECK(rep.histogram[0] == 1);
    CHECK(rep.histogram[9] == 1);
    CHECK(rep.histogram[2] == 1);
}

TEST_CASE("latent weights divide by the element's block scale") {
    Matrix w(2, 40);
    for (std::size_t i = 0; i < w.size(); ++i) w.values()[i] = 0.01 * static_cast<double>(i) - 0.3;
    const QuantizedMatrix q = quantize_matrix(w, Axis::RowGroups, {});
    const auto lat = latent_weights(w, q);
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t c = 0; c < 40; ++c) {
            const auto& b = q.blocks[r * 2 + c / 32];
            CHECK(lat[r * 40 + c] == std::ldexp(w(r, c), -b.scale.exponent));
            CHECK(std::fabs(lat[r * 40 + c]) <= 6.0);
        }
    }
}

TEST_CASE("rate of change") {
    SUBCASE("frozen tensor") {
        ChangeRateAccumulator acc;
        const std::vector<double> x{1.0, -2.0};
        for (int i = 0; i < 5; ++i) acc.observe(x);
        CHECK(rate_of_change(acc) == 0.0);
    }
    SUBCASE("geometric growth") {
        ChangeRateAccumulator acc;
        std::vector<double> x{0.5, -1.0, 3.0};
        acc.observe(x);
        for (int i = 0; i < 10; ++i) {
            for (double& v : x) v *= 1.01;
            acc.observe(x);
        }
        CHECK(rate_of_change(acc) == doctest::Approx(0.01).epsilon(1e-10));
        CHECK(acc.steps() == 10);
    }
    SUBCASE("doubling") {
        ChangeRateAccumulator acc;
        std::vector<double> x{1.0, 2.0};
        acc.observe(x);
        for (int i = 0; i < 3; ++i) {
            for (double& v : x) v *= 2.0;
            acc.observe(x);
        }
        CHECK(rate_of_change(acc) == 1.0);
    }
    SUBCASE("zero predecessor is skipped") {
        ChangeRateAccumulator acc;
        acc.observe(std::vector<double>{0.0, 0.0});
        acc.observe(std::vector<double>{1.0, 0.0});
        acc.observe(std::vector<double>{2.0, 0.0});
        CHECK(acc.skipped() == 1);
        CHECK(acc.steps() == 1);
        CHECK(rate_of_change(acc) == 1.0);
    }
    SUBCASE("undefined before a step") {
        ChangeRateAccumulator acc;
        CHECK_THROWS_AS(rate_of_change(acc), ContractError);
        acc.observe(std::vector<double>{1.0});
        CHECK_THROWS_AS(rate_of_change(acc), ContractError);
    }
    SUBCASE("scale invariance") {
        std::mt19937_64 gen(2);
        std::normal_distribution<double> nd;
        std::vector<std::vector<double>> traj(20, std::vector<double>(16));
        for (auto& s : traj)
            for (double& v : s) v = nd(gen);
        ChangeRateAccumulator a, b;
        for (const auto& s : traj) {
            a.observe(s);
            std::vector<double> scaled(s);
            for (double& v : scaled) v *= 8.0;  // power of two keeps it exact
            b.observe(scaled);
        }
        CHECK(rate_of_change(a) == rate_of_change(b));
        ChangeRateAccumulator c;
        for (const auto& s : traj) {
            std::vector<double> scaled(s);
            for (double& v : scaled) v *= 3.7;
            c.observe(scaled);
        }
        CHECK(rate_of_change(c) == doctest::Approx(rate_of_change(a)).epsilon(1e-12));
    }
}

TEST_CASE("flip frequency") {
    std::vector<std::vector<bool>> never(500, {false}), always(500, {true}), alt;
    for (int i = 0; i < 500; ++i) alt.push_back({i % 2 == 0});
    CHECK(flip_frequency(never, 0.9)[0] == 0.0);
    CHECK(flip_frequency(always, 0.9)[0] == doctest::Approx(1.0).epsilon(1e-12));
    // Two-step fixed points of f <- m f + (1 - m) b alternate between
    // 1/(1+m) after a flip and m/(1+m) after a miss.
    const double m = 0.9;
    alt.pop_back();  // end on a flip
    CHECK(flip_frequency(alt, m)[0] == doctest::Approx(1.0 / (1.0 + m)).epsilon(1e-12));
    alt.push_back({false});
    CHECK(flip_frequency(alt, m)[0] == doctest::Approx(m / (1.0 + m)).epsilon(1e-12));

    FlipFrequency ff(2, 0.5);
    ff.update(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0, 3.0});
    CHECK(ff.values()[0] == 0.0);
    CHECK(ff.values()[1] == 0.5);
    CHECK_THROWS_AS(FlipFrequency(2, 1.0), ConfigError);
}
