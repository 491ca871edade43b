#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "oracles.hpp"
#include "stm/ops.hpp"
#include "stm/rng.hpp"

using namespace stm;

TEST_CASE("conv2d scalar affine") {
    Tensor3 in(1, 1, 1);
    in.data[0] = 2.0;
    KernelBank k(1, 1, 1, 1);
    k.weights[0] = 3.0;
    k.bias[0] = 1.0;
    Tensor3 out = conv2d(in, k, Padding::valid);
    CHECK(out.data[0] == doctest::Approx(7.0));
}

TEST_CASE("conv2d counting case") {
    Tensor3 in(3, 3, 1, 1.0);
    KernelBank k(1, 1, 3, 3);
    for (double& w : k.weights) w = 1.0;
    Tensor3 out = conv2d(in, k, Padding::valid);
    CHECK(out.h == 1);
    CHECK(out.w == 1);
    CHECK(out.data[0] == doctest::Approx(9.0));
}

TEST_CASE("conv2d matches per-position dot-product oracle") {
    Rng rng(42);
    Tensor3 in = oracle::random_tensor3(5, 5, 2, rng);
    KernelBank k = oracle::random_bank(2, 2, 3, 3, rng);
    Tensor3 got = conv2d(in, k, Padding::valid);
    Tensor3 want = oracle::conv2d_valid(in, k);
    REQUIRE(got.same_shape(want));
    for (size_t i = 0; i < got.size(); i++)
        CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
}

TEST_CASE("conv2d same padding matches zero-padded valid oracle") {
    Rng rng(43);
    Tensor3 in = oracle::random_tensor3(4, 5, 3, rng);
    KernelBank k = oracle::random_bank(2, 3, 3, 3, rng);
    Tensor3 got = conv2d(in, k, Padding::same);
    REQUIRE(got.h == in.h);
    REQUIRE(got.w == in.w);

    Tensor3 padded(in.h + 2, in.w + 2, in.c);
    for (int y = 0; y < in.h; y++)
        for (int x = 0; x < in.w; x++)
            for (int c = 0; c < in.c; c++) padded.at(y + 1, x + 1, c) = in.at(y, x, c);
    Tensor3 want = oracle::conv2d_valid(padded, k);
    for (size_t i = 0; i < got.size(); i++)
        CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
}

TEST_CASE("conv2d shape error names both shapes") {
    Tensor3 in(2, 2, 3);
    KernelBank k(1, 4, 1, 1);
    try {
        conv2d(in, k, Padding::valid);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        std::string msg = e.what();
        CHECK(msg.find("2x2x3") != std::string::npos);
        CHECK(msg.find("4->1") != std::string::npos);
    }
}

TEST_CASE("conv2d is deterministic") {
    Rng rng(7);
    Tensor3 in = oracle::random_tensor3(6, 6, 4, rng);
    KernelBank k = oracle::random_bank(4, 4, 3, 3, rng);
    Tensor3 a = conv2d(in, k, Padding::same);
    Tensor3 b = conv2d(in, k, Padding::same);
    CHECK(std::memcmp(a.data.data(), b.data.data(), a.size() * sizeof(double)) == 0);
}

TEST_CASE("conv2d gradients vs central differences") {
    Rng rng(11);
    for (Padding pad : {Padding::valid, Padding::same}) {
        Tensor3 in = oracle::random_tensor3(4, 4, 2, rng);
        KernelBank k = oracle::random_bank(3, 2, 3, 3, rng);
        Tensor3 r = pad == Padding::valid ? oracle::random_tensor3(2, 2, 3, rng)
                                          : oracle::random_tensor3(4, 4, 3, rng);

        auto loss = [&]() {
            Tensor3 out = conv2d(in, k, pad);
            double acc = 0.0;
            for (size_t i = 0; i < out.size(); i++) acc += r.data[i] * out.data[i];
            return acc;
        };
        ConvGrads g = conv2d_backward(in, k, pad, r);

        std::vector<double*> coords;
        std::vector<double> analytic;
        for (size_t i = 0; i < in.size(); i++) {
            coords.push_back(&in.data[i]);
            analytic.push_back(g.input.data[i]);
        }
        for (size_t i = 0; i < k.weights.size(); i++) {
            coords.push_back(&k.weights[i]);
            analytic.push_back(g.bank.weights[i]);
        }
        for (size_t i = 0; i < k.bias.size(); i++) {
            coords.push_back(&k.bias[i]);
            analytic.push_back(g.bank.bias[i]);
        }
        CHECK(oracle::check_gradient(loss, coords, analytic) < 1e-4);
    }
}

TEST_CASE("strided conv shape and gradient") {
    Rng rng(12);
    Tensor3 in = oracle::random_tensor3(8, 8, 2, rng);
    KernelBank k = oracle::random_bank(3, 2, 3, 3, rng);
    Tensor3 out = conv2d_strided(in, k, 2);
    REQUIRE(out.h == 4);
    REQUIRE(out.w == 4);
    REQUIRE(out.c == 3);

    Tensor3 r = oracle::random_tensor3(4, 4, 3, rng);
    auto loss = [&]() {
        Tensor3 o = conv2d_strided(in, k, 2);
        double acc = 0.0;
        for (size_t i = 0; i < o.size(); i++) acc += r.data[i] * o.data[i];
        return acc;
    };
    ConvGrads g = conv2d_strided_backward(in, k, 2, r);
    std::vector<double*> coords;
    std::vector<double> analytic;
    for (size_t i = 0; i < in.size(); i++) {
        coords.push_back(&in.data[i]);
        analytic.push_back(g.input.data[i]);
    }
    for (size_t i = 0; i < k.weights.size(); i++) {
        coords.push_back(&k.weights[i]);
        analytic.push_back(g.bank.weights[i]);
    }
    CHECK(oracle::check_gradient(loss, coords, analytic) < 1e-4);
}

TEST_CASE("pooling degenerate window is a global pool") {
    Rng rng(13);
    Tensor3 in = oracle::random_tensor3(3, 4, 5, rng);
    Tensor3 mx = max_pool(in, 3, 4);
    Tensor3 av = avg_pool(in, 3, 4);
    CHECK(mx.h == 1);
    CHECK(mx.w == 1);
    CHECK(mx.c == 5);
    for (int c = 0; c < 5; c++) {
        CHECK(mx.at(0, 0, c) == doctest::Approx(oracle::max_pool_window(in, 0, 0, 3, 4)[c]));
        CHECK(av.at(0, 0, c) == doctest::Approx(oracle::avg_pool_window(in, 0, 0, 3, 4)[c]));
    }
}

TEST_CASE("max_pool window enumeration") {
    Tensor3 in(3, 3, 1);
    for (int i = 0; i < 9; i++) in.data[i] = i + 1;
    Tensor3 out = max_pool(in, 2, 2);
    REQUIRE(out.h == 2);
    REQUIRE(out.w == 2);
    CHECK(out.data[0] == 5);
    CHECK(out.data[1] == 6);
    CHECK(out.data[2] == 8);
    CHECK(out.data[3] == 9);
}

TEST_CASE("pooling on constant field") {
    Tensor3 in(4, 4, 2, 0.7);
    Tensor3 mx = max_pool(in, 2, 3);
    Tensor3 av = avg_pool(in, 2, 3);
    for (size_t i = 0; i < mx.size(); i++) {
        CHECK(mx.data[i] == doctest::Approx(0.7));
        CHECK(av.data[i] == doctest::Approx(0.7));
    }
}

TEST_CASE("pooling rejects oversized kernels") {
    Tensor3 in(2, 2, 1);
    CHECK_THROWS_AS(max_pool(in, 3, 1), ShapeError);
    CHECK_THROWS_AS(avg_pool(in, 1, 3), ShapeError);
}

TEST_CASE("pooling matches per-window oracle on random input") {
    Rng rng(14);
    Tensor3 in = oracle::random_tensor3(6, 7, 3, rng);
    Tensor3 mx = max_pool(in, 3, 2);
    Tensor3 av = avg_pool(in, 3, 2);
    for (int y = 0; y < mx.h; y++)
        for (int x = 0; x < mx.w; x++) {
            auto wm = oracle::max_pool_window(in, y, x, 3, 2);
            auto wa = oracle::avg_pool_window(in, y, x, 3, 2);
            for (int c = 0; c < 3; c++) {
                CHECK(mx.at(y, x, c) == doctest::Approx(wm[c]));
                CHECK(av.at(y, x, c) == doctest::Approx(wa[c]).epsilon(1e-12));
            }
        }
}

TEST_CASE("pooling gradients vs central differences") {
    Rng rng(15);
    Tensor3 in = oracle::random_tensor3(5, 5, 2, rng);
    Tensor3 r = oracle::random_tensor3(3, 4, 2, rng);

    SUBCASE("max") {
        auto loss = [&]() {
            Tensor3 o = max_pool(in, 3, 2);
            double acc = 0.0;
            for (size_t i = 0; i < o.size(); i++) acc += r.data[i] * o.data[i];
            return acc;
        };
        std::vector<int> argmax;
        max_pool(in, 3, 2, &argmax);
        Tensor3 g = max_pool_backward(in, 3, 2, argmax, r);
        std::vector<double*> coords;
        std::vector<double> analytic;
        for (size_t i = 0; i < in.size(); i++) {
            coords.push_back(&in.data[i]);
            analytic.push_back(g.data[i]);
        }
        CHECK(oracle::check_gradient(loss, coords, analytic) < 1e-4);
    }
    SUBCASE("avg") {
        auto loss = [&]() {
            Tensor3 o = avg_pool(in, 3, 2);
            double acc = 0.0;
            for (size_t i = 0; i < o.size(); i++) acc += r.data[i] * o.data[i];
            return acc;
        };
        Tensor3 g = avg_pool_backward(5, 5, 3, 2, r);
        std::vector<double*> coords;
        std::vector<double> analytic;
        for (size_t i = 0; i < in.size(); i++) {
            coords.push_back(&in.data[i]);
            analytic.push_back(g.data[i]);
        }
        CHECK(oracle::check_gradient(loss, coords, analytic) < 1e-4);
    }
}

TEST_CASE("circular_shift identity and inverse") {
    Rng rng(16);
    Tensor2 m = oracle::random_tensor2(4, 5, rng);
    Tensor2 same = circular_shift(m, 0, 0);
    CHECK(std::memcmp(same.data.data(), m.data.data(), m.size() * sizeof(double)) == 0);

    Tensor2 round = circular_shift(circular_shift(m, 3, -2), -3, 2);
    CHECK(std::memcmp(round.data.data(), m.data.data(), m.size() * sizeof(double)) == 0);
}

TEST_CASE("circular_shift moves a delta by (dy,dx)") {
    Tensor2 m(3, 3);
    m.at(0, 0) = 1.0;
    Tensor2 s = circular_shift(m, 1, 2);
    for (int y = 0; y < 3; y++)
        for (int x = 0; x < 3; x++) CHECK(s.at(y, x) == (y == 1 && x == 2 ? 1.0 : 0.0));
}

TEST_CASE("circular_shift wraps modulo dimensions") {
    Tensor2 m(2, 3);
    for (int i = 0; i < 6; i++) m.data[i] = i;
    Tensor2 a = circular_shift(m, 2, 3);   // full wrap = identity
    Tensor2 b = circular_shift(m, -2, -3);
    CHECK(std::memcmp(a.data.data(), m.data.data(), m.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(b.data.data(), m.data.data(), m.size() * sizeof(double)) == 0);
}

TEST_CASE("topk_peaks basics") {
    Tensor2 m(3, 3);
    m.at(1, 2) = 5.0;
    m.at(0, 1) = 2.0;
    auto peaks = topk_peaks(m, 2);
    CHECK(peaks[0].y == 1);
    CHECK(peaks[0].x == 2);
    CHECK(peaks[0].score == 5.0);
    CHECK(peaks[1].y == 0);
    CHECK(peaks[1].x == 1);
}

TEST_CASE("topk_peaks tie-break by row-major index") {
    Tensor2 m(2, 3, 1.0);
    auto peaks = topk_peaks(m, 3);
    CHECK(peaks[0].y == 0);
    CHECK(peaks[0].x == 0);
    CHECK(peaks[1].y == 0);
    CHECK(peaks[1].x == 1);
    CHECK(peaks[2].y == 0);
    CHECK(peaks[2].x == 2);
}

TEST_CASE("topk_peaks matches full-sort oracle") {
    Rng rng(17);
    Tensor2 m = oracle::random_tensor2(8, 8, rng);
    auto peaks = topk_peaks(m, 64);
    std::vector<double> sorted = m.data;
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    for (int i = 0; i < 64; i++) CHECK(peaks[i].score == sorted[i]);
    for (int i = 1; i < 64; i++) CHECK(peaks[i - 1].score >= peaks[i].score);
}

TEST_CASE("topk_peaks rejects out-of-range K") {
    Tensor2 m(2, 2);
    CHECK_THROWS_AS(topk_peaks(m, 0), ConfigError);
    CHECK_THROWS_AS(topk_peaks(m, 5), ConfigError);
}

TEST_CASE("hanning2d degenerate and closed form") {
    Tensor2 one = hanning2d(1, 1);
    CHECK(one.data[0] == doctest::Approx(1.0));

    Tensor2 h = hanning2d(5, 5);
    CHECK(h.at(2, 2) == doctest::Approx(1.0));
    const double w1 = 0.5 * (1.0 - std::cos(2.0 * M_PI * 1.0 / 4.0));
    CHECK(h.at(1, 1) == doctest::Approx(w1 * w1));
    CHECK(h.at(2, 1) == doctest::Approx(w1));
    for (double v : h.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("hanning2d symmetry") {
    Tensor2 h = hanning2d(6, 9);
    for (int y = 0; y < 6; y++)
        for (int x = 0; x < 9; x++)
            CHECK(h.at(y, x) == doctest::Approx(h.at(5 - y, 8 - x)).epsilon(1e-12));
}

TEST_CASE("normalize_distribution near-identity on normalized input") {
    Tensor2 m(2, 2);
    m.data = {0.7, 0.1, 0.1, 0.1};
    Tensor2 out = normalize_distribution(m, 1e-8);
    for (int i = 0; i < 4; i++) CHECK(out.data[i] == doctest::Approx(m.data[i]).epsilon(1e-6));
}

TEST_CASE("normalize_distribution uniform fallback") {
    Tensor2 m(2, 2, 0.0);
    Tensor2 out = normalize_distribution(m, 1e-8);
    for (double v : out.data) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("normalize_distribution sums to one") {
    Rng rng(18);
    for (int rep = 0; rep < 20; rep++) {
        Tensor2 m = oracle::random_tensor2(5, 7, rng, 0.0, 3.0);
        Tensor2 out = normalize_distribution(m, 1e-8);
        double sum = 0.0;
        for (double v : out.data) {
            sum += v;
            CHECK(v >= 1e-8 / (1.0 + 1e-8 * 35) * 0.999);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("normalize_distribution gradient vs central differences") {
    Rng rng(19);
    Tensor2 m = oracle::random_tensor2(3, 4, rng, 0.1, 2.0);
    Tensor2 r = oracle::random_tensor2(3, 4, rng);
    auto loss = [&]() {
        Tensor2 o = normalize_distribution(m, 1e-8);
        double acc = 0.0;
        for (size_t i = 0; i < o.size(); i++) acc += r.data[i] * o.data[i];
        return acc;
    };
    Tensor2 g = normalize_distribution_backward(m, 1e-8, r);
    std::vector<double*> coords;
    std::vector<double> analytic;
    for (size_t i = 0; i < m.size(); i++) {
        coords.push_back(&m.data[i]);
        analytic.push_back(g.data[i]);
    }
    CHECK(oracle::check_gradient(loss, coords, analytic) < 1e-4);
}

TEST_CASE("broadcast_add and its reduction gradient") {
    Rng rng(20);
    Tensor3 a = oracle::random_tensor3(3, 4, 2, rng);
    Tensor3 b = oracle::random_tensor3(1, 1, 2, rng);
    Tensor3 out = broadcast_add(a, b);
    for (int y = 0; y < 3; y++)
        for (int x = 0; x < 4; x++)
            for (int c = 0; c < 2; c++)
                CHECK(out.at(y, x, c) == doctest::Approx(a.at(y, x, c) + b.at(0, 0, c)));

    Tensor3 r = oracle::random_tensor3(3, 4, 2, rng);
    auto loss = [&]() {
        Tensor3 o = broadcast_add(a, b);
        double acc = 0.0;
        for (size_t i = 0; i < o.size(); i++) acc += r.data[i] * o.data[i];
        return acc;
    };
    Tensor3 gb = spatial_sum(r);
    std::vector<double*> coords;
    std::vector<double> analytic;
    for (size_t i = 0; i < b.size(); i++) {
        coords.push_back(&b.data[i]);
        analytic.push_back(gb.data[i]);
    }
    CHECK(oracle::check_gradient(loss, coords, analytic) < 1e-4);
}

TEST_CASE("relu gradient vs central differences") {
    Rng rng(21);
    Tensor3 in = oracle::random_tensor3(4, 4, 2, rng);
    Tensor3 r = oracle::random_tensor3(4, 4, 2, rng);
    auto loss = [&]() {
        Tensor3 o = relu(in);
        double acc = 0.0;
        for (size_t i = 0; i < o.size(); i++) acc += r.data[i] * o.data[i];
        return acc;
    };
    Tensor3 g = relu_backward(in, r);
    std::vector<double*> coords;
    std::vector<double> analytic;
    for (size_t i = 0; i < in.size(); i++) {
        if (std::fabs(in.data[i]) < 1e-3) continue;  // stay away from the kink
        coords.push_back(&in.data[i]);
        analytic.push_back(g.data[i]);
    }
    CHECK(oracle::check_gradient(loss, coords, analytic) < 1e-4);
}
