#include <doctest.h>

#include "meatlab/errors.hpp"
#include "meatlab/rng.hpp"
#include "meatlab/tensor.hpp"

#include "../support/oracles.hpp"

#include <cmath>
#include <limits>
#include <random>

using namespace meat;

TEST_CASE("matmul identity and dot product") {
    const Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
    const Tensor b = Tensor::matrix({{3, 4}, {5, 6}});
    CHECK(matmul(eye, b) == b);

    const Tensor row = Tensor::matrix({{1, 2}});
    const Tensor col = Tensor::matrix({{3}, {4}});
    const Tensor out = matmul(row, col);
    CHECK(out.shape() == Shape{1, 1});
    CHECK(out[0] == 11.0f);
}

TEST_CASE("matmul agrees with a triple loop") {
    std::mt19937_64 gen(7);
    for (int trial = 0; trial < 20; ++trial) {
        const Tensor a = oracle::random_tensor(gen, {5, 7});
        const Tensor b = oracle::random_tensor(gen, {7, 3});
        const Tensor got = matmul(a, b);
        const auto want = oracle::matmul(a, b);
        REQUIRE(got.shape() == Shape{5, 3});
        for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-6);
    }
}

TEST_CASE("matmul rejects inner dimension mismatch") {
    const Tensor a(Shape{2, 3});
    const Tensor b(Shape{4, 2});
    CHECK_THROWS_AS(matmul(a, b), DimensionError);
    try {
        matmul(a, b);
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        CHECK(msg.find(shape_string({2, 3})) != std::string::npos);
        CHECK(msg.find(shape_string({4, 2})) != std::string::npos);
    }
}

TEST_CASE("transpose") {
    const Tensor t = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
    const Tensor tt = transpose(t);
    CHECK(tt.shape() == Shape{3, 2});
    CHECK(tt.at(2, 1) == 6.0f);
    CHECK(transpose(tt) == t);
}

TEST_CASE("clamp") {
    const Tensor t = Tensor::vector({-0.5f, 0.3f, 1.7f});
    CHECK(clamp(t, 0, 1) == Tensor::vector({0.0f, 0.3f, 1.0f}));

    const float big = std::numeric_limits<float>::max();
    CHECK(clamp(t, -big, big) == t);

    CHECK_THROWS_AS(clamp(t, 1, 0), ArgumentError);

    std::mt19937_64 gen(3);
    const Tensor r = oracle::random_tensor(gen, {1000}, 2.0);
    const Tensor c = clamp(r, -1.0f, 0.5f);
    for (std::size_t i = 0; i < r.size(); ++i) {
        CHECK(c[i] >= -1.0f);
        CHECK(c[i] <= 0.5f);
        if (r[i] >= -1.0f && r[i] <= 0.5f) CHECK(c[i] == r[i]);
    }
}

TEST_CASE("sign") {
    CHECK(sign(Tensor::vector({-2.5f, 0.0f, 0.1f})) == Tensor::vector({-1.0f, 0.0f, 1.0f}));

    std::mt19937_64 gen(11);
    Tensor r = oracle::random_tensor(gen, {500});
    r[0] = 0.0f;
    r[1] = -0.0f;
    const Tensor s = sign(r);
    CHECK(sign(s) == s);
    for (std::size_t i = 0; i < r.size(); ++i) {
        CHECK((s[i] == -1.0f || s[i] == 0.0f || s[i] == 1.0f));
        CHECK(std::abs(s[i] * std::abs(r[i]) - r[i]) <= 1e-6);
    }
    CHECK(s[1] == 0.0f);
}

TEST_CASE("elementwise helpers") {
    const Tensor a = Tensor::vector({1, 2, 3});
    const Tensor b = Tensor::vector({4, 5, 6});
    CHECK(add(a, b) == Tensor::vector({5, 7, 9}));
    CHECK(sub(b, a) == Tensor::vector({3, 3, 3}));
    CHECK(scale(a, 2) == Tensor::vector({2, 4, 6}));
    CHECK(axpy(a, 0.5f, b) == Tensor::vector({3, 4.5f, 6}));
    CHECK(sum(a) == 6.0);
    CHECK(squared_norm(a) == 14.0);
    const Tensor parts[] = {a, b};
    CHECK(frobenius_norm(parts) == doctest::Approx(std::sqrt(91.0)));
    CHECK_THROWS_AS(add(a, Tensor::vector({1, 2})), DimensionError);
}

TEST_CASE("all_finite") {
    Tensor t = Tensor::vector({1, 2});
    CHECK(all_finite(t));
    t[1] = std::numeric_limits<float>::quiet_NaN();
    CHECK_FALSE(all_finite(t));
    t[1] = std::numeric_limits<float>::infinity();
    CHECK_FALSE(all_finite(t));
}

TEST_CASE("bit_equal distinguishes signed zeros") {
    const Tensor a = Tensor::vector({0.0f});
    const Tensor b = Tensor::vector({-0.0f});
    CHECK(a == b);
    CHECK_FALSE(bit_equal(a, b));
    CHECK(bit_equal(a, a));
}

TEST_CASE("reshape and row slices") {
    const Tensor t = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}});
    CHECK(t.rows(1, 3) == Tensor::matrix({{3, 4}, {5, 6}}));
    CHECK(t.reshaped({6}) == Tensor::vector({1, 2, 3, 4, 5, 6}));
    CHECK_THROWS_AS(t.reshaped({4}), DimensionError);
}

TEST_CASE("gaussian is deterministic per seed") {
    Rng a(42), b(42), c(43);
    const Tensor x = gaussian(a, {64});
    CHECK(bit_equal(x, gaussian(b, {64})));
    CHECK_FALSE(bit_equal(x, gaussian(c, {64})));
}

TEST_CASE("gaussian moments over 1e5 draws") {
    Rng rng(2024);
    const Tensor x = gaussian(rng, {100000});
    const double mean = sum(x) / 1e5;
    double var = 0.0;
    for (float v : x.values()) var += (v - mean) * (v - mean);
    var /= (1e5 - 1);
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("uniform draws stay in range") {
    Rng rng(5);
    const Tensor u = uniform(rng, {10000}, -0.25f, 0.25f);
    for (float v : u.values()) {
        CHECK(v >= -0.25f);
        CHECK(v <= 0.25f);
    }
    Rng r(9);
    for (int i = 0; i < 10000; ++i) {
        const double d = r.uniform();
        REQUIRE(d >= 0.0);
        REQUIRE(d < 1.0);
        REQUIRE(r.below(7) < 7);
    }
}

TEST_CASE("substreams are reproducible and independent of parent position") {
    Rng parent(100);
    Rng s1 = parent.substream(3);
    parent.next_u64();
    Rng s2 = parent.substream(3);
    CHECK(s1.next_u64() == s2.next_u64());
    CHECK(parent.substream(4).next_u64() != parent.substream(3).next_u64());
}
