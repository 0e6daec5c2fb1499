#include <doctest.h>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "pap/gemm.hpp"
#include "pap/rng.hpp"
#include "pap/tensor.hpp"

using namespace pap;

TEST_CASE("shape basics and validation") {
    const Shape s{2, 3, 4, 5};
    CHECK(s.rank() == 4);
    CHECK(s.numel() == 120);
    CHECK(s.str() == "[2x3x4x5]");
    CHECK(s == Shape{2, 3, 4, 5});
    CHECK_FALSE(s == Shape{2, 3, 5, 4});
    CHECK_THROWS_AS(Shape({0, 3}), ShapeError);
    CHECK_THROWS_AS(Shape({1, 2, 3, 4, 5}), ShapeError);
    CHECK_THROWS_AS(Shape(std::initializer_list<int>{}), ShapeError);
}

TEST_CASE("shape mismatch messages name both shapes") {
    try {
        require_same_shape(Shape{1, 2}, Shape{2, 1}, "probe");
        FAIL("no throw");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[1x2]") != std::string::npos);
        CHECK(msg.find("[2x1]") != std::string::npos);
    }
}

TEST_CASE("tensor construction, reshape and batch slicing") {
    Tensor t(Shape{2, 1, 2, 2}, std::vector<float>{0, 1, 2, 3, 4, 5, 6, 7});
    CHECK(t.at(1, 0, 1, 0) == 6.0f);
    CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
    CHECK(t.reshaped(Shape{2, 4})[5] == 5.0f);
    CHECK_THROWS_AS(t.reshaped(Shape{3, 3}), ShapeError);
    const Tensor second = t.slice_batch(1, 1);
    CHECK(second.shape() == Shape{1, 1, 2, 2});
    CHECK(second[0] == 4.0f);
    CHECK_THROWS(t.slice_batch(1, 2));

    const std::vector<Tensor> parts = {t.slice_batch(1, 1), t.slice_batch(0, 1)};
    const Tensor joined = stack_batch<float>(parts);
    CHECK(joined.shape() == t.shape());
    CHECK(joined[0] == 4.0f);
    CHECK(joined[4] == 0.0f);

    Tensor bad(Shape{1, 2});
    bad[1] = std::nanf("");
    CHECK_FALSE(bad.all_finite());
    CHECK(t.all_finite());
}

TEST_CASE("gemm matches a naive product for every transpose combination") {
    Rng rng(3);
    for (int trial = 0; trial < 40; ++trial) {
        const int m = 1 + static_cast<int>(rng.below(70));
        const int n = 1 + static_cast<int>(rng.below(90));
        const int k = 1 + static_cast<int>(rng.below(300));
        const auto ta = rng.bernoulli(0.5) ? Trans::Yes : Trans::No;
        const auto tb = rng.bernoulli(0.5) ? Trans::Yes : Trans::No;
        std::vector<double> a(static_cast<std::size_t>(m) * k), b(static_cast<std::size_t>(k) * n);
        for (auto& v : a) v = rng.uniform(-1, 1);
        for (auto& v : b) v = rng.uniform(-1, 1);
        // Stored layouts: A is m x k or (k x m when transposed); same for B.
        std::vector<float> as(a.size()), bs(b.size());
        for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
                const double v = a[static_cast<std::size_t>(i) * k + p];
                as[ta == Trans::No ? static_cast<std::size_t>(i) * k + p : static_cast<std::size_t>(p) * m + i] = static_cast<float>(v);
            }
        for (int p = 0; p < k; ++p)
            for (int j = 0; j < n; ++j) {
                const double v = b[static_cast<std::size_t>(p) * n + j];
                bs[tb == Trans::No ? static_cast<std::size_t>(p) * n + j : static_cast<std::size_t>(j) * k + p] = static_cast<float>(v);
            }
        std::vector<double> af(a.size()), bf(b.size());
        for (std::size_t i = 0; i < a.size(); ++i) af[i] = static_cast<float>(a[i]);
        for (std::size_t i = 0; i < b.size(); ++i) bf[i] = static_cast<float>(b[i]);
        const auto expect = oracle::matmul(af, bf, m, n, k);

        std::vector<float> c(static_cast<std::size_t>(m) * n, 1.0f);
        const bool accumulate = trial % 3 == 0;
        gemm<float>(ta, tb, m, n, k, as.data(), ta == Trans::No ? k : m, bs.data(), tb == Trans::No ? n : k, c.data(), n,
                    accumulate);
        double worst = 0.0;
        for (std::size_t i = 0; i < c.size(); ++i) worst = std::max(worst, std::abs(c[i] - (expect[i] + (accumulate ? 1.0 : 0.0))));
        CHECK(worst <= 1e-4 * std::sqrt(static_cast<double>(k)));
    }
}

TEST_CASE("gemm in double is exact to rounding") {
    Rng rng(9);
    const int m = 33, n = 47, k = 129;
    std::vector<double> a(static_cast<std::size_t>(m) * k), b(static_cast<std::size_t>(k) * n), c(static_cast<std::size_t>(m) * n);
    for (auto& v : a) v = rng.uniform(-1, 1);
    for (auto& v : b) v = rng.uniform(-1, 1);
    gemm<double>(Trans::No, Trans::No, m, n, k, a.data(), k, b.data(), n, c.data(), n, false);
    const auto expect = oracle::matmul(a, b, m, n, k);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("derived seeds are stable and key-sensitive") {
    CHECK(derive_seed(1, 2, 3) == derive_seed(1, 2, 3));
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
    CHECK(hash_id("a") != hash_id("b"));
    Rng a(5), b(5);
    for (int i = 0; i < 10; ++i) CHECK(a.next() == b.next());
    Rng u(11);
    for (int i = 0; i < 1000; ++i) {
        const double v = u.uniform();
        CHECK((v >= 0.0 && v < 1.0));
        CHECK(u.below(7) < 7u);
    }
}
