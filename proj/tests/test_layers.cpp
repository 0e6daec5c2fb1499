#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "oracles.hpp"
#include "pap/layers.hpp"

using namespace pap;

namespace {

Tensor random_float(Shape s, Rng& rng) {
    Tensor t(s);
    for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-1, 1));
    return t;
}

}  // namespace

TEST_CASE("conv2d forward matches the nested-loop oracle") {
    Rng rng(21);
    for (int trial = 0; trial < 25; ++trial) {
        const int c = 1 + static_cast<int>(rng.below(4)), f = 1 + static_cast<int>(rng.below(5));
        const int k = trial % 3 == 0 ? 1 : 3, stride = 1 + static_cast<int>(rng.below(2));
        const int pad = k == 3 ? static_cast<int>(rng.below(2)) : 0;
        const int h = 3 + static_cast<int>(rng.below(9)), w = 3 + static_cast<int>(rng.below(9));
        auto p = make_conv_params<float>("c", c, f, k);
        p.weights = random_float(p.weights.shape(), rng);
        p.bias = random_float(p.bias.shape(), rng);
        const Tensor x = random_float(Shape{2, c, h, w}, rng);
        int oh = 0, ow = 0;
        const auto expect = oracle::conv2d(x, p.weights, p.bias, stride, pad, oh, ow);
        const Tensor got = conv2d_forward(x, p, stride, pad);
        REQUIRE(got.shape() == Shape{2, f, oh, ow});
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - expect[i]) <= 1e-5);
    }
}

TEST_CASE("conv2d rejects mismatched channels and oversized kernels") {
    auto p = make_conv_params<float>("c", 3, 4, 3);
    CHECK_THROWS_AS(conv2d_forward(Tensor(Shape{1, 2, 5, 5}), p, 1, 1), ShapeError);
    CHECK_THROWS(conv2d_forward(Tensor(Shape{1, 3, 2, 2}), p, 1, 0));
    CHECK_THROWS(conv2d_forward(Tensor(Shape{1, 3, 5, 5}), p, 0, 1));
}

TEST_CASE("maxpool2 matches the oracle and breaks ties toward the first element") {
    Rng rng(4);
    const Tensor x = random_float(Shape{2, 3, 6, 8}, rng);
    const auto expect = oracle::maxpool2(x);
    const auto got = maxpool2_forward(x);
    REQUIRE(got.output.size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(got.output[i] == static_cast<float>(expect[i]));

    const Tensor flat(Shape{1, 1, 2, 2}, 7.0f);
    const auto tie = maxpool2_forward(flat);
    CHECK(tie.argmax[0] == 0);
    const Tensor back = maxpool2_backward(tie.argmax, Tensor(Shape{1, 1, 1, 1}, 1.0f), flat.shape());
    CHECK(back[0] == 1.0f);
    CHECK(back[1] + back[2] + back[3] == 0.0f);
    CHECK_THROWS(maxpool2_forward(Tensor(Shape{1, 1, 3, 4})));
}

TEST_CASE("dense forward matches a matrix product plus bias") {
    Rng rng(8);
    auto p = make_dense_params<float>("d", 7, 5);
    p.weights = random_float(p.weights.shape(), rng);
    p.bias = random_float(p.bias.shape(), rng);
    const Tensor x = random_float(Shape{3, 7}, rng);
    std::vector<double> a(x.values().begin(), x.values().end()), w(p.weights.values().begin(), p.weights.values().end());
    const auto expect = oracle::matmul(a, w, 3, 5, 7);
    const Tensor got = dense_forward(x, p);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 5; ++j)
            CHECK(std::abs(got[static_cast<std::size_t>(i * 5 + j)] - (expect[static_cast<std::size_t>(i * 5 + j)] + p.bias[static_cast<std::size_t>(j)])) <= 1e-5);
}

TEST_CASE("relu gradient is zero at zero and sigmoid stays finite at extremes") {
    const Tensor x(Shape{1, 3}, std::vector<float>{-1.0f, 0.0f, 2.0f});
    const Tensor g = relu_backward(x, Tensor(Shape{1, 3}, 1.0f));
    CHECK(g[0] == 0.0f);
    CHECK(g[1] == 0.0f);
    CHECK(g[2] == 1.0f);
    const Tensor s = sigmoid(Tensor(Shape{1, 2}, std::vector<float>{-1000.0f, 1000.0f}));
    CHECK(s.all_finite());
    CHECK(s[0] == doctest::Approx(0.0));
    CHECK(s[1] == doctest::Approx(1.0));
}

TEST_CASE("dropout is identity at inference and unbiased in training") {
    Rng rng(1);
    const Tensor x(Shape{200, 50}, 1.0f);
    const auto inf = dropout(x, 0.5, rng, false);
    CHECK(inf.mask.empty());
    CHECK(inf.output.values()[17] == 1.0f);

    const auto tr = dropout(x, 0.5, rng, true);
    double sum = 0.0;
    for (float v : tr.output.values()) {
        CHECK((v == 0.0f || v == 2.0f));
        sum += v;
    }
    CHECK(sum / static_cast<double>(x.size()) == doctest::Approx(1.0).epsilon(0.05));
    CHECK_THROWS_AS(dropout(x, 1.0, rng, true), std::invalid_argument);
    CHECK_THROWS_AS(dropout(x, -0.1, rng, true), std::invalid_argument);
}

TEST_CASE("upsample and channel concat round-trip through their backward passes") {
    const Tensor a(Shape{1, 1, 1, 2}, std::vector<float>{1.0f, 2.0f});
    const Tensor up = upsample2_forward(a);
    CHECK(up.shape() == Shape{1, 1, 2, 4});
    CHECK(up.at(0, 0, 1, 3) == 2.0f);
    const Tensor down = upsample2_backward(up);
    CHECK(down[0] == 4.0f);
    CHECK(down[1] == 8.0f);

    const Tensor b(Shape{1, 2, 2, 4}, 3.0f);
    const Tensor cat = concat_channels(up, b);
    CHECK(cat.shape() == Shape{1, 3, 2, 4});
    const auto [l, r] = split_channels(cat, 1);
    CHECK(l.values()[0] == up.values()[0]);
    CHECK(r.shape() == b.shape());
    CHECK_THROWS_AS(concat_channels(up, Tensor(Shape{1, 1, 3, 4})), ShapeError);
}

TEST_CASE("per-layer finite-difference checks pass on a handful of seeds") {
    for (const auto& e : gradcheck::all_checks()) {
        const std::string name = e.name;
        if (name == "unet_toy" || name == "classifier_toy") continue;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            INFO(name << " seed " << seed);
            CHECK(e.fn(seed) <= 1e-3);
        }
    }
}

TEST_CASE("the finite-difference check notices a wrong gradient") {
    Rng rng(2);
    auto p = make_dense_params<double>("d", 4, 3);
    p.weights = gradcheck::random_tensor(p.weights.shape(), rng);
    BasicTensor<double> x = gradcheck::random_tensor(Shape{2, 4}, rng);
    const BasicTensor<double> r = gradcheck::random_tensor(Shape{2, 3}, rng);
    auto loss = [&] { return gradcheck::dot(dense_forward(x, p), r); };
    BasicTensor<double> dx = dense_backward(x, p, r);
    dx[3] *= 1.01;
    CHECK(gradcheck::check(loss, x, dx, 1e-5) > 1e-3);
}

TEST_CASE("initializers respect their bounds and zero the bias") {
    Rng rng(12);
    auto p = make_conv_params<float>("c", 8, 4, 3);
    p.bias.fill(1.0f);
    he_uniform_init(p, rng);
    const double bound = std::sqrt(6.0 / 72.0);
    for (float v : p.weights.values()) CHECK(std::abs(v) <= bound);
    for (float v : p.bias.values()) CHECK(v == 0.0f);
    auto d = make_dense_params<float>("d", 10, 2);
    glorot_uniform_init(d, rng);
    for (float v : d.weights.values()) CHECK(std::abs(v) <= std::sqrt(6.0 / 12.0));
}
