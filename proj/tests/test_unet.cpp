#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "pap/unet.hpp"

using namespace pap;

namespace {

std::size_t conv_params(std::size_t in, std::size_t out, std::size_t k) { return out * (in * k * k + 1); }

Tensor random_image(int size, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t(Shape{1, 1, size, size});
    for (auto& v : t.values()) v = static_cast<float>(rng.uniform(0.0, 1.0));
    return t;
}

Tensor constant_map(int size, float v) {
    Tensor t(Shape{1, 1, size, size});
    t.fill(v);
    return t;
}

std::vector<std::vector<float>> snapshot(const UNet& m) {
    std::vector<std::vector<float>> out;
    for (const auto* p : m.params()) {
        out.emplace_back(p->weights.values().begin(), p->weights.values().end());
        out.emplace_back(p->bias.values().begin(), p->bias.values().end());
    }
    return out;
}

}  // namespace

TEST_CASE("U-Net output shape and default parameter count") {
    const UNet net(UNetConfig{}, 1);
    const std::size_t w = 16;
    std::size_t expected = conv_params(1, w, 3) + conv_params(w, w, 3) + conv_params(w, 2 * w, 3) +
                           conv_params(2 * w, 2 * w, 3) + conv_params(2 * w, 4 * w, 3) + conv_params(4 * w, 4 * w, 3) +
                           conv_params(4 * w, 8 * w, 3) + conv_params(8 * w, 8 * w, 3);
    for (std::size_t c : {4 * w, 2 * w, w}) {
        expected += conv_params(2 * c, c, 3) + conv_params(2 * c, c, 3) + conv_params(c, c, 3);
    }
    expected += conv_params(w, 1, 1);
    CHECK(net.parameter_count() == expected);
    CHECK(expected == 535505);

    const UNet small(UNetConfig{4, 1}, 2);
    const Tensor out = small.forward(random_image(32, 3));
    CHECK(out.shape() == Shape{1, 1, 32, 32});
    for (float v : out.values()) CHECK((v > 0.0f && v < 1.0f));
    CHECK_THROWS_AS(small.forward(random_image(30, 3)), ShapeError);
    CHECK_THROWS(UNet(UNetConfig{0, 1}, 1));
}

TEST_CASE("U-Net analytic gradients match finite differences") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto r = gradcheck::unet_check(seed);
        CHECK(r.non_smooth == 0);
        CHECK(r.max_relative_error <= 1e-3);
    }
}

TEST_CASE("horizontal flip commutes with a U-Net whose kernels are mirror-symmetric") {
    UNet net(UNetConfig{4, 1}, 11);
    for (auto* p : net.params()) {
        const Shape& s = p->weights.shape();
        if (s.w() != 3) continue;
        for (int o = 0; o < s.n(); ++o)
            for (int i = 0; i < s.c(); ++i)
                for (int ky = 0; ky < 3; ++ky) p->weights.at(o, i, ky, 2) = p->weights.at(o, i, ky, 0);
    }
    const Tensor x = random_image(32, 5);
    const Tensor a = flip_horizontal(net.forward(x));
    const Tensor b = net.forward(flip_horizontal(x));
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, static_cast<double>(std::abs(a[i] - b[i])));
    CHECK(worst <= 1e-5);
}

TEST_CASE("binarize thresholds strictly and sweeps monotonically") {
    CHECK(binarize(constant_map(8, 0.4f)).count() == 0);
    CHECK(binarize(constant_map(8, 0.6f)).count() == 64);
    CHECK(binarize(constant_map(8, 0.5f)).count() == 0);
    const Tensor m = random_image(16, 8);
    BinaryMask prev = binarize(m, 0.0);
    for (int i = 1; i <= 20; ++i) {
        const BinaryMask next = binarize(m, i / 20.0);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                if (next.get(x, y)) CHECK(prev.get(x, y));
        prev = next;
    }
    CHECK_THROWS_AS(binarize(Tensor(Shape{1, 2, 4, 4})), ShapeError);
}

TEST_CASE("segmentation metrics on constructed pairs") {
    BinaryMask a(8, 8), b(8, 8), empty(8, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 4; ++x) a.set(x, y, true);
    for (int y = 0; y < 8; ++y)
        for (int x = 2; x < 6; ++x) b.set(x, y, true);
    const auto same = seg_metrics(a, a);
    CHECK(same.dice == 1.0);
    CHECK(same.iou == 1.0);
    const auto half = seg_metrics(a, b);
    CHECK(half.dice == doctest::Approx(0.5));
    CHECK(half.iou == doctest::Approx(1.0 / 3.0));
    CHECK(half.dice == doctest::Approx(2 * half.iou / (1 + half.iou)));
    BinaryMask c(8, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 5; x < 8; ++x) c.set(x, y, true);
    CHECK(seg_metrics(a, c).dice == 0.0);
    CHECK(seg_metrics(empty, empty).dice == 1.0);
    CHECK_THROWS_AS(seg_metrics(a, BinaryMask(4, 4)), ShapeError);
}

TEST_CASE("unet_train: zero epochs, determinism, improvement") {
    SegmentationConfig seg;
    seg.input_size = 32;
    const auto samples = generate_synthetic(6, 4, 64);
    const auto pairs = make_seg_pairs(samples, seg);

    UNet untouched(UNetConfig{4, 1}, 7);
    const auto before = snapshot(untouched);
    UNetTrainConfig zero;
    zero.epochs = 0;
    CHECK(unet_train(untouched, pairs, zero).empty());
    CHECK(snapshot(untouched) == before);

    UNetTrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    cfg.seed = 3;
    UNet a(UNetConfig{4, 1}, 7), b(UNetConfig{4, 1}, 7);
    const auto la = unet_train(a, pairs, cfg);
    const auto lb = unet_train(b, pairs, cfg);
    CHECK(la.size() == 3);
    CHECK(snapshot(a) == snapshot(b));
    CHECK(la.back().loss == lb.back().loss);

    std::vector<ImageSample> unlabeled = samples;
    unlabeled[0].truth_mask.reset();
    CHECK_THROWS(make_seg_pairs(unlabeled, seg));
    CHECK_THROWS(unet_train(a, std::span<const SegPair>{}, cfg));
}

TEST_CASE("unet_train overfits 20 synthetic cells") {
    SegmentationConfig seg;
    seg.input_size = 64;
    const auto samples = generate_synthetic(20, 21, 64);
    const auto pairs = make_seg_pairs(samples, seg);
    UNet net(UNetConfig{8, 1}, 5);
    UNetTrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 4;
    cfg.seed = 9;
    const auto log = unet_train(net, pairs, cfg);
    REQUIRE(log.size() == 30);
    CHECK(log.back().dice >= log.front().dice);
    CHECK(log.back().dice >= 0.9);
}

TEST_CASE("segment emits a binary mask at the configured size") {
    SegmentationConfig seg;
    seg.input_size = 32;
    const UNet net(UNetConfig{4, 1}, 2);
    const auto samples = generate_synthetic(2, 1, 64);
    const BinaryMask m = segment(net, samples[0].image, seg);
    CHECK(m.width() == 32);
    CHECK(m.height() == 32);
    for (auto v : m.values()) CHECK((v == 0 || v == 255));
    const RasterImage img = m.to_image();
    for (auto v : img.pixels) CHECK((v == 0 || v == 255));
}
