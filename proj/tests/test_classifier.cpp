#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "gradcheck.hpp"
#include "pap/classifier.hpp"
#include "pap/crossval.hpp"

using namespace pap;

namespace {

ClassifierConfig toy_config() {
    ClassifierConfig c;
    c.input_size = 32;
    c.filters = {4, 8, 8};
    c.dense_units = 16;
    return c;
}

std::vector<LabeledTensor> synthetic_tensors(int n, std::uint64_t seed, int size) {
    std::vector<LabeledTensor> out;
    for (const auto& s : generate_synthetic(n, seed, std::max(size, 64))) {
        out.push_back({s.id, classifier_input(s.image, size), s.label});
    }
    return out;
}

}  // namespace

TEST_CASE("default classifier has the closed-form parameter count") {
    const Classifier net(ClassifierConfig{}, 1);
    const std::size_t expected = 32 * (3 * 9 + 1) + 64 * (32 * 9 + 1) + 128 * (64 * 9 + 1) + 128 * (32768 + 1) + 2 * (128 + 1);
    CHECK(expected == 4287938);
    CHECK(net.parameter_count() == expected);
    CHECK(net.config().flat_features() == 32768);
}

TEST_CASE("classifier forward: shape, determinism, channel check") {
    const Classifier net(toy_config(), 3);
    Rng rng(1);
    Tensor x(Shape{3, 3, 32, 32});
    for (auto& v : x.values()) v = static_cast<float>(rng.uniform(0.0, 1.0));
    const Tensor a = net.forward(x, false);
    const Tensor b = net.forward(x, false);
    CHECK(a.shape() == Shape{3, 2});
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    CHECK_THROWS_AS(net.forward(Tensor(Shape{1, 1, 32, 32}), false), ShapeError);
    CHECK_THROWS(net.forward(x, true));

    ClassifierConfig bad = toy_config();
    bad.input_size = 30;
    CHECK_THROWS(bad.validate());
    bad = toy_config();
    bad.dropout_rate = 1.0;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("classifier gradients match finite differences") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto r = gradcheck::classifier_check(seed);
        CHECK(r.non_smooth == 0);
        CHECK(r.max_relative_error <= 1e-3);
    }
}

TEST_CASE("decide resolves ties toward Abnormal") {
    CHECK(decide({0.7, 0.3}) == BinaryLabel::Normal);
    CHECK(decide({0.3, 0.7}) == BinaryLabel::Abnormal);
    CHECK(decide({0.5, 0.5}) == BinaryLabel::Abnormal);
}

TEST_CASE("predict returns normalized probabilities in input order") {
    const Classifier net(toy_config(), 5);
    const auto data = synthetic_tensors(7, 2, 32);
    const auto preds = predict(net, data, 3);
    REQUIRE(preds.size() == data.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        CHECK(preds[i].id == data[i].id);
        CHECK(std::abs(preds[i].probabilities[0] + preds[i].probabilities[1] - 1.0) <= 1e-6);
        CHECK(preds[i].predicted == decide(preds[i].probabilities));
    }
}

TEST_CASE("train_fold validates splits and is deterministic") {
    const auto data = synthetic_tensors(12, 6, 32);
    std::span<const LabeledTensor> all(data);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.seed = 17;
    AugmentConfig aug;

    Classifier m(toy_config(), 1);
    CHECK_THROWS(train_fold(m, all.subspan(0, 0), all, cfg, aug));
    CHECK_THROWS(train_fold(m, all.subspan(0, 8), all.subspan(6, 6), cfg, aug));

    Classifier a(toy_config(), 1), b(toy_config(), 1);
    const auto ra = train_fold(a, all.subspan(0, 8), all.subspan(8), cfg, aug);
    const auto rb = train_fold(b, all.subspan(0, 8), all.subspan(8), cfg, aug);
    REQUIRE(ra.log.size() == 2);
    for (std::size_t e = 0; e < ra.log.size(); ++e) {
        CHECK(ra.log[e].epoch == static_cast<int>(e) + 1);
        CHECK(ra.log[e].train_loss == rb.log[e].train_loss);
        CHECK(ra.log[e].train_accuracy == rb.log[e].train_accuracy);
        CHECK(ra.log[e].val_accuracy == rb.log[e].val_accuracy);
    }
    std::set<std::string> val_ids;
    for (const auto& p : ra.predictions) CHECK(val_ids.insert(p.id).second);
    CHECK(val_ids == std::set<std::string>{data[8].id, data[9].id, data[10].id, data[11].id});
}

TEST_CASE("classifier overfits 40 synthetic cells; Grad-CAM responds to the class") {
    const auto data = synthetic_tensors(44, 8, 64);
    std::span<const LabeledTensor> all(data);
    ClassifierConfig cc;
    cc.input_size = 64;
    Classifier net(cc, 2);
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 8;
    cfg.seed = 4;
    AugmentConfig aug;
    aug.enabled = false;
    train_fold(net, all.subspan(0, 40), all.subspan(40), cfg, aug);

    int correct = 0;
    for (const auto& p : predict(net, all.subspan(0, 40))) {
        const auto it = std::find_if(data.begin(), data.end(), [&](const LabeledTensor& t) { return t.id == p.id; });
        correct += p.predicted == it->label;
    }
    CHECK(correct / 40.0 >= 0.95);

    const Tensor& img = data[0].image;
    const auto c0 = grad_cam(net, img, 0);
    const auto c1 = grad_cam(net, img, 1);
    CHECK(c0.width == 64);
    CHECK(c0.height == 64);
    CHECK(c0.heatmap.size() == 64u * 64u);
    CHECK(c0.coarse_width == 8);
    for (const auto* cam : {&c0, &c1}) {
        const float mx = *std::max_element(cam->coarse.begin(), cam->coarse.end());
        CHECK((mx == 0.0f || mx == doctest::Approx(1.0f)));
        for (float v : cam->heatmap) CHECK((v >= 0.0f && v <= 1.0f));
    }
    CHECK(c0.heatmap != c1.heatmap);
    CHECK_THROWS(grad_cam(net, img, 2));
}
