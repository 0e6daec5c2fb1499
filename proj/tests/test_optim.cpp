#include <doctest.h>

#include <cmath>

#include "pap/optim.hpp"

using namespace pap;

TEST_CASE("softmax cross-entropy of equal logits is log(C)") {
    const Tensor logits(Shape{2, 2}, 0.0f);
    const Tensor y(Shape{2, 2}, std::vector<float>{1, 0, 0, 1});
    const auto r = softmax_cross_entropy(logits, y);
    CHECK(r.loss == doctest::Approx(std::log(2.0)));
    CHECK(r.grad[0] == doctest::Approx(-0.25));
    CHECK(r.grad[1] == doctest::Approx(0.25));
}

TEST_CASE("softmax cross-entropy is stable for huge logits") {
    const Tensor logits(Shape{1, 2}, std::vector<float>{1000.0f, -1000.0f});
    const Tensor y(Shape{1, 2}, std::vector<float>{0, 1});
    const auto r = softmax_cross_entropy(logits, y);
    CHECK(std::isfinite(r.loss));
    CHECK(r.loss == doctest::Approx(2000.0));
    const Tensor p = softmax_rows(logits);
    CHECK(p[0] + p[1] == doctest::Approx(1.0));
}

TEST_CASE("cross-entropy rejects labels that are not one-hot") {
    const Tensor logits(Shape{1, 2});
    CHECK_THROWS_AS(softmax_cross_entropy(logits, Tensor(Shape{1, 2}, std::vector<float>{0.5f, 0.5f})),
                    std::invalid_argument);
    CHECK_THROWS_AS(softmax_cross_entropy(logits, Tensor(Shape{1, 3})), ShapeError);
}

TEST_CASE("pixelwise BCE clamps probabilities and validates targets") {
    const Tensor p(Shape{1, 1, 1, 2}, std::vector<float>{0.0f, 1.0f});
    const Tensor y(Shape{1, 1, 1, 2}, std::vector<float>{1.0f, 0.0f});
    const auto r = binary_cross_entropy_pixelwise(p, y);
    CHECK(std::isfinite(r.loss));
    CHECK(r.loss == doctest::Approx(-std::log(kProbClamp)).epsilon(1e-3));
    CHECK_THROWS_AS(binary_cross_entropy_pixelwise(p, Tensor(Shape{1, 1, 1, 2}, 0.5f)), std::invalid_argument);
}

TEST_CASE("L2 penalty covers weights only") {
    auto p = make_dense_params<float>("d", 2, 1);
    p.weights = Tensor(Shape{2, 1}, std::vector<float>{3.0f, 4.0f});
    p.bias = Tensor(Shape{1}, 10.0f);
    p.zero_grad();
    std::vector<LayerParams<float>*> ps = {&p};
    CHECK(l2_penalty<float>(ps, 0.1) == doctest::Approx(2.5));
    CHECK(p.weight_grad[0] == doctest::Approx(0.6));
    CHECK(p.bias_grad[0] == 0.0f);
}

TEST_CASE("Adam's first step moves each weight by the learning rate against its gradient") {
    auto p = make_dense_params<double>("d", 3, 1);
    p.weights = BasicTensor<double>(Shape{3, 1}, std::vector<double>{1.0, 1.0, 1.0});
    p.zero_grad();
    p.weight_grad = BasicTensor<double>(Shape{3, 1}, std::vector<double>{0.5, -2.0, 1e-3});
    p.grad_ready = true;
    std::vector<LayerParams<double>*> ps = {&p};
    AdamState<double> state(ps, AdamConfig{0.01});
    adam_step<double>(ps, state);
    // m_hat = g and v_hat = g^2 after one step, so the update is lr * g / (|g| + eps).
    CHECK(p.weights[0] == doctest::Approx(0.99).epsilon(1e-9));
    CHECK(p.weights[1] == doctest::Approx(1.01).epsilon(1e-9));
    CHECK(p.weights[2] == doctest::Approx(1.0 - 0.01 * 1e-3 / (1e-3 + 1e-8)).epsilon(1e-9));
    CHECK(state.step_count == 1);
}

TEST_CASE("Adam refuses to step on stale gradients") {
    auto p = make_dense_params<float>("d", 2, 2);
    std::vector<LayerParams<float>*> ps = {&p};
    AdamState<float> state(ps, AdamConfig{});
    p.zero_grad();
    CHECK_THROWS_AS(adam_step<float>(ps, state), std::logic_error);
}

TEST_CASE("Adam minimizes a quadratic") {
    auto p = make_dense_params<double>("d", 1, 1);
    p.weights[0] = 5.0;
    std::vector<LayerParams<double>*> ps = {&p};
    AdamState<double> state(ps, AdamConfig{0.1});
    for (int i = 0; i < 500; ++i) {
        p.zero_grad();
        p.weight_grad[0] = 2.0 * (p.weights[0] - 1.5);
        p.grad_ready = true;
        adam_step<double>(ps, state);
    }
    CHECK(p.weights[0] == doctest::Approx(1.5).epsilon(1e-2));
}

TEST_CASE("relative error uses the larger magnitude with a floor") {
    CHECK(relative_error(1.0, 1.0) == 0.0);
    CHECK(relative_error(1.0, 2.0) == doctest::Approx(0.5));
    CHECK(relative_error(0.0, 0.0) == 0.0);
}
