#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "pap/layers.hpp"
#include "pap/tensor.hpp"

namespace pap {

struct LossValue {
    double data_loss = 0.0;
    double reg_loss = 0.0;
    double total() const { return data_loss + reg_loss; }
};

template <typename T>
struct LossAndGrad {
    double loss = 0.0;
    BasicTensor<T> grad;
};

/// Mean categorical cross-entropy over a B x C batch of logits with one-hot
/// labels, via the log-sum-exp form. Gradient is (softmax - onehot) / B.
template <typename T>
LossAndGrad<T> softmax_cross_entropy(const BasicTensor<T>& logits, const BasicTensor<T>& onehot);

/// Row-wise softmax of a B x C logit matrix.
template <typename T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& logits);

inline constexpr double kProbClamp = 1e-7;

/// Mean pixelwise binary cross-entropy with probabilities clamped to
/// [1e-7, 1 - 1e-7]. Targets must be exactly 0 or 1.
template <typename T>
LossAndGrad<T> binary_cross_entropy_pixelwise(const BasicTensor<T>& probs, const BasicTensor<T>& target);

/// lambda * sum(w^2) over weights only (biases excluded); adds 2*lambda*w into weight_grad.
template <typename T>
double l2_penalty(std::span<LayerParams<T>* const> params, double lambda);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
    AdamConfig config;
    std::int64_t step_count = 0;
    /// One entry per weights and per bias tensor, in parameter order.
    std::vector<BasicTensor<T>> first_moment;
    std::vector<BasicTensor<T>> second_moment;

    AdamState() = default;
    AdamState(std::span<LayerParams<T>* const> params, AdamConfig cfg);
};

/// One bias-corrected Adam update. Every parameter must have been through a
/// backward pass since its last zero_grad.
template <typename T>
void adam_step(std::span<LayerParams<T>* const> params, AdamState<T>& state);

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Relative error |a - n| / max(|a|, |n|, 1e-8).
double relative_error(double analytic, double numeric);

/// Central finite differences of `loss` with respect to each coordinate of
/// `values` (perturbed in place and restored), compared with `analytic`.
/// When `coords` is non-empty only those coordinates are probed.
template <typename T>
GradCheckResult finite_difference_check(const std::function<double()>& loss, std::span<T> values,
                                        std::span<const T> analytic, double eps,
                                        std::span<const std::size_t> coords = {});

}  // namespace pap
