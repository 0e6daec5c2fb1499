#pragma once

// Forward and backward kernels for every layer used by the segmentation and
// classification networks. All forward functions are pure; backward functions
// accumulate into LayerParams gradients and return the input gradient.

#include <cstdint>
#include <string>
#include <vector>

#include "pap/rng.hpp"
#include "pap/tensor.hpp"

namespace pap {

/// Trainable weights and bias with mirrored gradient buffers.
template <typename T>
struct LayerParams {
    std::string name;
    BasicTensor<T> weights;
    BasicTensor<T> bias;
    BasicTensor<T> weight_grad;
    BasicTensor<T> bias_grad;
    /// Set by any backward pass, cleared by zero_grad. Guards optimizer steps.
    bool grad_ready = false;

    LayerParams() = default;
    LayerParams(std::string name, Shape weight_shape, Shape bias_shape);

    void zero_grad();
    std::size_t parameter_count() const { return weights.size() + bias.size(); }
};

/// Conv kernel F x C x K x K, bias F.
template <typename T>
LayerParams<T> make_conv_params(std::string name, int in_channels, int filters, int kernel);
/// Dense weights F_in x U (output = input * weights + bias), bias U.
template <typename T>
LayerParams<T> make_dense_params(std::string name, int inputs, int units);

/// He-uniform weights (bound sqrt(6 / fan_in)) and zero bias.
template <typename T>
void he_uniform_init(LayerParams<T>& p, Rng& rng);
/// Glorot-uniform weights (bound sqrt(6 / (fan_in + fan_out))) and zero bias; for output heads.
template <typename T>
void glorot_uniform_init(LayerParams<T>& p, Rng& rng);

// -- convolution ------------------------------------------------------------

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const LayerParams<T>& params, int stride,
                              int padding);

/// Accumulates weight/bias gradients; returns the input gradient unless
/// need_input_grad is false, in which case an empty tensor is returned.
template <typename T>
BasicTensor<T> conv2d_backward(const BasicTensor<T>& input, LayerParams<T>& params,
                               const BasicTensor<T>& upstream, int stride, int padding,
                               bool need_input_grad = true);

// -- pooling ----------------------------------------------------------------

template <typename T>
struct MaxPoolResult {
    BasicTensor<T> output;
    /// Flat input offset of the winning element, one per output element.
    std::vector<std::int64_t> argmax;
};

/// 2x2 window, stride 2. Ties go to the first position in row-major window order.
template <typename T>
MaxPoolResult<T> maxpool2_forward(const BasicTensor<T>& input);

template <typename T>
BasicTensor<T> maxpool2_backward(const std::vector<std::int64_t>& argmax, const BasicTensor<T>& upstream,
                                 const Shape& input_shape);

// -- dense ------------------------------------------------------------------

/// Input is read as B x F where B is axis 0 and F the product of the rest.
template <typename T>
BasicTensor<T> dense_forward(const BasicTensor<T>& input, const LayerParams<T>& params);

template <typename T>
BasicTensor<T> dense_backward(const BasicTensor<T>& input, LayerParams<T>& params,
                              const BasicTensor<T>& upstream);

/// Input gradient only; parameters and their gradients are untouched.
template <typename T>
BasicTensor<T> dense_input_grad(const Shape& input_shape, const LayerParams<T>& params,
                                const BasicTensor<T>& upstream);

// -- activations ------------------------------------------------------------

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input);
/// Passes upstream where input > 0; the gradient at exactly 0 is 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& upstream);

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& input);
/// Takes the forward output, not the input.
template <typename T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& output, const BasicTensor<T>& upstream);

template <typename T>
struct DropoutResult {
    BasicTensor<T> output;
    /// 0 for dropped values, 1/(1-rate) for survivors; empty in inference.
    BasicTensor<T> mask;
};

/// Inverted dropout. rate must lie in [0, 1).
template <typename T>
DropoutResult<T> dropout(const BasicTensor<T>& input, double rate, Rng& rng, bool training);

template <typename T>
BasicTensor<T> dropout_backward(const BasicTensor<T>& mask, const BasicTensor<T>& upstream);

// -- U-Net plumbing ----------------------------------------------------------

/// Nearest-neighbour 2x spatial upsampling.
template <typename T>
BasicTensor<T> upsample2_forward(const BasicTensor<T>& input);
template <typename T>
BasicTensor<T> upsample2_backward(const BasicTensor<T>& upstream);

/// Channel concatenation [a, b] of rank-4 tensors with equal N, H, W.
template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);
/// Splits a gradient of concat_channels back into its two parts.
template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> split_channels(const BasicTensor<T>& joined, int first_channels);

/// Elementwise a + b.
template <typename T>
void add_inplace(BasicTensor<T>& a, const BasicTensor<T>& b);

}  // namespace pap
