#pragma once

// Three-level U-Net for cell/background masks, its training loop, and the
// segmentation pipeline wrapped around it.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pap/dataset.hpp"
#include "pap/imaging.hpp"
#include "pap/layers.hpp"
#include "pap/optim.hpp"

namespace pap {

struct UNetConfig {
    /// Encoder widths are w, 2w, 4w; the bottleneck is 8w.
    int base_width = 16;
    int in_channels = 1;
};

/// Encoder: three levels of (conv3x3+ReLU)x2 then maxpool. Bottleneck:
/// (conv3x3+ReLU)x2. Decoder: nearest 2x upsample, conv3x3, concat with the
/// same-resolution encoder output, (conv3x3+ReLU)x2. Head: conv1x1 + sigmoid.
template <typename T>
class BasicUNet {
public:
    static constexpr int kLevels = 3;

    /// Activations kept by a training forward pass for the backward pass.
    struct Trace {
        std::vector<BasicTensor<T>> conv_inputs;  // indexed by layer
        std::vector<BasicTensor<T>> pre_relu;     // indexed by layer, empty for linear layers
        std::array<std::vector<std::int64_t>, kLevels> pool_argmax;
        std::array<Shape, kLevels> pool_input_shape;
        std::array<int, kLevels> up_channels{};
        BasicTensor<T> probabilities;
    };

    BasicUNet() = default;
    BasicUNet(UNetConfig config, std::uint64_t init_seed);

    const UNetConfig& config() const { return config_; }

    /// Per-pixel foreground probability, N x 1 x H x W. H and W must be multiples of 8.
    BasicTensor<T> forward(const BasicTensor<T>& input, Trace* trace = nullptr) const;
    /// Accumulates parameter gradients from dLoss/dProbabilities.
    void backward(const Trace& trace, const BasicTensor<T>& prob_grad);

    std::vector<LayerParams<T>*> params();
    std::vector<const LayerParams<T>*> params() const;
    void zero_grad();
    std::size_t parameter_count() const;

private:
    enum Layer : int {
        kEnc0a, kEnc0b, kEnc1a, kEnc1b, kEnc2a, kEnc2b,
        kBottA, kBottB,
        kUp2, kDec2a, kDec2b,
        kUp1, kDec1a, kDec1b,
        kUp0, kDec0a, kDec0b,
        kHead,
        kLayerCount
    };

    UNetConfig config_;
    std::vector<LayerParams<T>> layers_;
};

using UNet = BasicUNet<float>;

struct SegMetrics {
    double dice = 0.0;
    double iou = 0.0;
};

/// > threshold -> 255. Accepts a 1 x 1 x H x W map.
BinaryMask binarize(const Tensor& prob_map, double threshold = 0.5);
/// Both-empty masks score dice = iou = 1.
SegMetrics seg_metrics(const BinaryMask& pred, const BinaryMask& truth);

struct SegmentationConfig {
    int input_size = 128;
    double threshold = 0.5;
    /// Blur before the network, then open/close the binarized mask.
    bool refine = true;
    double blur_sigma = 1.0;
    int open_radius = 1;
    int close_radius = 1;
};

/// Grayscale, resize, optional blur, normalize: the network's 1 x 1 x S x S input.
Tensor unet_input(const RasterImage& image, const SegmentationConfig& cfg);
/// Cell mask at input_size x input_size.
BinaryMask segment(const UNet& model, const RasterImage& image, const SegmentationConfig& cfg);

struct SegPair {
    std::string id;
    Tensor image;  // 1 x 1 x S x S
    Tensor mask;   // 1 x 1 x S x S, values 0 or 1
};

/// Pairs for training; every sample must carry a truth mask.
std::vector<SegPair> make_seg_pairs(std::span<const ImageSample> samples, const SegmentationConfig& cfg);

struct UNetTrainConfig {
    int epochs = 30;
    int batch_size = 8;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
};

struct UNetEpochLog {
    int epoch = 0;
    double loss = 0.0;
    /// Pooled Dice of the epoch's training forward passes at threshold 0.5.
    double dice = 0.0;
};

/// Pixelwise BCE + Adam over shuffled mini-batches.
std::vector<UNetEpochLog> unet_train(UNet& model, std::span<const SegPair> data, const UNetTrainConfig& cfg);

}  // namespace pap
