#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pap/dataset.hpp"
#include "pap/layers.hpp"
#include "pap/optim.hpp"

namespace pap {

struct ClassifierConfig {
    int input_size = 128;
    int in_channels = 3;
    std::array<int, 3> filters = {32, 64, 128};
    int dense_units = 128;
    int classes = 2;
    double dropout_rate = 0.5;

    void validate() const;
    int flat_features() const { return filters[2] * (input_size / 8) * (input_size / 8); }
};

/// conv3x3(same)+ReLU+maxpool2 three times, flatten, dense+ReLU+dropout, dense.
/// Logits feed a softmax; class 1 is Abnormal.
template <typename T>
class BasicClassifier {
public:
    struct Trace {
        std::array<BasicTensor<T>, 3> conv_inputs;
        std::array<BasicTensor<T>, 3> conv_pre_relu;
        std::array<std::vector<std::int64_t>, 3> pool_argmax;
        /// Output of the third conv block (post ReLU and pooling); Grad-CAM reads this.
        BasicTensor<T> features;
        BasicTensor<T> dense1_pre_relu;
        BasicTensor<T> dropout_mask;
        BasicTensor<T> dense2_input;
    };

    BasicClassifier() = default;
    BasicClassifier(ClassifierConfig config, std::uint64_t init_seed);

    const ClassifierConfig& config() const { return config_; }

    /// B x classes logits. `rng` is required when training (dropout).
    BasicTensor<T> forward(const BasicTensor<T>& batch, bool training, Rng* rng = nullptr,
                           Trace* trace = nullptr) const;
    /// Accumulates parameter gradients from dLoss/dLogits.
    void backward(const Trace& trace, const BasicTensor<T>& logit_grad);
    /// dLogits -> dFeatures without touching parameter gradients.
    BasicTensor<T> feature_gradient(const Trace& trace, const BasicTensor<T>& logit_grad) const;

    std::vector<LayerParams<T>*> params();
    std::vector<const LayerParams<T>*> params() const;
    void zero_grad();
    std::size_t parameter_count() const;

private:
    enum Layer : int { kConv1, kConv2, kConv3, kDense1, kDense2, kLayerCount };

    ClassifierConfig config_;
    std::vector<LayerParams<T>> layers_;
};

using Classifier = BasicClassifier<float>;

struct Prediction {
    std::string id;
    std::array<double, 2> probabilities{};
    BinaryLabel predicted = BinaryLabel::Abnormal;
};

/// Argmax with ties resolved toward Abnormal.
BinaryLabel decide(const std::array<double, 2>& probabilities);

struct LabeledTensor {
    std::string id;
    Tensor image;  // 1 x C x S x S in [0, 1]
    BinaryLabel label = BinaryLabel::Normal;
};

struct TrainConfig {
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 1e-3;
    double l2_lambda = 1e-4;
    std::uint64_t seed = 0;
    int fold = 0;
};

struct EpochLog {
    int fold = 0;
    int epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_accuracy = 0.0;
};

struct FoldTrainResult {
    std::vector<EpochLog> log;
    std::vector<Prediction> predictions;  // validation split, after the last epoch
};

/// Inference in batches; one prediction per input, same order.
std::vector<Prediction> predict(const Classifier& model, std::span<const LabeledTensor> data, int batch_size = 32);

/// Shuffled mini-batch Adam on softmax cross-entropy + L2, with per-sample
/// augmentation drawn from derive_seed(seed, fold, epoch, sample).
FoldTrainResult train_fold(Classifier& model, std::span<const LabeledTensor> train, std::span<const LabeledTensor> val,
                           const TrainConfig& cfg, const AugmentConfig& aug);

struct GradCamResult {
    int coarse_width = 0;
    int coarse_height = 0;
    std::vector<float> coarse;   // ReLU(sum_c w_c A_c), max-normalized
    int width = 0;
    int height = 0;
    std::vector<float> heatmap;  // bilinear upsample of coarse to the input size
};

/// Gradient-weighted class activation map over the third conv block output.
GradCamResult grad_cam(const Classifier& model, const Tensor& image, int target_class);

}  // namespace pap
