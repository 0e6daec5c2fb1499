#include "pap/unet.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace pap {

template <typename T>
BasicUNet<T>::BasicUNet(UNetConfig config, std::uint64_t init_seed) : config_(config) {
    if (config.base_width <= 0 || config.in_channels <= 0) {
        throw std::invalid_argument("UNet: base width and input channels must be positive");
    }
    const int w = config.base_width;
    const std::array<int, kLevels> widths = {w, 2 * w, 4 * w};
    layers_.resize(kLayerCount);
    int in = config.in_channels;
    for (int l = 0; l < kLevels; ++l) {
        layers_[kEnc0a + 2 * l] = make_conv_params<T>("enc" + std::to_string(l) + "a", in, widths[l], 3);
        layers_[kEnc0b + 2 * l] = make_conv_params<T>("enc" + std::to_string(l) + "b", widths[l], widths[l], 3);
        in = widths[l];
    }
    layers_[kBottA] = make_conv_params<T>("bottleneck_a", 4 * w, 8 * w, 3);
    layers_[kBottB] = make_conv_params<T>("bottleneck_b", 8 * w, 8 * w, 3);
    int below = 8 * w;
    for (int l = kLevels - 1; l >= 0; --l) {
        const int base = kUp2 + 3 * (kLevels - 1 - l);
        const std::string tag = std::to_string(l);
        layers_[base] = make_conv_params<T>("up" + tag, below, widths[l], 3);
        layers_[base + 1] = make_conv_params<T>("dec" + tag + "a", 2 * widths[l], widths[l], 3);
        layers_[base + 2] = make_conv_params<T>("dec" + tag + "b", widths[l], widths[l], 3);
        below = widths[l];
    }
    layers_[kHead] = make_conv_params<T>("head", w, 1, 1);

    Rng rng(init_seed);
    for (int i = 0; i < kLayerCount; ++i) {
        if (i == kHead) {
            glorot_uniform_init(layers_[i], rng);
        } else {
            he_uniform_init(layers_[i], rng);
        }
    }
}

template <typename T>
BasicTensor<T> BasicUNet<T>::forward(const BasicTensor<T>& input, Trace* trace) const {
    const Shape& s = input.shape();
    if (s.rank() != 4 || s.c() != config_.in_channels || s.h() % 8 != 0 || s.w() % 8 != 0) {
        throw ShapeError("UNet: expected N x " + std::to_string(config_.in_channels) +
                         " x H x W with H, W multiples of 8, got " + s.str());
    }
    if (trace) {
        trace->conv_inputs.assign(kLayerCount, {});
        trace->pre_relu.assign(kLayerCount, {});
    }
    auto conv = [&](int layer, const BasicTensor<T>& x, bool activate) {
        const int pad = layer == kHead ? 0 : 1;
        BasicTensor<T> z = conv2d_forward(x, layers_[layer], 1, pad);
        if (trace) trace->conv_inputs[layer] = x;
        if (!activate) return z;
        BasicTensor<T> a = relu(z);
        if (trace) trace->pre_relu[layer] = std::move(z);
        return a;
    };

    std::array<BasicTensor<T>, kLevels> skips;
    BasicTensor<T> x = input;
    for (int l = 0; l < kLevels; ++l) {
        x = conv(kEnc0a + 2 * l, x, true);
        x = conv(kEnc0b + 2 * l, x, true);
        skips[l] = x;
        auto pooled = maxpool2_forward(x);
        if (trace) {
            trace->pool_argmax[l] = std::move(pooled.argmax);
            trace->pool_input_shape[l] = x.shape();
        }
        x = std::move(pooled.output);
    }
    x = conv(kBottA, x, true);
    x = conv(kBottB, x, true);
    for (int l = kLevels - 1; l >= 0; --l) {
        const int base = kUp2 + 3 * (kLevels - 1 - l);
        BasicTensor<T> up = conv(base, upsample2_forward(x), false);
        if (trace) trace->up_channels[l] = up.shape().c();
        x = conv(base + 1, concat_channels(up, skips[l]), true);
        x = conv(base + 2, x, true);
    }
    BasicTensor<T> probs = sigmoid(conv(kHead, x, false));
    if (trace) trace->probabilities = probs;
    return probs;
}

template <typename T>
void BasicUNet<T>::backward(const Trace& trace, const BasicTensor<T>& prob_grad) {
    require_same_shape(trace.probabilities.shape(), prob_grad.shape(), "UNet backward");
    auto conv_back = [&](int layer, const BasicTensor<T>& upstream, bool activated, bool need_input = true) {
        const int pad = layer == kHead ? 0 : 1;
        const BasicTensor<T> dz = activated ? relu_backward(trace.pre_relu[layer], upstream) : upstream;
        return conv2d_backward(trace.conv_inputs[layer], layers_[layer], dz, 1, pad, need_input);
    };

    BasicTensor<T> d = conv_back(kHead, sigmoid_backward(trace.probabilities, prob_grad), false);
    std::array<BasicTensor<T>, kLevels> skip_grads;
    for (int l = 0; l < kLevels; ++l) {
        const int base = kUp2 + 3 * (kLevels - 1 - l);
        d = conv_back(base + 2, d, true);
        d = conv_back(base + 1, d, true);
        auto [d_up, d_skip] = split_channels(d, trace.up_channels[l]);
        skip_grads[l] = std::move(d_skip);
        d = upsample2_backward(conv_back(base, d_up, false));
    }
    d = conv_back(kBottB, d, true);
    d = conv_back(kBottA, d, true);
    for (int l = kLevels - 1; l >= 0; --l) {
        d = maxpool2_backward(trace.pool_argmax[l], d, trace.pool_input_shape[l]);
        add_inplace(d, skip_grads[l]);
        d = conv_back(kEnc0b + 2 * l, d, true);
        d = conv_back(kEnc0a + 2 * l, d, true, l > 0);
    }
}

template <typename T>
std::vector<LayerParams<T>*> BasicUNet<T>::params() {
    std::vector<LayerParams<T>*> out;
    for (auto& p : layers_) out.push_back(&p);
    return out;
}

template <typename T>
std::vector<const LayerParams<T>*> BasicUNet<T>::params() const {
    std::vector<const LayerParams<T>*> out;
    for (const auto& p : layers_) out.push_back(&p);
    return out;
}

template <typename T>
void BasicUNet<T>::zero_grad() {
    for (auto& p : layers_) p.zero_grad();
}

template <typename T>
std::size_t BasicUNet<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : layers_) n += p.parameter_count();
    return n;
}

template class BasicUNet<float>;
template class BasicUNet<double>;

BinaryMask binarize(const Tensor& prob_map, double threshold) {
    const Shape& s = prob_map.shape();
    if (s.rank() != 4 || s.n() != 1 || s.c() != 1) throw ShapeError("binarize: expected 1 x 1 x H x W, got " + s.str());
    BinaryMask mask(s.w(), s.h());
    for (int y = 0; y < s.h(); ++y)
        for (int x = 0; x < s.w(); ++x) mask.set(x, y, prob_map.at(0, 0, y, x) > threshold);
    return mask;
}

SegMetrics seg_metrics(const BinaryMask& pred, const BinaryMask& truth) {
    if (pred.width() != truth.width() || pred.height() != truth.height()) {
        throw ShapeError("seg_metrics: mask extents differ");
    }
    std::size_t inter = 0, p = 0, t = 0;
    const auto pv = pred.values();
    const auto tv = truth.values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const bool a = pv[i] != 0, b = tv[i] != 0;
        inter += a && b;
        p += a;
        t += b;
    }
    if (p + t == 0) return {1.0, 1.0};
    const double dice = 2.0 * static_cast<double>(inter) / static_cast<double>(p + t);
    const double iou = static_cast<double>(inter) / static_cast<double>(p + t - inter);
    return {dice, iou};
}

Tensor unet_input(const RasterImage& image, const SegmentationConfig& cfg) {
    RasterImage gray = resize_bilinear(to_grayscale(image), cfg.input_size, cfg.input_size);
    if (cfg.refine) gray = gaussian_blur(gray, cfg.blur_sigma);
    return normalize01(gray);
}

BinaryMask segment(const UNet& model, const RasterImage& image, const SegmentationConfig& cfg) {
    BinaryMask mask = binarize(model.forward(unet_input(image, cfg)), cfg.threshold);
    if (cfg.refine) {
        mask = morph(mask, MorphOp::Open, cfg.open_radius);
        mask = morph(mask, MorphOp::Close, cfg.close_radius);
    }
    return mask;
}

std::vector<SegPair> make_seg_pairs(std::span<const ImageSample> samples, const SegmentationConfig& cfg) {
    std::vector<SegPair> pairs;
    pairs.reserve(samples.size());
    for (const auto& s : samples) {
        if (!s.truth_mask) throw std::invalid_argument("U-Net training needs truth masks; sample " + s.id + " has none");
        const BinaryMask m = resize_nearest(*s.truth_mask, cfg.input_size, cfg.input_size);
        Tensor target(Shape{1, 1, cfg.input_size, cfg.input_size});
        for (int y = 0; y < cfg.input_size; ++y)
            for (int x = 0; x < cfg.input_size; ++x) target.at(0, 0, y, x) = m.get(x, y) ? 1.0f : 0.0f;
        pairs.push_back({s.id, unet_input(s.image, cfg), std::move(target)});
    }
    return pairs;
}

std::vector<UNetEpochLog> unet_train(UNet& model, std::span<const SegPair> data, const UNetTrainConfig& cfg) {
    if (data.empty()) throw std::invalid_argument("unet_train: no training pairs with masks");
    if (cfg.epochs < 0 || cfg.batch_size <= 0) throw std::invalid_argument("unet_train: invalid epochs or batch size");
    auto params = model.params();
    AdamState<float> adam(params, AdamConfig{cfg.learning_rate});
    std::vector<UNetEpochLog> log;
    std::vector<std::size_t> order(data.size());

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(cfg.seed, 0x0e7ULL, static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order.begin(), order.end());

        double loss_sum = 0.0;
        std::size_t inter = 0, pred = 0, truth = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<Tensor> images, masks;
            for (std::size_t i = start; i < end; ++i) {
                images.push_back(data[order[i]].image);
                masks.push_back(data[order[i]].mask);
            }
            const Tensor x = stack_batch<float>(images);
            const Tensor y = stack_batch<float>(masks);

            model.zero_grad();
            UNet::Trace trace;
            const Tensor probs = model.forward(x, &trace);
            auto bce = binary_cross_entropy_pixelwise(probs, y);
            model.backward(trace, bce.grad);
            adam_step<float>(params, adam);

            loss_sum += bce.loss * static_cast<double>(end - start);
            for (std::size_t i = 0; i < probs.size(); ++i) {
                const bool p = probs[i] > 0.5f, t = y[i] > 0.5f;
                inter += p && t;
                pred += p;
                truth += t;
            }
        }
        const double dice = pred + truth == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(pred + truth);
        log.push_back({epoch + 1, loss_sum / static_cast<double>(data.size()), dice});
    }
    return log;
}

}  // namespace pap
