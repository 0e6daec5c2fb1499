#include "pap/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "pap/imaging.hpp"

namespace pap {

void ClassifierConfig::validate() const {
    if (input_size <= 0 || input_size % 8 != 0) throw std::invalid_argument("classifier: input size must be a positive multiple of 8");
    if (in_channels <= 0 || dense_units <= 0 || classes != 2) {
        throw std::invalid_argument("classifier: channels and dense units must be positive and classes must be 2");
    }
    for (int f : filters)
        if (f <= 0) throw std::invalid_argument("classifier: filter counts must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("classifier: dropout rate must lie in [0, 1)");
}

template <typename T>
BasicClassifier<T>::BasicClassifier(ClassifierConfig config, std::uint64_t init_seed) : config_(config) {
    config_.validate();
    layers_.resize(kLayerCount);
    layers_[kConv1] = make_conv_params<T>("conv1", config_.in_channels, config_.filters[0], 3);
    layers_[kConv2] = make_conv_params<T>("conv2", config_.filters[0], config_.filters[1], 3);
    layers_[kConv3] = make_conv_params<T>("conv3", config_.filters[1], config_.filters[2], 3);
    layers_[kDense1] = make_dense_params<T>("dense1", config_.flat_features(), config_.dense_units);
    layers_[kDense2] = make_dense_params<T>("dense2", config_.dense_units, config_.classes);
    Rng rng(init_seed);
    for (int i = 0; i < kDense2; ++i) he_uniform_init(layers_[i], rng);
    glorot_uniform_init(layers_[kDense2], rng);
}

template <typename T>
BasicTensor<T> BasicClassifier<T>::forward(const BasicTensor<T>& batch, bool training, Rng* rng, Trace* trace) const {
    const Shape& s = batch.shape();
    if (s.rank() != 4 || s.c() != config_.in_channels || s.h() != config_.input_size || s.w() != config_.input_size) {
        throw ShapeError("classifier: expected N x " + std::to_string(config_.in_channels) + " x " +
                         std::to_string(config_.input_size) + " x " + std::to_string(config_.input_size) + ", got " +
                         s.str());
    }
    if (training && config_.dropout_rate > 0.0 && rng == nullptr) {
        throw std::invalid_argument("classifier: training forward needs an rng for dropout");
    }
    BasicTensor<T> x = batch;
    for (int i = 0; i < 3; ++i) {
        BasicTensor<T> z = conv2d_forward(x, layers_[kConv1 + i], 1, 1);
        auto pooled = maxpool2_forward(relu(z));
        if (trace) {
            trace->conv_inputs[i] = std::move(x);
            trace->conv_pre_relu[i] = std::move(z);
            trace->pool_argmax[i] = std::move(pooled.argmax);
        }
        x = std::move(pooled.output);
    }
    const BasicTensor<T> flat = x.reshaped(Shape{s.n(), config_.flat_features()});
    if (trace) trace->features = std::move(x);

    BasicTensor<T> h = dense_forward(flat, layers_[kDense1]);
    BasicTensor<T> a = relu(h);
    Rng dummy(0);
    auto dropped = dropout(a, config_.dropout_rate, rng ? *rng : dummy, training);
    BasicTensor<T> logits = dense_forward(dropped.output, layers_[kDense2]);
    if (trace) {
        trace->dense1_pre_relu = std::move(h);
        trace->dropout_mask = std::move(dropped.mask);
        trace->dense2_input = std::move(dropped.output);
    }
    return logits;
}

template <typename T>
void BasicClassifier<T>::backward(const Trace& trace, const BasicTensor<T>& logit_grad) {
    const int n = trace.features.shape().n();
    BasicTensor<T> d = dense_backward(trace.dense2_input, layers_[kDense2], logit_grad);
    d = relu_backward(trace.dense1_pre_relu, dropout_backward(trace.dropout_mask, d));
    d = dense_backward(trace.features.reshaped(Shape{n, config_.flat_features()}), layers_[kDense1], d);
    d = d.reshaped(trace.features.shape());
    for (int i = 2; i >= 0; --i) {
        d = maxpool2_backward(trace.pool_argmax[i], d, trace.conv_pre_relu[i].shape());
        d = relu_backward(trace.conv_pre_relu[i], d);
        d = conv2d_backward(trace.conv_inputs[i], layers_[kConv1 + i], d, 1, 1, i > 0);
    }
}

template <typename T>
BasicTensor<T> BasicClassifier<T>::feature_gradient(const Trace& trace, const BasicTensor<T>& logit_grad) const {
    const int n = trace.features.shape().n();
    BasicTensor<T> d = dense_input_grad(trace.dense2_input.shape(), layers_[kDense2], logit_grad);
    d = relu_backward(trace.dense1_pre_relu, dropout_backward(trace.dropout_mask, d));
    d = dense_input_grad(Shape{n, config_.flat_features()}, layers_[kDense1], d);
    return d.reshaped(trace.features.shape());
}

template <typename T>
std::vector<LayerParams<T>*> BasicClassifier<T>::params() {
    std::vector<LayerParams<T>*> out;
    for (auto& p : layers_) out.push_back(&p);
    return out;
}

template <typename T>
std::vector<const LayerParams<T>*> BasicClassifier<T>::params() const {
    std::vector<const LayerParams<T>*> out;
    for (const auto& p : layers_) out.push_back(&p);
    return out;
}

template <typename T>
void BasicClassifier<T>::zero_grad() {
    for (auto& p : layers_) p.zero_grad();
}

template <typename T>
std::size_t BasicClassifier<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : layers_) n += p.parameter_count();
    return n;
}

template class BasicClassifier<float>;
template class BasicClassifier<double>;

BinaryLabel decide(const std::array<double, 2>& probabilities) {
    return probabilities[0] > probabilities[1] ? BinaryLabel::Normal : BinaryLabel::Abnormal;
}

namespace {

Tensor stack_images(std::span<const LabeledTensor> data, std::span<const std::size_t> idx) {
    std::vector<Tensor> items;
    items.reserve(idx.size());
    for (std::size_t i : idx) items.push_back(data[i].image);
    return stack_batch<float>(items);
}

Tensor onehot_batch(std::span<const BinaryLabel> labels) {
    Tensor y(Shape{static_cast<int>(labels.size()), 2});
    for (std::size_t i = 0; i < labels.size(); ++i) y[2 * i + static_cast<std::size_t>(labels[i])] = 1.0f;
    return y;
}

std::array<double, 2> row_probabilities(const Tensor& logits, int row) {
    const double a = logits[static_cast<std::size_t>(2 * row)];
    const double b = logits[static_cast<std::size_t>(2 * row + 1)];
    const double m = std::max(a, b);
    const double ea = std::exp(a - m), eb = std::exp(b - m);
    return {ea / (ea + eb), eb / (ea + eb)};
}

}  // namespace

std::vector<Prediction> predict(const Classifier& model, std::span<const LabeledTensor> data, int batch_size) {
    std::vector<Prediction> out;
    out.reserve(data.size());
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(batch_size));
        idx.resize(end - start);
        std::iota(idx.begin(), idx.end(), start);
        const Tensor logits = model.forward(stack_images(data, idx), false);
        for (std::size_t i = start; i < end; ++i) {
            Prediction p;
            p.id = data[i].id;
            p.probabilities = row_probabilities(logits, static_cast<int>(i - start));
            p.predicted = decide(p.probabilities);
            out.push_back(std::move(p));
        }
    }
    return out;
}

FoldTrainResult train_fold(Classifier& model, std::span<const LabeledTensor> train, std::span<const LabeledTensor> val,
                           const TrainConfig& cfg, const AugmentConfig& aug) {
    if (train.empty() || val.empty()) throw std::invalid_argument("train_fold: train and validation splits must be non-empty");
    if (cfg.epochs < 0 || cfg.batch_size <= 0) throw std::invalid_argument("train_fold: invalid epochs or batch size");
    aug.validate();
    {
        std::set<std::string> train_ids;
        for (const auto& t : train) train_ids.insert(t.id);
        for (const auto& v : val)
            if (train_ids.count(v.id)) throw std::invalid_argument("train_fold: sample " + v.id + " is in both splits");
    }

    auto params = model.params();
    AdamState<float> adam(params, AdamConfig{cfg.learning_rate});
    const auto fold = static_cast<std::uint64_t>(cfg.fold);

    // (sample index, copy number); copies > 0 only appear when oversampling the minority class.
    std::vector<std::pair<std::size_t, std::uint64_t>> base;
    for (std::size_t i = 0; i < train.size(); ++i) base.emplace_back(i, 0);

    FoldTrainResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto ep = static_cast<std::uint64_t>(epoch);
        auto order = base;
        if (aug.enabled && aug.balance_minority) {
            std::array<std::vector<std::size_t>, 2> by_class;
            for (std::size_t i = 0; i < train.size(); ++i) by_class[static_cast<std::size_t>(train[i].label)].push_back(i);
            const std::size_t minority = by_class[0].size() < by_class[1].size() ? 0 : 1;
            const auto& small = by_class[minority];
            const std::size_t deficit = by_class[1 - minority].size() - small.size();
            Rng pick(derive_seed(cfg.seed, fold, ep, 0xba1aULL));
            for (std::size_t j = 0; j < deficit && !small.empty(); ++j) {
                order.emplace_back(small[static_cast<std::size_t>(pick.below(small.size()))], j + 1);
            }
        }
        Rng shuffler(derive_seed(cfg.seed, fold, ep, 0x5b11ULL));
        shuffler.shuffle(order.begin(), order.end());

        double loss_sum = 0.0;
        std::size_t correct = 0;
        std::uint64_t step = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++step) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<Tensor> images;
            std::vector<BinaryLabel> labels;
            for (std::size_t i = start; i < end; ++i) {
                const auto [idx, copy] = order[i];
                Rng aug_rng(derive_seed(cfg.seed, fold, ep, hash_id(train[idx].id), copy));
                images.push_back(augment(train[idx].image, aug, aug_rng));
                labels.push_back(train[idx].label);
            }
            const Tensor x = stack_batch<float>(images);
            const Tensor y = onehot_batch(labels);

            model.zero_grad();
            Rng drop_rng(derive_seed(cfg.seed, fold, ep, step, 0xd409ULL));
            Classifier::Trace trace;
            const Tensor logits = model.forward(x, true, &drop_rng, &trace);
            auto ce = softmax_cross_entropy(logits, y);
            const double reg = l2_penalty<float>(params, cfg.l2_lambda);
            const LossValue loss{ce.loss, reg};
            model.backward(trace, ce.grad);
            adam_step<float>(params, adam);

            loss_sum += loss.total() * static_cast<double>(end - start);
            for (std::size_t i = start; i < end; ++i) {
                if (decide(row_probabilities(logits, static_cast<int>(i - start))) == labels[i - start]) ++correct;
            }
        }

        result.predictions = predict(model, val);
        std::size_t val_correct = 0;
        for (std::size_t i = 0; i < val.size(); ++i) val_correct += result.predictions[i].predicted == val[i].label;
        result.log.push_back({cfg.fold, epoch + 1, loss_sum / static_cast<double>(order.size()),
                              static_cast<double>(correct) / static_cast<double>(order.size()),
                              static_cast<double>(val_correct) / static_cast<double>(val.size())});
    }
    if (cfg.epochs == 0) result.predictions = predict(model, val);
    return result;
}

GradCamResult grad_cam(const Classifier& model, const Tensor& image, int target_class) {
    if (target_class < 0 || target_class >= model.config().classes) {
        throw std::invalid_argument("grad_cam: target class must be 0 or 1");
    }
    Classifier::Trace trace;
    const Tensor logits = model.forward(image.slice_batch(0, 1), false, nullptr, &trace);
    Tensor seed(logits.shape());
    seed[static_cast<std::size_t>(target_class)] = 1.0f;
    const Tensor grads = model.feature_gradient(trace, seed);
    const Tensor& acts = trace.features;

    const int channels = acts.shape().c(), h = acts.shape().h(), w = acts.shape().w();
    GradCamResult r;
    r.coarse_width = w;
    r.coarse_height = h;
    std::vector<double> map(static_cast<std::size_t>(h) * w, 0.0);
    for (int c = 0; c < channels; ++c) {
        double weight = 0.0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) weight += grads.at(0, c, y, x);
        weight /= static_cast<double>(h) * w;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) map[static_cast<std::size_t>(y) * w + x] += weight * acts.at(0, c, y, x);
    }
    double peak = 0.0;
    for (double& v : map) {
        v = std::max(v, 0.0);
        peak = std::max(peak, v);
    }
    r.coarse.resize(map.size());
    for (std::size_t i = 0; i < map.size(); ++i) r.coarse[i] = peak > 0.0 ? static_cast<float>(map[i] / peak) : 0.0f;
    r.width = model.config().input_size;
    r.height = model.config().input_size;
    r.heatmap = resize_bilinear(std::span<const float>(r.coarse), w, h, r.width, r.height);
    for (float& v : r.heatmap) v = std::clamp(v, 0.0f, 1.0f);
    return r;
}

}  // namespace pap
