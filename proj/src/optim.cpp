#include "pap/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pap {

namespace {

void require_matrix(const Shape& s, const char* what) {
    if (s.rank() != 2) throw ShapeError(std::string(what) + ": expected B x C matrix, got " + s.str());
}

}  // namespace

template <typename T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& logits) {
    require_matrix(logits.shape(), "softmax_rows");
    const int rows = logits.shape()[0], cols = logits.shape()[1];
    BasicTensor<T> out(logits.shape());
    for (int r = 0; r < rows; ++r) {
        const T* z = logits.data() + static_cast<std::ptrdiff_t>(r) * cols;
        const double mx = *std::max_element(z, z + cols);
        double denom = 0.0;
        for (int c = 0; c < cols; ++c) denom += std::exp(static_cast<double>(z[c]) - mx);
        for (int c = 0; c < cols; ++c)
            out[static_cast<std::size_t>(r) * cols + c] = static_cast<T>(std::exp(static_cast<double>(z[c]) - mx) / denom);
    }
    return out;
}

template <typename T>
LossAndGrad<T> softmax_cross_entropy(const BasicTensor<T>& logits, const BasicTensor<T>& onehot) {
    require_matrix(logits.shape(), "softmax_cross_entropy");
    require_same_shape(logits.shape(), onehot.shape(), "softmax_cross_entropy labels");
    const int rows = logits.shape()[0], cols = logits.shape()[1];
    LossAndGrad<T> r{0.0, BasicTensor<T>(logits.shape())};
    double total = 0.0;
    for (int b = 0; b < rows; ++b) {
        const T* z = logits.data() + static_cast<std::ptrdiff_t>(b) * cols;
        const T* y = onehot.data() + static_cast<std::ptrdiff_t>(b) * cols;
        int hot = -1, ones = 0;
        for (int c = 0; c < cols; ++c) {
            if (y[c] == T{1}) {
                hot = c;
                ++ones;
            } else if (y[c] != T{0}) {
                ones = -1;
                break;
            }
        }
        if (ones != 1) throw std::invalid_argument("softmax_cross_entropy: label row " + std::to_string(b) + " is not one-hot");

        double mx = z[0];
        for (int c = 1; c < cols; ++c) mx = std::max(mx, static_cast<double>(z[c]));
        double denom = 0.0;
        for (int c = 0; c < cols; ++c) denom += std::exp(static_cast<double>(z[c]) - mx);
        const double lse = mx + std::log(denom);
        total += lse - static_cast<double>(z[hot]);
        for (int c = 0; c < cols; ++c) {
            const double p = std::exp(static_cast<double>(z[c]) - lse);
            r.grad[static_cast<std::size_t>(b) * cols + c] = static_cast<T>((p - static_cast<double>(y[c])) / rows);
        }
    }
    r.loss = total / rows;
    return r;
}

template <typename T>
LossAndGrad<T> binary_cross_entropy_pixelwise(const BasicTensor<T>& probs, const BasicTensor<T>& target) {
    require_same_shape(probs.shape(), target.shape(), "binary_cross_entropy_pixelwise target");
    const double n = static_cast<double>(probs.size());
    LossAndGrad<T> r{0.0, BasicTensor<T>(probs.shape())};
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const T t = target[i];
        if (t != T{0} && t != T{1}) {
            throw std::invalid_argument("binary_cross_entropy_pixelwise: target value " + std::to_string(t) +
                                        " at index " + std::to_string(i) + " is not 0 or 1");
        }
        const double p = std::clamp(static_cast<double>(probs[i]), kProbClamp, 1.0 - kProbClamp);
        if (t == T{1}) {
            total -= std::log(p);
            r.grad[i] = static_cast<T>(-1.0 / (p * n));
        } else {
            total -= std::log(1.0 - p);
            r.grad[i] = static_cast<T>(1.0 / ((1.0 - p) * n));
        }
    }
    r.loss = total / n;
    return r;
}

template <typename T>
double l2_penalty(std::span<LayerParams<T>* const> params, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("l2_penalty: lambda must be non-negative");
    if (lambda == 0.0) return 0.0;
    double sum = 0.0;
    for (LayerParams<T>* p : params) {
        for (std::size_t i = 0; i < p->weights.size(); ++i) {
            const double w = p->weights[i];
            sum += w * w;
            p->weight_grad[i] += static_cast<T>(2.0 * lambda * w);
        }
    }
    return lambda * sum;
}

template <typename T>
AdamState<T>::AdamState(std::span<LayerParams<T>* const> params, AdamConfig cfg) : config(cfg) {
    if (!(cfg.learning_rate > 0.0) || !(cfg.beta1 > 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 > 0.0 && cfg.beta2 < 1.0) ||
        !(cfg.epsilon > 0.0)) {
        throw std::invalid_argument("AdamState: learning rate and epsilon must be positive, betas in (0, 1)");
    }
    for (LayerParams<T>* p : params) {
        first_moment.emplace_back(p->weights.shape());
        first_moment.emplace_back(p->bias.shape());
        second_moment.emplace_back(p->weights.shape());
        second_moment.emplace_back(p->bias.shape());
    }
}

template <typename T>
void adam_step(std::span<LayerParams<T>* const> params, AdamState<T>& state) {
    if (state.first_moment.size() != 2 * params.size()) {
        throw std::invalid_argument("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size() / 2) +
                                    " layers, got " + std::to_string(params.size()));
    }
    for (LayerParams<T>* p : params) {
        if (!p->grad_ready) {
            throw std::logic_error("adam_step: layer '" + p->name + "' has no gradient from a backward pass");
        }
    }
    const AdamConfig& c = state.config;
    ++state.step_count;
    const double t = static_cast<double>(state.step_count);
    const double correction1 = 1.0 - std::pow(c.beta1, t);
    const double correction2 = 1.0 - std::pow(c.beta2, t);

    auto update = [&](BasicTensor<T>& w, const BasicTensor<T>& g, BasicTensor<T>& m, BasicTensor<T>& v) {
        require_same_shape(w.shape(), m.shape(), "adam_step moment");
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = g[i];
            const double mi = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
            const double vi = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double m_hat = mi / correction1;
            const double v_hat = vi / correction2;
            w[i] = static_cast<T>(static_cast<double>(w[i]) - c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon));
        }
    };
    for (std::size_t k = 0; k < params.size(); ++k) {
        LayerParams<T>& p = *params[k];
        update(p.weights, p.weight_grad, state.first_moment[2 * k], state.second_moment[2 * k]);
        update(p.bias, p.bias_grad, state.first_moment[2 * k + 1], state.second_moment[2 * k + 1]);
    }
}

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

template <typename T>
GradCheckResult finite_difference_check(const std::function<double()>& loss, std::span<T> values,
                                        std::span<const T> analytic, double eps, std::span<const std::size_t> coords) {
    if (values.size() != analytic.size()) {
        throw ShapeError("finite_difference_check: " + std::to_string(values.size()) + " values but " +
                         std::to_string(analytic.size()) + " analytic gradients");
    }
    GradCheckResult result;
    auto probe = [&](std::size_t i) {
        const T saved = values[i];
        values[i] = static_cast<T>(saved + eps);
        const double up = loss();
        values[i] = static_cast<T>(saved - eps);
        const double down = loss();
        values[i] = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double err = relative_error(analytic[i], numeric);
        if (err >= result.max_relative_error) {
            result.max_relative_error = err;
            result.worst_index = i;
            result.worst_analytic = analytic[i];
            result.worst_numeric = numeric;
        }
    };
    if (coords.empty()) {
        for (std::size_t i = 0; i < values.size(); ++i) probe(i);
    } else {
        for (std::size_t i : coords) {
            if (i >= values.size()) throw std::out_of_range("finite_difference_check: coordinate out of range");
            probe(i);
        }
    }
    return result;
}

#define PAP_INSTANTIATE_OPTIM(T)                                                                             \
    template BasicTensor<T> softmax_rows<T>(const BasicTensor<T>&);                                          \
    template LossAndGrad<T> softmax_cross_entropy<T>(const BasicTensor<T>&, const BasicTensor<T>&);          \
    template LossAndGrad<T> binary_cross_entropy_pixelwise<T>(const BasicTensor<T>&, const BasicTensor<T>&); \
    template double l2_penalty<T>(std::span<LayerParams<T>* const>, double);                                 \
    template struct AdamState<T>;                                                                            \
    template void adam_step<T>(std::span<LayerParams<T>* const>, AdamState<T>&);                             \
    template GradCheckResult finite_difference_check<T>(const std::function<double()>&, std::span<T>,         \
                                                        std::span<const T>, double, std::span<const std::size_t>);

PAP_INSTANTIATE_OPTIM(float)
PAP_INSTANTIATE_OPTIM(double)

#undef PAP_INSTANTIATE_OPTIM

}  // namespace pap
