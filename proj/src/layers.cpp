#include "pap/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pap/gemm.hpp"

namespace pap {

namespace {

void require_rank4(const Shape& s, const char* what) {
    if (s.rank() != 4) throw ShapeError(std::string(what) + ": expected rank-4 NCHW tensor, got " + s.str());
}

int conv_out_extent(int in, int kernel, int stride, int padding) {
    return (in + 2 * padding - kernel) / stride + 1;
}

// Unfolds one C x H x W image into a (C*K*K) x (Ho*Wo) patch matrix.
template <typename T>
void im2col(const T* img, int channels, int height, int width, int kernel, int stride, int padding,
            int out_h, int out_w, T* col) {
    const std::ptrdiff_t plane = static_cast<std::ptrdiff_t>(out_h) * out_w;
    for (int c = 0; c < channels; ++c) {
        const T* src = img + static_cast<std::ptrdiff_t>(c) * height * width;
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
                T* dst = col + ((static_cast<std::ptrdiff_t>(c) * kernel + ky) * kernel + kx) * plane;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride + ky - padding;
                    T* row = dst + static_cast<std::ptrdiff_t>(oy) * out_w;
                    if (iy < 0 || iy >= height) {
                        std::fill_n(row, out_w, T{0});
                        continue;
                    }
                    const T* srow = src + static_cast<std::ptrdiff_t>(iy) * width;
                    if (stride == 1) {
                        // valid ox range: 0 <= ox + kx - padding < width
                        const int lo = std::clamp(padding - kx, 0, out_w);
                        const int hi = std::clamp(width + padding - kx, lo, out_w);
                        std::fill_n(row, lo, T{0});
                        std::copy(srow + lo + kx - padding, srow + hi + kx - padding, row + lo);
                        std::fill(row + hi, row + out_w, T{0});
                    } else {
                        for (int ox = 0; ox < out_w; ++ox) {
                            const int ix = ox * stride + kx - padding;
                            row[ox] = (ix >= 0 && ix < width) ? srow[ix] : T{0};
                        }
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters patch gradients back onto the image.
template <typename T>
void col2im(const T* col, int channels, int height, int width, int kernel, int stride, int padding,
            int out_h, int out_w, T* img) {
    const std::ptrdiff_t plane = static_cast<std::ptrdiff_t>(out_h) * out_w;
    std::fill_n(img, static_cast<std::ptrdiff_t>(channels) * height * width, T{0});
    for (int c = 0; c < channels; ++c) {
        T* dst = img + static_cast<std::ptrdiff_t>(c) * height * width;
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
                const T* src = col + ((static_cast<std::ptrdiff_t>(c) * kernel + ky) * kernel + kx) * plane;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride + ky - padding;
                    if (iy < 0 || iy >= height) continue;
                    const T* row = src + static_cast<std::ptrdiff_t>(oy) * out_w;
                    T* drow = dst + static_cast<std::ptrdiff_t>(iy) * width;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * stride + kx - padding;
                        if (ix >= 0 && ix < width) drow[ix] += row[ox];
                    }
                }
            }
        }
    }
}

template <typename T>
void check_conv_operands(const Shape& in, const LayerParams<T>& p, int stride, int padding) {
    require_rank4(in, "conv2d");
    const Shape& k = p.weights.shape();
    require_rank4(k, "conv2d kernel");
    if (k.h() != k.w()) throw ShapeError("conv2d: kernel must be square, got " + k.str());
    if (k.c() != in.c()) {
        throw ShapeError("conv2d: input " + in.str() + " has " + std::to_string(in.c()) +
                         " channels but kernel " + k.str() + " expects " + std::to_string(k.c()));
    }
    if (p.bias.size() != static_cast<std::size_t>(k.n())) {
        throw ShapeError("conv2d: bias " + p.bias.shape().str() + " does not match kernel " + k.str());
    }
    if (stride <= 0 || padding < 0) throw std::invalid_argument("conv2d: stride must be positive, padding non-negative");
    if (in.h() + 2 * padding < k.h() || in.w() + 2 * padding < k.w()) {
        throw ShapeError("conv2d: kernel " + k.str() + " larger than padded input " + in.str());
    }
}

template <typename T>
void check_dense_operands(const Shape& in, const LayerParams<T>& p) {
    const Shape& w = p.weights.shape();
    if (w.rank() != 2) throw ShapeError("dense: weights must be rank 2, got " + w.str());
    const std::size_t features = in.numel() / static_cast<std::size_t>(in[0]);
    if (features != static_cast<std::size_t>(w[0])) {
        throw ShapeError("dense: input " + in.str() + " flattens to " + std::to_string(features) +
                         " features but weights " + w.str() + " expect " + std::to_string(w[0]));
    }
}

}  // namespace

template <typename T>
LayerParams<T>::LayerParams(std::string n, Shape weight_shape, Shape bias_shape)
    : name(std::move(n)),
      weights(weight_shape),
      bias(bias_shape),
      weight_grad(weight_shape),
      bias_grad(bias_shape) {}

template <typename T>
void LayerParams<T>::zero_grad() {
    weight_grad.fill(T{0});
    bias_grad.fill(T{0});
    grad_ready = false;
}

template <typename T>
LayerParams<T> make_conv_params(std::string name, int in_channels, int filters, int kernel) {
    return LayerParams<T>(std::move(name), Shape{filters, in_channels, kernel, kernel}, Shape{filters});
}

template <typename T>
LayerParams<T> make_dense_params(std::string name, int inputs, int units) {
    return LayerParams<T>(std::move(name), Shape{inputs, units}, Shape{units});
}

template <typename T>
void he_uniform_init(LayerParams<T>& p, Rng& rng) {
    const Shape& s = p.weights.shape();
    // conv: F x C x K x K -> fan_in C*K*K ; dense: F_in x U -> fan_in F_in
    const double fan_in = s.rank() == 4 ? static_cast<double>(s.c()) * s.h() * s.w() : static_cast<double>(s[0]);
    const double bound = std::sqrt(6.0 / fan_in);
    for (auto& w : p.weights.values()) w = static_cast<T>(rng.uniform(-bound, bound));
    p.bias.fill(T{0});
}

template <typename T>
void glorot_uniform_init(LayerParams<T>& p, Rng& rng) {
    const Shape& s = p.weights.shape();
    const double receptive = s.rank() == 4 ? static_cast<double>(s.h()) * s.w() : 1.0;
    const double fan_in = s.rank() == 4 ? s.c() * receptive : static_cast<double>(s[0]);
    const double fan_out = s.rank() == 4 ? s.n() * receptive : static_cast<double>(s[1]);
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& w : p.weights.values()) w = static_cast<T>(rng.uniform(-bound, bound));
    p.bias.fill(T{0});
}

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const LayerParams<T>& params, int stride,
                              int padding) {
    const Shape& in = input.shape();
    check_conv_operands(in, params, stride, padding);
    const Shape& ks = params.weights.shape();
    const int filters = ks.n(), kernel = ks.h();
    const int out_h = conv_out_extent(in.h(), kernel, stride, padding);
    const int out_w = conv_out_extent(in.w(), kernel, stride, padding);
    const int patch = in.c() * kernel * kernel;
    const int plane = out_h * out_w;
    const bool pointwise = kernel == 1 && stride == 1 && padding == 0;

    BasicTensor<T> out(Shape{in.n(), filters, out_h, out_w});
    thread_local std::vector<T> col;
    if (!pointwise) col.resize(static_cast<std::size_t>(patch) * plane);

    const std::size_t in_item = static_cast<std::size_t>(in.c()) * in.h() * in.w();
    const std::size_t out_item = static_cast<std::size_t>(filters) * plane;
    for (int n = 0; n < in.n(); ++n) {
        const T* img = input.data() + n * in_item;
        const T* cols = img;
        if (!pointwise) {
            im2col(img, in.c(), in.h(), in.w(), kernel, stride, padding, out_h, out_w, col.data());
            cols = col.data();
        }
        T* dst = out.data() + n * out_item;
        gemm<T>(Trans::No, Trans::No, filters, plane, patch, params.weights.data(), patch, cols, plane, dst, plane,
                false);
        for (int f = 0; f < filters; ++f) {
            const T b = params.bias[f];
            T* row = dst + static_cast<std::ptrdiff_t>(f) * plane;
            for (int i = 0; i < plane; ++i) row[i] += b;
        }
    }
    return out;
}

template <typename T>
BasicTensor<T> conv2d_backward(const BasicTensor<T>& input, LayerParams<T>& params,
                               const BasicTensor<T>& upstream, int stride, int padding, bool need_input_grad) {
    const Shape& in = input.shape();
    check_conv_operands(in, params, stride, padding);
    const Shape& ks = params.weights.shape();
    const int filters = ks.n(), kernel = ks.h();
    const int out_h = conv_out_extent(in.h(), kernel, stride, padding);
    const int out_w = conv_out_extent(in.w(), kernel, stride, padding);
    require_same_shape(Shape{in.n(), filters, out_h, out_w}, upstream.shape(), "conv2d_backward upstream");
    const int patch = in.c() * kernel * kernel;
    const int plane = out_h * out_w;
    const bool pointwise = kernel == 1 && stride == 1 && padding == 0;

    BasicTensor<T> grad_in;
    if (need_input_grad) grad_in = BasicTensor<T>(in);
    thread_local std::vector<T> col;
    thread_local std::vector<T> dcol;
    if (!pointwise) col.resize(static_cast<std::size_t>(patch) * plane);
    if (need_input_grad && !pointwise) dcol.resize(static_cast<std::size_t>(patch) * plane);

    std::vector<double> bias_acc(static_cast<std::size_t>(filters), 0.0);
    const std::size_t in_item = static_cast<std::size_t>(in.c()) * in.h() * in.w();
    const std::size_t out_item = static_cast<std::size_t>(filters) * plane;
    for (int n = 0; n < in.n(); ++n) {
        const T* img = input.data() + n * in_item;
        const T* dy = upstream.data() + n * out_item;
        const T* cols = img;
        if (!pointwise) {
            im2col(img, in.c(), in.h(), in.w(), kernel, stride, padding, out_h, out_w, col.data());
            cols = col.data();
        }
        gemm<T>(Trans::No, Trans::Yes, filters, patch, plane, dy, plane, cols, plane, params.weight_grad.data(),
                patch, true);
        for (int f = 0; f < filters; ++f) {
            const T* row = dy + static_cast<std::ptrdiff_t>(f) * plane;
            double s = 0.0;
            for (int i = 0; i < plane; ++i) s += row[i];
            bias_acc[static_cast<std::size_t>(f)] += s;
        }
        if (need_input_grad) {
            T* dimg = grad_in.data() + n * in_item;
            if (pointwise) {
                gemm<T>(Trans::Yes, Trans::No, patch, plane, filters, params.weights.data(), patch, dy, plane, dimg,
                        plane, false);
            } else {
                gemm<T>(Trans::Yes, Trans::No, patch, plane, filters, params.weights.data(), patch, dy, plane,
                        dcol.data(), plane, false);
                col2im(dcol.data(), in.c(), in.h(), in.w(), kernel, stride, padding, out_h, out_w, dimg);
            }
        }
    }
    for (int f = 0; f < filters; ++f) params.bias_grad[f] += static_cast<T>(bias_acc[static_cast<std::size_t>(f)]);
    params.grad_ready = true;
    return grad_in;
}

template <typename T>
MaxPoolResult<T> maxpool2_forward(const BasicTensor<T>& input) {
    const Shape& in = input.shape();
    require_rank4(in, "maxpool2");
    if (in.h() % 2 != 0 || in.w() % 2 != 0) {
        throw ShapeError("maxpool2: spatial extents must be even, got " + in.str());
    }
    const int oh = in.h() / 2, ow = in.w() / 2;
    MaxPoolResult<T> r{BasicTensor<T>(Shape{in.n(), in.c(), oh, ow}), {}};
    r.argmax.resize(r.output.size());
    std::size_t o = 0;
    for (int nc = 0; nc < in.n() * in.c(); ++nc) {
        const std::int64_t base = static_cast<std::int64_t>(nc) * in.h() * in.w();
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x, ++o) {
                std::int64_t best = base + static_cast<std::int64_t>(2 * y) * in.w() + 2 * x;
                T best_v = input[static_cast<std::size_t>(best)];
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dx = 0; dx < 2; ++dx) {
                        const std::int64_t idx = base + static_cast<std::int64_t>(2 * y + dy) * in.w() + 2 * x + dx;
                        const T v = input[static_cast<std::size_t>(idx)];
                        if (v > best_v) {  // strict: earlier position keeps ties
                            best_v = v;
                            best = idx;
                        }
                    }
                }
                r.output[o] = best_v;
                r.argmax[o] = best;
            }
        }
    }
    return r;
}

template <typename T>
BasicTensor<T> maxpool2_backward(const std::vector<std::int64_t>& argmax, const BasicTensor<T>& upstream,
                                 const Shape& input_shape) {
    require_rank4(input_shape, "maxpool2_backward");
    const Shape expected{input_shape.n(), input_shape.c(), input_shape.h() / 2, input_shape.w() / 2};
    require_same_shape(expected, upstream.shape(), "maxpool2_backward upstream");
    if (argmax.size() != upstream.size()) {
        throw ShapeError("maxpool2_backward: " + std::to_string(argmax.size()) + " indices for upstream " +
                         upstream.shape().str());
    }
    BasicTensor<T> grad(input_shape);
    for (std::size_t i = 0; i < argmax.size(); ++i) grad[static_cast<std::size_t>(argmax[i])] += upstream[i];
    return grad;
}

template <typename T>
BasicTensor<T> dense_forward(const BasicTensor<T>& input, const LayerParams<T>& params) {
    check_dense_operands(input.shape(), params);
    const int batch = input.shape()[0];
    const int features = params.weights.shape()[0];
    const int units = params.weights.shape()[1];
    BasicTensor<T> out(Shape{batch, units});
    gemm<T>(Trans::No, Trans::No, batch, units, features, input.data(), features, params.weights.data(), units,
            out.data(), units, false);
    for (int b = 0; b < batch; ++b)
        for (int u = 0; u < units; ++u) out[static_cast<std::size_t>(b) * units + u] += params.bias[u];
    return out;
}

template <typename T>
BasicTensor<T> dense_backward(const BasicTensor<T>& input, LayerParams<T>& params, const BasicTensor<T>& upstream) {
    check_dense_operands(input.shape(), params);
    const int batch = input.shape()[0];
    const int features = params.weights.shape()[0];
    const int units = params.weights.shape()[1];
    require_same_shape(Shape{batch, units}, upstream.shape(), "dense_backward upstream");

    gemm<T>(Trans::Yes, Trans::No, features, units, batch, input.data(), features, upstream.data(), units,
            params.weight_grad.data(), units, true);
    for (int u = 0; u < units; ++u) {
        double s = 0.0;
        for (int b = 0; b < batch; ++b) s += upstream[static_cast<std::size_t>(b) * units + u];
        params.bias_grad[u] += static_cast<T>(s);
    }
    BasicTensor<T> grad_in(input.shape());
    gemm<T>(Trans::No, Trans::Yes, batch, features, units, upstream.data(), units, params.weights.data(), units,
            grad_in.data(), features, false);
    params.grad_ready = true;
    return grad_in;
}

template <typename T>
BasicTensor<T> dense_input_grad(const Shape& input_shape, const LayerParams<T>& params, const BasicTensor<T>& upstream) {
    check_dense_operands(input_shape, params);
    const int batch = input_shape[0];
    const int features = params.weights.shape()[0];
    const int units = params.weights.shape()[1];
    require_same_shape(Shape{batch, units}, upstream.shape(), "dense_input_grad upstream");
    BasicTensor<T> grad_in(input_shape);
    gemm<T>(Trans::No, Trans::Yes, batch, features, units, upstream.data(), units, params.weights.data(), units,
            grad_in.data(), features, false);
    return grad_in;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& input) {
    BasicTensor<T> out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T{0} ? input[i] : T{0};
    return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& input, const BasicTensor<T>& upstream) {
    require_same_shape(input.shape(), upstream.shape(), "relu_backward upstream");
    BasicTensor<T> out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > T{0} ? upstream[i] : T{0};
    return out;
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& input) {
    BasicTensor<T> out(input.shape());
    for (std::size_t i = 0; i < input.size(); ++i) {
        const T x = input[i];
        if (x >= T{0}) {
            out[i] = T{1} / (T{1} + std::exp(-x));
        } else {
            const T e = std::exp(x);
            out[i] = e / (T{1} + e);
        }
    }
    return out;
}

template <typename T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& output, const BasicTensor<T>& upstream) {
    require_same_shape(output.shape(), upstream.shape(), "sigmoid_backward upstream");
    BasicTensor<T> out(output.shape());
    for (std::size_t i = 0; i < output.size(); ++i) out[i] = upstream[i] * output[i] * (T{1} - output[i]);
    return out;
}

template <typename T>
DropoutResult<T> dropout(const BasicTensor<T>& input, double rate, Rng& rng, bool training) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw std::invalid_argument("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (!training) return {input, {}};
    DropoutResult<T> r{BasicTensor<T>(input.shape()), BasicTensor<T>(input.shape())};
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    for (std::size_t i = 0; i < input.size(); ++i) {
        const T m = rng.uniform() < rate ? T{0} : keep_scale;
        r.mask[i] = m;
        r.output[i] = input[i] * m;
    }
    return r;
}

template <typename T>
BasicTensor<T> dropout_backward(const BasicTensor<T>& mask, const BasicTensor<T>& upstream) {
    if (mask.empty()) return upstream;
    require_same_shape(mask.shape(), upstream.shape(), "dropout_backward upstream");
    BasicTensor<T> out(upstream.shape());
    for (std::size_t i = 0; i < upstream.size(); ++i) out[i] = upstream[i] * mask[i];
    return out;
}

template <typename T>
BasicTensor<T> upsample2_forward(const BasicTensor<T>& input) {
    const Shape& in = input.shape();
    require_rank4(in, "upsample2");
    const int oh = in.h() * 2, ow = in.w() * 2;
    BasicTensor<T> out(Shape{in.n(), in.c(), oh, ow});
    for (int nc = 0; nc < in.n() * in.c(); ++nc) {
        const T* src = input.data() + static_cast<std::ptrdiff_t>(nc) * in.h() * in.w();
        T* dst = out.data() + static_cast<std::ptrdiff_t>(nc) * oh * ow;
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) dst[y * ow + x] = src[(y / 2) * in.w() + x / 2];
    }
    return out;
}

template <typename T>
BasicTensor<T> upsample2_backward(const BasicTensor<T>& upstream) {
    const Shape& up = upstream.shape();
    require_rank4(up, "upsample2_backward");
    if (up.h() % 2 != 0 || up.w() % 2 != 0) throw ShapeError("upsample2_backward: odd extents " + up.str());
    const int h = up.h() / 2, w = up.w() / 2;
    BasicTensor<T> grad(Shape{up.n(), up.c(), h, w});
    for (int nc = 0; nc < up.n() * up.c(); ++nc) {
        const T* src = upstream.data() + static_cast<std::ptrdiff_t>(nc) * up.h() * up.w();
        T* dst = grad.data() + static_cast<std::ptrdiff_t>(nc) * h * w;
        for (int y = 0; y < up.h(); ++y)
            for (int x = 0; x < up.w(); ++x) dst[(y / 2) * w + x / 2] += src[y * up.w() + x];
    }
    return grad;
}

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    require_rank4(sa, "concat_channels");
    require_rank4(sb, "concat_channels");
    if (sa.n() != sb.n() || sa.h() != sb.h() || sa.w() != sb.w()) {
        throw ShapeError("concat_channels: cannot join " + sa.str() + " with " + sb.str());
    }
    BasicTensor<T> out(Shape{sa.n(), sa.c() + sb.c(), sa.h(), sa.w()});
    const std::size_t ia = sa.numel() / sa.n(), ib = sb.numel() / sb.n();
    for (int n = 0; n < sa.n(); ++n) {
        T* dst = out.data() + n * (ia + ib);
        std::copy_n(a.data() + n * ia, ia, dst);
        std::copy_n(b.data() + n * ib, ib, dst + ia);
    }
    return out;
}

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> split_channels(const BasicTensor<T>& joined, int first_channels) {
    const Shape& s = joined.shape();
    require_rank4(s, "split_channels");
    if (first_channels <= 0 || first_channels >= s.c()) {
        throw ShapeError("split_channels: cannot split " + s.str() + " at channel " + std::to_string(first_channels));
    }
    BasicTensor<T> a(Shape{s.n(), first_channels, s.h(), s.w()});
    BasicTensor<T> b(Shape{s.n(), s.c() - first_channels, s.h(), s.w()});
    const std::size_t ia = a.size() / s.n(), ib = b.size() / s.n();
    for (int n = 0; n < s.n(); ++n) {
        const T* src = joined.data() + n * (ia + ib);
        std::copy_n(src, ia, a.data() + n * ia);
        std::copy_n(src + ia, ib, b.data() + n * ib);
    }
    return {std::move(a), std::move(b)};
}

template <typename T>
void add_inplace(BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "add_inplace");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

#define PAP_INSTANTIATE_LAYERS(T)                                                                              \
    template struct LayerParams<T>;                                                                            \
    template LayerParams<T> make_conv_params<T>(std::string, int, int, int);                                  \
    template LayerParams<T> make_dense_params<T>(std::string, int, int);                                      \
    template void he_uniform_init<T>(LayerParams<T>&, Rng&);                                                   \
    template void glorot_uniform_init<T>(LayerParams<T>&, Rng&);                                               \
    template BasicTensor<T> dense_input_grad<T>(const Shape&, const LayerParams<T>&, const BasicTensor<T>&);  \
    template BasicTensor<T> conv2d_forward<T>(const BasicTensor<T>&, const LayerParams<T>&, int, int);        \
    template BasicTensor<T> conv2d_backward<T>(const BasicTensor<T>&, LayerParams<T>&, const BasicTensor<T>&, \
                                               int, int, bool);                                                \
    template MaxPoolResult<T> maxpool2_forward<T>(const BasicTensor<T>&);                                     \
    template BasicTensor<T> maxpool2_backward<T>(const std::vector<std::int64_t>&, const BasicTensor<T>&,     \
                                                 const Shape&);                                                \
    template BasicTensor<T> dense_forward<T>(const BasicTensor<T>&, const LayerParams<T>&);                   \
    template BasicTensor<T> dense_backward<T>(const BasicTensor<T>&, LayerParams<T>&, const BasicTensor<T>&); \
    template BasicTensor<T> relu<T>(const BasicTensor<T>&);                                                    \
    template BasicTensor<T> relu_backward<T>(const BasicTensor<T>&, const BasicTensor<T>&);                   \
    template BasicTensor<T> sigmoid<T>(const BasicTensor<T>&);                                                 \
    template BasicTensor<T> sigmoid_backward<T>(const BasicTensor<T>&, const BasicTensor<T>&);                \
    template DropoutResult<T> dropout<T>(const BasicTensor<T>&, double, Rng&, bool);                           \
    template BasicTensor<T> dropout_backward<T>(const BasicTensor<T>&, const BasicTensor<T>&);                \
    template BasicTensor<T> upsample2_forward<T>(const BasicTensor<T>&);                                       \
    template BasicTensor<T> upsample2_backward<T>(const BasicTensor<T>&);                                      \
    template BasicTensor<T> concat_channels<T>(const BasicTensor<T>&, const BasicTensor<T>&);                 \
    template std::pair<BasicTensor<T>, BasicTensor<T>> split_channels<T>(const BasicTensor<T>&, int);         \
    template void add_inplace<T>(BasicTensor<T>&, const BasicTensor<T>&);

PAP_INSTANTIATE_LAYERS(float)
PAP_INSTANTIATE_LAYERS(double)

#undef PAP_INSTANTIATE_LAYERS

}  // namespace pap
