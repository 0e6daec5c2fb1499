#include "pap/imaging.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace pap {

namespace {

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
           (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}
std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint8_t clamp_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

RasterImage decode_bmp(std::span<const std::uint8_t> b) {
    if (b.size() < 54) throw ImageFormatError("BMP: truncated header (" + std::to_string(b.size()) + " bytes)");
    const std::uint32_t data_offset = read_u32(b, 10);
    const std::uint32_t dib_size = read_u32(b, 14);
    if (dib_size < 40) throw ImageFormatError("BMP: unsupported DIB header size " + std::to_string(dib_size));
    const auto width = static_cast<std::int32_t>(read_u32(b, 18));
    const auto raw_height = static_cast<std::int32_t>(read_u32(b, 22));
    const std::uint16_t bpp = read_u16(b, 28);
    const std::uint32_t compression = read_u32(b, 30);
    if (width <= 0 || raw_height == 0 || width > 1 << 15 || std::abs(raw_height) > 1 << 15) {
        throw ImageFormatError("BMP: invalid dimensions");
    }
    if (!(compression == 0 || (compression == 3 && bpp == 32))) {
        throw ImageFormatError("BMP: compressed encodings are not supported (compression " +
                               std::to_string(compression) + ")");
    }
    if (bpp != 8 && bpp != 24 && bpp != 32) {
        throw ImageFormatError("BMP: unsupported bit depth " + std::to_string(bpp));
    }
    const bool top_down = raw_height < 0;
    const int height = std::abs(raw_height);
    const std::size_t stride = ((static_cast<std::size_t>(bpp) * width + 31) / 32) * 4;
    if (data_offset > b.size() || b.size() - data_offset < stride * height) {
        throw ImageFormatError("BMP: truncated pixel data");
    }

    std::vector<std::array<std::uint8_t, 3>> palette;
    bool gray_palette = true;
    if (bpp == 8) {
        std::uint32_t colors = read_u32(b, 46);
        if (colors == 0) colors = 256;
        const std::size_t pal_at = 14 + dib_size;
        if (colors > 256 || pal_at + 4 * static_cast<std::size_t>(colors) > data_offset) {
            throw ImageFormatError("BMP: invalid palette");
        }
        for (std::uint32_t i = 0; i < colors; ++i) {
            const std::size_t at = pal_at + 4 * i;
            palette.push_back({b[at + 2], b[at + 1], b[at]});
            gray_palette = gray_palette && b[at] == b[at + 1] && b[at + 1] == b[at + 2];
        }
    }

    const int channels = (bpp == 8 && gray_palette) ? 1 : 3;
    RasterImage img(width, height, channels);
    for (int y = 0; y < height; ++y) {
        const int src_row = top_down ? y : height - 1 - y;
        const std::uint8_t* row = b.data() + data_offset + stride * src_row;
        for (int x = 0; x < width; ++x) {
            if (bpp == 8) {
                const std::uint8_t idx = row[x];
                if (idx >= palette.size()) throw ImageFormatError("BMP: palette index out of range");
                if (channels == 1) {
                    img.at(x, y) = palette[idx][0];
                } else {
                    for (int c = 0; c < 3; ++c) img.at(x, y, c) = palette[idx][c];
                }
            } else {
                const std::uint8_t* px = row + static_cast<std::size_t>(x) * (bpp / 8);
                img.at(x, y, 0) = px[2];
                img.at(x, y, 1) = px[1];
                img.at(x, y, 2) = px[0];
            }
        }
    }
    return img;
}

RasterImage decode_png(std::span<const std::uint8_t> b) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, b.data(), b.size())) {
        throw ImageFormatError(std::string("PNG: ") + image.message);
    }
    const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    RasterImage img(static_cast<int>(image.width), static_cast<int>(image.height), color ? 3 : 1);
    if (!png_image_finish_read(&image, nullptr, img.pixels.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw ImageFormatError("PNG: " + msg);
    }
    return img;
}

}  // namespace

RasterImage::RasterImage(int w, int h, int c, std::uint8_t fill_value) : width(w), height(h), channels(c) {
    if (w <= 0 || h <= 0 || (c != 1 && c != 3)) {
        throw std::invalid_argument("RasterImage: need positive extents and 1 or 3 channels");
    }
    pixels.assign(static_cast<std::size_t>(w) * h * c, fill_value);
}

BinaryMask::BinaryMask(int width, int height, bool on) : width_(width), height_(height) {
    if (width <= 0 || height <= 0) throw std::invalid_argument("BinaryMask: extents must be positive");
    values_.assign(static_cast<std::size_t>(width) * height, on ? 255 : 0);
}

BinaryMask BinaryMask::from_image(const RasterImage& gray) {
    if (gray.channels != 1) throw std::invalid_argument("BinaryMask::from_image: expected a 1-channel image");
    BinaryMask m(gray.width, gray.height);
    for (std::size_t i = 0; i < gray.pixels.size(); ++i) m.values_[i] = gray.pixels[i] ? 255 : 0;
    return m;
}

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count(values_.begin(), values_.end(), std::uint8_t{255}));
}

RasterImage BinaryMask::to_image() const {
    RasterImage img(width_, height_, 1);
    img.pixels = values_;
    return img;
}

RasterImage decode_image(std::span<const std::uint8_t> bytes) {
    static constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (bytes.size() >= 8 && std::equal(kPngSig, kPngSig + 8, bytes.begin())) return decode_png(bytes);
    if (bytes.size() >= 2 && bytes[0] == 'B' && bytes[1] == 'M') return decode_bmp(bytes);
    throw ImageFormatError("unrecognised image format (expected BMP or PNG signature)");
}

RasterImage read_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ImageFormatError("cannot open image " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_image(bytes);
    } catch (const ImageFormatError& e) {
        throw ImageFormatError(path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_png(const RasterImage& img) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels.data(), 0, nullptr)) {
        throw ImageFormatError(std::string("PNG encode: ") + image.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.pixels.data(), 0, nullptr)) {
        throw ImageFormatError(std::string("PNG encode: ") + image.message);
    }
    out.resize(size);
    return out;
}

void write_png(const std::filesystem::path& path, const RasterImage& img) {
    const auto bytes = encode_png(img);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ImageFormatError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

RasterImage to_grayscale(const RasterImage& img) {
    if (img.channels == 1) return img;
    RasterImage out(img.width, img.height, 1);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const double luma = 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
            out.at(x, y) = clamp_byte(luma);
        }
    }
    return out;
}

RasterImage to_rgb(const RasterImage& img) {
    if (img.channels == 3) return img;
    RasterImage out(img.width, img.height, 3);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        for (int c = 0; c < 3; ++c) out.pixels[3 * i + c] = img.pixels[i];
    return out;
}

namespace {

struct Tap {
    int i0, i1;
    double frac;
};

std::vector<Tap> bilinear_taps(int in, int out) {
    std::vector<Tap> taps(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        const double src = std::clamp((o + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
        const int i0 = static_cast<int>(std::floor(src));
        taps[static_cast<std::size_t>(o)] = {i0, std::min(i0 + 1, in - 1), src - i0};
    }
    return taps;
}

}  // namespace

RasterImage resize_bilinear(const RasterImage& img, int out_w, int out_h) {
    if (out_w <= 0 || out_h <= 0) throw std::invalid_argument("resize_bilinear: output extents must be positive");
    if (out_w == img.width && out_h == img.height) return img;
    const auto tx = bilinear_taps(img.width, out_w);
    const auto ty = bilinear_taps(img.height, out_h);
    RasterImage out(out_w, out_h, img.channels);
    for (int y = 0; y < out_h; ++y) {
        const Tap& vy = ty[static_cast<std::size_t>(y)];
        for (int x = 0; x < out_w; ++x) {
            const Tap& vx = tx[static_cast<std::size_t>(x)];
            for (int c = 0; c < img.channels; ++c) {
                const double top = img.at(vx.i0, vy.i0, c) * (1 - vx.frac) + img.at(vx.i1, vy.i0, c) * vx.frac;
                const double bot = img.at(vx.i0, vy.i1, c) * (1 - vx.frac) + img.at(vx.i1, vy.i1, c) * vx.frac;
                out.at(x, y, c) = clamp_byte(top * (1 - vy.frac) + bot * vy.frac);
            }
        }
    }
    return out;
}

std::vector<float> resize_bilinear(std::span<const float> plane, int w, int h, int out_w, int out_h) {
    if (plane.size() != static_cast<std::size_t>(w) * h) throw ShapeError("resize_bilinear: plane size mismatch");
    const auto tx = bilinear_taps(w, out_w);
    const auto ty = bilinear_taps(h, out_h);
    std::vector<float> out(static_cast<std::size_t>(out_w) * out_h);
    for (int y = 0; y < out_h; ++y) {
        const Tap& vy = ty[static_cast<std::size_t>(y)];
        for (int x = 0; x < out_w; ++x) {
            const Tap& vx = tx[static_cast<std::size_t>(x)];
            auto px = [&](int xx, int yy) { return static_cast<double>(plane[static_cast<std::size_t>(yy) * w + xx]); };
            const double top = px(vx.i0, vy.i0) * (1 - vx.frac) + px(vx.i1, vy.i0) * vx.frac;
            const double bot = px(vx.i0, vy.i1) * (1 - vx.frac) + px(vx.i1, vy.i1) * vx.frac;
            out[static_cast<std::size_t>(y) * out_w + x] = static_cast<float>(top * (1 - vy.frac) + bot * vy.frac);
        }
    }
    return out;
}

Tensor normalize01(const RasterImage& img) {
    Tensor t(Shape{1, img.channels, img.height, img.width});
    const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
    for (std::size_t p = 0; p < plane; ++p)
        for (int c = 0; c < img.channels; ++c)
            t[c * plane + p] = static_cast<float>(img.pixels[p * img.channels + c] / 255.0);
    return t;
}

RasterImage rescale255(const Tensor& t) {
    const Shape& s = t.shape();
    if (s.rank() != 4 || s.n() != 1 || (s.c() != 1 && s.c() != 3)) {
        throw ShapeError("rescale255: expected 1 x {1,3} x H x W, got " + s.str());
    }
    RasterImage img(s.w(), s.h(), s.c());
    const std::size_t plane = static_cast<std::size_t>(s.w()) * s.h();
    for (std::size_t p = 0; p < plane; ++p)
        for (int c = 0; c < s.c(); ++c) img.pixels[p * s.c() + c] = clamp_byte(static_cast<double>(t[c * plane + p]) * 255.0);
    return img;
}

RasterImage gaussian_blur(const RasterImage& img, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_blur: sigma must be positive");
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-(i * i) / (2.0 * sigma * sigma));
        kernel[static_cast<std::size_t>(i + radius)] = w;
        sum += w;
    }
    for (double& w : kernel) w /= sum;

    const int W = img.width, H = img.height, C = img.channels;
    std::vector<double> horiz(img.pixels.size());
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int xx = std::clamp(x + i, 0, W - 1);
                    acc += kernel[static_cast<std::size_t>(i + radius)] * img.at(xx, y, c);
                }
                horiz[(static_cast<std::size_t>(y) * W + x) * C + c] = acc;
            }
    RasterImage out(W, H, C);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int yy = std::clamp(y + i, 0, H - 1);
                    acc += kernel[static_cast<std::size_t>(i + radius)] * horiz[(static_cast<std::size_t>(yy) * W + x) * C + c];
                }
                out.at(x, y, c) = clamp_byte(acc);
            }
    return out;
}

BinaryMask adaptive_threshold(const RasterImage& gray, int block, double offset_c) {
    if (gray.channels != 1) throw std::invalid_argument("adaptive_threshold: expected a 1-channel image");
    if (block < 3 || block % 2 == 0) throw std::invalid_argument("adaptive_threshold: block must be odd and >= 3");
    const int W = gray.width, H = gray.height, r = block / 2;
    // integral[(y+1)*(W+1) + (x+1)] = sum over [0,x] x [0,y]
    std::vector<std::uint64_t> integral(static_cast<std::size_t>(W + 1) * (H + 1), 0);
    for (int y = 0; y < H; ++y) {
        std::uint64_t row = 0;
        for (int x = 0; x < W; ++x) {
            row += gray.at(x, y);
            integral[static_cast<std::size_t>(y + 1) * (W + 1) + x + 1] = integral[static_cast<std::size_t>(y) * (W + 1) + x + 1] + row;
        }
    }
    auto at = [&](int x, int y) { return integral[static_cast<std::size_t>(y) * (W + 1) + x]; };
    BinaryMask mask(W, H);
    for (int y = 0; y < H; ++y) {
        const int y0 = std::max(0, y - r), y1 = std::min(H - 1, y + r);
        for (int x = 0; x < W; ++x) {
            const int x0 = std::max(0, x - r), x1 = std::min(W - 1, x + r);
            const std::uint64_t sum = at(x1 + 1, y1 + 1) - at(x0, y1 + 1) - at(x1 + 1, y0) + at(x0, y0);
            const double mean = static_cast<double>(sum) / ((x1 - x0 + 1) * (y1 - y0 + 1));
            mask.set(x, y, gray.at(x, y) > mean - offset_c);
        }
    }
    return mask;
}

namespace {

// One separable min/max pass of a square window; out-of-image counts as off.
BinaryMask morph_pass(const BinaryMask& in, bool dilate, int radius) {
    const int W = in.width(), H = in.height();
    BinaryMask tmp(W, H), out(W, H);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            bool v = !dilate;
            for (int i = -radius; i <= radius; ++i) {
                const int xx = x + i;
                const bool s = xx >= 0 && xx < W ? in.get(xx, y) : !dilate;
                v = dilate ? (v || s) : (v && s);
            }
            tmp.set(x, y, v);
        }
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            bool v = !dilate;
            for (int i = -radius; i <= radius; ++i) {
                const int yy = y + i;
                const bool s = yy >= 0 && yy < H ? tmp.get(x, yy) : !dilate;
                v = dilate ? (v || s) : (v && s);
            }
            out.set(x, y, v);
        }
    return out;
}

}  // namespace

BinaryMask morph(const BinaryMask& mask, MorphOp op, int radius) {
    if (radius <= 0) throw std::invalid_argument("morph: radius must be positive");
    switch (op) {
        case MorphOp::Erode: return morph_pass(mask, false, radius);
        case MorphOp::Dilate: return morph_pass(mask, true, radius);
        case MorphOp::Open: return morph_pass(morph_pass(mask, false, radius), true, radius);
        case MorphOp::Close: return morph_pass(morph_pass(mask, true, radius), false, radius);
    }
    throw std::invalid_argument("morph: unknown operation");
}

RasterImage apply_mask(const RasterImage& original, const BinaryMask& mask) {
    if (original.width != mask.width() || original.height != mask.height()) {
        throw ShapeError("apply_mask: image " + std::to_string(original.width) + "x" + std::to_string(original.height) +
                         " vs mask " + std::to_string(mask.width()) + "x" + std::to_string(mask.height()));
    }
    RasterImage out = original;
    for (int y = 0; y < original.height; ++y)
        for (int x = 0; x < original.width; ++x)
            if (!mask.get(x, y))
                for (int c = 0; c < original.channels; ++c) out.at(x, y, c) = 0;
    return out;
}

BinaryMask resize_nearest(const BinaryMask& mask, int out_w, int out_h) {
    if (out_w == mask.width() && out_h == mask.height()) return mask;
    BinaryMask out(out_w, out_h);
    for (int y = 0; y < out_h; ++y) {
        const int sy = std::min(mask.height() - 1, static_cast<int>((y + 0.5) * mask.height() / out_h));
        for (int x = 0; x < out_w; ++x) {
            const int sx = std::min(mask.width() - 1, static_cast<int>((x + 0.5) * mask.width() / out_w));
            out.set(x, y, mask.get(sx, sy));
        }
    }
    return out;
}

}  // namespace pap
