#pragma once

// Raster images, masks, and the classical preprocessing operators.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "pap/tensor.hpp"

namespace pap {

class ImageFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// 8-bit raster, row-major, channel-interleaved; 1 (gray) or 3 (RGB) channels.
struct RasterImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;

    RasterImage() = default;
    RasterImage(int w, int h, int c, std::uint8_t fill = 0);

    std::uint8_t& at(int x, int y, int ch = 0) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + ch];
    }
    std::uint8_t at(int x, int y, int ch = 0) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * channels + ch];
    }
    friend bool operator==(const RasterImage&, const RasterImage&) = default;
};

/// Single-channel image whose only values are 0 and 255.
class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int width, int height, bool on = false);
    /// Any nonzero byte counts as foreground.
    static BinaryMask from_image(const RasterImage& gray);

    int width() const { return width_; }
    int height() const { return height_; }
    bool get(int x, int y) const { return values_[static_cast<std::size_t>(y) * width_ + x] != 0; }
    void set(int x, int y, bool on) { values_[static_cast<std::size_t>(y) * width_ + x] = on ? 255 : 0; }
    std::span<const std::uint8_t> values() const { return values_; }
    std::size_t count() const;
    RasterImage to_image() const;
    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> values_;
};

/// BMP (uncompressed 8/24/32-bit) or PNG, sniffed from the leading bytes.
RasterImage decode_image(std::span<const std::uint8_t> bytes);
RasterImage read_image(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_png(const RasterImage& img);
void write_png(const std::filesystem::path& path, const RasterImage& img);

/// BT.601 luma, rounded.
RasterImage to_grayscale(const RasterImage& img);
/// Gray images are replicated into three channels.
RasterImage to_rgb(const RasterImage& img);

/// Bilinear with half-pixel-centre source mapping.
RasterImage resize_bilinear(const RasterImage& img, int out_w, int out_h);
/// Same mapping for a single-channel float plane.
std::vector<float> resize_bilinear(std::span<const float> plane, int w, int h, int out_w, int out_h);

/// value / 255, shaped 1 x C x H x W (planar).
Tensor normalize01(const RasterImage& img);
/// round(v * 255) clamped; accepts 1 x C x H x W or C x H x W-compatible rank-4 item 0.
RasterImage rescale255(const Tensor& t);

/// Separable Gaussian, radius ceil(3 sigma), clamp-to-edge.
RasterImage gaussian_blur(const RasterImage& img, double sigma);

/// 255 where value > local block x block mean - offset; integral image with clamped borders.
BinaryMask adaptive_threshold(const RasterImage& gray, int block, double offset_c);

enum class MorphOp { Erode, Dilate, Open, Close };
/// Square structuring element of side 2r+1. Pixels outside the image are
/// ignored, so erosion and dilation stay adjoint and open/close are idempotent.
BinaryMask morph(const BinaryMask& mask, MorphOp op, int radius);

/// Copies pixels under foreground, zeroes the rest in every channel.
RasterImage apply_mask(const RasterImage& original, const BinaryMask& mask);

/// Nearest-neighbour mask resampling.
BinaryMask resize_nearest(const BinaryMask& mask, int out_w, int out_h);

}  // namespace pap
