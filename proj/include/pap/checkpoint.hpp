#pragma once

// Binary model container: 8-byte magic, u32 config count + config values,
// u32 tensor count, then per tensor u32 rank, u32 extents and little-endian
// f32 data, in parameter declaration order (weights before bias).

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "pap/classifier.hpp"
#include "pap/unet.hpp"

namespace pap {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr char kUNetMagic[] = "PAPUNET1";
inline constexpr char kClassifierMagic[] = "PAPCNN01";

struct CheckpointBlob {
    std::string magic;
    std::vector<std::uint32_t> config;
    std::vector<Tensor> tensors;
};

std::vector<unsigned char> encode_checkpoint(const CheckpointBlob& blob);
CheckpointBlob decode_checkpoint(std::span<const unsigned char> bytes);

void save_unet(const UNet& model, const std::filesystem::path& path);
UNet load_unet(const std::filesystem::path& path);
void save_classifier(const Classifier& model, const std::filesystem::path& path);
Classifier load_classifier(const std::filesystem::path& path);

}  // namespace pap
