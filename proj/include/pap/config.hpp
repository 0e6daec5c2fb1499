#pragma once

// Run configuration: one JSON object, unknown keys rejected, ranges checked at load.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "pap/classifier.hpp"
#include "pap/dataset.hpp"
#include "pap/unet.hpp"

namespace pap {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class RunMode { Raw, Segmented, Both };

std::string to_string(RunMode mode);
RunMode parse_run_mode(const std::string& text);

struct UNetSettings {
    int base_width = 16;
    int epochs = 30;
    int batch_size = 8;
    double learning_rate = 1e-3;
    /// Cap on U-Net training images per fold; 0 uses the whole training partition.
    int max_train_samples = 0;
    double threshold = 0.5;
    bool refine = true;
    double blur_sigma = 1.0;
    int open_radius = 1;
    int close_radius = 1;
};

struct RunConfig {
    std::uint64_t seed = 42;
    int k = 5;
    int epochs = 30;
    int batch_size = 32;
    double learning_rate = 1e-3;
    double l2_lambda = 1e-4;
    double dropout_rate = 0.5;
    int input_size = 128;
    std::array<int, 3> filters = {32, 64, 128};
    int dense_units = 128;
    AugmentConfig aug;
    UNetSettings unet;
    RunMode mode = RunMode::Both;
    std::string data_root;
    std::string out_dir = "out";
    /// Fold-parallel worker threads; 0 means min(k, hardware threads).
    int workers = 0;
    /// Validation images per fold that get a Grad-CAM heatmap.
    int cam_samples = 2;

    /// Throws ConfigError naming the first offending field.
    void validate() const;

    ClassifierConfig classifier_config() const;
    SegmentationConfig segmentation_config() const;
};

/// Throws ConfigError on unknown keys, wrong types, or out-of-range values.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& c);

}  // namespace pap
