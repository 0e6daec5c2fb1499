#pragma once

// k-fold driver: per fold, optionally train a U-Net and mask the images,
// then train and evaluate the classifier. Folds run on a worker pool and
// merge in fold order.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pap/classifier.hpp"
#include "pap/config.hpp"
#include "pap/dataset.hpp"
#include "pap/evaluation.hpp"
#include "pap/unet.hpp"

namespace pap {

struct CamSample {
    std::string id;
    int target_class = 0;
    GradCamResult cam;
};

/// Everything a fold produces besides its metrics, handed back by value.
struct FoldOutput {
    int fold = 0;
    Classifier model;
    std::optional<UNet> unet;
    std::vector<UNetEpochLog> unet_log;
    /// Predicted masks for the fold's validation ids (segmented mode).
    std::vector<std::pair<std::string, BinaryMask>> val_masks;
    std::vector<CamSample> cams;
};

struct CrossvalHooks {
    /// Called on the calling thread, in fold order, after all folds finish.
    std::function<void(PipelineMode, const FoldOutput&)> on_fold;
    /// Free-form progress lines; may be called from worker threads.
    std::function<void(const std::string&)> progress;
};

/// Classifier input: RGB resized to `size`, optionally masked, scaled to [0, 1].
Tensor classifier_input(const RasterImage& image, int size, const BinaryMask* mask = nullptr);

/// Mean per-image Dice of the model's masks against resized truth masks.
double heldout_dice(const UNet& model, std::span<const ImageSample> samples, const SegmentationConfig& cfg);

RunReport run_crossval(std::span<const ImageSample> samples, const FoldPlan& plan, PipelineMode mode,
                       const RunConfig& cfg, const CrossvalHooks& hooks = {});

}  // namespace pap
