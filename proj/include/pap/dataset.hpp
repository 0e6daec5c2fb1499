#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "pap/imaging.hpp"
#include "pap/rng.hpp"
#include "pap/tensor.hpp"

namespace pap {

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Class index 1 (Abnormal) is the positive class everywhere.
enum class BinaryLabel { Normal = 0, Abnormal = 1 };

std::string_view to_string(BinaryLabel label);
BinaryLabel parse_label(std::string_view s);

/// The seven Herlev class folders.
inline constexpr std::array<std::string_view, 7> kHerlevClasses = {
    "normal_superficiel",  "normal_intermediate", "normal_columnar",   "light_dysplastic",
    "moderate_dysplastic", "severe_dysplastic",   "carcinoma_in_situ",
};
inline constexpr std::string_view kSyntheticClass = "synthetic";
inline constexpr int kHerlevNormal = 242;
inline constexpr int kHerlevAbnormal = 675;

/// Normal for the three normal_* folders, Abnormal for the dysplastic and
/// carcinoma folders. Throws DatasetError for anything else.
BinaryLabel binary_label_for(std::string_view origin_class);

struct ImageSample {
    std::string id;
    RasterImage image;
    BinaryLabel label = BinaryLabel::Normal;
    std::string origin_class;
    std::optional<BinaryMask> truth_mask;
    /// Relative to the dataset root; empty for in-memory samples.
    std::string relative_path;
};

struct ManifestEntry {
    std::string id;
    std::string relative_path;
    std::string origin_class;
    BinaryLabel label = BinaryLabel::Normal;
    bool has_truth_mask = false;
};

struct Manifest {
    std::vector<ManifestEntry> entries;
    std::map<std::string, int> class_counts;
    int normal = 0;
    int abnormal = 0;
    std::vector<std::string> warnings;
};

Manifest make_manifest(std::span<const ImageSample> samples);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);

/// Binary cell mask from a Herlev "-d" annotation: the modal border colour is
/// background, every pixel differing from it by more than 30 in any channel is cell.
BinaryMask mask_from_annotation(const RasterImage& annotation);

struct IngestResult {
    std::vector<ImageSample> samples;
    Manifest manifest;
};

/// Loads a Herlev tree. Missing class folders are fatal; a class total other
/// than 242/675 is recorded as a manifest warning.
IngestResult ingest_herlev(const std::filesystem::path& root);

/// Reads `root/manifest.json` when present, otherwise ingests a Herlev tree.
IngestResult load_dataset(const std::filesystem::path& root);

/// Geometry of one synthetic cell, fixed before rendering.
struct SyntheticCell {
    BinaryLabel label = BinaryLabel::Normal;
    double nucleus_ratio = 0.0;  // nucleus area / cytoplasm area
    double cx = 0, cy = 0, semi_a = 0, semi_b = 0, angle = 0;
    double ncx = 0, ncy = 0, nucleus_a = 0, nucleus_b = 0, nucleus_angle = 0;
};

inline constexpr double kSyntheticRatioThreshold = 0.35;

std::vector<SyntheticCell> synthetic_cells(int n, std::uint64_t seed, int size = 128);
/// n textured cell images with exact labels and cytoplasm truth masks.
std::vector<ImageSample> generate_synthetic(int n, std::uint64_t seed, int size = 128);

/// Writes PNG images, "-d" masks, and manifest.json under root.
Manifest write_dataset_tree(std::span<const ImageSample> samples, const std::filesystem::path& root);

// -- folds ------------------------------------------------------------------

struct LabeledId {
    std::string id;
    BinaryLabel label;
};

std::vector<LabeledId> labeled_ids(std::span<const ImageSample> samples);
std::vector<LabeledId> labeled_ids(const Manifest& manifest);

class FoldPlan {
public:
    FoldPlan() = default;
    FoldPlan(int k, std::uint64_t seed, std::map<std::string, int> assignment);

    int k() const { return k_; }
    std::uint64_t seed() const { return seed_; }
    const std::map<std::string, int>& assignment() const { return assignment_; }
    int fold_of(const std::string& id) const;
    /// Ids in the given fold, sorted.
    std::vector<std::string> members(int fold) const;

    friend bool operator==(const FoldPlan&, const FoldPlan&) = default;

private:
    int k_ = 0;
    std::uint64_t seed_ = 0;
    std::map<std::string, int> assignment_;
};

/// Per-class seeded shuffle then round-robin assignment. Input order is irrelevant.
FoldPlan plan_stratified_kfold(std::span<const LabeledId> items, int k, std::uint64_t seed);

// -- augmentation -----------------------------------------------------------

struct AugmentConfig {
    bool enabled = true;
    double hflip_p = 0.5;
    double vflip_p = 0.5;
    std::vector<int> rotations = {0, 90, 180, 270};
    double contrast_lo = 0.8;
    double contrast_hi = 1.2;
    bool balance_minority = false;

    void validate() const;
};

/// Flip / right-angle rotation / contrast on a 1 x C x H x W image in [0, 1].
/// Every draw is consumed regardless of outcome so equal rng state gives equal output.
Tensor augment(const Tensor& image, const AugmentConfig& cfg, Rng& rng);

Tensor flip_horizontal(const Tensor& image);
Tensor flip_vertical(const Tensor& image);
/// Counter-clockwise by a multiple of 90 degrees; requires H == W.
Tensor rotate90(const Tensor& image, int degrees);
/// clamp(mean + factor * (v - mean), 0, 1) with the mean over all values.
Tensor adjust_contrast(const Tensor& image, double factor);

}  // namespace pap
