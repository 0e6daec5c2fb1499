#pragma once

// Confusion matrices, support-weighted metrics, fold aggregation, and the
// report/CSV files read by the plotting tools.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "pap/classifier.hpp"

namespace pap {

enum class PipelineMode { Raw, Segmented };

std::string to_string(PipelineMode mode);
PipelineMode parse_mode(const std::string& text);

/// Abnormal is the positive class.
struct ConfusionMatrix2 {
    std::int64_t tp = 0;
    std::int64_t fn = 0;
    std::int64_t fp = 0;
    std::int64_t tn = 0;

    std::int64_t total() const { return tp + fn + fp + tn; }
    ConfusionMatrix2& operator+=(const ConfusionMatrix2& o);
    friend bool operator==(const ConfusionMatrix2&, const ConfusionMatrix2&) = default;
};

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::int64_t support = 0;
};

struct MetricsReport {
    double accuracy = 0.0;
    double precision_weighted = 0.0;
    double recall_weighted = 0.0;
    double f1_weighted = 0.0;
    ClassMetrics normal;
    ClassMetrics abnormal;
    /// Some ratio was 0/0 and was reported as 0.
    bool degenerate = false;
};

/// `truths[i]` is the label of `preds[i]`.
ConfusionMatrix2 confusion(std::span<const Prediction> preds, std::span<const BinaryLabel> truths);
ConfusionMatrix2 confusion(std::span<const BinaryLabel> predicted, std::span<const BinaryLabel> truths);

/// Throws std::invalid_argument on an empty matrix.
MetricsReport metrics_from_matrix(const ConfusionMatrix2& m);

/// Percentage truncated to two decimals, e.g. 0.81025 -> "81.02".
std::string format_percent(double fraction);

struct FoldReport {
    int fold = 0;
    ConfusionMatrix2 matrix;
    MetricsReport metrics;
    std::vector<Prediction> predictions;
    /// Held-out Dice of the fold's U-Net (segmented mode with truth masks only).
    std::optional<double> seg_dice;
};

struct RunReport {
    PipelineMode mode = PipelineMode::Raw;
    std::uint64_t seed = 0;
    int k = 0;
    std::vector<FoldReport> folds;
    ConfusionMatrix2 pooled_matrix;
    MetricsReport pooled;
    /// Unweighted mean over folds of every metric value.
    MetricsReport averaged;
    std::vector<EpochLog> epochs;
};

RunReport aggregate(std::vector<FoldReport> folds, std::vector<EpochLog> epochs, PipelineMode mode,
                    std::uint64_t seed);

/// The four headline metrics in report order.
inline constexpr const char* kHeadlineMetrics[] = {"accuracy", "precision_weighted", "recall_weighted", "f1_weighted"};
double headline_metric(const MetricsReport& m, const std::string& name);

struct MetricDelta {
    std::string metric;
    double raw_pooled = 0.0, segmented_pooled = 0.0, delta_pooled_pp = 0.0;
    double raw_averaged = 0.0, segmented_averaged = 0.0, delta_averaged_pp = 0.0;
};

/// Segmented minus raw, in percentage points, one row per headline metric.
std::vector<MetricDelta> compare_runs(const RunReport& raw, const RunReport& segmented);

nlohmann::json to_json(const MetricsReport& m);
nlohmann::json to_json(const RunReport& r);
RunReport run_report_from_json(const nlohmann::json& j);

std::string confusion_csv(const ConfusionMatrix2& m);
std::string epochs_csv(std::span<const EpochLog> epochs);
/// variant,metric,value rows for the pooled and averaged reports; `prefix`
/// is prepended to the variant name (e.g. "raw_").
std::string metrics_csv(const RunReport& r, const std::string& prefix = "", bool header = true);
std::string comparison_csv(std::span<const MetricDelta> deltas);

/// Writes report.json, confusion_pooled.csv, epochs.csv and metrics.csv into dir.
void write_run_artifacts(const RunReport& r, const std::filesystem::path& dir);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace pap
