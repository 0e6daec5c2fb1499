#include "pap/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pap {

using nlohmann::json;

std::string to_string(PipelineMode mode) { return mode == PipelineMode::Raw ? "raw" : "segmented"; }

PipelineMode parse_mode(const std::string& text) {
    if (text == "raw") return PipelineMode::Raw;
    if (text == "segmented") return PipelineMode::Segmented;
    throw std::invalid_argument("unknown pipeline mode '" + text + "' (expected raw or segmented)");
}

ConfusionMatrix2& ConfusionMatrix2::operator+=(const ConfusionMatrix2& o) {
    tp += o.tp;
    fn += o.fn;
    fp += o.fp;
    tn += o.tn;
    return *this;
}

ConfusionMatrix2 confusion(std::span<const BinaryLabel> predicted, std::span<const BinaryLabel> truths) {
    if (predicted.size() != truths.size()) throw std::invalid_argument("confusion: prediction/truth counts differ");
    ConfusionMatrix2 m;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const bool p = predicted[i] == BinaryLabel::Abnormal;
        const bool t = truths[i] == BinaryLabel::Abnormal;
        if (t) {
            ++(p ? m.tp : m.fn);
        } else {
            ++(p ? m.fp : m.tn);
        }
    }
    return m;
}

ConfusionMatrix2 confusion(std::span<const Prediction> preds, std::span<const BinaryLabel> truths) {
    std::vector<BinaryLabel> labels;
    labels.reserve(preds.size());
    for (const auto& p : preds) labels.push_back(p.predicted);
    return confusion(std::span<const BinaryLabel>(labels), truths);
}

namespace {

double ratio(std::int64_t num, std::int64_t den, bool& degenerate) {
    if (den == 0) {
        degenerate = true;
        return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}

ClassMetrics class_metrics(std::int64_t hit, std::int64_t predicted, std::int64_t support, bool& degenerate) {
    ClassMetrics c;
    c.support = support;
    c.precision = ratio(hit, predicted, degenerate);
    c.recall = ratio(hit, support, degenerate);
    // F1 = 2*hit / (predicted + support), the same value as the harmonic mean without the 0/0 detour.
    c.f1 = ratio(2 * hit, predicted + support, degenerate);
    return c;
}

}  // namespace

MetricsReport metrics_from_matrix(const ConfusionMatrix2& m) {
    if (m.tp < 0 || m.fn < 0 || m.fp < 0 || m.tn < 0) throw std::invalid_argument("metrics: negative matrix entry");
    const std::int64_t n = m.total();
    if (n == 0) throw std::invalid_argument("metrics: empty confusion matrix");
    MetricsReport r;
    r.abnormal = class_metrics(m.tp, m.tp + m.fp, m.tp + m.fn, r.degenerate);
    r.normal = class_metrics(m.tn, m.tn + m.fn, m.tn + m.fp, r.degenerate);
    const double total = static_cast<double>(n);
    r.accuracy = static_cast<double>(m.tp + m.tn) / total;
    const double wn = static_cast<double>(r.normal.support) / total;
    const double wa = static_cast<double>(r.abnormal.support) / total;
    r.precision_weighted = wn * r.normal.precision + wa * r.abnormal.precision;
    r.f1_weighted = wn * r.normal.f1 + wa * r.abnormal.f1;
    // Support-weighted recall collapses to correct / total.
    r.recall_weighted = r.accuracy;
    return r;
}

std::string format_percent(double fraction) {
    // Truncated, not rounded: 743/917 = 81.0250...% prints as 81.02.
    const double hundredths = std::floor(fraction * 10000.0 + 1e-7);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", hundredths / 100.0);
    return buf;
}

RunReport aggregate(std::vector<FoldReport> folds, std::vector<EpochLog> epochs, PipelineMode mode,
                    std::uint64_t seed) {
    if (folds.empty()) throw std::invalid_argument("aggregate: no folds");
    RunReport r;
    r.mode = mode;
    r.seed = seed;
    r.k = static_cast<int>(folds.size());
    for (auto& f : folds) {
        f.metrics = metrics_from_matrix(f.matrix);
        r.pooled_matrix += f.matrix;
    }
    r.pooled = metrics_from_matrix(r.pooled_matrix);

    const double k = static_cast<double>(folds.size());
    auto mean = [&](auto get) {
        double s = 0.0;
        for (const auto& f : folds) s += get(f.metrics);
        return s / k;
    };
    MetricsReport& a = r.averaged;
    a.accuracy = mean([](const MetricsReport& m) { return m.accuracy; });
    a.precision_weighted = mean([](const MetricsReport& m) { return m.precision_weighted; });
    a.recall_weighted = mean([](const MetricsReport& m) { return m.recall_weighted; });
    a.f1_weighted = mean([](const MetricsReport& m) { return m.f1_weighted; });
    a.normal.precision = mean([](const MetricsReport& m) { return m.normal.precision; });
    a.normal.recall = mean([](const MetricsReport& m) { return m.normal.recall; });
    a.normal.f1 = mean([](const MetricsReport& m) { return m.normal.f1; });
    a.abnormal.precision = mean([](const MetricsReport& m) { return m.abnormal.precision; });
    a.abnormal.recall = mean([](const MetricsReport& m) { return m.abnormal.recall; });
    a.abnormal.f1 = mean([](const MetricsReport& m) { return m.abnormal.f1; });
    a.normal.support = r.pooled.normal.support;
    a.abnormal.support = r.pooled.abnormal.support;
    for (const auto& f : folds) a.degenerate = a.degenerate || f.metrics.degenerate;

    r.folds = std::move(folds);
    r.epochs = std::move(epochs);
    return r;
}

double headline_metric(const MetricsReport& m, const std::string& name) {
    if (name == "accuracy") return m.accuracy;
    if (name == "precision_weighted") return m.precision_weighted;
    if (name == "recall_weighted") return m.recall_weighted;
    if (name == "f1_weighted") return m.f1_weighted;
    throw std::invalid_argument("unknown metric '" + name + "'");
}

std::vector<MetricDelta> compare_runs(const RunReport& raw, const RunReport& segmented) {
    std::vector<MetricDelta> out;
    for (const char* name : kHeadlineMetrics) {
        MetricDelta d;
        d.metric = name;
        d.raw_pooled = headline_metric(raw.pooled, name);
        d.segmented_pooled = headline_metric(segmented.pooled, name);
        d.delta_pooled_pp = 100.0 * (d.segmented_pooled - d.raw_pooled);
        d.raw_averaged = headline_metric(raw.averaged, name);
        d.segmented_averaged = headline_metric(segmented.averaged, name);
        d.delta_averaged_pp = 100.0 * (d.segmented_averaged - d.raw_averaged);
        out.push_back(d);
    }
    return out;
}

// -- JSON -------------------------------------------------------------------

namespace {

json to_json(const ClassMetrics& c) {
    return {{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}};
}

ClassMetrics class_from_json(const json& j) {
    return {j.at("precision").get<double>(), j.at("recall").get<double>(), j.at("f1").get<double>(),
            j.at("support").get<std::int64_t>()};
}

MetricsReport metrics_from_json(const json& j) {
    MetricsReport m;
    m.accuracy = j.at("accuracy").get<double>();
    m.precision_weighted = j.at("precision_weighted").get<double>();
    m.recall_weighted = j.at("recall_weighted").get<double>();
    m.f1_weighted = j.at("f1_weighted").get<double>();
    m.normal = class_from_json(j.at("per_class").at("Normal"));
    m.abnormal = class_from_json(j.at("per_class").at("Abnormal"));
    m.degenerate = j.at("degenerate").get<bool>();
    return m;
}

json to_json(const ConfusionMatrix2& m) { return {{"tp", m.tp}, {"fn", m.fn}, {"fp", m.fp}, {"tn", m.tn}}; }

ConfusionMatrix2 matrix_from_json(const json& j) {
    return {j.at("tp").get<std::int64_t>(), j.at("fn").get<std::int64_t>(), j.at("fp").get<std::int64_t>(),
            j.at("tn").get<std::int64_t>()};
}

}  // namespace

json to_json(const MetricsReport& m) {
    return {{"accuracy", m.accuracy},
            {"precision_weighted", m.precision_weighted},
            {"recall_weighted", m.recall_weighted},
            {"f1_weighted", m.f1_weighted},
            {"per_class", {{"Normal", to_json(m.normal)}, {"Abnormal", to_json(m.abnormal)}}},
            {"degenerate", m.degenerate}};
}

json to_json(const RunReport& r) {
    json folds = json::array();
    for (const auto& f : r.folds) {
        json preds = json::array();
        for (const auto& p : f.predictions) {
            preds.push_back({{"id", p.id},
                             {"p_normal", p.probabilities[0]},
                             {"p_abnormal", p.probabilities[1]},
                             {"predicted", std::string(to_string(p.predicted))}});
        }
        json jf = {{"fold", f.fold}, {"confusion", to_json(f.matrix)}, {"metrics", to_json(f.metrics)},
                   {"predictions", preds}};
        jf["seg_dice"] = f.seg_dice ? json(*f.seg_dice) : json(nullptr);
        folds.push_back(std::move(jf));
    }
    json epochs = json::array();
    for (const auto& e : r.epochs) {
        epochs.push_back({{"fold", e.fold},
                          {"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"train_acc", e.train_accuracy},
                          {"val_acc", e.val_accuracy}});
    }
    return {{"mode", to_string(r.mode)},
            {"seed", r.seed},
            {"k", r.k},
            {"folds", folds},
            {"pooled", {{"confusion", to_json(r.pooled_matrix)}, {"metrics", to_json(r.pooled)}}},
            {"averaged", {{"metrics", to_json(r.averaged)}}},
            {"epochs", epochs}};
}

RunReport run_report_from_json(const json& j) {
    RunReport r;
    r.mode = parse_mode(j.at("mode").get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    r.k = j.at("k").get<int>();
    for (const auto& jf : j.at("folds")) {
        FoldReport f;
        f.fold = jf.at("fold").get<int>();
        f.matrix = matrix_from_json(jf.at("confusion"));
        f.metrics = metrics_from_json(jf.at("metrics"));
        for (const auto& jp : jf.at("predictions")) {
            Prediction p;
            p.id = jp.at("id").get<std::string>();
            p.probabilities = {jp.at("p_normal").get<double>(), jp.at("p_abnormal").get<double>()};
            p.predicted = parse_label(jp.at("predicted").get<std::string>());
            f.predictions.push_back(std::move(p));
        }
        if (jf.contains("seg_dice") && !jf.at("seg_dice").is_null()) f.seg_dice = jf.at("seg_dice").get<double>();
        r.folds.push_back(std::move(f));
    }
    r.pooled_matrix = matrix_from_json(j.at("pooled").at("confusion"));
    r.pooled = metrics_from_json(j.at("pooled").at("metrics"));
    r.averaged = metrics_from_json(j.at("averaged").at("metrics"));
    for (const auto& je : j.at("epochs")) {
        r.epochs.push_back({je.at("fold").get<int>(), je.at("epoch").get<int>(), je.at("train_loss").get<double>(),
                            je.at("train_acc").get<double>(), je.at("val_acc").get<double>()});
    }
    ConfusionMatrix2 sum;
    for (const auto& f : r.folds) sum += f.matrix;
    if (!(sum == r.pooled_matrix)) throw std::invalid_argument("report.json: pooled matrix is not the sum of fold matrices");
    return r;
}

// -- CSV --------------------------------------------------------------------

namespace {

std::string real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10f", v);
    return buf;
}

void metric_rows(std::ostringstream& out, const std::string& variant, const MetricsReport& m) {
    out << variant << ",accuracy," << real(m.accuracy) << '\n';
    out << variant << ",precision_weighted," << real(m.precision_weighted) << '\n';
    out << variant << ",recall_weighted," << real(m.recall_weighted) << '\n';
    out << variant << ",f1_weighted," << real(m.f1_weighted) << '\n';
    for (const auto& [name, c] : {std::pair{"Normal", m.normal}, std::pair{"Abnormal", m.abnormal}}) {
        out << variant << ",precision_" << name << ',' << real(c.precision) << '\n';
        out << variant << ",recall_" << name << ',' << real(c.recall) << '\n';
        out << variant << ",f1_" << name << ',' << real(c.f1) << '\n';
    }
}

}  // namespace

std::string confusion_csv(const ConfusionMatrix2& m) {
    std::ostringstream out;
    out << "truth,pred_Normal,pred_Abnormal\n";
    out << "Normal," << m.tn << ',' << m.fp << '\n';
    out << "Abnormal," << m.fn << ',' << m.tp << '\n';
    return out.str();
}

std::string epochs_csv(std::span<const EpochLog> epochs) {
    std::ostringstream out;
    out << "fold,epoch,train_loss,train_acc,val_acc\n";
    for (const auto& e : epochs) {
        out << e.fold << ',' << e.epoch << ',' << real(e.train_loss) << ',' << real(e.train_accuracy) << ','
            << real(e.val_accuracy) << '\n';
    }
    return out.str();
}

std::string metrics_csv(const RunReport& r, const std::string& prefix, bool header) {
    std::ostringstream out;
    if (header) out << "variant,metric,value\n";
    metric_rows(out, prefix + "pooled", r.pooled);
    metric_rows(out, prefix + "averaged", r.averaged);
    return out.str();
}

std::string comparison_csv(std::span<const MetricDelta> deltas) {
    std::ostringstream out;
    out << "metric,raw_pooled,segmented_pooled,delta_pooled_pp,raw_averaged,segmented_averaged,delta_averaged_pp\n";
    for (const auto& d : deltas) {
        out << d.metric << ',' << real(d.raw_pooled) << ',' << real(d.segmented_pooled) << ','
            << real(d.delta_pooled_pp) << ',' << real(d.raw_averaged) << ',' << real(d.segmented_averaged) << ','
            << real(d.delta_averaged_pp) << '\n';
    }
    return out.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_run_artifacts(const RunReport& r, const std::filesystem::path& dir) {
    write_text(dir / "report.json", to_json(r).dump(2) + "\n");
    write_text(dir / "confusion_pooled.csv", confusion_csv(r.pooled_matrix));
    write_text(dir / "epochs.csv", epochs_csv(r.epochs));
    write_text(dir / "metrics.csv", metrics_csv(r));
}

}  // namespace pap
