#include "pap/config.hpp"

#include <fstream>
#include <set>

namespace pap {

using nlohmann::json;

std::string to_string(RunMode mode) {
    switch (mode) {
        case RunMode::Raw: return "raw";
        case RunMode::Segmented: return "segmented";
        case RunMode::Both: return "both";
    }
    return "both";
}

RunMode parse_run_mode(const std::string& text) {
    if (text == "raw") return RunMode::Raw;
    if (text == "segmented") return RunMode::Segmented;
    if (text == "both") return RunMode::Both;
    throw ConfigError("mode must be raw, segmented or both, got '" + text + "'");
}

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    require(j.is_object(), where + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!allowed.count(key)) throw ConfigError("config: unknown key '" + where + "." + key + "'");
    }
}

template <typename V>
void read(const json& j, const char* key, V& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<V>();
    } catch (const json::exception&) {
        throw ConfigError("config: '" + where + "." + key + "' has the wrong type");
    }
}

}  // namespace

void RunConfig::validate() const {
    require(k >= 2 && k <= 100, "k must lie in [2, 100]");
    require(epochs >= 1 && epochs <= 10000, "epochs must lie in [1, 10000]");
    require(batch_size >= 1 && batch_size <= 4096, "batch_size must lie in [1, 4096]");
    require(learning_rate > 0.0 && learning_rate <= 1.0, "learning_rate must lie in (0, 1]");
    require(l2_lambda >= 0.0 && l2_lambda <= 1.0, "l2_lambda must lie in [0, 1]");
    require(dropout_rate >= 0.0 && dropout_rate < 1.0, "dropout_rate must lie in [0, 1)");
    require(input_size >= 8 && input_size <= 1024 && input_size % 8 == 0, "input_size must be a multiple of 8 in [8, 1024]");
    for (int f : filters) require(f >= 1 && f <= 1024, "filters must lie in [1, 1024]");
    require(dense_units >= 1 && dense_units <= 65536, "dense_units must lie in [1, 65536]");
    try {
        aug.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: aug: ") + e.what());
    }
    require(unet.base_width >= 1 && unet.base_width <= 256, "unet.base_width must lie in [1, 256]");
    require(unet.epochs >= 1 && unet.epochs <= 10000, "unet.epochs must lie in [1, 10000]");
    require(unet.batch_size >= 1 && unet.batch_size <= 4096, "unet.batch_size must lie in [1, 4096]");
    require(unet.learning_rate > 0.0 && unet.learning_rate <= 1.0, "unet.learning_rate must lie in (0, 1]");
    require(unet.max_train_samples >= 0, "unet.max_train_samples must be >= 0");
    require(unet.threshold > 0.0 && unet.threshold < 1.0, "unet.threshold must lie in (0, 1)");
    require(unet.blur_sigma > 0.0 && unet.blur_sigma <= 20.0, "unet.blur_sigma must lie in (0, 20]");
    require(unet.open_radius >= 0 && unet.open_radius <= 16, "unet.open_radius must lie in [0, 16]");
    require(unet.close_radius >= 0 && unet.close_radius <= 16, "unet.close_radius must lie in [0, 16]");
    require(workers >= 0 && workers <= 256, "workers must lie in [0, 256]");
    require(cam_samples >= 0, "cam_samples must be >= 0");
    require(!out_dir.empty(), "out_dir must not be empty");
}

ClassifierConfig RunConfig::classifier_config() const {
    ClassifierConfig c;
    c.input_size = input_size;
    c.filters = filters;
    c.dense_units = dense_units;
    c.dropout_rate = dropout_rate;
    return c;
}

SegmentationConfig RunConfig::segmentation_config() const {
    SegmentationConfig s;
    s.input_size = input_size;
    s.threshold = unet.threshold;
    s.refine = unet.refine;
    s.blur_sigma = unet.blur_sigma;
    s.open_radius = unet.open_radius;
    s.close_radius = unet.close_radius;
    return s;
}

RunConfig config_from_json(const json& j) {
    reject_unknown(j,
                   {"seed", "k", "epochs", "batch_size", "learning_rate", "l2_lambda", "dropout_rate", "input_size",
                    "filters", "dense_units", "aug", "unet", "mode", "data_root", "out_dir", "workers", "cam_samples"},
                   "");
    RunConfig c;
    read(j, "seed", c.seed, "");
    read(j, "k", c.k, "");
    read(j, "epochs", c.epochs, "");
    read(j, "batch_size", c.batch_size, "");
    read(j, "learning_rate", c.learning_rate, "");
    read(j, "l2_lambda", c.l2_lambda, "");
    read(j, "dropout_rate", c.dropout_rate, "");
    read(j, "input_size", c.input_size, "");
    read(j, "filters", c.filters, "");
    read(j, "dense_units", c.dense_units, "");
    read(j, "data_root", c.data_root, "");
    read(j, "out_dir", c.out_dir, "");
    read(j, "workers", c.workers, "");
    read(j, "cam_samples", c.cam_samples, "");
    if (j.contains("mode")) {
        std::string mode;
        read(j, "mode", mode, "");
        c.mode = parse_run_mode(mode);
    }
    if (j.contains("aug")) {
        const json& a = j.at("aug");
        reject_unknown(a, {"enabled", "hflip_p", "vflip_p", "rotations", "contrast_lo", "contrast_hi", "balance_minority"},
                       "aug");
        read(a, "enabled", c.aug.enabled, "aug");
        read(a, "hflip_p", c.aug.hflip_p, "aug");
        read(a, "vflip_p", c.aug.vflip_p, "aug");
        read(a, "rotations", c.aug.rotations, "aug");
        read(a, "contrast_lo", c.aug.contrast_lo, "aug");
        read(a, "contrast_hi", c.aug.contrast_hi, "aug");
        read(a, "balance_minority", c.aug.balance_minority, "aug");
    }
    if (j.contains("unet")) {
        const json& u = j.at("unet");
        reject_unknown(u,
                       {"base_width", "epochs", "batch_size", "learning_rate", "max_train_samples", "threshold", "refine",
                        "blur_sigma", "open_radius", "close_radius"},
                       "unet");
        read(u, "base_width", c.unet.base_width, "unet");
        read(u, "epochs", c.unet.epochs, "unet");
        read(u, "batch_size", c.unet.batch_size, "unet");
        read(u, "learning_rate", c.unet.learning_rate, "unet");
        read(u, "max_train_samples", c.unet.max_train_samples, "unet");
        read(u, "threshold", c.unet.threshold, "unet");
        read(u, "refine", c.unet.refine, "unet");
        read(u, "blur_sigma", c.unet.blur_sigma, "unet");
        read(u, "open_radius", c.unet.open_radius, "unet");
        read(u, "close_radius", c.unet.close_radius, "unet");
    }
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config: " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

json to_json(const RunConfig& c) {
    return {{"seed", c.seed},
            {"k", c.k},
            {"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"l2_lambda", c.l2_lambda},
            {"dropout_rate", c.dropout_rate},
            {"input_size", c.input_size},
            {"filters", c.filters},
            {"dense_units", c.dense_units},
            {"aug",
             {{"enabled", c.aug.enabled},
              {"hflip_p", c.aug.hflip_p},
              {"vflip_p", c.aug.vflip_p},
              {"rotations", c.aug.rotations},
              {"contrast_lo", c.aug.contrast_lo},
              {"contrast_hi", c.aug.contrast_hi},
              {"balance_minority", c.aug.balance_minority}}},
            {"unet",
             {{"base_width", c.unet.base_width},
              {"epochs", c.unet.epochs},
              {"batch_size", c.unet.batch_size},
              {"learning_rate", c.unet.learning_rate},
              {"max_train_samples", c.unet.max_train_samples},
              {"threshold", c.unet.threshold},
              {"refine", c.unet.refine},
              {"blur_sigma", c.unet.blur_sigma},
              {"open_radius", c.unet.open_radius},
              {"close_radius", c.unet.close_radius}}},
            {"mode", to_string(c.mode)},
            {"data_root", c.data_root},
            {"out_dir", c.out_dir},
            {"workers", c.workers},
            {"cam_samples", c.cam_samples}};
}

}  // namespace pap
