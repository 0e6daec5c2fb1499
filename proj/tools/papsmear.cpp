// papsmear: ingest, synthesize, cross-validate, explain, and re-render reports.
//
// Exit codes: 0 ok, 2 usage/config/input errors, 3 runtime failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "pap/checkpoint.hpp"
#include "pap/classifier.hpp"
#include "pap/config.hpp"
#include "pap/crossval.hpp"
#include "pap/dataset.hpp"
#include "pap/evaluation.hpp"
#include "pap/imaging.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pap;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

/// Input problems the user can fix; mapped to exit code 2.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string file_safe(std::string id) {
    std::replace(id.begin(), id.end(), '/', '_');
    return id;
}

void log_line(const std::string& msg) {
    static const auto start = std::chrono::steady_clock::now();
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    char stamp[32];
    std::snprintf(stamp, sizeof stamp, "[%8.1fs] ", t);
    std::cerr << (std::string(stamp) + msg + "\n") << std::flush;
}

RasterImage heatmap_image(const GradCamResult& cam) {
    RasterImage img(cam.width, cam.height, 1);
    for (std::size_t i = 0; i < cam.heatmap.size(); ++i) {
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(cam.heatmap[i], 0.0f, 1.0f) * 255.0f));
    }
    return img;
}

std::string coarse_csv(const GradCamResult& cam) {
    std::ostringstream out;
    char buf[32];
    for (int y = 0; y < cam.coarse_height; ++y) {
        for (int x = 0; x < cam.coarse_width; ++x) {
            std::snprintf(buf, sizeof buf, "%.8f", cam.coarse[static_cast<std::size_t>(y) * cam.coarse_width + x]);
            out << (x ? "," : "") << buf;
        }
        out << '\n';
    }
    return out.str();
}

void write_cam(const GradCamResult& cam, const fs::path& png, const fs::path& csv) {
    fs::create_directories(png.parent_path());
    write_png(png, heatmap_image(cam));
    write_text(csv, coarse_csv(cam));
}

// -- ingest -----------------------------------------------------------------

int cmd_ingest(const std::string& data_root, const std::string& out) {
    if (data_root.empty()) throw UsageError("no data root given (use --data-root or PAP_DATA_ROOT)");
    IngestResult r;
    try {
        r = ingest_herlev(data_root);
    } catch (const DatasetError& e) {
        throw UsageError(e.what());
    }
    fs::create_directories(out);
    const fs::path path = fs::path(out) / "manifest.json";
    write_manifest(path, r.manifest);
    std::cout << r.manifest.entries.size() << " samples (" << r.manifest.normal << " Normal / " << r.manifest.abnormal
              << " Abnormal)\n";
    for (const auto& w : r.manifest.warnings) std::cout << "warning: " << w << '\n';
    std::cout << "manifest written to " << path.string() << '\n';
    return kExitOk;
}

// -- synth ------------------------------------------------------------------

int cmd_synth(int n, std::uint64_t seed, const std::string& out, int size) {
    if (n <= 0) throw UsageError("--n must be positive");
    if (size < 64) throw UsageError("--size must be at least 64");
    const auto samples = generate_synthetic(n, seed, size);
    const Manifest m = write_dataset_tree(samples, out);
    std::cout << m.entries.size() << " samples (" << m.normal << " Normal / " << m.abnormal << " Abnormal) written to "
              << out << '\n';
    return kExitOk;
}

// -- crossval ---------------------------------------------------------------

void write_status(const fs::path& out, const std::string& state, const std::vector<std::string>& done,
                  const std::string& error = {}) {
    json j = {{"command", "crossval"}, {"state", state}, {"completed_modes", done}};
    if (!error.empty()) j["error"] = error;
    write_text(out / "status.json", j.dump(2) + "\n");
}

void write_fold_files(const fs::path& mode_dir, const FoldOutput& out, const FoldReport& report,
                      const std::map<std::string, BinaryLabel>& truths) {
    const fs::path dir = mode_dir / ("fold_" + std::to_string(out.fold));
    fs::create_directories(dir);
    save_classifier(out.model, dir / "classifier.ckpt");
    if (out.unet) {
        save_unet(*out.unet, dir / "unet.ckpt");
        std::ostringstream log;
        log << "epoch,loss,dice\n";
        for (const auto& e : out.unet_log) log << e.epoch << ',' << e.loss << ',' << e.dice << '\n';
        write_text(dir / "unet_epochs.csv", log.str());
    }
    if (!out.val_masks.empty()) fs::create_directories(dir / "masks");
    for (const auto& [id, mask] : out.val_masks) write_png(dir / "masks" / (file_safe(id) + ".png"), mask.to_image());
    for (const auto& c : out.cams) {
        const std::string stem = file_safe(c.id) + "_class" + std::to_string(c.target_class);
        write_cam(c.cam, dir / "cam" / (stem + ".png"), dir / "cam" / (stem + ".csv"));
    }
    std::ostringstream preds;
    preds << "id,truth,predicted,p_normal,p_abnormal\n";
    char buf[64];
    for (const auto& p : report.predictions) {
        std::snprintf(buf, sizeof buf, "%.10f,%.10f", p.probabilities[0], p.probabilities[1]);
        preds << p.id << ',' << to_string(truths.at(p.id)) << ',' << to_string(p.predicted) << ',' << buf << '\n';
    }
    write_text(dir / "predictions.csv", preds.str());
}

int cmd_crossval(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& mode,
                 const std::string& out_flag, const std::string& data_root_flag) {
    RunConfig cfg;
    try {
        cfg = load_config(config_path);
        if (seed) cfg.seed = *seed;
        if (!mode.empty()) cfg.mode = parse_run_mode(mode);
        if (!out_flag.empty()) cfg.out_dir = out_flag;
        if (!data_root_flag.empty()) cfg.data_root = data_root_flag;
        if (cfg.data_root.empty()) throw ConfigError("no data root (set data_root, --data-root or PAP_DATA_ROOT)");
        cfg.validate();
    } catch (const ConfigError& e) {
        throw UsageError(e.what());
    }

    IngestResult data;
    try {
        data = load_dataset(cfg.data_root);
    } catch (const DatasetError& e) {
        throw UsageError(e.what());
    }
    const fs::path out = cfg.out_dir;
    fs::create_directories(out);
    write_text(out / "config_used.json", to_json(cfg).dump(2) + "\n");
    log_line("loaded " + std::to_string(data.samples.size()) + " samples from " + cfg.data_root);

    const auto ids = labeled_ids(std::span<const ImageSample>(data.samples));
    FoldPlan plan;
    try {
        plan = plan_stratified_kfold(ids, cfg.k, cfg.seed);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    std::map<std::string, BinaryLabel> truths;
    for (const auto& s : data.samples) truths[s.id] = s.label;
    {
        json folds = json::object();
        for (const auto& [id, f] : plan.assignment()) folds[id] = f;
        write_text(out / "folds.json", json{{"k", plan.k()}, {"seed", plan.seed()}, {"assignment", folds}}.dump(2) + "\n");
    }

    std::vector<PipelineMode> modes;
    if (cfg.mode != RunMode::Segmented) modes.push_back(PipelineMode::Raw);
    if (cfg.mode != RunMode::Raw) modes.push_back(PipelineMode::Segmented);

    std::vector<std::string> done;
    write_status(out, "running", done);
    std::map<PipelineMode, RunReport> reports;
    try {
        for (PipelineMode m : modes) {
            const fs::path mode_dir = out / to_string(m);
            std::vector<FoldOutput> fold_outputs;
            CrossvalHooks hooks;
            hooks.progress = log_line;
            // Fold files need the fold's predictions from the report, so outputs are kept until it exists.
            hooks.on_fold = [&](PipelineMode, const FoldOutput& fo) { fold_outputs.push_back(fo); };
            RunReport report = run_crossval(data.samples, plan, m, cfg, hooks);
            for (std::size_t i = 0; i < fold_outputs.size(); ++i) {
                write_fold_files(mode_dir, fold_outputs[i], report.folds[i], truths);
            }
            write_run_artifacts(report, mode_dir);
            log_line(to_string(m) + ": pooled accuracy " + format_percent(report.pooled.accuracy) + "%, averaged " +
                     format_percent(report.averaged.accuracy) + "%");
            reports.emplace(m, std::move(report));
            done.push_back(to_string(m));
            write_status(out, "running", done);
        }
    } catch (const std::exception& e) {
        write_status(out, "failed", done, e.what());
        throw;
    }

    json summary = {{"seed", cfg.seed}, {"k", cfg.k}, {"runs", json::object()}};
    std::string metrics = "variant,metric,value\n";
    for (const auto& [m, r] : reports) {
        summary["runs"][to_string(m)] = to_json(r);
        metrics += metrics_csv(r, to_string(m) + "_", false);
    }
    if (reports.size() == 2) {
        const auto deltas = compare_runs(reports.at(PipelineMode::Raw), reports.at(PipelineMode::Segmented));
        write_text(out / "comparison.csv", comparison_csv(deltas));
        json cmp = json::array();
        for (const auto& d : deltas) {
            cmp.push_back({{"metric", d.metric},
                           {"delta_pooled_pp", d.delta_pooled_pp},
                           {"delta_averaged_pp", d.delta_averaged_pp}});
        }
        summary["comparison"] = cmp;
    }
    write_text(out / "metrics.csv", metrics);
    write_text(out / "report.json", summary.dump(2) + "\n");
    write_status(out, "complete", done);

    for (const auto& [m, r] : reports) {
        std::cout << to_string(m) << ": accuracy " << format_percent(r.pooled.accuracy) << "% precision "
                  << format_percent(r.pooled.precision_weighted) << "% recall "
                  << format_percent(r.pooled.recall_weighted) << "% f1 " << format_percent(r.pooled.f1_weighted)
                  << "% (pooled)\n";
    }
    return kExitOk;
}

// -- cam --------------------------------------------------------------------

int cmd_cam(const std::string& checkpoint, const std::string& image_path, int target, const std::string& out) {
    if (target != 0 && target != 1) throw UsageError("--class must be 0 (Normal) or 1 (Abnormal)");
    if (!fs::exists(checkpoint)) throw UsageError("checkpoint " + checkpoint + " does not exist");
    Classifier model;
    try {
        model = load_classifier(checkpoint);
    } catch (const CheckpointError& e) {
        throw UsageError(e.what());
    }
    RasterImage image;
    try {
        image = read_image(image_path);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
    const GradCamResult cam = grad_cam(model, classifier_input(image, model.config().input_size), target);
    const fs::path dir = out;
    const std::string stem = fs::path(image_path).stem().string() + "_class" + std::to_string(target);
    write_cam(cam, dir / (stem + ".png"), dir / (stem + ".csv"));
    std::cout << "wrote " << (dir / (stem + ".png")).string() << " and " << (dir / (stem + ".csv")).string() << '\n';
    return kExitOk;
}

// -- report -----------------------------------------------------------------

int cmd_report(const std::string& in_dir) {
    const fs::path dir = in_dir;
    json j;
    try {
        j = json::parse(read_text(dir / "report.json"));
    } catch (const std::exception& e) {
        throw UsageError(std::string("cannot read report.json: ") + e.what());
    }
    try {
        if (j.contains("runs")) {
            std::string metrics = "variant,metric,value\n";
            std::map<std::string, RunReport> runs;
            for (const auto& [name, jr] : j.at("runs").items()) {
                RunReport r = run_report_from_json(jr);
                metrics += metrics_csv(r, name + "_", false);
                const fs::path mode_dir = dir / name;
                write_text(mode_dir / "confusion_pooled.csv", confusion_csv(r.pooled_matrix));
                write_text(mode_dir / "epochs.csv", epochs_csv(r.epochs));
                write_text(mode_dir / "metrics.csv", metrics_csv(r));
                runs.emplace(name, std::move(r));
            }
            write_text(dir / "metrics.csv", metrics);
            if (runs.count("raw") && runs.count("segmented")) {
                write_text(dir / "comparison.csv", comparison_csv(compare_runs(runs.at("raw"), runs.at("segmented"))));
            }
        } else {
            const RunReport r = run_report_from_json(j);
            write_text(dir / "confusion_pooled.csv", confusion_csv(r.pooled_matrix));
            write_text(dir / "epochs.csv", epochs_csv(r.epochs));
            write_text(dir / "metrics.csv", metrics_csv(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw UsageError(std::string("malformed report.json: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("malformed report.json: ") + e.what());
    }
    std::cout << "re-rendered CSVs in " << dir.string() << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pap smear cell segmentation and classification"};
    app.require_subcommand(1);

    std::string data_root, out;
    auto* ingest = app.add_subcommand("ingest", "Scan a Herlev tree and write manifest.json");
    ingest->add_option("--data-root", data_root, "Dataset root")->envname("PAP_DATA_ROOT");
    ingest->add_option("--out", out, "Output directory")->default_val("out");

    int synth_n = 400, synth_size = 128;
    std::uint64_t synth_seed = 42;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "Generate a labelled synthetic cell dataset");
    synth->add_option("--n", synth_n, "Number of images")->default_val(400);
    synth->add_option("--seed", synth_seed, "Generator seed")->default_val(42);
    synth->add_option("--size", synth_size, "Image side in pixels")->default_val(128);
    synth->add_option("--out", synth_out, "Output directory")->required();

    std::string config_path, mode, cv_out, cv_root;
    std::optional<std::uint64_t> cv_seed;
    auto* crossval = app.add_subcommand("crossval", "Run k-fold cross-validation");
    crossval->add_option("config", config_path, "Run configuration (JSON)")->required();
    crossval->add_option("--seed", cv_seed, "Override the configured seed");
    crossval->add_option("--mode", mode, "raw, segmented or both")->check(CLI::IsMember({"raw", "segmented", "both"}));
    crossval->add_option("--out", cv_out, "Override the output directory");
    crossval->add_option("--data-root", cv_root, "Override the dataset root")->envname("PAP_DATA_ROOT");

    std::string ckpt, image, cam_out;
    int cam_class = 1;
    auto* cam = app.add_subcommand("cam", "Grad-CAM heatmap for one image");
    cam->add_option("--checkpoint", ckpt, "Classifier checkpoint")->required();
    cam->add_option("--image", image, "Input image (PNG or BMP)")->required();
    cam->add_option("--class", cam_class, "Target class: 0 Normal, 1 Abnormal")->default_val(1);
    cam->add_option("--out", cam_out, "Output directory")->default_val("out");

    std::string report_in;
    auto* report = app.add_subcommand("report", "Re-render CSVs from an existing report.json");
    report->add_option("dir", report_in, "Directory holding report.json")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*ingest) return cmd_ingest(data_root, out);
        if (*synth) return cmd_synth(synth_n, synth_seed, synth_out, synth_size);
        if (*crossval) return cmd_crossval(config_path, cv_seed, mode, cv_out, cv_root);
        if (*cam) return cmd_cam(ckpt, image, cam_class, cam_out);
        if (*report) return cmd_report(report_in);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}
