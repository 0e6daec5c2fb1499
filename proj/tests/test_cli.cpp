#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <sstream>

#include "cli_util.hpp"
#include "pap/dataset.hpp"
#include "pap/imaging.hpp"

namespace fs = std::filesystem;

namespace {

int count_lines(const std::string& text) { return static_cast<int>(std::count(text.begin(), text.end(), '\n')); }

fs::path first_image(const fs::path& root) {
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        const std::string name = e.path().filename().string();
        if (e.path().extension() == ".png" && name.find("-d") == std::string::npos) return e.path();
    }
    return {};
}

void write_config(const fs::path& path, const fs::path& data, const fs::path& out, const std::string& mode) {
    nlohmann::json j = {{"seed", 5},          {"k", 2},          {"epochs", 1},          {"batch_size", 4},
                        {"input_size", 32},   {"filters", {4, 8, 8}}, {"dense_units", 8}, {"mode", mode},
                        {"data_root", data.string()}, {"out_dir", out.string()}, {"workers", 1}, {"cam_samples", 1},
                        {"unet", {{"base_width", 2}, {"epochs", 1}, {"batch_size", 4}, {"max_train_samples", 4}}}};
    std::ofstream(path) << j.dump(2);
}

}  // namespace

TEST_CASE("synth writes a reproducible tree and ingest summarizes it") {
    const fs::path dir = cli::scratch("synth");
    REQUIRE(cli::run("synth --n 12 --seed 3 --size 64 --out " + (dir / "a").string()) == 0);
    REQUIRE(cli::run("synth --n 12 --seed 3 --size 64 --out " + (dir / "b").string()) == 0);
    REQUIRE(cli::run("synth --n 12 --seed 4 --size 64 --out " + (dir / "c").string()) == 0);
    const auto ma = nlohmann::json::parse(cli::slurp(dir / "a" / "manifest.json"));
    CHECK(ma.at("counts").at("Normal").get<int>() + ma.at("counts").at("Abnormal").get<int>() == 12);
    const fs::path img = first_image(dir / "a");
    REQUIRE_FALSE(img.empty());
    const fs::path twin = dir / "b" / fs::relative(img, dir / "a");
    CHECK(cli::slurp(img) == cli::slurp(twin));
    CHECK(cli::slurp(dir / "a" / "manifest.json") != cli::slurp(dir / "c" / "manifest.json"));

    CHECK(cli::run("synth --n 4 --size 16 --out " + (dir / "d").string()) == 2);
    fs::remove_all(dir);
}

TEST_CASE("ingest summarizes a Herlev-layout tree and is idempotent") {
    const fs::path dir = cli::scratch("ingest");
    for (auto cls : pap::kHerlevClasses) {
        fs::create_directories(dir / "data" / std::string(cls));
        pap::write_png(dir / "data" / std::string(cls) / "c1.png", pap::RasterImage(8, 8, 3, 90));
    }
    const std::string cmd = "ingest --data-root " + (dir / "data").string() + " --out " + (dir / "m").string();
    REQUIRE(cli::run(cmd, dir / "log") == 0);
    CHECK(cli::slurp(dir / "log").find("7 samples (3 Normal / 4 Abnormal)") != std::string::npos);
    const std::string first = cli::slurp(dir / "m" / "manifest.json");
    REQUIRE(cli::run(cmd) == 0);
    CHECK(cli::slurp(dir / "m" / "manifest.json") == first);
    fs::remove_all(dir);
}

TEST_CASE("usage errors exit with status 2") {
    const fs::path dir = cli::scratch("errors");
    fs::create_directories(dir / "empty");
    CHECK(cli::run("ingest --data-root " + (dir / "empty").string() + " --out " + (dir / "o").string()) == 2);
    std::ofstream(dir / "bad.json") << R"({"epochz": 3})";
    CHECK(cli::run("crossval " + (dir / "bad.json").string()) == 2);
    CHECK(cli::run("crossval " + (dir / "missing.json").string()) == 2);
    CHECK(cli::run("cam --checkpoint " + (dir / "none.ckpt").string() + " --image x.png") == 2);
    CHECK(cli::run("nonsense") == 2);
    fs::remove_all(dir);
}

TEST_CASE("crossval in both modes writes the report files, then cam and report reuse them") {
    const fs::path dir = cli::scratch("crossval");
    REQUIRE(cli::run("synth --n 16 --seed 2 --size 64 --out " + (dir / "data").string()) == 0);
    write_config(dir / "cfg.json", dir / "data", dir / "out", "both");
    REQUIRE(cli::run("crossval " + (dir / "cfg.json").string(), dir / "log") == 0);

    const fs::path out = dir / "out";
    for (const char* f : {"report.json", "metrics.csv", "comparison.csv", "status.json", "folds.json", "config_used.json"})
        CHECK(fs::exists(out / f));
    CHECK(count_lines(cli::slurp(out / "comparison.csv")) == 5);
    for (const char* mode : {"raw", "segmented"}) {
        for (const char* f : {"report.json", "confusion_pooled.csv", "epochs.csv", "metrics.csv"})
            CHECK(fs::exists(out / mode / f));
        CHECK(fs::exists(out / mode / "fold_0" / "classifier.ckpt"));
        CHECK(fs::exists(out / mode / "fold_1" / "predictions.csv"));
    }
    CHECK(fs::exists(out / "segmented" / "fold_0" / "unet.ckpt"));
    const auto status = nlohmann::json::parse(cli::slurp(out / "status.json"));
    CHECK(status.at("state") == "complete");
    const auto report = nlohmann::json::parse(cli::slurp(out / "report.json"));
    int pooled = 0;
    for (const auto& [k, v] : report.at("runs").at("raw").at("pooled").at("confusion").items()) pooled += v.get<int>();
    CHECK(pooled == 16);

    const std::string metrics = cli::slurp(out / "metrics.csv");
    fs::remove(out / "metrics.csv");
    REQUIRE(cli::run("report " + out.string()) == 0);
    CHECK(cli::slurp(out / "metrics.csv") == metrics);

    const fs::path img = first_image(dir / "data");
    REQUIRE(cli::run("cam --checkpoint " + (out / "raw" / "fold_0" / "classifier.ckpt").string() + " --image " +
                     img.string() + " --class 0 --out " + (dir / "cam").string()) == 0);
    const fs::path png = dir / "cam" / (img.stem().string() + "_class0.png");
    REQUIRE(fs::exists(png));
    const pap::RasterImage heat = pap::read_image(png);
    CHECK(heat.width == 32);
    CHECK(heat.channels == 1);
    std::string values = cli::slurp(dir / "cam" / (img.stem().string() + "_class0.csv"));
    std::replace(values.begin(), values.end(), '\n', ',');
    std::istringstream csv(values);
    int cells = 0;
    for (std::string cell; std::getline(csv, cell, ',');) {
        const double v = std::stod(cell);
        CHECK((v >= 0.0 && v <= 1.0));
        ++cells;
    }
    CHECK(cells > 0);
    fs::remove_all(dir);
}
