#include "pap/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"

namespace pap {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(BinaryLabel label) { return label == BinaryLabel::Abnormal ? "Abnormal" : "Normal"; }

BinaryLabel parse_label(std::string_view s) {
    if (s == "Normal") return BinaryLabel::Normal;
    if (s == "Abnormal") return BinaryLabel::Abnormal;
    throw DatasetError("unknown binary label '" + std::string(s) + "'");
}

BinaryLabel binary_label_for(std::string_view origin_class) {
    for (std::size_t i = 0; i < kHerlevClasses.size(); ++i) {
        if (kHerlevClasses[i] == origin_class) return i < 3 ? BinaryLabel::Normal : BinaryLabel::Abnormal;
    }
    throw DatasetError("no binary mapping for class '" + std::string(origin_class) + "'");
}

Manifest make_manifest(std::span<const ImageSample> samples) {
    Manifest m;
    for (const auto& s : samples) {
        m.entries.push_back({s.id, s.relative_path, s.origin_class, s.label, s.truth_mask.has_value()});
        ++m.class_counts[s.origin_class];
        (s.label == BinaryLabel::Normal ? m.normal : m.abnormal) += 1;
    }
    return m;
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
    json samples = json::array();
    for (const auto& e : manifest.entries) {
        samples.push_back({{"id", e.id},
                           {"relative_path", e.relative_path},
                           {"origin_class", e.origin_class},
                           {"binary_label", std::string(to_string(e.label))},
                           {"has_truth_mask", e.has_truth_mask}});
    }
    json doc = {{"samples", samples},
                {"counts", {{"total", manifest.normal + manifest.abnormal},
                            {"Normal", manifest.normal},
                            {"Abnormal", manifest.abnormal},
                            {"by_class", manifest.class_counts}}},
                {"warnings", manifest.warnings}};
    std::ofstream out(path);
    if (!out) throw DatasetError("cannot write manifest " + path.string());
    out << doc.dump(2) << '\n';
}

Manifest read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot open manifest " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw DatasetError("malformed manifest " + path.string() + ": " + e.what());
    }
    Manifest m;
    try {
        for (const auto& s : doc.at("samples")) {
            ManifestEntry e{s.at("id").get<std::string>(), s.at("relative_path").get<std::string>(),
                            s.at("origin_class").get<std::string>(), parse_label(s.at("binary_label").get<std::string>()),
                            s.at("has_truth_mask").get<bool>()};
            ++m.class_counts[e.origin_class];
            (e.label == BinaryLabel::Normal ? m.normal : m.abnormal) += 1;
            m.entries.push_back(std::move(e));
        }
        if (doc.contains("warnings")) m.warnings = doc["warnings"].get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw DatasetError("manifest " + path.string() + " does not match the schema: " + e.what());
    }
    return m;
}

BinaryMask mask_from_annotation(const RasterImage& annotation) {
    const RasterImage rgb = to_rgb(annotation);
    std::map<std::array<std::uint8_t, 3>, int> border;
    auto color = [&](int x, int y) {
        return std::array<std::uint8_t, 3>{rgb.at(x, y, 0), rgb.at(x, y, 1), rgb.at(x, y, 2)};
    };
    for (int x = 0; x < rgb.width; ++x) {
        ++border[color(x, 0)];
        ++border[color(x, rgb.height - 1)];
    }
    for (int y = 1; y + 1 < rgb.height; ++y) {
        ++border[color(0, y)];
        ++border[color(rgb.width - 1, y)];
    }
    const auto bg = std::max_element(border.begin(), border.end(), [](const auto& a, const auto& b) {
                        return a.second < b.second;
                    })->first;
    BinaryMask mask(rgb.width, rgb.height);
    for (int y = 0; y < rgb.height; ++y)
        for (int x = 0; x < rgb.width; ++x) {
            int diff = 0;
            for (int c = 0; c < 3; ++c) diff = std::max(diff, std::abs(int(rgb.at(x, y, c)) - int(bg[static_cast<std::size_t>(c)])));
            mask.set(x, y, diff > 30);
        }
    return mask;
}

namespace {

bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".bmp" || ext == ".png";
}

bool is_annotation(const fs::path& p) {
    const std::string stem = p.stem().string();
    return stem.size() > 2 && stem.compare(stem.size() - 2, 2, "-d") == 0;
}

std::optional<fs::path> find_annotation(const fs::path& image) {
    const fs::path dir = image.parent_path();
    const std::string want = image.stem().string() + "-d";
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && is_image_file(entry.path()) && entry.path().stem().string() == want) {
            return entry.path();
        }
    }
    return std::nullopt;
}

}  // namespace

IngestResult ingest_herlev(const fs::path& root) {
    if (!fs::is_directory(root)) throw DatasetError("dataset root " + root.string() + " is not a directory");
    std::vector<std::string> missing;
    for (auto cls : kHerlevClasses)
        if (!fs::is_directory(root / cls)) missing.emplace_back(cls);
    if (!missing.empty()) {
        std::ostringstream os;
        os << "dataset root " << root.string() << " is missing class folders:";
        for (const auto& m : missing) os << ' ' << m;
        throw DatasetError(os.str());
    }

    IngestResult result;
    for (auto cls : kHerlevClasses) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(root / cls)) {
            if (entry.is_regular_file() && is_image_file(entry.path()) && !is_annotation(entry.path())) {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        for (const auto& file : files) {
            ImageSample s;
            s.origin_class = std::string(cls);
            s.id = s.origin_class + "/" + file.stem().string();
            s.label = binary_label_for(cls);
            s.relative_path = fs::relative(file, root).generic_string();
            s.image = to_rgb(read_image(file));
            if (auto ann = find_annotation(file)) s.truth_mask = mask_from_annotation(read_image(*ann));
            result.samples.push_back(std::move(s));
        }
    }
    result.manifest = make_manifest(result.samples);
    if (result.samples.empty()) throw DatasetError("dataset root " + root.string() + " contains no images");
    if (result.manifest.normal != kHerlevNormal || result.manifest.abnormal != kHerlevAbnormal) {
        std::ostringstream os;
        os << "class totals " << result.manifest.normal << " Normal / " << result.manifest.abnormal
           << " Abnormal differ from the expected " << kHerlevNormal << " / " << kHerlevAbnormal;
        result.manifest.warnings.push_back(os.str());
    }
    return result;
}

IngestResult load_dataset(const fs::path& root) {
    const fs::path manifest_path = root / "manifest.json";
    if (!fs::exists(manifest_path)) return ingest_herlev(root);

    IngestResult result;
    result.manifest = read_manifest(manifest_path);
    for (const auto& e : result.manifest.entries) {
        ImageSample s;
        s.id = e.id;
        s.relative_path = e.relative_path;
        s.origin_class = e.origin_class;
        s.label = e.label;
        const fs::path file = root / e.relative_path;
        s.image = to_rgb(read_image(file));
        if (e.has_truth_mask) {
            auto ann = find_annotation(file);
            if (!ann) throw DatasetError("manifest lists a truth mask for " + e.id + " but none was found");
            s.truth_mask = mask_from_annotation(read_image(*ann));
        }
        result.samples.push_back(std::move(s));
    }
    if (result.samples.empty()) throw DatasetError("manifest " + manifest_path.string() + " lists no samples");
    return result;
}

// -- synthetic ---------------------------------------------------------------

namespace {

bool inside_ellipse(double px, double py, double cx, double cy, double a, double b, double angle) {
    const double dx = px - cx, dy = py - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (dx * c + dy * s) / a;
    const double v = (-dx * s + dy * c) / b;
    return u * u + v * v <= 1.0;
}

}  // namespace

std::vector<SyntheticCell> synthetic_cells(int n, std::uint64_t seed, int size) {
    if (n <= 0) throw std::invalid_argument("generate_synthetic: n must be positive");
    if (size < 64) throw std::invalid_argument("generate_synthetic: image size must be at least 64");
    std::vector<SyntheticCell> cells;
    cells.reserve(static_cast<std::size_t>(n));
    const double scale = size / 128.0;
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, 0x5e11ULL, static_cast<std::uint64_t>(i)));
        SyntheticCell c;
        // Ratios are drawn away from the threshold so the label is visually decidable.
        c.label = rng.bernoulli(0.6) ? BinaryLabel::Abnormal : BinaryLabel::Normal;
        c.nucleus_ratio = c.label == BinaryLabel::Abnormal ? rng.uniform(0.45, 0.70) : rng.uniform(0.10, 0.25);
        c.semi_a = rng.uniform(24.0, 40.0) * scale;
        c.semi_b = c.semi_a * rng.uniform(0.65, 1.0);
        c.angle = rng.uniform(0.0, std::numbers::pi);
        const double margin = c.semi_a + 3.0 * scale;
        c.cx = rng.uniform(margin, size - margin);
        c.cy = rng.uniform(margin, size - margin);

        const double k = std::sqrt(c.nucleus_ratio);
        c.nucleus_a = c.semi_a * k;
        c.nucleus_b = c.semi_b * k;
        c.nucleus_angle = c.angle + rng.uniform(-0.5, 0.5);
        const double slack = 0.5 * (1.0 - k) * c.semi_b;
        const double dir = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double dist = rng.uniform(0.0, slack);
        c.ncx = c.cx + dist * std::cos(dir);
        c.ncy = c.cy + dist * std::sin(dir);
        cells.push_back(c);
    }
    return cells;
}

std::vector<ImageSample> generate_synthetic(int n, std::uint64_t seed, int size) {
    const auto cells = synthetic_cells(n, seed, size);
    std::vector<ImageSample> samples;
    samples.reserve(cells.size());
    for (int i = 0; i < n; ++i) {
        const SyntheticCell& c = cells[static_cast<std::size_t>(i)];
        Rng rng(derive_seed(seed, 0x7e47ULL, static_cast<std::uint64_t>(i)));
        const std::array<double, 3> bg = {215 + rng.uniform(-10, 10), 190 + rng.uniform(-10, 10), 205 + rng.uniform(-10, 10)};
        const std::array<double, 3> cyto = {130 + rng.uniform(-12, 12), 160 + rng.uniform(-12, 12), 205 + rng.uniform(-12, 12)};
        const std::array<double, 3> nuc = {60 + rng.uniform(-10, 10), 45 + rng.uniform(-10, 10), 110 + rng.uniform(-10, 10)};
        // low-frequency background texture
        const double f1 = rng.uniform(0.03, 0.09), f2 = rng.uniform(0.03, 0.09);
        const double p1 = rng.uniform(0, 6.3), p2 = rng.uniform(0, 6.3);

        ImageSample s;
        char id[32];
        std::snprintf(id, sizeof(id), "syn_%05d", i);
        s.id = id;
        s.origin_class = std::string(kSyntheticClass);
        s.label = c.label;
        s.image = RasterImage(size, size, 3);
        BinaryMask mask(size, size);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const double px = x + 0.5, py = y + 0.5;
                const bool in_cell = inside_ellipse(px, py, c.cx, c.cy, c.semi_a, c.semi_b, c.angle);
                const bool in_nucleus =
                    in_cell && inside_ellipse(px, py, c.ncx, c.ncy, c.nucleus_a, c.nucleus_b, c.nucleus_angle);
                mask.set(x, y, in_cell);
                const double texture = 8.0 * std::sin(f1 * x + p1) * std::cos(f2 * y + p2);
                for (int ch = 0; ch < 3; ++ch) {
                    double v;
                    if (in_nucleus) {
                        v = nuc[static_cast<std::size_t>(ch)] + 5.0 * rng.normal();
                    } else if (in_cell) {
                        v = cyto[static_cast<std::size_t>(ch)] + 6.0 * rng.normal();
                    } else {
                        v = bg[static_cast<std::size_t>(ch)] + texture + 6.0 * rng.normal();
                    }
                    s.image.at(x, y, ch) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
                }
            }
        }
        s.truth_mask = std::move(mask);
        samples.push_back(std::move(s));
    }
    return samples;
}

Manifest write_dataset_tree(std::span<const ImageSample> samples, const fs::path& root) {
    fs::create_directories(root);
    std::vector<ImageSample> placed;
    placed.reserve(samples.size());
    for (const auto& s : samples) {
        std::string folder = s.origin_class == kSyntheticClass
                                 ? std::string("synthetic_") + (s.label == BinaryLabel::Normal ? "normal" : "abnormal")
                                 : s.origin_class;
        std::string stem = s.id;
        std::replace(stem.begin(), stem.end(), '/', '_');
        const fs::path rel = fs::path(folder) / (stem + ".png");
        fs::create_directories(root / folder);
        write_png(root / rel, s.image);
        if (s.truth_mask) write_png(root / folder / (stem + "-d.png"), s.truth_mask->to_image());
        ImageSample meta;
        meta.id = s.id;
        meta.label = s.label;
        meta.origin_class = s.origin_class;
        meta.relative_path = rel.generic_string();
        if (s.truth_mask) meta.truth_mask = BinaryMask(1, 1);
        placed.push_back(std::move(meta));
    }
    Manifest m = make_manifest(placed);
    write_manifest(root / "manifest.json", m);
    return m;
}

// -- folds -------------------------------------------------------------------

std::vector<LabeledId> labeled_ids(std::span<const ImageSample> samples) {
    std::vector<LabeledId> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back({s.id, s.label});
    return out;
}

std::vector<LabeledId> labeled_ids(const Manifest& manifest) {
    std::vector<LabeledId> out;
    out.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) out.push_back({e.id, e.label});
    return out;
}

FoldPlan::FoldPlan(int k, std::uint64_t seed, std::map<std::string, int> assignment)
    : k_(k), seed_(seed), assignment_(std::move(assignment)) {
    for (const auto& [id, fold] : assignment_) {
        if (fold < 0 || fold >= k_) throw std::invalid_argument("FoldPlan: fold index out of range for " + id);
    }
}

int FoldPlan::fold_of(const std::string& id) const {
    auto it = assignment_.find(id);
    if (it == assignment_.end()) throw std::out_of_range("FoldPlan: unknown sample id " + id);
    return it->second;
}

std::vector<std::string> FoldPlan::members(int fold) const {
    std::vector<std::string> out;
    for (const auto& [id, f] : assignment_)
        if (f == fold) out.push_back(id);
    return out;
}

FoldPlan plan_stratified_kfold(std::span<const LabeledId> items, int k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("plan_stratified_kfold: k must be at least 2");
    std::array<std::vector<std::string>, 2> by_class;
    std::set<std::string> seen;
    for (const auto& it : items) {
        if (!seen.insert(it.id).second) throw std::invalid_argument("plan_stratified_kfold: duplicate id " + it.id);
        by_class[static_cast<std::size_t>(it.label)].push_back(it.id);
    }
    std::map<std::string, int> assignment;
    for (std::size_t cls = 0; cls < by_class.size(); ++cls) {
        auto& ids = by_class[cls];
        if (static_cast<int>(ids.size()) < k) {
            throw std::invalid_argument("plan_stratified_kfold: class " + std::string(to_string(static_cast<BinaryLabel>(cls))) +
                                        " has " + std::to_string(ids.size()) + " samples, fewer than k = " + std::to_string(k));
        }
        std::sort(ids.begin(), ids.end());
        Rng rng(derive_seed(seed, 0xf01dULL, cls));
        rng.shuffle(ids.begin(), ids.end());
        for (std::size_t i = 0; i < ids.size(); ++i) assignment[ids[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
    }
    return FoldPlan(k, seed, std::move(assignment));
}

// -- augmentation ------------------------------------------------------------

void AugmentConfig::validate() const {
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(hflip_p) || !prob(vflip_p)) throw std::invalid_argument("augment: flip probabilities must lie in [0, 1]");
    if (!(contrast_lo > 0.0 && contrast_lo <= 1.0 && contrast_hi >= 1.0)) {
        throw std::invalid_argument("augment: contrast range must satisfy 0 < lo <= 1 <= hi");
    }
    if (rotations.empty()) throw std::invalid_argument("augment: rotation set must not be empty");
    for (int r : rotations)
        if (r != 0 && r != 90 && r != 180 && r != 270)
            throw std::invalid_argument("augment: rotations must be multiples of 90 in [0, 270], got " + std::to_string(r));
}

namespace {

void require_image(const Tensor& t, const char* what) {
    if (t.shape().rank() != 4 || t.shape().n() != 1) {
        throw ShapeError(std::string(what) + ": expected a 1 x C x H x W image, got " + t.shape().str());
    }
}

template <typename Map>
Tensor permute_pixels(const Tensor& image, int out_h, int out_w, Map src_of) {
    const Shape& s = image.shape();
    Tensor out(Shape{1, s.c(), out_h, out_w});
    for (int c = 0; c < s.c(); ++c)
        for (int y = 0; y < out_h; ++y)
            for (int x = 0; x < out_w; ++x) {
                const auto [sy, sx] = src_of(y, x);
                out.at(0, c, y, x) = image.at(0, c, sy, sx);
            }
    return out;
}

}  // namespace

Tensor flip_horizontal(const Tensor& image) {
    require_image(image, "flip_horizontal");
    const int w = image.shape().w();
    return permute_pixels(image, image.shape().h(), w, [w](int y, int x) { return std::pair{y, w - 1 - x}; });
}

Tensor flip_vertical(const Tensor& image) {
    require_image(image, "flip_vertical");
    const int h = image.shape().h();
    return permute_pixels(image, h, image.shape().w(), [h](int y, int x) { return std::pair{h - 1 - y, x}; });
}

Tensor rotate90(const Tensor& image, int degrees) {
    require_image(image, "rotate90");
    const int n = image.shape().h();
    if (image.shape().w() != n) throw ShapeError("rotate90: image must be square, got " + image.shape().str());
    switch (((degrees % 360) + 360) % 360) {
        case 0: return image;
        case 90: return permute_pixels(image, n, n, [n](int y, int x) { return std::pair{x, n - 1 - y}; });
        case 180: return permute_pixels(image, n, n, [n](int y, int x) { return std::pair{n - 1 - y, n - 1 - x}; });
        case 270: return permute_pixels(image, n, n, [n](int y, int x) { return std::pair{n - 1 - x, y}; });
        default: throw std::invalid_argument("rotate90: degrees must be a multiple of 90");
    }
}

Tensor adjust_contrast(const Tensor& image, double factor) {
    double mean = 0.0;
    for (float v : image.values()) mean += v;
    mean /= static_cast<double>(image.size());
    Tensor out(image.shape());
    for (std::size_t i = 0; i < image.size(); ++i)
        out[i] = static_cast<float>(std::clamp(mean + factor * (image[i] - mean), 0.0, 1.0));
    return out;
}

Tensor augment(const Tensor& image, const AugmentConfig& cfg, Rng& rng) {
    if (!cfg.enabled) return image;
    const bool hflip = rng.bernoulli(cfg.hflip_p);
    const bool vflip = rng.bernoulli(cfg.vflip_p);
    const int rotation = cfg.rotations[static_cast<std::size_t>(rng.below(cfg.rotations.size()))];
    const double factor = rng.uniform(cfg.contrast_lo, cfg.contrast_hi);

    Tensor out = image;
    if (hflip) out = flip_horizontal(out);
    if (vflip) out = flip_vertical(out);
    if (rotation != 0) out = rotate90(out, rotation);
    if (factor != 1.0) out = adjust_contrast(out, factor);
    return out;
}

}  // namespace pap
