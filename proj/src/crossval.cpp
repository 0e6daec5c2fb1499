#include "pap/crossval.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

namespace pap {

Tensor classifier_input(const RasterImage& image, int size, const BinaryMask* mask) {
    RasterImage rgb = resize_bilinear(to_rgb(image), size, size);
    if (mask) rgb = apply_mask(rgb, *mask);
    return normalize01(rgb);
}

double heldout_dice(const UNet& model, std::span<const ImageSample> samples, const SegmentationConfig& cfg) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : samples) {
        if (!s.truth_mask) continue;
        const BinaryMask truth = resize_nearest(*s.truth_mask, cfg.input_size, cfg.input_size);
        sum += seg_metrics(segment(model, s.image, cfg), truth).dice;
        ++n;
    }
    if (n == 0) throw std::invalid_argument("heldout_dice: no samples with truth masks");
    return sum / static_cast<double>(n);
}

namespace {

struct FoldResult {
    FoldReport report;
    std::vector<EpochLog> epochs;
    FoldOutput output;
};

FoldResult run_fold(std::span<const ImageSample> samples, const FoldPlan& plan, int fold, PipelineMode mode,
                    const RunConfig& cfg, std::span<const Tensor> raw_inputs, const CrossvalHooks& hooks) {
    const auto f = static_cast<std::uint64_t>(fold);
    auto say = [&](const std::string& msg) {
        if (hooks.progress) hooks.progress("[" + to_string(mode) + " fold " + std::to_string(fold) + "] " + msg);
    };

    std::vector<std::size_t> train_idx, val_idx;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        (plan.fold_of(samples[i].id) == fold ? val_idx : train_idx).push_back(i);
    }

    FoldResult result;
    result.output.fold = fold;
    result.report.fold = fold;
    std::vector<LabeledTensor> train, val;
    train.reserve(train_idx.size());
    val.reserve(val_idx.size());

    if (mode == PipelineMode::Segmented) {
        const SegmentationConfig seg = cfg.segmentation_config();
        std::vector<ImageSample> unet_train_set;
        for (std::size_t i : train_idx)
            if (samples[i].truth_mask) unet_train_set.push_back(samples[i]);
        std::sort(unet_train_set.begin(), unet_train_set.end(),
                  [](const ImageSample& a, const ImageSample& b) { return a.id < b.id; });
        const auto cap = static_cast<std::size_t>(cfg.unet.max_train_samples);
        if (cap > 0 && unet_train_set.size() > cap) {
            Rng pick(derive_seed(cfg.seed, f, 0x5e1ULL));
            pick.shuffle(unet_train_set.begin(), unet_train_set.end());
            unet_train_set.resize(cap);
        }
        const auto pairs = make_seg_pairs(unet_train_set, seg);
        UNet unet(UNetConfig{cfg.unet.base_width, 1}, derive_seed(cfg.seed, f, 0x0e70ULL));
        say("training U-Net on " + std::to_string(pairs.size()) + " masks");
        result.output.unet_log = unet_train(
            unet, pairs,
            UNetTrainConfig{cfg.unet.epochs, cfg.unet.batch_size, cfg.unet.learning_rate, derive_seed(cfg.seed, f, 0x7a1ULL)});

        std::vector<ImageSample> val_with_masks;
        for (std::size_t i : val_idx)
            if (samples[i].truth_mask) val_with_masks.push_back(samples[i]);
        if (!val_with_masks.empty()) {
            result.report.seg_dice = heldout_dice(unet, val_with_masks, seg);
            say("U-Net held-out Dice " + std::to_string(*result.report.seg_dice));
        }

        std::vector<BinaryMask> masks(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) masks[i] = segment(unet, samples[i].image, seg);
        for (std::size_t i : train_idx)
            train.push_back({samples[i].id, classifier_input(samples[i].image, cfg.input_size, &masks[i]), samples[i].label});
        for (std::size_t i : val_idx) {
            val.push_back({samples[i].id, classifier_input(samples[i].image, cfg.input_size, &masks[i]), samples[i].label});
            result.output.val_masks.emplace_back(samples[i].id, masks[i]);
        }
        result.output.unet = std::move(unet);
    } else {
        for (std::size_t i : train_idx) train.push_back({samples[i].id, raw_inputs[i], samples[i].label});
        for (std::size_t i : val_idx) val.push_back({samples[i].id, raw_inputs[i], samples[i].label});
    }

    Classifier model(cfg.classifier_config(), derive_seed(cfg.seed, f, 0xc1a5ULL));
    TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch_size = cfg.batch_size;
    tc.learning_rate = cfg.learning_rate;
    tc.l2_lambda = cfg.l2_lambda;
    tc.seed = cfg.seed;
    tc.fold = fold;
    say("training classifier on " + std::to_string(train.size()) + " images");
    FoldTrainResult trained = train_fold(model, train, val, tc, cfg.aug);
    if (!trained.log.empty()) {
        const auto& last = trained.log.back();
        say("done: train_acc " + std::to_string(last.train_accuracy) + " val_acc " + std::to_string(last.val_accuracy));
    }

    std::vector<BinaryLabel> truths;
    for (const auto& v : val) truths.push_back(v.label);
    result.report.matrix = confusion(std::span<const Prediction>(trained.predictions), truths);
    result.report.predictions = std::move(trained.predictions);
    result.epochs = std::move(trained.log);

    const std::size_t cams = std::min(val.size(), static_cast<std::size_t>(cfg.cam_samples));
    for (std::size_t i = 0; i < cams; ++i) {
        const int target = static_cast<int>(result.report.predictions[i].predicted);
        result.output.cams.push_back({val[i].id, target, grad_cam(model, val[i].image, target)});
    }
    result.output.model = std::move(model);
    return result;
}

}  // namespace

RunReport run_crossval(std::span<const ImageSample> samples, const FoldPlan& plan, PipelineMode mode,
                       const RunConfig& cfg, const CrossvalHooks& hooks) {
    cfg.validate();
    if (plan.k() != cfg.k) throw std::invalid_argument("run_crossval: fold plan k differs from config k");
    {
        std::map<std::string, int> seen;
        for (const auto& s : samples) {
            if (++seen[s.id] > 1) throw std::invalid_argument("run_crossval: duplicate sample id " + s.id);
            plan.fold_of(s.id);
        }
        if (seen.size() != plan.assignment().size()) {
            throw std::invalid_argument("run_crossval: fold plan covers a different id set than the samples");
        }
    }

    std::vector<Tensor> raw_inputs;
    if (mode == PipelineMode::Raw) {
        raw_inputs.reserve(samples.size());
        for (const auto& s : samples) raw_inputs.push_back(classifier_input(s.image, cfg.input_size));
    }

    std::vector<std::optional<FoldResult>> results(static_cast<std::size_t>(cfg.k));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.k));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int fold; (fold = next.fetch_add(1)) < cfg.k;) {
            try {
                results[static_cast<std::size_t>(fold)] = run_fold(samples, plan, fold, mode, cfg, raw_inputs, hooks);
            } catch (...) {
                errors[static_cast<std::size_t>(fold)] = std::current_exception();
            }
        }
    };
    const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    const int workers = std::min(cfg.k, cfg.workers > 0 ? cfg.workers : hw);
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::vector<FoldReport> folds;
    std::vector<EpochLog> epochs;
    for (auto& r : results) {
        if (hooks.on_fold) hooks.on_fold(mode, r->output);
        folds.push_back(std::move(r->report));
        epochs.insert(epochs.end(), r->epochs.begin(), r->epochs.end());
    }
    return aggregate(std::move(folds), std::move(epochs), mode, plan.seed());
}

}  // namespace pap
