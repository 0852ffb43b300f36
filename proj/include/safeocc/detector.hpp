#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cnn.hpp"
#include "core.hpp"
#include "ocsvm.hpp"
#include "reduction.hpp"

namespace safeocc {

enum class PcaMode { off, dims, variance };

struct DetectorConfig {
    TapPoint tap;
    ScalarizerKind scalarizer = ScalarizerKind::max;
    RefinerKind refiner = RefinerKind::standard;
    PcaMode pca_mode = PcaMode::off;
    int pca_dims = 0;
    double pca_variance = 0.95;
    double nu = 1e-4;
    double gamma = 0.0;  // <= 0 means auto: 1 / feature dimension
    double epsilon = 0.0;
};

// Configuration 1 and 2 presets plus the cart-pole preset.
inline DetectorConfig config1_preset() {
    DetectorConfig c;
    c.tap = {0, TapSignal::pooled};
    c.scalarizer = ScalarizerKind::max;
    c.refiner = RefinerKind::standard;
    return c;
}

inline DetectorConfig config2_preset(int last_block) {
    DetectorConfig c;
    c.tap = {last_block, TapSignal::pooled};
    c.scalarizer = ScalarizerKind::twod_pca;
    c.refiner = RefinerKind::standard;
    return c;
}

struct SafeOccDetector {
    DetectorConfig config;
    std::optional<TwoDPcaModel> twod_pca;
    RefinerModel refiner;
    std::optional<PcaModel> pca;
    OcSvmModel ocsvm;
};

inline const Tensor3& tap_tensor(const ForwardPass& fp, const TapPoint& tap) {
    require(tap.block >= 0 && tap.block < static_cast<int>(fp.blocks.size()),
            "tap_tensor: invalid block");
    const BlockTaps& t = fp.blocks[tap.block];
    switch (tap.signal) {
        case TapSignal::psi: return t.psi;
        case TapSignal::activation: return t.act;
        case TapSignal::pooled: return t.pooled;
    }
    return t.pooled;
}

inline Tensor3 extract_features(const CnnModel& model, const Tensor3& image, const TapPoint& tap) {
    return tap_tensor(forward(model, image), tap);
}

namespace detail {

inline Vec detector_vector(const SafeOccDetector& det, const Tensor3& tapped) {
    Vec v = scalarize(tapped, det.config.scalarizer,
                      det.twod_pca ? &*det.twod_pca : nullptr);
    v = refine(det.refiner, v);
    if (det.pca) v = apply_pca(*det.pca, v);
    return v;
}

}  // namespace detail

// Fits every stage from the same image set used to train the CNN sensor.
// Stage order: per-filter 2D^2PCA (if needed) -> scalarize -> refiner ->
// refine -> PCA (if configured) -> OC-SVM.
inline SafeOccDetector fit_detector(const CnnModel& model, const std::vector<Tensor3>& images,
                                    const DetectorConfig& config, int threads = 1) {
    require(!images.empty(), "fit_detector: empty training set");
    SafeOccDetector det;
    det.config = config;

    // Tap every training image once.
    std::vector<Tensor3> tapped(images.size());
    {
        const int nt = std::max(1, threads);
        std::vector<std::thread> workers;
        for (int t = 0; t < nt; ++t)
            workers.emplace_back([&, t]() {
                for (size_t i = t; i < images.size(); i += nt)
                    tapped[i] = extract_features(model, images[i], config.tap);
            });
        for (auto& th : workers) th.join();
    }

    if (config.scalarizer == ScalarizerKind::twod_pca) {
        const int q = tapped[0].channels;
        std::vector<std::vector<Mat>> per_filter(q);
        for (const Tensor3& t : tapped)
            for (int j = 0; j < q; ++j) per_filter[j].push_back(t.channel(j));
        det.twod_pca = fit_2d2pca(per_filter, 1, 1);
    }

    std::vector<Vec> feats(tapped.size());
    for (size_t i = 0; i < tapped.size(); ++i)
        feats[i] = scalarize(tapped[i], config.scalarizer,
                             det.twod_pca ? &*det.twod_pca : nullptr);

    det.refiner = fit_refiner(feats, config.refiner);
    for (Vec& v : feats) v = refine(det.refiner, v);

    if (config.pca_mode == PcaMode::dims)
        det.pca = fit_pca(feats, config.pca_dims);
    else if (config.pca_mode == PcaMode::variance)
        det.pca = fit_pca(feats, -1, config.pca_variance);
    if (det.pca)
        for (Vec& v : feats) v = apply_pca(*det.pca, v);

    const double gamma = config.gamma > 0.0
                             ? config.gamma
                             : 1.0 / static_cast<double>(feats[0].size());
    det.ocsvm = fit_ocsvm(feats, config.nu, gamma);
    det.ocsvm.gamma = gamma;
    return det;
}

struct NoveltySignal {
    Verdict verdict;
    double score;
    double h_hat;
};

inline NoveltySignal novelty_from_pass(const SafeOccDetector& det, const ForwardPass& fp) {
    const Vec v = detail::detector_vector(det, tap_tensor(fp, det.config.tap));
    const Classification c = classify(det.ocsvm, v, det.config.epsilon);
    return {c.verdict, c.score, c.h_hat};
}

inline NoveltySignal novelty_signal(const SafeOccDetector& det, const CnnModel& model,
                                    const Tensor3& image) {
    return novelty_from_pass(det, forward(model, image));
}

// ---------------------------------------------------------------------------
// Parallel configurations with union voting

struct ParallelDetector {
    std::vector<SafeOccDetector> detectors;
};

struct ParallelVerdict {
    Verdict verdict;
    std::vector<NoveltySignal> members;
};

inline ParallelVerdict parallel_from_pass(const ParallelDetector& pd, const ForwardPass& fp) {
    require(!pd.detectors.empty(), "parallel_verdict: no detectors");
    ParallelVerdict out;
    out.verdict = Verdict::normal;
    for (const SafeOccDetector& det : pd.detectors) {
        out.members.push_back(novelty_from_pass(det, fp));
        if (out.members.back().verdict == Verdict::novel) out.verdict = Verdict::novel;
    }
    return out;
}

inline ParallelVerdict parallel_verdict(const ParallelDetector& pd, const CnnModel& model,
                                        const Tensor3& image) {
    return parallel_from_pass(pd, forward(model, image));
}

// ---------------------------------------------------------------------------
// Accuracy evaluation

struct AccuracyRow {
    std::string sensor;
    std::string config;
    std::string test_set;
    std::string label;  // "normal" or "novel"
    double accuracy_pct;
    int n_images;
};

template <typename VerdictFn>
AccuracyRow evaluate_set(VerdictFn&& fn, const std::vector<Tensor3>& images, bool expect_novel,
                         const std::string& sensor, const std::string& config,
                         const std::string& test_set) {
    require(!images.empty(), "evaluate_accuracy: empty set");
    int correct = 0;
    for (const Tensor3& img : images) {
        const Verdict v = fn(img);
        if ((v == Verdict::novel) == expect_novel) ++correct;
    }
    AccuracyRow row;
    row.sensor = sensor;
    row.config = config;
    row.test_set = test_set;
    row.label = expect_novel ? "novel" : "normal";
    row.accuracy_pct = 100.0 * correct / static_cast<double>(images.size());
    row.n_images = static_cast<int>(images.size());
    return row;
}

inline AccuracyRow evaluate_accuracy(const SafeOccDetector& det, const CnnModel& model,
                                     const std::vector<Tensor3>& images, bool expect_novel,
                                     const std::string& sensor, const std::string& config,
                                     const std::string& test_set) {
    return evaluate_set(
        [&](const Tensor3& img) { return novelty_signal(det, model, img).verdict; }, images,
        expect_novel, sensor, config, test_set);
}

inline AccuracyRow evaluate_accuracy(const ParallelDetector& pd, const CnnModel& model,
                                     const std::vector<Tensor3>& images, bool expect_novel,
                                     const std::string& sensor, const std::string& config,
                                     const std::string& test_set) {
    return evaluate_set(
        [&](const Tensor3& img) { return parallel_verdict(pd, model, img).verdict; }, images,
        expect_novel, sensor, config, test_set);
}

}  // namespace safeocc
