#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fapm/error.hpp"
#include "fapm/manifest.hpp"
#include "fapm/pipeline.hpp"
#include "fapm/scorer.hpp"

namespace fapm {

/// Mann-Whitney AUROC: the fraction of (positive, negative) pairs ranked
/// correctly, ties credited one half. Runs in O(n log n).
template <typename Score, typename LabelT>
double roc_auc(std::span<const Score> scores, std::span<const LabelT> labels) {
    if (scores.size() != labels.size()) fail(ErrorKind::validation, "scores and labels differ in length");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // Twice the Mann-Whitney U, kept integral.
    std::uint64_t twice_u = 0;
    std::uint64_t negatives_below = 0;
    std::uint64_t positives = 0;
    std::uint64_t negatives = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        std::uint64_t pos = 0, neg = 0;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            if (labels[order[j]] != 0) ++pos;
            else ++neg;
            ++j;
        }
        twice_u += 2 * pos * negatives_below + pos * neg;
        negatives_below += neg;
        positives += pos;
        negatives += neg;
        i = j;
    }
    if (positives == 0 || negatives == 0)
        fail(ErrorKind::undefined_metric, "AUROC needs at least one positive and one negative label");
    return static_cast<double>(static_cast<long double>(twice_u) /
                               (2.0L * static_cast<long double>(positives) * static_cast<long double>(negatives)));
}

inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    return roc_auc(std::span<const double>(scores), std::span<const int>(labels));
}

struct RocPoint {
    double threshold = 0.0;
    double false_positive_rate = 0.0;
    double true_positive_rate = 0.0;
};

/// ROC vertices for thresholds at each distinct score, highest first.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);

struct ImageRecord {
    std::string image_id;
    double score = 0.0;
    std::optional<Label> label;
    std::uint64_t comparisons = 0;
};

struct StageTimings {
    double build_ms = 0.0;
    double sample_ms = 0.0;
    double score_ms = 0.0;
};

struct EvalReport {
    double image_auroc = 0.0;
    std::optional<double> pixel_auroc;
    std::vector<ImageRecord> images;
    StageTimings timings;
    double fps = 0.0;
    std::uint64_t fapm_comparisons = 0;
    std::optional<std::uint64_t> baseline_comparisons;
    std::optional<double> cost_ratio;
};

enum class PixelMetric {
    automatic,  // computed when every anomalous entry has a mask
    required,   // missing masks are a configuration error
    skip,
};

/// Image AUROC over image scores, and pooled pixel AUROC over every map pixel
/// (maps resized bilinearly to mask resolution; normal entries without a mask
/// count as all-zero).
EvalReport evaluate(std::span<const AnomalyResult> results, const DatasetManifest& manifest,
                    PixelMetric pixel = PixelMetric::automatic);

struct BenchOptions {
    std::size_t repetitions = 3;
    std::size_t threads = 1;
    PixelMetric pixel = PixelMetric::automatic;
};

struct BenchReport {
    EvalReport fapm;
    EvalReport baseline;
    double cost_ratio = 0.0;
};

/// Builds, samples, and scores the test split with both engines. Comparison
/// counts are exact; scoring time is the median over repetitions.
BenchReport bench(const DatasetManifest& train, const DatasetManifest& test, const EngineConfig& fapm,
                  const EngineConfig& baseline, const BenchOptions& options = {});

nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const BenchReport& report);
std::string scores_csv(const EvalReport& report);

}  // namespace fapm
