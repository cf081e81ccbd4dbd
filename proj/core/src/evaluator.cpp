#include "fapm/evaluator.hpp"

#include <chrono>
#include <limits>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fapm {

using nlohmann::json;

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) fail(ErrorKind::validation, "scores and labels differ in length");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    const auto positives = static_cast<double>(std::count_if(labels.begin(), labels.end(), [](int l) { return l != 0; }));
    const auto negatives = static_cast<double>(labels.size()) - positives;
    if (positives == 0 || negatives == 0)
        fail(ErrorKind::undefined_metric, "ROC curve needs at least one positive and one negative label");

    std::vector<RocPoint> points{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double threshold = scores[order[i]];
        while (i < order.size() && scores[order[i]] == threshold) {
            (labels[order[i]] != 0 ? tp : fp) += 1.0;
            ++i;
        }
        points.push_back({threshold, fp / negatives, tp / positives});
    }
    return points;
}

EvalReport evaluate(std::span<const AnomalyResult> results, const DatasetManifest& manifest, PixelMetric pixel) {
    std::map<std::string, const AnomalyResult*> by_id;
    for (const auto& r : results) by_id[r.image_id] = &r;

    EvalReport report;
    std::vector<double> scores;
    std::vector<int> labels;
    bool masks_complete = true;
    for (const auto& entry : manifest.entries) {
        auto it = by_id.find(entry.image_id);
        if (it == by_id.end()) fail(ErrorKind::configuration, "no result for test entry '" + entry.image_id + "'");
        if (!entry.label) fail(ErrorKind::configuration, "test entry '" + entry.image_id + "' has no label");
        const auto& r = *it->second;
        report.images.push_back({entry.image_id, r.image_score, entry.label, r.comparison_count});
        report.fapm_comparisons += r.comparison_count;
        scores.push_back(r.image_score);
        labels.push_back(*entry.label == Label::anomalous ? 1 : 0);
        if (*entry.label == Label::anomalous && !entry.mask) masks_complete = false;
    }
    report.image_auroc = roc_auc(scores, labels);

    if (pixel == PixelMetric::required && !masks_complete)
        fail(ErrorKind::configuration, "pixel AUROC requested but some anomalous entries have no mask");
    if (pixel == PixelMetric::skip || !masks_complete) return report;

    std::optional<std::pair<std::size_t, std::size_t>> reference;
    for (const auto& entry : manifest.entries)
        if (entry.mask) {
            const auto m = read_mask(*entry.mask);
            reference = std::pair{m.height, m.width};
            break;
        }
    if (!reference) return report;

    std::vector<float> pixel_scores;
    std::vector<std::uint8_t> pixel_labels;
    for (const auto& entry : manifest.entries) {
        Mask mask;
        if (entry.mask) {
            mask = read_mask(*entry.mask);
        } else {
            mask.height = reference->first;
            mask.width = reference->second;
            mask.values.assign(mask.height * mask.width, 0.0f);
        }
        const auto& map = by_id.at(entry.image_id)->anomaly_map;
        const auto resized = resize_bilinear(map, mask.height, mask.width);
        for (std::size_t i = 0; i < mask.values.size(); ++i) {
            pixel_scores.push_back(static_cast<float>(resized.values[i]));
            pixel_labels.push_back(mask.values[i] != 0.0f ? 1 : 0);
        }
    }
    report.pixel_auroc = roc_auc(std::span<const float>(pixel_scores), std::span<const std::uint8_t>(pixel_labels));
    return report;
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

EvalReport run_engine(const DatasetManifest& train, const DatasetManifest& test,
                      const std::vector<LoadedImage>& test_images, const EngineConfig& config,
                      const BenchOptions& options) {
    StageTimings timings;
    auto start = Clock::now();
    const MemoryBank memory = build_memory(train, config.grid, config.view, options.threads);
    timings.build_ms = elapsed_ms(start);

    start = Clock::now();
    const SampledBank sampled = sample_bank(memory, config.sampler, options.threads);
    timings.sample_ms = elapsed_ms(start);

    std::vector<double> rep_ms;
    std::vector<AnomalyResult> results;
    for (std::size_t rep = 0; rep < std::max<std::size_t>(1, options.repetitions); ++rep) {
        start = Clock::now();
        results = score_all(test_images, sampled, config.scorer, options.threads);
        rep_ms.push_back(elapsed_ms(start));
    }
    std::sort(rep_ms.begin(), rep_ms.end());
    timings.score_ms = rep_ms.size() % 2 ? rep_ms[rep_ms.size() / 2]
                                         : 0.5 * (rep_ms[rep_ms.size() / 2 - 1] + rep_ms[rep_ms.size() / 2]);

    EvalReport report = evaluate(results, test, options.pixel);
    report.timings = timings;
    report.fps = timings.score_ms > 0.0 ? 1000.0 * static_cast<double>(test_images.size()) / timings.score_ms : 0.0;
    return report;
}

}  // namespace

BenchReport bench(const DatasetManifest& train, const DatasetManifest& test, const EngineConfig& fapm,
                  const EngineConfig& baseline, const BenchOptions& options) {
    const auto test_images = load_images(test, options.threads);
    BenchReport out;
    out.fapm = run_engine(train, test, test_images, fapm, options);
    out.baseline = run_engine(train, test, test_images, baseline, options);
    out.cost_ratio = static_cast<double>(out.baseline.fapm_comparisons) / static_cast<double>(out.fapm.fapm_comparisons);
    // Both reports carry the totals of both engines.
    const std::uint64_t fapm_total = out.fapm.fapm_comparisons;
    const std::uint64_t baseline_total = out.baseline.fapm_comparisons;
    for (EvalReport* r : {&out.fapm, &out.baseline}) {
        r->fapm_comparisons = fapm_total;
        r->baseline_comparisons = baseline_total;
        r->cost_ratio = out.cost_ratio;
    }
    return out;
}

json to_json(const EvalReport& report) {
    json doc;
    doc["image_auroc"] = report.image_auroc;
    doc["pixel_auroc"] = report.pixel_auroc ? json(*report.pixel_auroc) : json(nullptr);
    doc["images"] = json::array();
    for (const auto& img : report.images)
        doc["images"].push_back({{"image_id", img.image_id},
                                 {"image_score", img.score},
                                 {"label", img.label ? json(to_string(*img.label)) : json(nullptr)},
                                 {"comparison_count", img.comparisons}});
    doc["timings_ms"] = {{"build", report.timings.build_ms},
                         {"sample", report.timings.sample_ms},
                         {"score", report.timings.score_ms}};
    doc["fps"] = report.fps;
    doc["fapm_comparisons"] = report.fapm_comparisons;
    doc["baseline_comparisons"] = report.baseline_comparisons ? json(*report.baseline_comparisons) : json(nullptr);
    doc["cost_ratio"] = report.cost_ratio ? json(*report.cost_ratio) : json(nullptr);
    return doc;
}

json to_json(const BenchReport& report) {
    return {{"fapm", to_json(report.fapm)}, {"baseline", to_json(report.baseline)}, {"cost_ratio", report.cost_ratio}};
}

std::string scores_csv(const EvalReport& report) {
    std::ostringstream out;
    out.precision(17);
    out << "image_id,label,image_score,comparison_count\n";
    for (const auto& img : report.images)
        out << img.image_id << ',' << (img.label ? to_string(*img.label) : "") << ',' << img.score << ','
            << img.comparisons << '\n';
    return out.str();
}

}  // namespace fapm
