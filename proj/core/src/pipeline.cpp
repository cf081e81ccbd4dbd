#include "fapm/pipeline.hpp"

#include <nlohmann/json.hpp>

#include "fapm/hash.hpp"
#include "fapm/parallel.hpp"

namespace fapm {

EngineConfig single_bank_baseline(const EngineConfig& config) {
    EngineConfig baseline = config;
    baseline.grid = PatchGrid{1, 1};
    return baseline;
}

std::string bank_config_hash(const PatchGrid& grid, const FeatureView& view) {
    const nlohmann::json doc{{"grid", {grid.rows, grid.cols}},
                             {"aggregation", view.aggregation.enabled},
                             {"aggregation_kernel", view.aggregation.kernel},
                             {"layer_wise", view.layer_wise}};
    return fnv1a_hex(doc.dump());
}

std::vector<LoadedImage> load_images(const DatasetManifest& manifest, std::size_t threads) {
    std::vector<LoadedImage> images(manifest.entries.size());
    parallel_for(images.size(), threads, [&](std::size_t i) {
        images[i].image_id = manifest.entries[i].image_id;
        images[i].layers = load_entry_tensors(manifest, manifest.entries[i]);
    });
    return images;
}

std::vector<AnomalyResult> score_all(const std::vector<LoadedImage>& images, const SampledBank& bank,
                                     const ScorerConfig& config, std::size_t threads) {
    std::vector<AnomalyResult> results(images.size());
    parallel_for(images.size(), threads,
                 [&](std::size_t i) { results[i] = score_image(images[i].image_id, images[i].layers, bank, config); });
    return results;
}

}  // namespace fapm
