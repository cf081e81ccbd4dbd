#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fapm/coreset.hpp"
#include "fapm/manifest.hpp"
#include "fapm/memory_bank.hpp"
#include "fapm/scorer.hpp"

namespace fapm {

/// Everything that determines how a bank is built, sampled, and queried.
struct EngineConfig {
    PatchGrid grid;
    FeatureView view;
    SamplerConfig sampler;
    ScorerConfig scorer;
};

/// The single-bank comparison engine for `config`: one cell per layer, every
/// other setting unchanged.
EngineConfig single_bank_baseline(const EngineConfig& config);

/// Hash of the settings a memory bank depends on (grid and feature view).
std::string bank_config_hash(const PatchGrid& grid, const FeatureView& view);

struct LoadedImage {
    std::string image_id;
    std::vector<FeatureTensor> layers;
};

std::vector<LoadedImage> load_images(const DatasetManifest& manifest, std::size_t threads = 1);

std::vector<AnomalyResult> score_all(const std::vector<LoadedImage>& images, const SampledBank& bank,
                                     const ScorerConfig& config, std::size_t threads = 1);

}  // namespace fapm
