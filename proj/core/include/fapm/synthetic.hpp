#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fapm/manifest.hpp"

namespace fapm {

struct LayerShape {
    int layer_id = 0;
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
};

/// Desk-scale stand-in for backbone features of roughly aligned images. Each
/// (layer, patch) cell draws its vectors from a Gaussian mixture whose mode
/// centres are shared by all images, so locality carries information.
enum class ModeAssignment {
    per_image,  // one variant per image selects the mode of every patch
    per_patch,  // every patch of every image picks its mode independently
};

struct SyntheticSpec {
    std::vector<LayerShape> layers{{2, 8, 28, 28}, {3, 16, 14, 14}};
    std::size_t grid_rows = 7;
    std::size_t grid_cols = 7;
    std::size_t train_count = 40;
    std::size_t test_normal_count = 20;
    std::size_t test_anomalous_count = 20;
    /// Mode count per patch is drawn uniformly from [min_modes, max_modes]
    /// unless modes_per_patch lists one count per patch.
    std::size_t min_modes = 1;
    std::size_t max_modes = 3;
    std::vector<std::size_t> modes_per_patch;
    ModeAssignment mode_assignment = ModeAssignment::per_image;
    double mode_spread = 0.1;      // per-coordinate standard deviation within a mode
    double mode_separation = 1.0;  // per-coordinate standard deviation of mode centres
    /// 1-based patch indices that receive the planted offset. Empty: each
    /// anomalous image gets one patch chosen at random.
    std::vector<std::size_t> plant_patches;
    double plant_offset = 1.0;  // Euclidean norm of the offset added to every vector in a planted patch
    std::size_t mask_height = 224;
    std::size_t mask_width = 224;
    std::uint64_t rng_seed = 0;

    void validate() const;
};

SyntheticSpec synthetic_spec_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const SyntheticSpec& spec);

struct SyntheticDataset {
    DatasetManifest train;
    DatasetManifest test;
    std::filesystem::path train_manifest;
    std::filesystem::path test_manifest;
};

/// Writes train/ and test/ tensors, masks/, train.json and test.json under
/// `out_dir`. A pure function of the spec.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

}  // namespace fapm
