#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fapm/feature_tensor.hpp"

namespace fapm {

enum class Split { train, test };
enum class Label { normal, anomalous };

struct ManifestEntry {
    std::string image_id;
    std::map<int, std::filesystem::path> tensors;  // layer_id -> NPY path
    std::optional<Label> label;
    std::optional<std::filesystem::path> mask;
};

/// Declares one split of a dataset. Paths loaded from disk are resolved
/// against the manifest's directory.
struct DatasetManifest {
    Split split = Split::train;
    std::vector<int> layers;
    std::vector<ManifestEntry> entries;

    /// Checks that every entry references exactly `layers`, that image ids
    /// are unique, and that train entries carry no anomalous label.
    void validate() const;

    bool has_masks() const;
};

DatasetManifest load_manifest(const std::filesystem::path& path);

/// Paths under the manifest's directory are stored relative to it.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

std::string to_string(Split split);
std::string to_string(Label label);

/// Reads every layer tensor of one entry, in `manifest.layers` order.
std::vector<FeatureTensor> load_entry_tensors(const DatasetManifest& manifest, const ManifestEntry& entry);

}  // namespace fapm
