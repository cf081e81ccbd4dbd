#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fapm/memory_bank.hpp"

namespace fapm {

enum class InitMode { first_index, seeded_random };

struct SamplerConfig {
    double base_ratio = 0.10;
    double extent_threshold = 0.5;
    double escalation_factor = 2.0;
    std::size_t max_escalations = 1;
    std::uint64_t rng_seed = 0;
    InitMode init_mode = InitMode::first_index;

    void validate() const;
    /// Largest escalation count not exceeding max_escalations for which
    /// base_ratio * escalation_factor^e stays at or below 1.
    std::size_t effective_max_escalations() const;
    /// max(1, ceil(base_ratio * escalation_factor^level * n)), clamped to n.
    std::size_t key_count(std::size_t n, std::size_t level = 0) const;

    friend bool operator==(const SamplerConfig&, const SamplerConfig&) = default;
};

std::string config_hash(const SamplerConfig& config);
nlohmann::json to_json(const SamplerConfig& config);
SamplerConfig sampler_config_from_json(const nlohmann::json& doc);

struct CoresetSelection {
    std::vector<std::size_t> indices;  // selection order
    bool clamped = false;              // requested K exceeded the vector count
};

/// Minimax facility-location (k-center) greedy selection: start from the
/// first vector (or a seeded random one), then repeatedly add the unselected
/// vector farthest from the current selection. Ties go to the lowest index.
CoresetSelection greedy_coreset(const VectorSet& vectors, std::size_t k, const SamplerConfig& config = {});

/// Nearest key position for every vector (ties to the lower key position).
std::vector<std::size_t> assign_clusters(const VectorSet& vectors, std::span<const std::size_t> key_indices);

/// Squashed extent 1 - 2/(1 + exp(s)) of a squared distance s, i.e. tanh(s/2),
/// kept strictly below 1.
double extent_from_squared_distance(double squared_distance);

/// Extent of a cluster: squashed squared distance from the key to its
/// farthest member.
double cluster_extent(std::span<const float> key, const VectorSet& vectors, std::span<const std::size_t> members);

struct SampledPatchBank {
    int layer_id = 0;
    std::size_t patch_index = 0;
    std::vector<std::size_t> key_indices;  // positions in the source cell
    VectorSet keys;
    double d_max = 0.0;  // from the initial clustering
    bool escalated = false;
    bool clamped = false;

    std::size_t k() const noexcept { return keys.size(); }

    friend bool operator==(const SampledPatchBank&, const SampledPatchBank&) = default;
};

/// Samples K0 keys, measures the largest cluster extent, and resamples from
/// scratch at an escalated ratio while the extent exceeds the threshold.
SampledPatchBank adaptive_sample(const PatchCell& cell, const SamplerConfig& config);

/// Sampled keys for every (layer, patch) cell of a memory bank.
class SampledBank {
public:
    SampledBank(PatchGrid grid, FeatureView view, std::vector<LayerInfo> layers, SamplerConfig config,
                std::vector<SampledPatchBank> cells);

    const PatchGrid& grid() const noexcept { return grid_; }
    const FeatureView& view() const noexcept { return view_; }
    const std::vector<LayerInfo>& layers() const noexcept { return layers_; }
    const SamplerConfig& config() const noexcept { return config_; }
    const std::vector<SampledPatchBank>& cells() const noexcept { return cells_; }

    const SampledPatchBank& cell(std::size_t layer_position, std::size_t patch_index) const {
        return cells_[layer_position * grid_.patch_count() + patch_index - 1];
    }
    std::size_t total_keys() const;
    std::size_t total_keys(int layer_id) const;
    std::size_t escalated_count() const;

    friend bool operator==(const SampledBank&, const SampledBank&) = default;

private:
    PatchGrid grid_;
    FeatureView view_;
    std::vector<LayerInfo> layers_;
    SamplerConfig config_;
    std::vector<SampledPatchBank> cells_;
};

SampledBank sample_bank(const MemoryBank& bank, const SamplerConfig& config, std::size_t threads = 1);

/// Writes index.json plus, per cell, <stem>.npy keys and a <stem>.json
/// sidecar {K, d_max, escalated, config_hash, ...}.
void save_sampled_bank(const SampledBank& bank, const std::filesystem::path& dir, const std::string& bank_hash);
SampledBank load_sampled_bank(const std::filesystem::path& dir);
std::string sampled_bank_config_hash(const std::filesystem::path& dir);

}  // namespace fapm
