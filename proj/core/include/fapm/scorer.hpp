#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fapm/coreset.hpp"
#include "fapm/feature_tensor.hpp"
#include "fapm/memory_bank.hpp"

namespace fapm {

struct ScorerConfig {
    std::size_t neighbors = 4;
    std::map<int, double> layer_weights;  // missing layers weigh 1
    double blur_sigma = 4.0;
    std::size_t top_t = 1;
    std::size_t output_height = 224;
    std::size_t output_width = 224;

    void validate() const;
    double weight(int layer_id) const;
};

/// Row-major grid of scores.
struct ScoreGrid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;

    ScoreGrid() = default;
    ScoreGrid(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), values(h * w, fill) {}

    double& at(std::size_t r, std::size_t c) { return values[r * width + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * width + c]; }
    double sum() const;

    friend bool operator==(const ScoreGrid&, const ScoreGrid&) = default;
};

/// Exhaustive search of one patch's test vectors against that patch's keys.
struct PatchDistances {
    std::size_t neighbors = 0;    // min(b, K)
    std::vector<double> minimum;  // per test vector
    std::vector<double> nearest;  // per test vector, `neighbors` ascending distances

    std::span<const double> nearest_of(std::size_t i) const {
        return std::span<const double>(nearest).subspan(i * neighbors, neighbors);
    }
};

/// Euclidean distances from every test vector to its min(b, K) nearest keys.
/// Adds |test| * K to `comparisons`.
PatchDistances patch_nn_distances(const VectorSet& test, const VectorSet& keys, std::size_t b,
                                  std::uint64_t& comparisons);

/// Discounts the worst location's distance by how dominant its nearest key
/// is among its neighbours: (1 - e^{d_1} / sum_j e^{d_j}) * d_1. Fewer than two
/// neighbours leave the distance unchanged.
double reweight_score(std::span<const double> nearest);

/// Row-major indices of the `t` largest values, largest first, ties to the
/// lowest index.
std::vector<std::size_t> top_locations(const ScoreGrid& grid, std::size_t t);

struct LayerScore {
    int layer_id = 0;
    ScoreGrid raw;  // nearest-key distance per location, native resolution
    double image_score = 0.0;
};

struct AnomalyResult {
    std::string image_id;
    double image_score = 0.0;
    ScoreGrid anomaly_map;
    std::vector<LayerScore> per_layer_raw;
    std::uint64_t comparison_count = 0;
};

/// Separable Gaussian with radius ceil(4 sigma), renormalised taps and
/// symmetric-reflect borders. sigma = 0 is the identity.
ScoreGrid gaussian_blur(const ScoreGrid& grid, double sigma);

ScoreGrid resize_bilinear(const ScoreGrid& grid, std::size_t height, std::size_t width);

/// Scores one image given its raw per-layer tensors (same layer order and
/// shapes as the bank was built from).
AnomalyResult score_image(const std::string& image_id, std::span<const FeatureTensor> raw_layers,
                          const SampledBank& bank, const ScorerConfig& config);

/// Same pipeline against a location-agnostic bank (1x1 grid).
AnomalyResult baseline_score_image(const std::string& image_id, std::span<const FeatureTensor> raw_layers,
                                   const SampledBank& single_bank, const ScorerConfig& config);

/// Closed-form comparison count for one image against a bank:
/// sum over layers and patches of (test vectors in patch) * K_patch.
std::uint64_t expected_comparisons(const SampledBank& bank);

}  // namespace fapm
