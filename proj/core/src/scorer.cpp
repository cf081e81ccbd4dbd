#include "fapm/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fapm/error.hpp"
#include "fapm/grid_ops.hpp"

namespace fapm {

void ScorerConfig::validate() const {
    if (neighbors == 0) fail(ErrorKind::configuration, "neighbors must be positive");
    if (top_t == 0) fail(ErrorKind::configuration, "top_t must be positive");
    if (!(blur_sigma >= 0.0) || !std::isfinite(blur_sigma)) fail(ErrorKind::configuration, "blur_sigma must be >= 0");
    if (output_height == 0 || output_width == 0) fail(ErrorKind::configuration, "output size must be positive");
    for (const auto& [layer, w] : layer_weights)
        if (!(w >= 0.0) || !std::isfinite(w))
            fail(ErrorKind::configuration, "layer weight for " + std::to_string(layer) + " must be non-negative");
}

double ScorerConfig::weight(int layer_id) const {
    auto it = layer_weights.find(layer_id);
    return it == layer_weights.end() ? 1.0 : it->second;
}

double ScoreGrid::sum() const { return std::accumulate(values.begin(), values.end(), 0.0); }

PatchDistances patch_nn_distances(const VectorSet& test, const VectorSet& keys, std::size_t b,
                                  std::uint64_t& comparisons) {
    if (keys.empty()) fail(ErrorKind::validation, "patch bank holds no keys");
    if (test.dim() != keys.dim())
        fail(ErrorKind::validation, "test vectors have dimension " + std::to_string(test.dim()) + " but keys have " +
                                        std::to_string(keys.dim()));
    const std::size_t k = keys.size();
    const std::size_t dim = keys.dim();
    PatchDistances out;
    out.neighbors = std::min(b, k);
    out.minimum.resize(test.size());
    out.nearest.resize(test.size() * out.neighbors);

    std::vector<double> d2(k);
    const float* key_data = keys.data().data();
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto q = test[i];
        for (std::size_t j = 0; j < k; ++j) {
            const float* row = key_data + j * dim;
            double acc = 0.0;
            for (std::size_t c = 0; c < dim; ++c) {
                const double diff = static_cast<double>(q[c]) - static_cast<double>(row[c]);
                acc += diff * diff;
            }
            d2[j] = acc;
        }
        std::partial_sort(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(out.neighbors), d2.end());
        for (std::size_t j = 0; j < out.neighbors; ++j) out.nearest[i * out.neighbors + j] = std::sqrt(d2[j]);
        out.minimum[i] = out.nearest[i * out.neighbors];
    }
    comparisons += static_cast<std::uint64_t>(test.size()) * k;
    return out;
}

double reweight_score(std::span<const double> nearest) {
    if (nearest.empty()) return 0.0;
    const double s = nearest.front();
    if (nearest.size() < 2) return s;
    // e^{s}/sum e^{d_j} with every d_j >= s, evaluated relative to s.
    double denom = 0.0;
    for (double d : nearest) denom += std::exp(d - s);
    return (1.0 - 1.0 / denom) * s;
}

ScoreGrid resize_bilinear(const ScoreGrid& grid, std::size_t height, std::size_t width) {
    ScoreGrid out(height, width);
    out.values = fapm::resize_bilinear<double>(std::span<const double>(grid.values), grid.height, grid.width, height,
                                               width);
    return out;
}

ScoreGrid gaussian_blur(const ScoreGrid& grid, double sigma) {
    if (!(sigma >= 0.0)) fail(ErrorKind::validation, "blur sigma must be non-negative");
    if (sigma == 0.0 || grid.values.empty()) return grid;
    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma));
    std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
    for (std::ptrdiff_t i = -radius; i <= radius; ++i)
        taps[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    const double norm = std::accumulate(taps.begin(), taps.end(), 0.0);
    for (auto& t : taps) t /= norm;

    const auto h = static_cast<std::ptrdiff_t>(grid.height);
    const auto w = static_cast<std::ptrdiff_t>(grid.width);
    ScoreGrid tmp(grid.height, grid.width);
    for (std::ptrdiff_t y = 0; y < h; ++y)
        for (std::ptrdiff_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::ptrdiff_t i = -radius; i <= radius; ++i)
                acc += taps[static_cast<std::size_t>(i + radius)] * grid.values[y * w + reflect_index(x + i, w)];
            tmp.values[y * w + x] = acc;
        }
    ScoreGrid out(grid.height, grid.width);
    for (std::ptrdiff_t y = 0; y < h; ++y)
        for (std::ptrdiff_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::ptrdiff_t i = -radius; i <= radius; ++i)
                acc += taps[static_cast<std::size_t>(i + radius)] * tmp.values[reflect_index(y + i, h) * w + x];
            out.values[y * w + x] = std::max(0.0, acc);
        }
    return out;
}

std::vector<std::size_t> top_locations(const ScoreGrid& grid, std::size_t t) {
    std::vector<std::size_t> order(grid.values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    t = std::min(t, order.size());
    // Largest value first; ties to the lowest row-major index.
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(t), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          const double va = grid.values[a];
                          const double vb = grid.values[b];
                          return va != vb ? va > vb : a < b;
                      });
    order.resize(t);
    return order;
}

namespace {

double layer_image_score(const ScoreGrid& raw, const std::vector<std::vector<double>>& nearest_by_location,
                         std::size_t top_t) {
    const auto top = top_locations(raw, top_t);
    double total = 0.0;
    for (std::size_t i : top) total += reweight_score(nearest_by_location[i]);
    return total / static_cast<double>(top.size());
}

}  // namespace

AnomalyResult score_image(const std::string& image_id, std::span<const FeatureTensor> raw_layers,
                          const SampledBank& bank, const ScorerConfig& config) {
    config.validate();
    for (const auto& t : raw_layers) t.validate();
    const auto features = bank.view().prepare(raw_layers);
    if (features.size() != bank.layers().size())
        fail(ErrorKind::validation, "test image '" + image_id + "' provides " + std::to_string(features.size()) +
                                        " feature layers, bank expects " + std::to_string(bank.layers().size()));

    AnomalyResult result;
    result.image_id = image_id;
    double weight_total = 0.0;
    ScoreGrid fused(config.output_height, config.output_width);

    for (std::size_t l = 0; l < features.size(); ++l) {
        const auto& info = bank.layers()[l];
        const auto& t = features[l];
        if (t.layer_id != info.layer_id || t.channels != info.channels || t.height != info.height ||
            t.width != info.width)
            fail(ErrorKind::validation, "test image '" + image_id + "' layer " + std::to_string(t.layer_id) +
                                            " does not match the bank's layer shape");

        LayerScore layer{info.layer_id, ScoreGrid(t.height, t.width), 0.0};
        std::vector<std::vector<double>> nearest_by_location(t.spatial_size());
        for (auto& patch : partition_patches(t, bank.grid())) {
            const auto& cell = bank.cell(l, patch.patch_index);
            const auto d = patch_nn_distances(patch.vectors, cell.keys, config.neighbors, result.comparison_count);
            for (std::size_t v = 0; v < patch.vectors.size(); ++v) {
                const auto& o = patch.origins[v];
                const std::size_t flat = o.row * t.width + o.col;
                layer.raw.values[flat] = d.minimum[v];
                const auto n = d.nearest_of(v);
                nearest_by_location[flat].assign(n.begin(), n.end());
            }
        }
        layer.image_score = layer_image_score(layer.raw, nearest_by_location, config.top_t);

        const double w = config.weight(info.layer_id);
        weight_total += w;
        result.image_score += w * layer.image_score;
        const auto upsampled = fapm::resize_bilinear(layer.raw, config.output_height, config.output_width);
        for (std::size_t i = 0; i < fused.values.size(); ++i) fused.values[i] += w * upsampled.values[i];
        result.per_layer_raw.push_back(std::move(layer));
    }
    if (!(weight_total > 0.0)) fail(ErrorKind::configuration, "layer weights sum to zero");
    result.image_score /= weight_total;
    for (auto& v : fused.values) v /= weight_total;
    result.anomaly_map = gaussian_blur(fused, config.blur_sigma);
    return result;
}

AnomalyResult baseline_score_image(const std::string& image_id, std::span<const FeatureTensor> raw_layers,
                                   const SampledBank& single_bank, const ScorerConfig& config) {
    if (single_bank.grid().patch_count() != 1)
        fail(ErrorKind::incompatible, "baseline scoring requires a single-cell (1x1) bank");
    return score_image(image_id, raw_layers, single_bank, config);
}

std::uint64_t expected_comparisons(const SampledBank& bank) {
    std::uint64_t total = 0;
    const std::size_t patches = bank.grid().patch_count();
    for (std::size_t l = 0; l < bank.layers().size(); ++l) {
        const auto& info = bank.layers()[l];
        const std::uint64_t per_patch = info.height * info.width / patches;
        for (std::size_t p = 1; p <= patches; ++p) total += per_patch * bank.cell(l, p).k();
    }
    return total;
}

}  // namespace fapm
