#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace fapm {

/// One image's feature map for one backbone stage, stored channel-major
/// (C, H, W) exactly as the NPY payload.
struct FeatureTensor {
    int layer_id = 0;
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> data;

    FeatureTensor() = default;
    FeatureTensor(int layer, std::size_t c, std::size_t h, std::size_t w)
        : layer_id(layer), channels(c), height(h), width(w), data(c * h * w, 0.0f) {}
    FeatureTensor(int layer, std::size_t c, std::size_t h, std::size_t w, std::vector<float> values)
        : layer_id(layer), channels(c), height(h), width(w), data(std::move(values)) {}

    std::size_t spatial_size() const noexcept { return height * width; }

    float& at(std::size_t c, std::size_t h, std::size_t w) { return data[(c * height + h) * width + w]; }
    float at(std::size_t c, std::size_t h, std::size_t w) const { return data[(c * height + h) * width + w]; }

    std::span<const float> channel(std::size_t c) const {
        return std::span<const float>(data).subspan(c * spatial_size(), spatial_size());
    }

    /// Throws ErrorKind::validation on zero extents, length mismatch, or
    /// non-finite values.
    void validate() const;

    friend bool operator==(const FeatureTensor&, const FeatureTensor&) = default;
};

FeatureTensor read_tensor(const std::filesystem::path& path, int layer_id = 0);
void write_tensor(const FeatureTensor& tensor, const std::filesystem::path& path);

/// Binary ground-truth mask, values in {0, 1}. Accepts float32 or uint8 NPY
/// with shape (H, W) or (1, H, W); any non-zero value counts as anomalous.
struct Mask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> values;
};

Mask read_mask(const std::filesystem::path& path);
void write_mask(const Mask& mask, const std::filesystem::path& path);

}  // namespace fapm
