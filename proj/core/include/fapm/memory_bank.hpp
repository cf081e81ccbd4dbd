#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fapm/feature_tensor.hpp"
#include "fapm/manifest.hpp"

namespace fapm {

/// Row-major grid of patches over every layer's feature map. Patch indices
/// run 1..rows*cols, row-major.
struct PatchGrid {
    std::size_t rows = 7;
    std::size_t cols = 7;

    std::size_t patch_count() const noexcept { return rows * cols; }
    void validate() const;
    /// Throws ErrorKind::grid_mismatch unless the grid evenly divides h x w.
    void check_divides(std::size_t height, std::size_t width, int layer_id) const;
    std::size_t patch_of(std::size_t row, std::size_t col, std::size_t height, std::size_t width) const noexcept;

    friend bool operator==(const PatchGrid&, const PatchGrid&) = default;
};

/// Dense row-major set of equal-length vectors.
class VectorSet {
public:
    VectorSet() = default;
    explicit VectorSet(std::size_t dim) : dim_(dim) {}
    VectorSet(std::size_t dim, std::vector<float> data);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return dim_ == 0 ? 0 : data_.size() / dim_; }
    bool empty() const noexcept { return data_.empty(); }

    std::span<const float> operator[](std::size_t i) const {
        return std::span<const float>(data_).subspan(i * dim_, dim_);
    }
    void push_back(std::span<const float> v);
    void reserve(std::size_t n) { data_.reserve(n * dim_); }

    const std::vector<float>& data() const noexcept { return data_; }

    friend bool operator==(const VectorSet&, const VectorSet&) = default;

private:
    std::size_t dim_ = 0;
    std::vector<float> data_;
};

struct SpatialOrigin {
    std::uint32_t row = 0;
    std::uint32_t col = 0;
    friend bool operator==(const SpatialOrigin&, const SpatialOrigin&) = default;
};

struct PatchVectors {
    std::size_t patch_index = 0;
    VectorSet vectors;
    std::vector<SpatialOrigin> origins;
};

/// Splits a feature map into grid patches. Each spatial location contributes
/// one channel-length vector; within a patch vectors keep row-major order.
std::vector<PatchVectors> partition_patches(const FeatureTensor& tensor, const PatchGrid& grid);

/// Optional local smoothing applied to every layer before patching.
struct NeighborhoodSpec {
    bool enabled = true;
    std::size_t kernel = 3;

    friend bool operator==(const NeighborhoodSpec&, const NeighborhoodSpec&) = default;
};

/// Average pooling with stride 1 and symmetric-reflect padding; the identity
/// when disabled.
FeatureTensor aggregate_neighborhood(const FeatureTensor& tensor, const NeighborhoodSpec& spec);

/// Stacks all layers along channels at the resolution of the largest map,
/// bilinearly upsampling the others. The result carries the first layer's id.
FeatureTensor concatenate_layers(std::span<const FeatureTensor> layers);

/// How raw per-layer features become the vectors that are stored and searched.
struct FeatureView {
    NeighborhoodSpec aggregation;
    bool layer_wise = true;

    std::vector<FeatureTensor> prepare(std::span<const FeatureTensor> raw) const;

    friend bool operator==(const FeatureView&, const FeatureView&) = default;
};

struct LayerInfo {
    int layer_id = 0;
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    friend bool operator==(const LayerInfo&, const LayerInfo&) = default;
};

struct VectorOrigin {
    std::uint32_t image = 0;  // index into MemoryBank::image_ids
    SpatialOrigin position;
    friend bool operator==(const VectorOrigin&, const VectorOrigin&) = default;
};

struct PatchCell {
    int layer_id = 0;
    std::size_t patch_index = 0;
    VectorSet vectors;
    std::vector<VectorOrigin> origins;

    friend bool operator==(const PatchCell&, const PatchCell&) = default;
};

/// Layer-wise, patch-wise store of nominal vectors: exactly one cell per
/// (layer, patch). Immutable once built.
class MemoryBank {
public:
    MemoryBank(PatchGrid grid, FeatureView view, std::vector<LayerInfo> layers, std::vector<std::string> image_ids,
               std::vector<PatchCell> cells);

    const PatchGrid& grid() const noexcept { return grid_; }
    const FeatureView& view() const noexcept { return view_; }
    const std::vector<LayerInfo>& layers() const noexcept { return layers_; }
    const std::vector<std::string>& image_ids() const noexcept { return image_ids_; }
    std::size_t image_count() const noexcept { return image_ids_.size(); }
    const std::vector<PatchCell>& cells() const noexcept { return cells_; }

    const PatchCell& cell(int layer_id, std::size_t patch_index) const;
    std::size_t layer_vector_count(int layer_id) const;

    friend bool operator==(const MemoryBank&, const MemoryBank&) = default;

private:
    PatchGrid grid_;
    FeatureView view_;
    std::vector<LayerInfo> layers_;
    std::vector<std::string> image_ids_;
    std::vector<PatchCell> cells_;
};

/// Builds the bank from in-memory raw tensors (one vector of layers per
/// image). Images are taken in image-id order so the result does not depend
/// on input order.
MemoryBank build_memory(std::vector<std::string> image_ids, std::vector<std::vector<FeatureTensor>> images,
                        const PatchGrid& grid, const FeatureView& view);

/// Reads every train entry of the manifest and builds the bank.
MemoryBank build_memory(const DatasetManifest& manifest, const PatchGrid& grid, const FeatureView& view,
                        std::size_t threads = 1);

/// Writes bank.json plus cells/L<layer>_P<patch>.npy into `dir`.
void save_memory_bank(const MemoryBank& bank, const std::filesystem::path& dir, const std::string& config_hash);
MemoryBank load_memory_bank(const std::filesystem::path& dir);
/// Reads only the config hash recorded in bank.json.
std::string memory_bank_config_hash(const std::filesystem::path& dir);

std::string cell_file_stem(int layer_id, std::size_t patch_index);

}  // namespace fapm
