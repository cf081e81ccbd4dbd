#include "fapm/memory_bank.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "fapm/error.hpp"
#include "fapm/grid_ops.hpp"
#include "fapm/npy.hpp"
#include "fapm/parallel.hpp"

namespace fapm {

using nlohmann::json;

void PatchGrid::validate() const {
    if (rows == 0 || cols == 0) fail(ErrorKind::validation, "patch grid must have positive rows and cols");
}

void PatchGrid::check_divides(std::size_t height, std::size_t width, int layer_id) const {
    validate();
    if (height % rows != 0 || width % cols != 0)
        fail(ErrorKind::grid_mismatch, std::to_string(rows) + "x" + std::to_string(cols) +
                                           " grid does not evenly divide the " + std::to_string(height) + "x" +
                                           std::to_string(width) + " map of layer " + std::to_string(layer_id));
}

std::size_t PatchGrid::patch_of(std::size_t row, std::size_t col, std::size_t height, std::size_t width) const noexcept {
    return (row / (height / rows)) * cols + col / (width / cols) + 1;
}

VectorSet::VectorSet(std::size_t dim, std::vector<float> data) : dim_(dim), data_(std::move(data)) {
    if (dim_ == 0 || data_.size() % dim_ != 0)
        fail(ErrorKind::validation, "vector data length is not a multiple of the dimension");
}

void VectorSet::push_back(std::span<const float> v) {
    if (v.size() != dim_)
        fail(ErrorKind::validation, "vector of length " + std::to_string(v.size()) + " appended to a set of dimension " +
                                        std::to_string(dim_));
    data_.insert(data_.end(), v.begin(), v.end());
}

std::vector<PatchVectors> partition_patches(const FeatureTensor& tensor, const PatchGrid& grid) {
    grid.check_divides(tensor.height, tensor.width, tensor.layer_id);
    const std::size_t per_patch = tensor.spatial_size() / grid.patch_count();
    std::vector<PatchVectors> patches(grid.patch_count());
    for (std::size_t p = 0; p < patches.size(); ++p) {
        patches[p].patch_index = p + 1;
        patches[p].vectors = VectorSet(tensor.channels);
        patches[p].vectors.reserve(per_patch);
        patches[p].origins.reserve(per_patch);
    }
    std::vector<float> column(tensor.channels);
    for (std::size_t h = 0; h < tensor.height; ++h) {
        for (std::size_t w = 0; w < tensor.width; ++w) {
            for (std::size_t c = 0; c < tensor.channels; ++c) column[c] = tensor.at(c, h, w);
            auto& patch = patches[grid.patch_of(h, w, tensor.height, tensor.width) - 1];
            patch.vectors.push_back(column);
            patch.origins.push_back({static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(w)});
        }
    }
    return patches;
}

FeatureTensor aggregate_neighborhood(const FeatureTensor& tensor, const NeighborhoodSpec& spec) {
    if (!spec.enabled || spec.kernel <= 1) return tensor;
    if (spec.kernel % 2 == 0) fail(ErrorKind::validation, "neighbourhood kernel must be odd");
    const auto radius = static_cast<std::ptrdiff_t>(spec.kernel / 2);
    const auto h = static_cast<std::ptrdiff_t>(tensor.height);
    const auto w = static_cast<std::ptrdiff_t>(tensor.width);
    const double norm = 1.0 / static_cast<double>(spec.kernel * spec.kernel);

    FeatureTensor out(tensor.layer_id, tensor.channels, tensor.height, tensor.width);
    std::vector<double> rows(tensor.spatial_size());
    for (std::size_t c = 0; c < tensor.channels; ++c) {
        const auto src = tensor.channel(c);
        for (std::ptrdiff_t y = 0; y < h; ++y)
            for (std::ptrdiff_t x = 0; x < w; ++x) {
                double acc = 0.0;
                for (std::ptrdiff_t dx = -radius; dx <= radius; ++dx) acc += src[y * w + reflect_index(x + dx, w)];
                rows[y * w + x] = acc;
            }
        for (std::ptrdiff_t y = 0; y < h; ++y)
            for (std::ptrdiff_t x = 0; x < w; ++x) {
                double acc = 0.0;
                for (std::ptrdiff_t dy = -radius; dy <= radius; ++dy) acc += rows[reflect_index(y + dy, h) * w + x];
                out.at(c, y, x) = static_cast<float>(acc * norm);
            }
    }
    return out;
}

FeatureTensor concatenate_layers(std::span<const FeatureTensor> layers) {
    if (layers.empty()) fail(ErrorKind::validation, "no layers to concatenate");
    std::size_t height = 0, width = 0, channels = 0;
    for (const auto& t : layers) {
        if (t.spatial_size() > height * width) {
            height = t.height;
            width = t.width;
        }
        channels += t.channels;
    }
    FeatureTensor out(layers.front().layer_id, channels, height, width);
    std::size_t offset = 0;
    for (const auto& t : layers) {
        for (std::size_t c = 0; c < t.channels; ++c) {
            auto resized = resize_bilinear<float>(t.channel(c), t.height, t.width, height, width);
            std::copy(resized.begin(), resized.end(), out.data.begin() + static_cast<std::ptrdiff_t>((offset + c) * height * width));
        }
        offset += t.channels;
    }
    return out;
}

std::vector<FeatureTensor> FeatureView::prepare(std::span<const FeatureTensor> raw) const {
    std::vector<FeatureTensor> out;
    out.reserve(raw.size());
    for (const auto& t : raw) out.push_back(aggregate_neighborhood(t, aggregation));
    if (!layer_wise && out.size() > 1) {
        FeatureTensor merged = concatenate_layers(out);
        out.clear();
        out.push_back(std::move(merged));
    }
    return out;
}

MemoryBank::MemoryBank(PatchGrid grid, FeatureView view, std::vector<LayerInfo> layers,
                       std::vector<std::string> image_ids, std::vector<PatchCell> cells)
    : grid_(grid), view_(view), layers_(std::move(layers)), image_ids_(std::move(image_ids)), cells_(std::move(cells)) {
    if (cells_.size() != layers_.size() * grid_.patch_count())
        fail(ErrorKind::validation, "memory bank needs exactly one cell per (layer, patch)");
}

const PatchCell& MemoryBank::cell(int layer_id, std::size_t patch_index) const {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        if (layers_[l].layer_id != layer_id) continue;
        if (patch_index == 0 || patch_index > grid_.patch_count()) break;
        return cells_[l * grid_.patch_count() + patch_index - 1];
    }
    fail(ErrorKind::validation, "no cell for layer " + std::to_string(layer_id) + " patch " + std::to_string(patch_index));
}

std::size_t MemoryBank::layer_vector_count(int layer_id) const {
    std::size_t total = 0;
    for (const auto& c : cells_)
        if (c.layer_id == layer_id) total += c.vectors.size();
    return total;
}

namespace {

std::vector<LayerInfo> describe(const std::vector<FeatureTensor>& tensors) {
    std::vector<LayerInfo> info;
    for (const auto& t : tensors) info.push_back({t.layer_id, t.channels, t.height, t.width});
    return info;
}

}  // namespace

MemoryBank build_memory(std::vector<std::string> image_ids, std::vector<std::vector<FeatureTensor>> images,
                        const PatchGrid& grid, const FeatureView& view) {
    grid.validate();
    if (image_ids.size() != images.size()) fail(ErrorKind::validation, "image id count does not match image count");
    if (images.empty()) fail(ErrorKind::validation, "cannot build a memory bank from zero images");

    std::vector<std::size_t> order(images.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return image_ids[a] < image_ids[b]; });
    for (std::size_t i = 1; i < order.size(); ++i)
        if (image_ids[order[i]] == image_ids[order[i - 1]])
            fail(ErrorKind::validation, "duplicate image id '" + image_ids[order[i]] + "'");

    std::vector<LayerInfo> raw_shape;
    for (const auto& t : images[order.front()]) raw_shape.push_back({t.layer_id, t.channels, t.height, t.width});

    std::vector<LayerInfo> layers;
    std::vector<PatchCell> cells;
    std::vector<std::string> sorted_ids;
    sorted_ids.reserve(order.size());
    for (std::size_t i : order) sorted_ids.push_back(image_ids[i]);

    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        auto& raw = images[order[rank]];
        std::vector<LayerInfo> shape;
        for (const auto& t : raw) {
            t.validate();
            shape.push_back({t.layer_id, t.channels, t.height, t.width});
        }
        if (shape != raw_shape)
            fail(ErrorKind::validation, "image '" + sorted_ids[rank] + "' has layer shapes inconsistent with the others");

        const auto prepared = view.prepare(raw);
        raw.clear();
        raw.shrink_to_fit();
        if (rank == 0) {
            layers = describe(prepared);
            for (const auto& info : layers) {
                grid.check_divides(info.height, info.width, info.layer_id);
                const std::size_t per_cell = info.height * info.width / grid.patch_count() * order.size();
                for (std::size_t p = 1; p <= grid.patch_count(); ++p) {
                    PatchCell cell{info.layer_id, p, VectorSet(info.channels), {}};
                    cell.vectors.reserve(per_cell);
                    cell.origins.reserve(per_cell);
                    cells.push_back(std::move(cell));
                }
            }
        }
        for (std::size_t l = 0; l < prepared.size(); ++l) {
            auto patches = partition_patches(prepared[l], grid);
            for (auto& patch : patches) {
                auto& cell = cells[l * grid.patch_count() + patch.patch_index - 1];
                for (std::size_t v = 0; v < patch.vectors.size(); ++v) {
                    cell.vectors.push_back(patch.vectors[v]);
                    cell.origins.push_back({static_cast<std::uint32_t>(rank), patch.origins[v]});
                }
            }
        }
    }
    return MemoryBank(grid, view, std::move(layers), std::move(sorted_ids), std::move(cells));
}

MemoryBank build_memory(const DatasetManifest& manifest, const PatchGrid& grid, const FeatureView& view,
                        std::size_t threads) {
    manifest.validate();
    if (manifest.split != Split::train) fail(ErrorKind::validation, "memory banks are built from the train split");
    std::vector<std::string> ids;
    for (const auto& e : manifest.entries) ids.push_back(e.image_id);
    std::vector<std::vector<FeatureTensor>> images(manifest.entries.size());
    parallel_for(images.size(), threads,
                 [&](std::size_t i) { images[i] = load_entry_tensors(manifest, manifest.entries[i]); });
    return build_memory(std::move(ids), std::move(images), grid, view);
}

std::string cell_file_stem(int layer_id, std::size_t patch_index) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "L%d_P%03zu", layer_id, patch_index);
    return buf;
}

namespace {

json layers_to_json(const std::vector<LayerInfo>& layers) {
    json out = json::array();
    for (const auto& l : layers)
        out.push_back({{"layer_id", l.layer_id}, {"channels", l.channels}, {"height", l.height}, {"width", l.width}});
    return out;
}

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        fail(ErrorKind::format, path.string() + ": " + e.what());
    }
}

}  // namespace

void save_memory_bank(const MemoryBank& bank, const std::filesystem::path& dir, const std::string& config_hash) {
    std::filesystem::create_directories(dir / "cells");
    json header;
    header["format"] = "fapm-memory-bank";
    header["version"] = 1;
    header["grid"] = {bank.grid().rows, bank.grid().cols};
    header["layers"] = layers_to_json(bank.layers());
    header["image_count"] = bank.image_count();
    header["image_ids"] = bank.image_ids();
    header["aggregation"] = bank.view().aggregation.enabled;
    header["aggregation_kernel"] = bank.view().aggregation.kernel;
    header["layer_wise"] = bank.view().layer_wise;
    header["config_hash"] = config_hash;
    {
        std::ofstream out(dir / "bank.json", std::ios::trunc);
        if (!out) fail(ErrorKind::io, "cannot write " + (dir / "bank.json").string());
        out << header.dump(2) << '\n';
    }
    for (const auto& cell : bank.cells()) {
        const std::array<std::size_t, 2> shape{cell.vectors.size(), cell.vectors.dim()};
        npy::write(dir / "cells" / (cell_file_stem(cell.layer_id, cell.patch_index) + ".npy"), shape,
                   cell.vectors.data());
    }
}

std::string memory_bank_config_hash(const std::filesystem::path& dir) {
    return read_json(dir / "bank.json").value("config_hash", "");
}

MemoryBank load_memory_bank(const std::filesystem::path& dir) {
    const json header = read_json(dir / "bank.json");
    try {
        if (header.at("format") != "fapm-memory-bank") fail(ErrorKind::format, dir.string() + " is not a memory bank");
        PatchGrid grid{header.at("grid").at(0).get<std::size_t>(), header.at("grid").at(1).get<std::size_t>()};
        FeatureView view;
        view.aggregation.enabled = header.at("aggregation").get<bool>();
        view.aggregation.kernel = header.value("aggregation_kernel", std::size_t{3});
        view.layer_wise = header.at("layer_wise").get<bool>();
        std::vector<LayerInfo> layers;
        for (const auto& l : header.at("layers"))
            layers.push_back({l.at("layer_id").get<int>(), l.at("channels").get<std::size_t>(),
                              l.at("height").get<std::size_t>(), l.at("width").get<std::size_t>()});
        auto ids = header.at("image_ids").get<std::vector<std::string>>();

        std::vector<PatchCell> cells;
        for (const auto& info : layers) {
            // Cells hold images in bank order, each contributing its patch's
            // locations in row-major order, so origins are reconstructible.
            FeatureTensor probe(info.layer_id, 1, info.height, info.width);
            const auto layout = partition_patches(probe, grid);
            for (std::size_t p = 1; p <= grid.patch_count(); ++p) {
                const auto path = dir / "cells" / (cell_file_stem(info.layer_id, p) + ".npy");
                auto array = npy::read(path);
                const auto& slots = layout[p - 1].origins;
                if (array.shape.size() != 2 || array.shape[1] != info.channels ||
                    array.shape[0] != slots.size() * ids.size())
                    fail(ErrorKind::format, path.string() + ": cell shape disagrees with bank.json");
                PatchCell cell{info.layer_id, p, VectorSet(info.channels, std::move(array.data)), {}};
                cell.origins.reserve(cell.vectors.size());
                for (std::size_t img = 0; img < ids.size(); ++img)
                    for (const auto& s : slots) cell.origins.push_back({static_cast<std::uint32_t>(img), s});
                cells.push_back(std::move(cell));
            }
        }
        return MemoryBank(grid, view, std::move(layers), std::move(ids), std::move(cells));
    } catch (const json::exception& e) {
        fail(ErrorKind::format, (dir / "bank.json").string() + ": " + e.what());
    }
}

}  // namespace fapm
