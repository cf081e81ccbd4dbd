#include "fapm/coreset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

#include "fapm/error.hpp"
#include "fapm/hash.hpp"
#include "fapm/npy.hpp"
#include "fapm/parallel.hpp"

namespace fapm {

using nlohmann::json;

namespace {

// Ratio products such as 0.1 * 70 land a few ulps above the integer.
constexpr double kCeilSlack = 1e-9;

double squared_distance(std::span<const float> a, std::span<const float> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc;
}

}  // namespace

json to_json(const SamplerConfig& c) {
    return {{"base_ratio", c.base_ratio},
            {"extent_threshold", c.extent_threshold},
            {"escalation_factor", c.escalation_factor},
            {"max_escalations", c.max_escalations},
            {"rng_seed", c.rng_seed},
            {"init_mode", c.init_mode == InitMode::first_index ? "first_index" : "seeded_random"}};
}

SamplerConfig sampler_config_from_json(const json& j) {
    SamplerConfig c;
    c.base_ratio = j.at("base_ratio").get<double>();
    c.extent_threshold = j.at("extent_threshold").get<double>();
    c.escalation_factor = j.at("escalation_factor").get<double>();
    c.max_escalations = j.at("max_escalations").get<std::size_t>();
    c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    c.init_mode = j.at("init_mode").get<std::string>() == "seeded_random" ? InitMode::seeded_random : InitMode::first_index;
    return c;
}

void SamplerConfig::validate() const {
    if (!(base_ratio > 0.0 && base_ratio <= 1.0))
        fail(ErrorKind::configuration, "base_ratio must lie in (0, 1]");
    if (!(escalation_factor > 0.0)) fail(ErrorKind::configuration, "escalation_factor must be positive");
    if (!std::isfinite(extent_threshold)) fail(ErrorKind::configuration, "extent_threshold must be finite");
}

std::size_t SamplerConfig::effective_max_escalations() const {
    std::size_t allowed = 0;
    double ratio = base_ratio;
    for (std::size_t e = 1; e <= max_escalations; ++e) {
        ratio *= escalation_factor;
        if (ratio > 1.0 + kCeilSlack) break;
        allowed = e;
    }
    return allowed;
}

std::size_t SamplerConfig::key_count(std::size_t n, std::size_t level) const {
    const double ratio = base_ratio * std::pow(escalation_factor, static_cast<double>(level));
    const double raw = std::ceil(ratio * static_cast<double>(n) - kCeilSlack);
    const auto k = raw < 1.0 ? std::size_t{1} : static_cast<std::size_t>(raw);
    return std::min(k, std::max<std::size_t>(n, 1));
}

std::string config_hash(const SamplerConfig& config) { return fnv1a_hex(to_json(config).dump()); }

CoresetSelection greedy_coreset(const VectorSet& vectors, std::size_t k, const SamplerConfig& config) {
    const std::size_t n = vectors.size();
    if (n == 0) fail(ErrorKind::validation, "greedy coreset over an empty vector set");
    if (k == 0) fail(ErrorKind::validation, "greedy coreset needs K >= 1");

    CoresetSelection result;
    if (k > n) {
        result.clamped = true;
        k = n;
    }
    std::size_t next = 0;
    if (config.init_mode == InitMode::seeded_random) {
        std::mt19937_64 rng(config.rng_seed);
        next = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }

    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    std::vector<char> selected(n, 0);
    result.indices.reserve(k);
    while (true) {
        result.indices.push_back(next);
        selected[next] = 1;
        if (result.indices.size() == k) break;
        const auto centre = vectors[next];
        double best = -1.0;
        std::size_t best_index = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (selected[i]) continue;
            nearest[i] = std::min(nearest[i], squared_distance(vectors[i], centre));
            if (nearest[i] > best) {
                best = nearest[i];
                best_index = i;
            }
        }
        next = best_index;
    }
    return result;
}

std::vector<std::size_t> assign_clusters(const VectorSet& vectors, std::span<const std::size_t> key_indices) {
    if (key_indices.empty()) fail(ErrorKind::validation, "cluster assignment needs at least one key");
    std::vector<std::size_t> assignment(vectors.size());
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_key = 0;
        for (std::size_t k = 0; k < key_indices.size(); ++k) {
            if (key_indices[k] == i) {
                best_key = k;
                break;
            }
            const double d = squared_distance(vectors[i], vectors[key_indices[k]]);
            if (d < best) {
                best = d;
                best_key = k;
            }
        }
        assignment[i] = best_key;
    }
    return assignment;
}

double extent_from_squared_distance(double squared_distance) {
    // 1 - 2/(1+e^s) == tanh(s/2); tanh saturates without overflow.
    const double d = std::tanh(0.5 * std::max(0.0, squared_distance));
    return std::min(d, std::nextafter(1.0, 0.0));
}

double cluster_extent(std::span<const float> key, const VectorSet& vectors, std::span<const std::size_t> members) {
    double farthest = 0.0;
    for (std::size_t m : members) farthest = std::max(farthest, squared_distance(key, vectors[m]));
    return extent_from_squared_distance(farthest);
}

namespace {

// Largest squared key-to-member distance over all clusters.
double max_cluster_spread(const VectorSet& vectors, std::span<const std::size_t> keys) {
    const auto assignment = assign_clusters(vectors, keys);
    std::vector<double> spread(keys.size(), 0.0);
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        const std::size_t k = assignment[i];
        spread[k] = std::max(spread[k], squared_distance(vectors[i], vectors[keys[k]]));
    }
    return *std::max_element(spread.begin(), spread.end());
}

std::uint64_t cell_seed(std::uint64_t seed, int layer_id, std::size_t patch_index) {
    std::uint64_t x = seed ^ (static_cast<std::uint64_t>(static_cast<std::uint32_t>(layer_id)) << 32) ^ patch_index;
    // splitmix64 finaliser
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

}  // namespace

SampledPatchBank adaptive_sample(const PatchCell& cell, const SamplerConfig& config) {
    config.validate();
    const std::size_t n = cell.vectors.size();
    if (n == 0) fail(ErrorKind::validation, "cannot sample an empty cell");

    SamplerConfig local = config;
    local.rng_seed = cell_seed(config.rng_seed, cell.layer_id, cell.patch_index);

    auto selection = greedy_coreset(cell.vectors, local.key_count(n, 0), local);
    const double initial = extent_from_squared_distance(max_cluster_spread(cell.vectors, selection.indices));

    SampledPatchBank out;
    out.layer_id = cell.layer_id;
    out.patch_index = cell.patch_index;
    out.d_max = initial;

    const std::size_t escalations = local.effective_max_escalations();
    double current = initial;
    for (std::size_t level = 1; level <= escalations && current > local.extent_threshold; ++level) {
        selection = greedy_coreset(cell.vectors, local.key_count(n, level), local);
        out.escalated = true;
        if (level < escalations)
            current = extent_from_squared_distance(max_cluster_spread(cell.vectors, selection.indices));
    }

    out.clamped = selection.clamped;
    out.key_indices = std::move(selection.indices);
    out.keys = VectorSet(cell.vectors.dim());
    out.keys.reserve(out.key_indices.size());
    for (std::size_t idx : out.key_indices) out.keys.push_back(cell.vectors[idx]);
    return out;
}

SampledBank::SampledBank(PatchGrid grid, FeatureView view, std::vector<LayerInfo> layers, SamplerConfig config,
                         std::vector<SampledPatchBank> cells)
    : grid_(grid), view_(view), layers_(std::move(layers)), config_(config), cells_(std::move(cells)) {
    if (cells_.size() != layers_.size() * grid_.patch_count())
        fail(ErrorKind::validation, "sampled bank needs exactly one cell per (layer, patch)");
}

std::size_t SampledBank::total_keys() const {
    std::size_t total = 0;
    for (const auto& c : cells_) total += c.k();
    return total;
}

std::size_t SampledBank::total_keys(int layer_id) const {
    std::size_t total = 0;
    for (const auto& c : cells_)
        if (c.layer_id == layer_id) total += c.k();
    return total;
}

std::size_t SampledBank::escalated_count() const {
    return static_cast<std::size_t>(std::count_if(cells_.begin(), cells_.end(), [](const auto& c) { return c.escalated; }));
}

SampledBank sample_bank(const MemoryBank& bank, const SamplerConfig& config, std::size_t threads) {
    config.validate();
    std::vector<SampledPatchBank> cells(bank.cells().size());
    parallel_for(cells.size(), threads, [&](std::size_t i) { cells[i] = adaptive_sample(bank.cells()[i], config); });
    return SampledBank(bank.grid(), bank.view(), bank.layers(), config, std::move(cells));
}

namespace {

json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        fail(ErrorKind::format, path.string() + ": " + e.what());
    }
}

void write_json(const json& doc, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write " + path.string());
    out << doc.dump(2) << '\n';
    if (!out) fail(ErrorKind::io, "failed writing " + path.string());
}

}  // namespace

void save_sampled_bank(const SampledBank& bank, const std::filesystem::path& dir, const std::string& bank_hash) {
    std::filesystem::create_directories(dir);
    const std::string hash = config_hash(bank.config());
    json index;
    index["format"] = "fapm-sampled-bank";
    index["version"] = 1;
    index["grid"] = {bank.grid().rows, bank.grid().cols};
    json layers = json::array();
    for (const auto& l : bank.layers())
        layers.push_back({{"layer_id", l.layer_id}, {"channels", l.channels}, {"height", l.height}, {"width", l.width}});
    index["layers"] = layers;
    index["aggregation"] = bank.view().aggregation.enabled;
    index["aggregation_kernel"] = bank.view().aggregation.kernel;
    index["layer_wise"] = bank.view().layer_wise;
    index["sampler"] = to_json(bank.config());
    index["config_hash"] = hash;
    index["bank_hash"] = bank_hash;
    index["total_keys"] = bank.total_keys();
    write_json(index, dir / "index.json");

    for (const auto& cell : bank.cells()) {
        const std::string stem = cell_file_stem(cell.layer_id, cell.patch_index);
        const std::array<std::size_t, 2> shape{cell.k(), cell.keys.dim()};
        npy::write(dir / (stem + ".npy"), shape, cell.keys.data());
        write_json({{"layer_id", cell.layer_id},
                    {"patch_index", cell.patch_index},
                    {"K", cell.k()},
                    {"d_max", cell.d_max},
                    {"escalated", cell.escalated},
                    {"clamped", cell.clamped},
                    {"key_indices", cell.key_indices},
                    {"config_hash", hash}},
                   dir / (stem + ".json"));
    }
}

std::string sampled_bank_config_hash(const std::filesystem::path& dir) {
    return read_json(dir / "index.json").value("config_hash", "");
}

SampledBank load_sampled_bank(const std::filesystem::path& dir) {
    const json index = read_json(dir / "index.json");
    try {
        if (index.at("format") != "fapm-sampled-bank") fail(ErrorKind::format, dir.string() + " is not a sampled bank");
        PatchGrid grid{index.at("grid").at(0).get<std::size_t>(), index.at("grid").at(1).get<std::size_t>()};
        FeatureView view;
        view.aggregation.enabled = index.at("aggregation").get<bool>();
        view.aggregation.kernel = index.value("aggregation_kernel", std::size_t{3});
        view.layer_wise = index.at("layer_wise").get<bool>();
        std::vector<LayerInfo> layers;
        for (const auto& l : index.at("layers"))
            layers.push_back({l.at("layer_id").get<int>(), l.at("channels").get<std::size_t>(),
                              l.at("height").get<std::size_t>(), l.at("width").get<std::size_t>()});
        const SamplerConfig config = sampler_config_from_json(index.at("sampler"));
        const std::string hash = index.at("config_hash").get<std::string>();

        std::vector<SampledPatchBank> cells;
        for (const auto& info : layers) {
            for (std::size_t p = 1; p <= grid.patch_count(); ++p) {
                const std::string stem = cell_file_stem(info.layer_id, p);
                const json side = read_json(dir / (stem + ".json"));
                if (side.at("config_hash").get<std::string>() != hash)
                    fail(ErrorKind::incompatible, stem + " was sampled with a different configuration");
                auto array = npy::read(dir / (stem + ".npy"));
                SampledPatchBank cell;
                cell.layer_id = info.layer_id;
                cell.patch_index = p;
                cell.key_indices = side.at("key_indices").get<std::vector<std::size_t>>();
                cell.d_max = side.at("d_max").get<double>();
                cell.escalated = side.at("escalated").get<bool>();
                cell.clamped = side.value("clamped", false);
                if (array.shape.size() != 2 || array.shape[0] != cell.key_indices.size() || array.shape[1] != info.channels)
                    fail(ErrorKind::format, (dir / (stem + ".npy")).string() + ": key matrix disagrees with sidecar");
                cell.keys = VectorSet(info.channels, std::move(array.data));
                cells.push_back(std::move(cell));
            }
        }
        return SampledBank(grid, view, std::move(layers), config, std::move(cells));
    } catch (const json::exception& e) {
        fail(ErrorKind::format, (dir / "index.json").string() + ": " + e.what());
    }
}

}  // namespace fapm
