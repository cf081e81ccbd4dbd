#include "fapm/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include <nlohmann/json.hpp>

#include "fapm/error.hpp"

namespace fapm {

using nlohmann::json;

void SyntheticSpec::validate() const {
    if (layers.empty()) fail(ErrorKind::validation, "synthetic spec needs at least one layer");
    if (grid_rows == 0 || grid_cols == 0) fail(ErrorKind::validation, "synthetic grid must be positive");
    for (const auto& l : layers) {
        if (l.channels == 0 || l.height == 0 || l.width == 0)
            fail(ErrorKind::validation, "synthetic layer " + std::to_string(l.layer_id) + " has a zero extent");
        if (l.height % grid_rows || l.width % grid_cols)
            fail(ErrorKind::grid_mismatch, "synthetic layer " + std::to_string(l.layer_id) + " is not divisible by the grid");
    }
    if (train_count == 0) fail(ErrorKind::validation, "synthetic spec needs at least one train image");
    if (min_modes == 0 || max_modes < min_modes) fail(ErrorKind::validation, "mode range must satisfy 1 <= min <= max");
    const std::size_t patches = grid_rows * grid_cols;
    if (!modes_per_patch.empty()) {
        if (modes_per_patch.size() != patches)
            fail(ErrorKind::validation, "modes_per_patch must list one count per patch");
        for (auto m : modes_per_patch)
            if (m == 0) fail(ErrorKind::validation, "modes_per_patch entries must be positive");
    }
    for (auto p : plant_patches)
        if (p == 0 || p > patches)
            fail(ErrorKind::validation, "planted patch index " + std::to_string(p) + " lies outside the grid");
    if (!(mode_spread >= 0.0) || !(mode_separation >= 0.0) || !(plant_offset >= 0.0))
        fail(ErrorKind::validation, "spreads and offsets must be non-negative");
    if (mask_height % grid_rows || mask_width % grid_cols || mask_height == 0 || mask_width == 0)
        fail(ErrorKind::validation, "mask size must be a positive multiple of the grid");
}

SyntheticSpec synthetic_spec_from_json(const json& doc) {
    SyntheticSpec s;
    try {
        if (doc.contains("layers")) {
            s.layers.clear();
            for (const auto& l : doc["layers"])
                s.layers.push_back({l.at("layer_id").get<int>(), l.at("channels").get<std::size_t>(),
                                    l.at("height").get<std::size_t>(), l.at("width").get<std::size_t>()});
        }
        if (doc.contains("grid")) {
            s.grid_rows = doc["grid"].at(0).get<std::size_t>();
            s.grid_cols = doc["grid"].at(1).get<std::size_t>();
        }
        s.train_count = doc.value("train_count", s.train_count);
        s.test_normal_count = doc.value("test_normal_count", s.test_normal_count);
        s.test_anomalous_count = doc.value("test_anomalous_count", s.test_anomalous_count);
        s.min_modes = doc.value("min_modes", s.min_modes);
        s.max_modes = doc.value("max_modes", s.max_modes);
        s.modes_per_patch = doc.value("modes_per_patch", s.modes_per_patch);
        if (doc.contains("mode_assignment")) {
            const auto a = doc["mode_assignment"].get<std::string>();
            if (a == "per_image") s.mode_assignment = ModeAssignment::per_image;
            else if (a == "per_patch") s.mode_assignment = ModeAssignment::per_patch;
            else fail(ErrorKind::validation, "mode_assignment must be per_image or per_patch, got '" + a + "'");
        }
        s.mode_spread = doc.value("mode_spread", s.mode_spread);
        s.mode_separation = doc.value("mode_separation", s.mode_separation);
        s.plant_patches = doc.value("plant_patches", s.plant_patches);
        s.plant_offset = doc.value("plant_offset", s.plant_offset);
        if (doc.contains("mask_size")) {
            s.mask_height = doc["mask_size"].at(0).get<std::size_t>();
            s.mask_width = doc["mask_size"].at(1).get<std::size_t>();
        }
        s.rng_seed = doc.value("rng_seed", s.rng_seed);
    } catch (const json::exception& e) {
        fail(ErrorKind::format, std::string("synthetic spec: ") + e.what());
    }
    s.validate();
    return s;
}

json to_json(const SyntheticSpec& s) {
    json layers = json::array();
    for (const auto& l : s.layers)
        layers.push_back({{"layer_id", l.layer_id}, {"channels", l.channels}, {"height", l.height}, {"width", l.width}});
    return {{"layers", layers},
            {"grid", {s.grid_rows, s.grid_cols}},
            {"train_count", s.train_count},
            {"test_normal_count", s.test_normal_count},
            {"test_anomalous_count", s.test_anomalous_count},
            {"min_modes", s.min_modes},
            {"max_modes", s.max_modes},
            {"modes_per_patch", s.modes_per_patch},
            {"mode_assignment", s.mode_assignment == ModeAssignment::per_image ? "per_image" : "per_patch"},
            {"mode_spread", s.mode_spread},
            {"mode_separation", s.mode_separation},
            {"plant_patches", s.plant_patches},
            {"plant_offset", s.plant_offset},
            {"mask_size", {s.mask_height, s.mask_width}},
            {"rng_seed", s.rng_seed}};
}

namespace {

// Mode centres for every (layer, patch, mode), fixed for the whole dataset.
struct MixtureModel {
    std::vector<std::size_t> modes;                 // per patch
    std::vector<std::vector<std::vector<float>>> centres;  // [layer][patch * max_modes + mode] -> vector
};

MixtureModel make_model(const SyntheticSpec& spec, std::mt19937_64& rng) {
    const std::size_t patches = spec.grid_rows * spec.grid_cols;
    MixtureModel model;
    if (!spec.modes_per_patch.empty()) {
        model.modes = spec.modes_per_patch;
    } else {
        std::uniform_int_distribution<std::size_t> pick(spec.min_modes, spec.max_modes);
        for (std::size_t p = 0; p < patches; ++p) model.modes.push_back(pick(rng));
    }
    std::size_t most = 0;
    for (auto m : model.modes) most = std::max(most, m);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (const auto& layer : spec.layers) {
        std::vector<std::vector<float>> centres(patches * most, std::vector<float>(layer.channels, 0.0f));
        for (auto& c : centres)
            for (auto& v : c) v = static_cast<float>(spec.mode_separation * gauss(rng));
        model.centres.push_back(std::move(centres));
    }
    return model;
}

std::size_t max_modes_of(const MixtureModel& m) {
    std::size_t most = 0;
    for (auto x : m.modes) most = std::max(most, x);
    return most;
}

std::vector<FeatureTensor> draw_image(const SyntheticSpec& spec, const MixtureModel& model,
                                      const std::vector<std::size_t>& planted, std::mt19937_64& rng) {
    const std::size_t patches = spec.grid_rows * spec.grid_cols;
    const std::size_t stride = max_modes_of(model);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<std::size_t> mode_of_patch(patches);
    if (spec.mode_assignment == ModeAssignment::per_image) {
        const std::size_t variant = std::uniform_int_distribution<std::size_t>(0, stride - 1)(rng);
        for (std::size_t p = 0; p < patches; ++p) mode_of_patch[p] = variant % model.modes[p];
    } else {
        for (std::size_t p = 0; p < patches; ++p)
            mode_of_patch[p] = std::uniform_int_distribution<std::size_t>(0, model.modes[p] - 1)(rng);
    }

    std::vector<FeatureTensor> tensors;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& shape = spec.layers[l];
        FeatureTensor t(shape.layer_id, shape.channels, shape.height, shape.width);
        // One random unit direction per planted patch and layer.
        std::vector<std::vector<double>> offsets(patches);
        for (std::size_t p : planted) {
            std::vector<double> dir(shape.channels);
            double norm = 0.0;
            for (auto& v : dir) {
                v = gauss(rng);
                norm += v * v;
            }
            norm = std::sqrt(norm);
            for (auto& v : dir) v = norm > 0.0 ? spec.plant_offset * v / norm : 0.0;
            offsets[p - 1] = std::move(dir);
        }
        const std::size_t ph = shape.height / spec.grid_rows;
        const std::size_t pw = shape.width / spec.grid_cols;
        for (std::size_t h = 0; h < shape.height; ++h)
            for (std::size_t w = 0; w < shape.width; ++w) {
                const std::size_t p = (h / ph) * spec.grid_cols + w / pw;
                const auto& centre = model.centres[l][p * stride + mode_of_patch[p]];
                for (std::size_t c = 0; c < shape.channels; ++c) {
                    double v = centre[c] + spec.mode_spread * gauss(rng);
                    if (!offsets[p].empty()) v += offsets[p][c];
                    t.at(c, h, w) = static_cast<float>(v);
                }
            }
        tensors.push_back(std::move(t));
    }
    return tensors;
}

std::string image_name(const char* prefix, std::size_t i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%04zu", prefix, i);
    return buf;
}

ManifestEntry write_entry(const std::filesystem::path& dir, const std::string& id,
                          const std::vector<FeatureTensor>& tensors) {
    ManifestEntry entry;
    entry.image_id = id;
    for (const auto& t : tensors) {
        const auto path = dir / (id + "_L" + std::to_string(t.layer_id) + ".npy");
        write_tensor(t, path);
        entry.tensors[t.layer_id] = path;
    }
    return entry;
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir) {
    spec.validate();
    const auto root = std::filesystem::absolute(out_dir);
    for (const char* sub : {"train", "test", "masks"}) std::filesystem::create_directories(root / sub);

    std::mt19937_64 rng(spec.rng_seed);
    const MixtureModel model = make_model(spec, rng);
    const std::size_t patches = spec.grid_rows * spec.grid_cols;

    SyntheticDataset ds;
    ds.train.split = Split::train;
    ds.test.split = Split::test;
    for (const auto& l : spec.layers) {
        ds.train.layers.push_back(l.layer_id);
        ds.test.layers.push_back(l.layer_id);
    }

    for (std::size_t i = 0; i < spec.train_count; ++i) {
        auto entry = write_entry(root / "train", image_name("train", i), draw_image(spec, model, {}, rng));
        entry.label = Label::normal;
        ds.train.entries.push_back(std::move(entry));
    }
    for (std::size_t i = 0; i < spec.test_normal_count; ++i) {
        auto entry = write_entry(root / "test", image_name("good", i), draw_image(spec, model, {}, rng));
        entry.label = Label::normal;
        ds.test.entries.push_back(std::move(entry));
    }
    const std::size_t mh = spec.mask_height / spec.grid_rows;
    const std::size_t mw = spec.mask_width / spec.grid_cols;
    for (std::size_t i = 0; i < spec.test_anomalous_count; ++i) {
        std::vector<std::size_t> planted = spec.plant_patches;
        if (planted.empty()) planted.push_back(std::uniform_int_distribution<std::size_t>(1, patches)(rng));
        const std::string id = image_name("defect", i);
        auto entry = write_entry(root / "test", id, draw_image(spec, model, planted, rng));
        entry.label = Label::anomalous;

        Mask mask{spec.mask_height, spec.mask_width, std::vector<float>(spec.mask_height * spec.mask_width, 0.0f)};
        for (std::size_t p : planted) {
            const std::size_t r0 = ((p - 1) / spec.grid_cols) * mh;
            const std::size_t c0 = ((p - 1) % spec.grid_cols) * mw;
            for (std::size_t r = r0; r < r0 + mh; ++r)
                for (std::size_t c = c0; c < c0 + mw; ++c) mask.values[r * spec.mask_width + c] = 1.0f;
        }
        const auto mask_path = root / "masks" / (id + ".npy");
        write_mask(mask, mask_path);
        entry.mask = mask_path;
        ds.test.entries.push_back(std::move(entry));
    }

    ds.train_manifest = root / "train.json";
    ds.test_manifest = root / "test.json";
    save_manifest(ds.train, ds.train_manifest);
    save_manifest(ds.test, ds.test_manifest);
    return ds;
}

}  // namespace fapm
