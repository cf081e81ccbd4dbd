#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "fapm/error.hpp"
#include "fapm/feature_tensor.hpp"
#include "fapm/manifest.hpp"
#include "fapm/npy.hpp"
#include "fapm/synthetic.hpp"
#include "test_support.hpp"

using namespace fapm;
using fapm::testing::TempDir;

namespace {

std::vector<char> slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_raw_npy(const std::filesystem::path& p, const std::string& dict, const std::vector<char>& payload) {
    std::string header = dict;
    const std::size_t total = 10 + header.size() + 1;
    header.append((64 - total % 64) % 64, ' ');
    header.push_back('\n');
    std::ofstream out(p, std::ios::binary);
    out.write("\x93NUMPY\x01\x00", 8);
    const char len[2] = {static_cast<char>(header.size() & 0xff), static_cast<char>(header.size() >> 8)};
    out.write(len, 2);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "expected an error";
    return ErrorKind::io;
}

}  // namespace

TEST(Npy, SingleZeroRoundTrip) {
    TempDir dir;
    write_tensor(FeatureTensor(2, 1, 1, 1, {0.0f}), dir / "t.npy");
    const auto t = read_tensor(dir / "t.npy", 2);
    EXPECT_EQ(t, FeatureTensor(2, 1, 1, 1, {0.0f}));
}

TEST(Npy, RandomRoundTripIsBitExact) {
    TempDir dir;
    std::mt19937_64 rng(7);
    for (auto [c, h, w] : {std::tuple{8u, 4u, 4u}, std::tuple{512u, 28u, 28u}}) {
        const auto t = fapm::testing::random_tensor(3, c, h, w, rng);
        write_tensor(t, dir / "t.npy");
        const auto back = read_tensor(dir / "t.npy", 3);
        ASSERT_EQ(back.data.size(), t.data.size());
        EXPECT_EQ(std::memcmp(back.data.data(), t.data.data(), t.data.size() * sizeof(float)), 0);
        EXPECT_EQ(back, t);
    }
}

TEST(Npy, PayloadFollowsAlignedHeader) {
    TempDir dir;
    write_tensor(FeatureTensor(0, 1, 2, 2, {1, 2, 3, 4}), dir / "t.npy");
    const auto bytes = slurp(dir / "t.npy");
    const auto header = npy::encode_header(std::array<std::size_t, 3>{1, 2, 2});
    EXPECT_EQ(header.size() % 64, 0u);
    ASSERT_EQ(bytes.size(), header.size() + 16);
    EXPECT_EQ(std::memcmp(bytes.data(), "\x93NUMPY\x01\x00", 8), 0);
    const std::string dict(bytes.begin() + 10, bytes.begin() + static_cast<std::ptrdiff_t>(header.size()));
    EXPECT_NE(dict.find("'descr': '<f4'"), std::string::npos);
    EXPECT_NE(dict.find("'fortran_order': False"), std::string::npos);
    EXPECT_NE(dict.find("'shape': (1, 2, 2)"), std::string::npos);
    EXPECT_EQ(dict.back(), '\n');
}

TEST(Npy, Float64IsUnsupported) {
    TempDir dir;
    write_raw_npy(dir / "d.npy", "{'descr': '<f8', 'fortran_order': False, 'shape': (1, 1, 1), }", std::vector<char>(8, 0));
    EXPECT_EQ(kind_of([&] { read_tensor(dir / "d.npy"); }), ErrorKind::unsupported_encoding);
}

TEST(Npy, FortranOrderIsUnsupported) {
    TempDir dir;
    write_raw_npy(dir / "f.npy", "{'descr': '<f4', 'fortran_order': True, 'shape': (1, 1, 1), }", std::vector<char>(4, 0));
    EXPECT_EQ(kind_of([&] { read_tensor(dir / "f.npy"); }), ErrorKind::unsupported_encoding);
}

TEST(Npy, TwoDimensionalTensorIsUnsupported) {
    TempDir dir;
    write_raw_npy(dir / "m.npy", "{'descr': '<f4', 'fortran_order': False, 'shape': (2, 2), }", std::vector<char>(16, 0));
    EXPECT_EQ(kind_of([&] { read_tensor(dir / "m.npy"); }), ErrorKind::unsupported_encoding);
}

TEST(Npy, MalformedInputsAreFormatErrors) {
    TempDir dir;
    {
        std::ofstream out(dir / "junk.npy", std::ios::binary);
        out << "not an npy file at all";
    }
    EXPECT_EQ(kind_of([&] { read_tensor(dir / "junk.npy"); }), ErrorKind::format);
    write_raw_npy(dir / "short.npy", "{'descr': '<f4', 'fortran_order': False, 'shape': (1, 2, 2), }", std::vector<char>(12, 0));
    EXPECT_EQ(kind_of([&] { read_tensor(dir / "short.npy"); }), ErrorKind::format);
    write_raw_npy(dir / "noshape.npy", "{'descr': '<f4', 'fortran_order': False, }", {});
    EXPECT_EQ(kind_of([&] { read_tensor(dir / "noshape.npy"); }), ErrorKind::format);
}

TEST(Npy, NonFiniteValuesAreRejectedOnRead) {
    TempDir dir;
    std::vector<char> payload(8);
    const float values[2] = {1.0f, std::numeric_limits<float>::quiet_NaN()};
    std::memcpy(payload.data(), values, 8);
    write_raw_npy(dir / "nan.npy", "{'descr': '<f4', 'fortran_order': False, 'shape': (2, 1, 1), }", payload);
    EXPECT_EQ(kind_of([&] { read_tensor(dir / "nan.npy"); }), ErrorKind::validation);
}

TEST(Npy, InvalidTensorsAreNotWritten) {
    TempDir dir;
    EXPECT_EQ(kind_of([&] { write_tensor(FeatureTensor(0, 0, 2, 2, {}), dir / "z.npy"); }), ErrorKind::validation);
    EXPECT_FALSE(std::filesystem::exists(dir / "z.npy"));
    EXPECT_EQ(kind_of([&] { write_tensor(FeatureTensor(0, 1, 1, 1, {INFINITY}), dir / "i.npy"); }), ErrorKind::validation);
    EXPECT_EQ(kind_of([&] { write_tensor(FeatureTensor(0, 1, 1, 1, {}), dir / "io.npy"); }), ErrorKind::validation);
}

TEST(Npy, WriteToMissingDirectoryIsIoError) {
    TempDir dir;
    EXPECT_EQ(kind_of([&] { write_tensor(FeatureTensor(0, 1, 1, 1, {1.0f}), dir / "nope" / "t.npy"); }), ErrorKind::io);
}

TEST(Mask, ReadsUint8AndFloatMasks) {
    TempDir dir;
    write_raw_npy(dir / "u8.npy", "{'descr': '|u1', 'fortran_order': False, 'shape': (2, 2), }", {0, 1, 0, 5});
    const auto m = read_mask(dir / "u8.npy");
    EXPECT_EQ(m.height, 2u);
    EXPECT_EQ(m.values, (std::vector<float>{0, 1, 0, 1}));
    write_mask(Mask{1, 3, {0, 1, 1}}, dir / "f.npy");
    EXPECT_EQ(read_mask(dir / "f.npy").values, (std::vector<float>{0, 1, 1}));
}

namespace {

DatasetManifest tiny_manifest(const TempDir& dir) {
    DatasetManifest m;
    m.split = Split::test;
    m.layers = {2, 3};
    for (int i = 0; i < 2; ++i) {
        ManifestEntry e;
        e.image_id = "img" + std::to_string(i);
        e.tensors[2] = dir.path() / ("a" + std::to_string(i) + ".npy");
        e.tensors[3] = dir.path() / ("b" + std::to_string(i) + ".npy");
        e.label = i ? Label::anomalous : Label::normal;
        if (i) e.mask = dir.path() / "mask.npy";
        m.entries.push_back(e);
    }
    return m;
}

}  // namespace

TEST(Manifest, SaveLoadStoresRelativePathsAndResolvesThem) {
    TempDir dir;
    const auto m = tiny_manifest(dir);
    save_manifest(m, dir / "test.json");
    std::ifstream in(dir / "test.json");
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    EXPECT_NE(text.find("\"a0.npy\""), std::string::npos);
    EXPECT_EQ(text.find(dir.path().string()), std::string::npos);

    const auto back = load_manifest(dir / "test.json");
    EXPECT_EQ(back.split, Split::test);
    EXPECT_EQ(back.layers, m.layers);
    ASSERT_EQ(back.entries.size(), 2u);
    EXPECT_EQ(back.entries[1].tensors.at(3), m.entries[1].tensors.at(3));
    EXPECT_EQ(back.entries[1].mask, m.entries[1].mask);
    EXPECT_FALSE(back.entries[0].mask.has_value());
    EXPECT_EQ(back.entries[1].label, Label::anomalous);
}

TEST(Manifest, RejectsInconsistentLayerSets) {
    TempDir dir;
    auto m = tiny_manifest(dir);
    m.entries[1].tensors.erase(3);
    EXPECT_EQ(kind_of([&] { m.validate(); }), ErrorKind::validation);
    std::ofstream(dir / "bad.json") << R"({"split":"test","layers":[2,3],"entries":[{"image_id":"x","tensors":{"2":"a.npy"},"label":"normal","mask":null}]})";
    EXPECT_EQ(kind_of([&] { load_manifest(dir / "bad.json"); }), ErrorKind::validation);
}

TEST(Manifest, TrainSplitRejectsAnomalousEntries) {
    TempDir dir;
    auto m = tiny_manifest(dir);
    m.split = Split::train;
    EXPECT_EQ(kind_of([&] { m.validate(); }), ErrorKind::validation);
}

TEST(Manifest, RejectsDuplicateIdsAndMalformedJson) {
    TempDir dir;
    auto m = tiny_manifest(dir);
    m.entries[1].image_id = m.entries[0].image_id;
    EXPECT_EQ(kind_of([&] { m.validate(); }), ErrorKind::validation);
    std::ofstream(dir / "broken.json") << "{\"split\": ";
    EXPECT_EQ(kind_of([&] { load_manifest(dir / "broken.json"); }), ErrorKind::format);
}

namespace {

SyntheticSpec small_spec() {
    SyntheticSpec s;
    s.layers = {{2, 4, 8, 8}, {3, 6, 4, 4}};
    s.grid_rows = 2;
    s.grid_cols = 2;
    s.train_count = 3;
    s.test_normal_count = 2;
    s.test_anomalous_count = 2;
    s.mask_height = 16;
    s.mask_width = 16;
    s.rng_seed = 99;
    return s;
}

}  // namespace

TEST(Synthetic, SameSeedGivesByteIdenticalOutputs) {
    TempDir a, b;
    const auto da = generate_synthetic(small_spec(), a.path());
    const auto db = generate_synthetic(small_spec(), b.path());
    ASSERT_EQ(da.test.entries.size(), 4u);
    for (std::size_t i = 0; i < da.test.entries.size(); ++i) {
        for (int layer : {2, 3})
            EXPECT_EQ(slurp(da.test.entries[i].tensors.at(layer)), slurp(db.test.entries[i].tensors.at(layer)));
        if (da.test.entries[i].mask) EXPECT_EQ(slurp(*da.test.entries[i].mask), slurp(*db.test.entries[i].mask));
    }
    EXPECT_EQ(slurp(a / "train.json"), slurp(b / "train.json"));
    EXPECT_EQ(slurp(a / "test.json"), slurp(b / "test.json"));
}

TEST(Synthetic, PlantedPatchesShiftFeaturesAndMarkMasks) {
    TempDir dir;
    auto spec = small_spec();
    spec.plant_patches = {4};
    spec.plant_offset = 5.0;
    spec.mode_spread = 0.0;
    spec.min_modes = spec.max_modes = 1;
    const auto ds = generate_synthetic(spec, dir.path());
    const auto normal = load_entry_tensors(ds.test, ds.test.entries[0]);
    const auto& defect_entry = ds.test.entries[2];
    ASSERT_EQ(defect_entry.label, Label::anomalous);
    const auto defect = load_entry_tensors(ds.test, defect_entry);

    // Zero spread and one mode: normal vectors equal the patch centre, so the
    // difference is exactly the planted offset (norm 5) inside patch 4 only.
    for (std::size_t l = 0; l < 2; ++l) {
        const auto& n = normal[l];
        const auto& d = defect[l];
        for (std::size_t h = 0; h < n.height; ++h)
            for (std::size_t w = 0; w < n.width; ++w) {
                double s = 0.0;
                for (std::size_t c = 0; c < n.channels; ++c) s += std::pow(double(d.at(c, h, w)) - n.at(c, h, w), 2);
                const bool planted = h >= n.height / 2 && w >= n.width / 2;
                EXPECT_NEAR(std::sqrt(s), planted ? 5.0 : 0.0, 1e-4);
            }
    }
    const auto mask = read_mask(*defect_entry.mask);
    for (std::size_t r = 0; r < 16; ++r)
        for (std::size_t c = 0; c < 16; ++c) EXPECT_EQ(mask.values[r * 16 + c], (r >= 8 && c >= 8) ? 1.0f : 0.0f);
}

TEST(Synthetic, ZeroOffsetAnomaliesAreOrdinaryDraws) {
    TempDir dir;
    auto spec = small_spec();
    spec.plant_offset = 0.0;
    spec.min_modes = spec.max_modes = 1;
    spec.mode_spread = 0.0;
    const auto ds = generate_synthetic(spec, dir.path());
    const auto normal = load_entry_tensors(ds.test, ds.test.entries[0]);
    for (std::size_t i = 2; i < 4; ++i) EXPECT_EQ(load_entry_tensors(ds.test, ds.test.entries[i]), normal);
}

TEST(Synthetic, RejectsPlantOutsideGrid) {
    auto spec = small_spec();
    spec.plant_patches = {5};
    EXPECT_EQ(kind_of([&] { spec.validate(); }), ErrorKind::validation);
    spec.plant_patches = {0};
    EXPECT_EQ(kind_of([&] { spec.validate(); }), ErrorKind::validation);
}

TEST(Synthetic, SpecJsonRoundTrip) {
    auto spec = small_spec();
    spec.plant_patches = {1, 3};
    spec.modes_per_patch = {1, 2, 1, 2};
    spec.mode_assignment = ModeAssignment::per_patch;
    const auto back = synthetic_spec_from_json(to_json(spec));
    EXPECT_EQ(to_json(back), to_json(spec));
    EXPECT_EQ(back.mode_assignment, ModeAssignment::per_patch);
    auto doc = to_json(spec);
    doc["mode_assignment"] = "sometimes";
    EXPECT_THROW(synthetic_spec_from_json(doc), Error);
}
