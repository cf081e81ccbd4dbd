#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "fapm/npy.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using fapm::testing::TempDir;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = fapm::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void write_json(const fs::path& p, const json& doc) { std::ofstream(p) << doc.dump(2); }

std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
    return files;
}

std::vector<json> read_jsonl(const fs::path& p) {
    std::vector<json> rows;
    std::ifstream in(p);
    for (std::string line; std::getline(in, line);)
        if (!line.empty()) rows.push_back(json::parse(line));
    return rows;
}

// Small dataset: two layers, 7x7 grid, four train and four test images.
class CliRun : public ::testing::Test {
protected:
    void SetUp() override {
        spec_ = dir_ / "spec.json";
        write_json(spec_, {{"layers", {{{"layer_id", 2}, {"channels", 4}, {"height", 28}, {"width", 28}},
                                       {{"layer_id", 3}, {"channels", 6}, {"height", 14}, {"width", 14}}}},
                           {"train_count", 4},
                           {"test_normal_count", 2},
                           {"test_anomalous_count", 2},
                           {"plant_offset", 6.0},
                           {"mask_size", {56, 56}},
                           {"rng_seed", 3}});
        ASSERT_EQ(run({"synth", "--spec", spec_.string(), "--out", (dir_ / "data").string()}).code, 0);
    }

    fs::path config(json extra = json::object()) {
        json doc{{"train_manifest", "data/train.json"},
                 {"test_manifest", "data/test.json"},
                 {"bank_dir", "bank"},
                 {"output_dir", "out"},
                 {"scorer", {{"output_size", {56, 56}}}}};
        doc.update(extra);
        const auto p = dir_ / ("config" + std::to_string(configs_++) + ".json");
        write_json(p, doc);
        return p;
    }

    TempDir dir_;
    fs::path spec_;
    int configs_ = 0;
};

}  // namespace

TEST_F(CliRun, SynthIsDeterministic) {
    ASSERT_EQ(run({"synth", "--spec", spec_.string(), "--out", (dir_ / "again").string()}).code, 0);
    EXPECT_EQ(snapshot(dir_ / "data"), snapshot(dir_ / "again"));
    ASSERT_EQ(run({"synth", "--spec", spec_.string(), "--seed", "4", "--out", (dir_ / "other").string()}).code, 0);
    EXPECT_NE(snapshot(dir_ / "data"), snapshot(dir_ / "other"));
}

TEST_F(CliRun, BuildWritesEveryCellAndIsIdempotent) {
    const auto cfg = config();
    ASSERT_EQ(run({"build", "--config", cfg.string()}).code, 0);
    std::size_t npy = 0, sidecars = 0;
    for (const auto& e : fs::directory_iterator(dir_ / "bank" / "sampled")) {
        npy += e.path().extension() == ".npy";
        sidecars += e.path().extension() == ".json" && e.path().filename() != "index.json";
    }
    EXPECT_EQ(npy, 98u);
    EXPECT_EQ(sidecars, 98u);
    const auto first = snapshot(dir_ / "bank");
    ASSERT_EQ(run({"build", "--config", cfg.string()}).code, 0);
    EXPECT_EQ(snapshot(dir_ / "bank"), first);

    const auto sidecar = json::parse(slurp(dir_ / "bank" / "sampled" / "L2_P001.json"));
    for (const char* key : {"layer_id", "patch_index", "K", "d_max", "escalated", "config_hash"})
        EXPECT_TRUE(sidecar.contains(key)) << key;
}

TEST_F(CliRun, MissingTensorLeavesNoBank) {
    fs::remove(dir_ / "data" / "train" / "train_0001_L3.npy");
    const auto r = run({"build", "--config", config().string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_FALSE(r.err.empty());
    EXPECT_FALSE(fs::exists(dir_ / "bank"));
    EXPECT_FALSE(fs::exists(dir_ / "bank.partial"));
}

TEST_F(CliRun, SelfScoringAtFullRatioIsZero) {
    const auto cfg = config({{"test_manifest", "data/train.json"}, {"sampler", {{"base_ratio", 1.0}}}});
    ASSERT_EQ(run({"build", "--config", cfg.string()}).code, 0);
    ASSERT_EQ(run({"score", "--config", cfg.string()}).code, 0);
    const auto rows = read_jsonl(dir_ / "out" / "scores.jsonl");
    ASSERT_EQ(rows.size(), 4u);
    for (const auto& row : rows) {
        EXPECT_EQ(row.at("image_score").get<double>(), 0.0);
        const auto map = fapm::npy::read(dir_ / "out" / row.at("map").get<std::string>());
        for (float v : map.data) EXPECT_EQ(v, 0.0f);
    }
}

TEST_F(CliRun, ScoringIsReproducible) {
    const auto cfg = config();
    ASSERT_EQ(run({"build", "--config", cfg.string()}).code, 0);
    ASSERT_EQ(run({"score", "--config", cfg.string(), "--heatmaps"}).code, 0);
    auto outputs = [&] {
        auto files = snapshot(dir_ / "out");
        files.erase("timing.json");  // wall-clock only
        return files;
    };
    const auto first = outputs();
    ASSERT_EQ(run({"score", "--config", cfg.string(), "--heatmaps", "--threads", "3"}).code, 0);
    EXPECT_EQ(outputs(), first);
    EXPECT_TRUE(fs::exists(dir_ / "out" / "timing.json"));
    EXPECT_TRUE(fs::exists(dir_ / "out" / "heatmaps" / "defect_0000.pgm"));
}

TEST_F(CliRun, GridMismatchIsRefused) {
    ASSERT_EQ(run({"build", "--config", config().string()}).code, 0);
    const auto r = run({"score", "--config", config({{"grid", {2, 2}}}).string()});
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("incompatible"), std::string::npos);
}

TEST_F(CliRun, SamplerChangeNeedsResample) {
    ASSERT_EQ(run({"build", "--config", config().string()}).code, 0);
    const auto changed = config({{"sampler", {{"base_ratio", 0.5}}}});
    EXPECT_EQ(run({"score", "--config", changed.string()}).code, 3);
    ASSERT_EQ(run({"sample", "--config", changed.string()}).code, 0);
    EXPECT_EQ(run({"score", "--config", changed.string()}).code, 0);
}

TEST_F(CliRun, EvalOnSeparableRun) {
    const auto cfg = config();
    ASSERT_EQ(run({"build", "--config", cfg.string()}).code, 0);
    ASSERT_EQ(run({"score", "--config", cfg.string()}).code, 0);
    const auto r = run({"eval", "--config", cfg.string(), "--roc"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto report = json::parse(slurp(dir_ / "out" / "eval.json"));
    EXPECT_EQ(report.at("image_auroc").get<double>(), 1.0);
    EXPECT_TRUE(report.contains("pixel_auroc"));
    EXPECT_TRUE(fs::exists(dir_ / "out" / "scores.csv"));
    EXPECT_TRUE(fs::exists(dir_ / "out" / "roc.csv"));
    EXPECT_NE(r.out.find("image_auroc=1"), std::string::npos);
}

TEST_F(CliRun, BenchReportsPatchCountCostRatio) {
    // 28x28 and 14x14 layers with four images: ratio 1/4 keeps 16 and 4 keys
    // per patch against 784 and 196 in the single bank.
    const auto cfg = config({{"adaptive", false}, {"sampler", {{"base_ratio", 0.25}}}, {"bench_repetitions", 1}});
    const auto r = run({"bench", "--config", cfg.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto report = json::parse(slurp(dir_ / "out" / "bench.json"));
    EXPECT_EQ(report.at("cost_ratio").get<double>(), 49.0);
    EXPECT_NE(r.out.find("cost_ratio=49"), std::string::npos);
}

TEST_F(CliRun, PresetsChangeTheEngine) {
    const auto cfg = config();
    ASSERT_EQ(run({"build", "--config", cfg.string(), "--preset", "A"}).code, 0);
    EXPECT_FALSE(fs::exists(dir_ / "bank" / "sampled" / "L2_P002.npy"));
    // Scoring with a different preset than the bank was built with is refused.
    EXPECT_EQ(run({"score", "--config", cfg.string(), "--preset", "E"}).code, 3);
    EXPECT_EQ(run({"score", "--config", cfg.string(), "--preset", "A"}).code, 0);
}

TEST(Cli, UsageErrors) {
    EXPECT_EQ(run({}).code, 2);
    EXPECT_EQ(run({"frobnicate"}).code, 2);
    EXPECT_EQ(run({"build", "--preset", "Z"}).code, 2);
    EXPECT_EQ(run({"build", "--config", "/nonexistent/config.json"}).code, 2);
    EXPECT_EQ(run({"--help"}).code, 0);
}
