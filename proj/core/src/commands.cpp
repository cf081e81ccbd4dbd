#include "fapm/commands.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <fstream>
#include <system_error>

#include <nlohmann/json.hpp>

#include "fapm/coreset.hpp"
#include "fapm/error.hpp"
#include "fapm/memory_bank.hpp"
#include "fapm/npy.hpp"

namespace fapm::commands {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Writes into a sibling staging directory and swaps it in on success.
template <typename Fn>
void write_atomically(const fs::path& target, Fn&& fill) {
    fs::path staging = target;
    staging += ".partial";
    std::error_code ec;
    fs::remove_all(staging, ec);
    try {
        fs::create_directories(staging);
        fill(staging);
    } catch (...) {
        fs::remove_all(staging, ec);
        throw;
    }
    fs::remove_all(target, ec);
    fs::rename(staging, target, ec);
    if (ec) fail(ErrorKind::io, "cannot move " + staging.string() + " to " + target.string() + ": " + ec.message());
}

void require_manifest(const fs::path& path, const char* what) {
    if (path.empty()) fail(ErrorKind::configuration, std::string("config does not name a ") + what);
}

void check_bank_hash(const std::string& stored, const EngineConfig& engine, const fs::path& where) {
    const auto expected = bank_config_hash(engine.grid, engine.view);
    if (stored != expected)
        fail(ErrorKind::incompatible,
             where.string() + " was built with a different grid or feature view (bank hash " + stored +
                 ", config hash " + expected + "); rebuild the bank or use the matching config");
}

void check_sampler_hash(const std::string& stored, const EngineConfig& engine, const fs::path& where) {
    const auto expected = config_hash(engine.sampler);
    if (stored != expected)
        fail(ErrorKind::incompatible, where.string() + " was sampled with a different sampler configuration (" + stored +
                                          " vs " + expected + "); run `sample` first");
}

}  // namespace

int exit_code(const Error& error) noexcept { return error.kind() == ErrorKind::incompatible ? 3 : 2; }

std::string file_stem_for(const std::string& image_id) {
    std::string out = image_id;
    for (auto& c : out)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
    return out.empty() ? std::string("_") : out;
}

void write_pgm(const ScoreGrid& map, const fs::path& path) {
    const double peak = map.values.empty() ? 0.0 : *std::max_element(map.values.begin(), map.values.end());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write " + path.string());
    out << "P5\n" << map.width << ' ' << map.height << "\n255\n";
    for (double v : map.values) {
        const double scaled = peak > 0.0 ? 255.0 * v / peak : 0.0;
        out.put(static_cast<char>(std::clamp(static_cast<int>(scaled + 0.5), 0, 255)));
    }
}

void build(const RunConfig& config) {
    require_manifest(config.train_manifest, "train manifest");
    const EngineConfig engine = config.effective_engine();
    const DatasetManifest train = load_manifest(config.train_manifest);
    const MemoryBank memory = build_memory(train, engine.grid, engine.view, config.threads);
    const SampledBank sampled = sample_bank(memory, engine.sampler, config.threads);
    const std::string hash = bank_config_hash(engine.grid, engine.view);
    write_atomically(config.bank_dir, [&](const fs::path& dir) {
        save_memory_bank(memory, dir, hash);
        save_sampled_bank(sampled, dir / "sampled", hash);
    });
}

void sample(const RunConfig& config) {
    const EngineConfig engine = config.effective_engine();
    check_bank_hash(memory_bank_config_hash(config.bank_dir), engine, config.bank_dir);
    const MemoryBank memory = load_memory_bank(config.bank_dir);
    const SampledBank sampled = sample_bank(memory, engine.sampler, config.threads);
    const std::string hash = bank_config_hash(engine.grid, engine.view);
    write_atomically(config.bank_dir / "sampled",
                     [&](const fs::path& dir) { save_sampled_bank(sampled, dir, hash); });
}

void score(const RunConfig& config, bool heatmaps) {
    require_manifest(config.test_manifest, "test manifest");
    const EngineConfig engine = config.effective_engine();
    const fs::path sampled_dir = config.bank_dir / "sampled";
    if (!fs::exists(sampled_dir / "index.json"))
        fail(ErrorKind::io, "no sampled bank at " + sampled_dir.string() + "; run `build` first");
    check_bank_hash(memory_bank_config_hash(config.bank_dir), engine, config.bank_dir);
    check_sampler_hash(sampled_bank_config_hash(sampled_dir), engine, sampled_dir);

    const SampledBank bank = load_sampled_bank(sampled_dir);
    const DatasetManifest test = load_manifest(config.test_manifest);
    const auto images = load_images(test, config.threads);
    const auto start = std::chrono::steady_clock::now();
    const auto results = score_all(images, bank, engine.scorer, config.threads);
    const double score_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

    const std::string bank_hash = bank_config_hash(engine.grid, engine.view);
    const std::string sampler_hash = config_hash(engine.sampler);
    fs::create_directories(config.output_dir / "maps");
    if (heatmaps) fs::create_directories(config.output_dir / "heatmaps");
    std::ofstream records(config.output_dir / "scores.jsonl", std::ios::trunc);
    if (!records) fail(ErrorKind::io, "cannot write " + (config.output_dir / "scores.jsonl").string());
    for (const auto& r : results) {
        const std::string stem = file_stem_for(r.image_id);
        const std::array<std::size_t, 2> shape{r.anomaly_map.height, r.anomaly_map.width};
        std::vector<float> map(r.anomaly_map.values.begin(), r.anomaly_map.values.end());
        npy::write(config.output_dir / "maps" / (stem + ".npy"), shape, map);
        if (heatmaps) write_pgm(r.anomaly_map, config.output_dir / "heatmaps" / (stem + ".pgm"));
        const json record{{"image_id", r.image_id},
                          {"image_score", r.image_score},
                          {"comparison_count", r.comparison_count},
                          {"map", "maps/" + stem + ".npy"},
                          {"bank_hash", bank_hash},
                          {"sampler_hash", sampler_hash}};
        records << record.dump() << '\n';
    }
    if (!records) fail(ErrorKind::io, "failed writing scores.jsonl");
    // Kept apart from scores.jsonl so score outputs stay reproducible.
    std::ofstream(config.output_dir / "timing.json", std::ios::trunc)
        << json{{"score_ms", score_ms}, {"images", results.size()}}.dump(2) << '\n';
}

EvalReport eval(const RunConfig& config, bool roc_dump) {
    require_manifest(config.test_manifest, "test manifest");
    const EngineConfig engine = config.effective_engine();
    const DatasetManifest test = load_manifest(config.test_manifest);
    const fs::path records_path = config.output_dir / "scores.jsonl";
    std::ifstream in(records_path);
    if (!in) fail(ErrorKind::io, "cannot open " + records_path.string() + "; run `score` first");

    std::vector<AnomalyResult> results;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::exception& e) {
            fail(ErrorKind::format, records_path.string() + ": " + e.what());
        }
        check_bank_hash(record.value("bank_hash", ""), engine, records_path);
        check_sampler_hash(record.value("sampler_hash", ""), engine, records_path);
        AnomalyResult r;
        r.image_id = record.at("image_id").get<std::string>();
        r.image_score = record.at("image_score").get<double>();
        r.comparison_count = record.at("comparison_count").get<std::uint64_t>();
        const auto map = npy::read(config.output_dir / record.at("map").get<std::string>());
        if (map.shape.size() != 2) fail(ErrorKind::format, "anomaly map for '" + r.image_id + "' is not 2-D");
        r.anomaly_map = ScoreGrid(map.shape[0], map.shape[1]);
        std::copy(map.data.begin(), map.data.end(), r.anomaly_map.values.begin());
        results.push_back(std::move(r));
    }

    EvalReport report = evaluate(results, test);
    if (std::ifstream timing{config.output_dir / "timing.json"}) {
        try {
            const auto doc = json::parse(timing);
            report.timings.score_ms = doc.value("score_ms", 0.0);
            if (report.timings.score_ms > 0.0)
                report.fps = 1000.0 * static_cast<double>(results.size()) / report.timings.score_ms;
        } catch (const json::exception&) {
            // Timing is informational; a damaged file only loses it.
        }
    }
    fs::create_directories(config.output_dir);
    {
        std::ofstream out(config.output_dir / "eval.json", std::ios::trunc);
        out << to_json(report).dump(2) << '\n';
    }
    {
        std::ofstream out(config.output_dir / "scores.csv", std::ios::trunc);
        out << scores_csv(report);
    }
    if (roc_dump) {
        std::vector<double> scores;
        std::vector<int> labels;
        for (const auto& img : report.images) {
            scores.push_back(img.score);
            labels.push_back(img.label == Label::anomalous ? 1 : 0);
        }
        std::ofstream out(config.output_dir / "roc.csv", std::ios::trunc);
        out.precision(17);
        out << "threshold,fpr,tpr\n";
        for (const auto& p : roc_curve(scores, labels))
            out << p.threshold << ',' << p.false_positive_rate << ',' << p.true_positive_rate << '\n';
    }
    return report;
}

BenchReport bench(const RunConfig& config) {
    require_manifest(config.train_manifest, "train manifest");
    require_manifest(config.test_manifest, "test manifest");
    const EngineConfig engine = config.effective_engine();
    const DatasetManifest train = load_manifest(config.train_manifest);
    const DatasetManifest test = load_manifest(config.test_manifest);
    BenchOptions options;
    options.repetitions = config.bench_repetitions;
    options.threads = config.threads;
    BenchReport report = fapm::bench(train, test, engine, single_bank_baseline(engine), options);
    fs::create_directories(config.output_dir);
    std::ofstream out(config.output_dir / "bench.json", std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write bench.json");
    out << to_json(report).dump(2) << '\n';
    return report;
}

SyntheticDataset synth(const SyntheticSpec& spec, const fs::path& out_dir) { return generate_synthetic(spec, out_dir); }

}  // namespace fapm::commands
