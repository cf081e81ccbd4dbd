#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>

#include <nlohmann/json_fwd.hpp>

#include "fapm/pipeline.hpp"

namespace fapm {

/// One experiment: paths, engine settings, and the three ablation switches.
struct RunConfig {
    std::filesystem::path train_manifest;
    std::filesystem::path test_manifest;
    std::filesystem::path bank_dir = "bank";
    std::filesystem::path output_dir = "out";

    EngineConfig engine;
    bool patch_wise = true;
    bool layer_wise = true;
    bool adaptive = true;

    std::size_t threads = 1;
    std::size_t bench_repetitions = 3;

    /// Engine settings with the switches applied: patch_wise off forces a
    /// 1x1 grid, adaptive off forces zero escalations.
    EngineConfig effective_engine() const;

    /// Ablation rows A..E: A none, B patch-wise, C layer-wise, D both, E all
    /// including adaptive sampling.
    void apply_preset(char preset);
};

/// Paths in the document are resolved against `base_dir`.
RunConfig run_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

nlohmann::json to_json(const ScorerConfig& config);

}  // namespace fapm
