#include "fapm/run_config.hpp"

#include <cctype>
#include <fstream>

#include <nlohmann/json.hpp>

#include "fapm/error.hpp"

namespace fapm {

using nlohmann::json;

EngineConfig RunConfig::effective_engine() const {
    EngineConfig e = engine;
    if (!patch_wise) e.grid = PatchGrid{1, 1};
    if (!adaptive) e.sampler.max_escalations = 0;
    e.view.layer_wise = layer_wise;
    return e;
}

void RunConfig::apply_preset(char preset) {
    switch (std::toupper(static_cast<unsigned char>(preset))) {
        case 'A': patch_wise = false; layer_wise = false; adaptive = false; break;
        case 'B': patch_wise = true;  layer_wise = false; adaptive = false; break;
        case 'C': patch_wise = false; layer_wise = true;  adaptive = false; break;
        case 'D': patch_wise = true;  layer_wise = true;  adaptive = false; break;
        case 'E': patch_wise = true;  layer_wise = true;  adaptive = true;  break;
        default: fail(ErrorKind::configuration, std::string("unknown preset '") + preset + "', expected A..E");
    }
}

json to_json(const ScorerConfig& c) {
    json weights = json::object();
    for (const auto& [layer, w] : c.layer_weights) weights[std::to_string(layer)] = w;
    return {{"neighbors", c.neighbors},
            {"layer_weights", weights},
            {"blur_sigma", c.blur_sigma},
            {"top_t", c.top_t},
            {"output_size", {c.output_height, c.output_width}}};
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

}  // namespace

RunConfig run_config_from_json(const json& doc, const std::filesystem::path& base_dir) {
    RunConfig cfg;
    try {
        if (doc.contains("train_manifest")) cfg.train_manifest = resolve(base_dir, doc["train_manifest"].get<std::string>());
        if (doc.contains("test_manifest")) cfg.test_manifest = resolve(base_dir, doc["test_manifest"].get<std::string>());
        cfg.bank_dir = resolve(base_dir, doc.value("bank_dir", std::string("bank")));
        cfg.output_dir = resolve(base_dir, doc.value("output_dir", std::string("out")));
        if (doc.contains("grid")) {
            cfg.engine.grid.rows = doc["grid"].at(0).get<std::size_t>();
            cfg.engine.grid.cols = doc["grid"].at(1).get<std::size_t>();
        }
        cfg.engine.view.aggregation.enabled = doc.value("aggregation", true);
        cfg.engine.view.aggregation.kernel = doc.value("aggregation_kernel", std::size_t{3});
        cfg.patch_wise = doc.value("patch_wise", true);
        cfg.layer_wise = doc.value("layer_wise", true);
        cfg.adaptive = doc.value("adaptive", true);
        cfg.threads = doc.value("threads", std::size_t{1});
        cfg.bench_repetitions = doc.value("bench_repetitions", std::size_t{3});
        if (doc.contains("preset")) cfg.apply_preset(doc["preset"].get<std::string>().at(0));

        if (doc.contains("sampler")) {
            const auto& s = doc["sampler"];
            auto& c = cfg.engine.sampler;
            c.base_ratio = s.value("base_ratio", c.base_ratio);
            c.extent_threshold = s.value("extent_threshold", c.extent_threshold);
            c.escalation_factor = s.value("escalation_factor", c.escalation_factor);
            c.max_escalations = s.value("max_escalations", c.max_escalations);
            c.rng_seed = s.value("rng_seed", c.rng_seed);
            const auto mode = s.value("init_mode", std::string("first_index"));
            if (mode == "first_index") c.init_mode = InitMode::first_index;
            else if (mode == "seeded_random") c.init_mode = InitMode::seeded_random;
            else fail(ErrorKind::configuration, "unknown init_mode '" + mode + "'");
        }
        if (doc.contains("scorer")) {
            const auto& s = doc["scorer"];
            auto& c = cfg.engine.scorer;
            c.neighbors = s.value("neighbors", c.neighbors);
            c.blur_sigma = s.value("blur_sigma", c.blur_sigma);
            c.top_t = s.value("top_t", c.top_t);
            if (s.contains("output_size")) {
                c.output_height = s["output_size"].at(0).get<std::size_t>();
                c.output_width = s["output_size"].at(1).get<std::size_t>();
            }
            if (s.contains("layer_weights"))
                for (const auto& [key, value] : s["layer_weights"].items()) c.layer_weights[std::stoi(key)] = value.get<double>();
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::configuration, std::string("run config: ") + e.what());
    } catch (const std::invalid_argument&) {
        fail(ErrorKind::configuration, "run config: layer weight keys must be integer layer ids");
    }
    cfg.engine.grid.validate();
    cfg.engine.sampler.validate();
    cfg.engine.scorer.validate();
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        fail(ErrorKind::configuration, path.string() + ": " + e.what());
    }
    return run_config_from_json(doc, std::filesystem::absolute(path).parent_path());
}

json to_json(const RunConfig& c) {
    return {{"train_manifest", c.train_manifest.generic_string()},
            {"test_manifest", c.test_manifest.generic_string()},
            {"bank_dir", c.bank_dir.generic_string()},
            {"output_dir", c.output_dir.generic_string()},
            {"grid", {c.engine.grid.rows, c.engine.grid.cols}},
            {"aggregation", c.engine.view.aggregation.enabled},
            {"aggregation_kernel", c.engine.view.aggregation.kernel},
            {"patch_wise", c.patch_wise},
            {"layer_wise", c.layer_wise},
            {"adaptive", c.adaptive},
            {"threads", c.threads},
            {"bench_repetitions", c.bench_repetitions},
            {"sampler", to_json(c.engine.sampler)},
            {"scorer", to_json(c.engine.scorer)}};
}

}  // namespace fapm
