#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fapm/commands.hpp"
#include "fapm/error.hpp"

namespace fapm::cli {

namespace {

struct Flags {
    std::string config;
    std::string preset;
    std::optional<std::size_t> threads;
    std::optional<std::uint64_t> seed;
    bool heatmaps = false;
    bool roc = false;
    std::string spec;
    std::string out_dir;
};

RunConfig resolve_config(const Flags& flags) {
    RunConfig config;
    if (!flags.config.empty()) config = load_run_config(flags.config);
    if (!flags.preset.empty()) {
        if (flags.preset.size() != 1) fail(ErrorKind::configuration, "--preset takes one of A..E");
        config.apply_preset(flags.preset.front());
    }
    if (flags.threads) config.threads = std::max<std::size_t>(1, *flags.threads);
    if (flags.seed) config.engine.sampler.rng_seed = *flags.seed;
    return config;
}

void print_report(std::ostream& out, const char* name, const EvalReport& r) {
    out << std::setprecision(6) << name << ": image_auroc=" << r.image_auroc;
    if (r.pixel_auroc) out << " pixel_auroc=" << *r.pixel_auroc;
    if (r.timings.score_ms > 0.0) out << " fps=" << r.fps << " score_ms=" << r.timings.score_ms;
    out << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Patch-wise, layer-wise memory-bank anomaly scoring"};
    app.require_subcommand(1);
    Flags flags;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", flags.config, "Run configuration (JSON)");
        sub->add_option("--preset", flags.preset, "Ablation preset A..E")->check(CLI::IsMember({"A", "B", "C", "D", "E", "a", "b", "c", "d", "e"}));
        sub->add_option("--threads", flags.threads, "Worker thread cap");
        sub->add_option("--seed", flags.seed, "Override the sampler seed");
    };

    auto* build = app.add_subcommand("build", "Build the memory bank and sample it");
    auto* sample = app.add_subcommand("sample", "Re-sample an existing memory bank");
    auto* score = app.add_subcommand("score", "Score the test manifest against a sampled bank");
    auto* eval = app.add_subcommand("eval", "Compute image and pixel AUROC for a score run");
    auto* bench = app.add_subcommand("bench", "Compare against the single-bank baseline");
    auto* synth = app.add_subcommand("synth", "Generate a synthetic feature dataset");
    for (auto* sub : {build, sample, score, eval, bench}) add_common(sub);
    score->add_flag("--heatmaps", flags.heatmaps, "Also render PGM heatmaps");
    eval->add_flag("--roc", flags.roc, "Also dump ROC curve points");
    synth->add_option("--spec", flags.spec, "Synthetic dataset spec (JSON); defaults apply when omitted");
    synth->add_option("--out", flags.out_dir, "Output directory")->required();
    synth->add_option("--seed", flags.seed, "Override the dataset seed");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "fapm: " << e.what() << '\n';
        return 2;
    }

    try {
        if (synth->parsed()) {
            SyntheticSpec spec;
            if (!flags.spec.empty()) {
                std::ifstream in(flags.spec);
                if (!in) fail(ErrorKind::io, "cannot open " + flags.spec);
                nlohmann::json doc;
                try {
                    doc = nlohmann::json::parse(in);
                } catch (const nlohmann::json::exception& e) {
                    fail(ErrorKind::format, flags.spec + ": " + e.what());
                }
                spec = synthetic_spec_from_json(doc);
            }
            if (flags.seed) spec.rng_seed = *flags.seed;
            const auto ds = commands::synth(spec, flags.out_dir);
            out << "wrote " << ds.train.entries.size() << " train / " << ds.test.entries.size() << " test images to "
                << flags.out_dir << '\n';
            return 0;
        }

        const RunConfig config = resolve_config(flags);
        if (build->parsed()) {
            commands::build(config);
            out << "bank written to " << config.bank_dir.string() << '\n';
        } else if (sample->parsed()) {
            commands::sample(config);
            out << "sampled bank rewritten in " << (config.bank_dir / "sampled").string() << '\n';
        } else if (score->parsed()) {
            commands::score(config, flags.heatmaps);
            out << "scores written to " << (config.output_dir / "scores.jsonl").string() << '\n';
        } else if (eval->parsed()) {
            const auto report = commands::eval(config, flags.roc);
            print_report(out, "fapm", report);
        } else if (bench->parsed()) {
            const auto report = commands::bench(config);
            print_report(out, "fapm", report.fapm);
            print_report(out, "baseline", report.baseline);
            out << "comparisons fapm=" << report.fapm.fapm_comparisons
                << " baseline=" << *report.fapm.baseline_comparisons << " cost_ratio=" << report.cost_ratio << '\n';
        }
        return 0;
    } catch (const Error& e) {
        err << "fapm: " << e.what() << '\n';
        return commands::exit_code(e);
    } catch (const std::exception& e) {
        err << "fapm: " << e.what() << '\n';
        return 2;
    }
}

}  // namespace fapm::cli
