#pragma once

#include <filesystem>
#include <string>

#include "fapm/evaluator.hpp"
#include "fapm/run_config.hpp"
#include "fapm/synthetic.hpp"

/// File-level operations behind each CLI subcommand. All of them throw
/// fapm::Error; exit_code() maps an error onto the CLI's exit status.
namespace fapm::commands {

/// Builds the memory bank and its sampled keys into bank_dir. The directory
/// is staged and swapped in only once complete.
void build(const RunConfig& config);

/// Re-samples an existing memory bank with the configured sampler.
void sample(const RunConfig& config);

/// Scores the test manifest: output_dir/scores.jsonl plus maps/<id>.npy, and
/// heatmaps/<id>.pgm when requested.
void score(const RunConfig& config, bool heatmaps);

/// Evaluates a previous score run; writes eval.json, scores.csv and, when
/// requested, roc.csv.
EvalReport eval(const RunConfig& config, bool roc_dump = false);

/// Runs both engines on the configured dataset; writes bench.json.
BenchReport bench(const RunConfig& config);

SyntheticDataset synth(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

/// 2 for input errors, 3 for incompatible artifacts.
int exit_code(const Error& error) noexcept;

/// Filesystem-safe name for an image id.
std::string file_stem_for(const std::string& image_id);

/// Binary PGM rendering of a map, scaled by its maximum.
void write_pgm(const ScoreGrid& map, const std::filesystem::path& path);

}  // namespace fapm::commands
