#pragma once

// In-process implementations of the CLI subcommands. Each writes its
// artifacts plus a manifest.json into its output directory.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "wpseg/metrics.hpp"
#include "wpseg/plot.hpp"
#include "wpseg/segmenter.hpp"
#include "wpseg/synth.hpp"
#include "wpseg/trainer.hpp"

namespace wpseg {

inline constexpr const char* kVersion = "wpseg 1.0.0";

/// Fails with a ValidationError if `dir` exists and is not empty, unless
/// `force` is set. Creates the directory.
void prepare_output_dir(const std::filesystem::path& dir, bool force);

/// Writes `<dir>/manifest.json`.
void write_manifest(const std::filesystem::path& dir, const std::string& command, const std::vector<std::string>& argv,
                    const nlohmann::json& config, std::uint64_t seed, const std::vector<std::string>& outputs,
                    const std::string& started_utc);

std::string utc_now();

struct CommonOptions {
    std::filesystem::path out;
    bool force = false;
    std::vector<std::string> argv;  // recorded in the manifest
};

struct SynthOptions : CommonOptions {
    SynthConfig synth;
};
void run_synth_data(const SynthOptions& opt);

struct PromptOptions : CommonOptions {
    std::filesystem::path data;
};
void run_gen_prompts(const PromptOptions& opt);

struct PseudoLabelOptions : CommonOptions {
    std::filesystem::path data;
    std::filesystem::path prompts;  // directory holding prompts.csv, or the file itself
    SegmenterConfig segmenter;
    std::string split = "train";
};
void run_gen_pseudolabels(const PseudoLabelOptions& opt);

struct TrainOptions : CommonOptions {
    std::filesystem::path data;
    std::filesystem::path pseudolabels;  // directory holding bundles_manifest.csv
    TrainConfig config;
    TrainMode mode = TrainMode::dual;
    bool quiet = true;
};
/// Writes losses.csv, train_config.txt, and f1/f2 {best,last} checkpoints
/// (single modes write f1 only).
void run_train(const TrainOptions& opt);

struct EvalOptions : CommonOptions {
    std::filesystem::path data;
    std::filesystem::path checkpoints;  // a train output directory
    InferMode mode = InferMode::ensemble;
    std::string which = "best";  // best | last
    std::string split = "test";
    bool save_predictions = false;
};
EvalSummary run_eval(const EvalOptions& opt);

struct SweepOptions : CommonOptions {
    std::filesystem::path data;
    std::filesystem::path pseudolabels;
    TrainConfig config;  // lambda fields are overridden per run
};
/// Five train+eval runs: constant lambda in {0.1, 0.3, 0.5, 1.0} and the
/// Gaussian warm-up with the config's lambda_value as its maximum.
std::vector<SweepRow> run_sweep_lambda(const SweepOptions& opt);

struct AblateRow {
    std::string method;
    std::string supervision;
    EvalSummary summary;
};
struct AblateOptions : SweepOptions {};
/// Single model on y_int, single model on y_uni, and the dual model with
/// cross teaching, all on the same seed.
std::vector<AblateRow> run_ablate(const AblateOptions& opt);

std::vector<SweepRow> load_sweep_csv(const std::filesystem::path& path);

}  // namespace wpseg
