#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wpseg/pipeline.hpp"

using namespace wpseg;

namespace {

// Flags shared by the commands that train: defaults < --config file < flags.
struct TrainFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<double> lambda;
    std::optional<std::string> lambda_mode;
    std::optional<int> iters, image_size, batch_size;
    std::vector<std::string> set;

    void attach(CLI::App* app, bool with_lambda) {
        app->add_option("--config", config, "key=value training config file");
        app->add_option("--seed", seed, "training seed (model init, batch order, augmentation)");
        if (with_lambda) {
            app->add_option("--lambda", lambda, "cross-teaching weight (max weight in gaussian_warmup mode)");
            app->add_option("--lambda-mode", lambda_mode, "constant | gaussian_warmup");
        }
        app->add_option("--iters", iters, "number of optimization steps");
        app->add_option("--image-size", image_size, "training resolution (square), divisible by 2^depth");
        app->add_option("--batch-size", batch_size, "images per step");
        app->add_option("--set", set, "extra config override KEY=VALUE (repeatable)");
    }

    TrainConfig resolve() const {
        TrainConfig cfg = config.empty() ? TrainConfig{} : TrainConfig::load(config);
        if (seed) cfg.seed = *seed;
        if (lambda) cfg.lambda_value = *lambda;
        if (lambda_mode) cfg.lambda_mode = parse_lambda_mode(*lambda_mode);
        if (iters) cfg.max_iters = *iters;
        if (image_size) cfg.image_size = *image_size;
        if (batch_size) cfg.batch_size = *batch_size;
        for (const auto& kv : set) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        cfg.validate();
        return cfg;
    }
};

TrainMode parse_train_mode(const std::string& s) {
    if (s == "dual") return TrainMode::dual;
    if (s == "single_int") return TrainMode::single_int;
    if (s == "single_uni") return TrainMode::single_uni;
    throw ConfigError("unknown training mode '" + s + "' (dual|single_int|single_uni)");
}

void add_common(CLI::App* app, CommonOptions& c) {
    app->add_option("--out", c.out, "output directory")->required();
    app->add_flag("--force", c.force, "write into a non-empty output directory");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Box-prompt pseudo-labels and cross-teaching segmentation pipeline"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    const std::vector<std::string> args(argv, argv + argc);

    SynthOptions synth;
    auto* c_synth = app.add_subcommand("synth-data", "generate a synthetic phantom dataset");
    add_common(c_synth, synth);
    c_synth->add_option("--count", synth.synth.count, "number of images")->capture_default_str();
    c_synth->add_option("--size", synth.synth.image_size, "image side length in pixels")->capture_default_str();
    c_synth->add_option("--seed", synth.synth.seed, "generator seed")->capture_default_str();
    c_synth->add_option("--radius-min", synth.synth.radius_min, "smallest semi-major axis")->capture_default_str();
    c_synth->add_option("--radius-max", synth.synth.radius_max, "largest semi-major axis")->capture_default_str();
    c_synth->add_option("--perturbation", synth.synth.perturbation, "radial harmonic amplitude")->capture_default_str();
    c_synth->add_option("--speckle", synth.synth.speckle, "multiplicative noise strength")->capture_default_str();
    c_synth->add_option("--contrast", synth.synth.contrast, "nodule darkening")->capture_default_str();

    PromptOptions prompts;
    auto* c_prompts = app.add_subcommand("gen-prompts", "derive b1/b2/b3 box prompts from annotations");
    add_common(c_prompts, prompts);
    c_prompts->add_option("--data", prompts.data, "dataset directory")->required();

    PseudoLabelOptions pseudo;
    std::string segmenter_kind = "noisy_oracle";
    auto* c_pseudo = app.add_subcommand("gen-pseudolabels", "segment each prompt and build pseudo-label bundles");
    add_common(c_pseudo, pseudo);
    c_pseudo->add_option("--data", pseudo.data, "dataset directory")->required();
    c_pseudo->add_option("--prompts", pseudo.prompts, "gen-prompts output directory or prompts.csv")->required();
    c_pseudo->add_option("--segmenter", segmenter_kind, "oracle | noisy_oracle | recorded")->capture_default_str();
    c_pseudo->add_option("--noise-radius", pseudo.segmenter.noise_radius, "noisy_oracle disk radius")
        ->capture_default_str();
    c_pseudo->add_option("--seed", pseudo.segmenter.seed, "noisy_oracle seed")->capture_default_str();
    c_pseudo->add_option("--predictions", pseudo.segmenter.predictions_dir,
                         "recorded backend: directory of <id>__b<k>.png masks");
    c_pseudo->add_option("--split", pseudo.split, "split to label (empty = all)")->capture_default_str();

    TrainOptions train;
    TrainFlags train_flags;
    std::string train_mode = "dual";
    bool verbose = false;
    auto* c_train = app.add_subcommand("train", "train the segmentation networks on pseudo-labels");
    add_common(c_train, train);
    c_train->add_option("--data", train.data, "dataset directory")->required();
    c_train->add_option("--pseudolabels", train.pseudolabels, "gen-pseudolabels output directory")->required();
    c_train->add_option("--mode", train_mode, "dual | single_int | single_uni")->capture_default_str();
    c_train->add_flag("--verbose", verbose, "print progress to stderr");
    train_flags.attach(c_train, true);

    EvalOptions eval;
    std::string infer_mode = "ensemble";
    auto* c_eval = app.add_subcommand("eval", "score checkpoints against ground truth (DSC, HD95)");
    add_common(c_eval, eval);
    c_eval->add_option("--data", eval.data, "dataset directory")->required();
    c_eval->add_option("--checkpoints", eval.checkpoints, "train output directory")->required();
    c_eval->add_option("--mode", infer_mode, "f1 | f2 | ensemble")->capture_default_str();
    c_eval->add_option("--checkpoint", eval.which, "best | last")->capture_default_str();
    c_eval->add_option("--split", eval.split, "split to score (empty = all)")->capture_default_str();
    c_eval->add_flag("--save-predictions", eval.save_predictions, "also write predicted masks");

    SweepOptions sweep;
    TrainFlags sweep_flags;
    auto* c_sweep = app.add_subcommand("sweep-lambda", "train+eval for lambda in {0.1,0.3,0.5,1} and warm-up");
    add_common(c_sweep, sweep);
    c_sweep->add_option("--data", sweep.data, "dataset directory")->required();
    c_sweep->add_option("--pseudolabels", sweep.pseudolabels, "gen-pseudolabels output directory")->required();
    sweep_flags.attach(c_sweep, false);

    AblateOptions ablate;
    TrainFlags ablate_flags;
    auto* c_ablate = app.add_subcommand("ablate", "single-model baselines vs. cross teaching on one seed");
    add_common(c_ablate, ablate);
    c_ablate->add_option("--data", ablate.data, "dataset directory")->required();
    c_ablate->add_option("--pseudolabels", ablate.pseudolabels, "gen-pseudolabels output directory")->required();
    ablate_flags.attach(c_ablate, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*c_synth) {
            synth.argv = args;
            run_synth_data(synth);
        } else if (*c_prompts) {
            prompts.argv = args;
            run_gen_prompts(prompts);
        } else if (*c_pseudo) {
            pseudo.argv = args;
            pseudo.segmenter.kind = parse_segmenter_kind(segmenter_kind);
            run_gen_pseudolabels(pseudo);
        } else if (*c_train) {
            train.argv = args;
            train.config = train_flags.resolve();
            train.mode = parse_train_mode(train_mode);
            train.quiet = !verbose;
            run_train(train);
        } else if (*c_eval) {
            eval.argv = args;
            eval.mode = parse_infer_mode(infer_mode);
            const EvalSummary s = run_eval(eval);
            std::cout << "dsc " << s.dsc_mean << " +- " << s.dsc_std << "  hd95 " << s.hd95_mean << " +- "
                      << s.hd95_std << "  (n=" << s.count << ")\n";
        } else if (*c_sweep) {
            sweep.argv = args;
            sweep.config = sweep_flags.resolve();
            for (const auto& r : run_sweep_lambda(sweep)) {
                std::cout << r.lambda_mode << " " << r.lambda << ": dsc " << r.dsc_mean << " hd95 " << r.hd95_mean
                          << '\n';
            }
        } else if (*c_ablate) {
            ablate.argv = args;
            ablate.config = ablate_flags.resolve();
            for (const auto& r : run_ablate(ablate)) {
                std::cout << r.method << " (" << r.supervision << "): dsc " << r.summary.dsc_mean << " hd95 "
                          << r.summary.hd95_mean << '\n';
            }
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
