#include "wpseg/pipeline.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "wpseg/dataio.hpp"
#include "wpseg/geometry.hpp"
#include "wpseg/pseudolabel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace wpseg {

namespace {

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

json config_json(const TrainConfig& cfg) {
    json j = json::object();
    std::istringstream in(cfg.serialize());
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        j[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return j;
}

std::string mode_name(TrainMode m) {
    switch (m) {
        case TrainMode::dual: return "dual";
        case TrainMode::single_int: return "single_int";
        case TrainMode::single_uni: return "single_uni";
    }
    return "?";
}

fs::path resolve_file(const fs::path& p, const char* name) { return fs::is_directory(p) ? p / name : p; }

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

// Smallest multiple of `div` nearest to `s`.
int snap(int s, int div) { return std::max(div, (s + div / 2) / div * div); }

}  // namespace

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void prepare_output_dir(const fs::path& dir, bool force) {
    if (dir.empty()) throw ValidationError("no output directory given (--out)");
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) throw ValidationError("output path " + dir.string() + " is not a directory");
        if (!fs::is_empty(dir) && !force) {
            throw ValidationError("output directory " + dir.string() + " is not empty; pass --force to overwrite");
        }
    }
    fs::create_directories(dir);
}

void write_manifest(const fs::path& dir, const std::string& command, const std::vector<std::string>& argv,
                    const json& config, std::uint64_t seed, const std::vector<std::string>& outputs,
                    const std::string& started_utc) {
    json m;
    m["command"] = command;
    m["argv"] = argv;
    m["config"] = config;
    m["seed"] = seed;
    m["version"] = kVersion;
    m["started_utc"] = started_utc;
    m["finished_utc"] = utc_now();
    m["outputs"] = outputs;
    write_text(dir / "manifest.json", m.dump(2) + "\n");
}

void run_synth_data(const SynthOptions& opt) {
    const std::string started = utc_now();
    opt.synth.validate();
    prepare_output_dir(opt.out, opt.force);
    generate_dataset(opt.synth, opt.out);
    json cfg = {{"count", opt.synth.count},           {"image_size", opt.synth.image_size},
                {"radius_min", opt.synth.radius_min}, {"radius_max", opt.synth.radius_max},
                {"perturbation", opt.synth.perturbation}, {"speckle", opt.synth.speckle},
                {"contrast", opt.synth.contrast}};
    write_manifest(opt.out, "synth-data", opt.argv, cfg, opt.synth.seed,
                   {"images/", "gt_masks/", "annotations.csv", "split.csv"}, started);
}

void run_gen_prompts(const PromptOptions& opt) {
    const std::string started = utc_now();
    const DatasetIndex ds = load_dataset(opt.data);
    prepare_output_dir(opt.out, opt.force);
    std::vector<BoxPromptSet> prompts;
    prompts.reserve(ds.entries.size());
    for (const auto& e : ds.entries) prompts.push_back(generate_prompts(e.annotation, e.dims));
    save_prompts(prompts, opt.out / "prompts.csv");
    write_manifest(opt.out, "gen-prompts", opt.argv, {{"data", opt.data.string()}}, 0, {"prompts.csv"}, started);
}

void run_gen_pseudolabels(const PseudoLabelOptions& opt) {
    const std::string started = utc_now();
    const DatasetIndex ds = load_dataset(opt.data);
    const fs::path prompts_file = resolve_file(opt.prompts, "prompts.csv");
    if (!fs::exists(prompts_file)) {
        throw MissingArtifactError("prompts not found at " + prompts_file.string() +
                                   "; run `wpseg gen-prompts --data " + opt.data.string() + " --out <dir>` first");
    }
    std::map<std::string, BoxPromptSet> by_id;
    for (auto& p : load_prompts(prompts_file)) by_id.emplace(p.image_id, std::move(p));

    const auto entries = ds.select(opt.split);
    if (entries.empty()) throw ValidationError("no images in split '" + opt.split + "'");
    SceneTruth truth;
    if (opt.segmenter.kind != SegmenterKind::recorded) {
        for (const auto* e : entries) {
            if (!e->gt_path) {
                throw MissingArtifactError("segmenter '" + to_string(opt.segmenter.kind) + "' needs gt_masks/" + e->id +
                                           ".png; use --segmenter recorded for data without ground truth");
            }
            truth.emplace(e->id, load_mask(*e->gt_path, e->dims));
        }
    }
    const auto segmenter = make_segmenter(opt.segmenter, std::move(truth));
    prepare_output_dir(opt.out, opt.force);

    std::vector<PseudoLabelBundle> bundles(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto* e = entries[i];
        auto it = by_id.find(e->id);
        if (it == by_id.end()) {
            throw MissingArtifactError("no prompts for '" + e->id + "' in " + prompts_file.string() +
                                       "; re-run `wpseg gen-prompts` on this dataset");
        }
        const Image image = load_image(e->image_path, e->id);
        bundles[i] = build_bundle(image, it->second, *segmenter);
        save_bundle(bundles[i], opt.out);
    }
    save_bundle_manifest(bundles, opt.out / "bundles_manifest.csv");
    json cfg = {{"data", opt.data.string()},
                {"prompts", prompts_file.string()},
                {"segmenter", to_string(opt.segmenter.kind)},
                {"noise_radius", opt.segmenter.noise_radius},
                {"predictions_dir", opt.segmenter.predictions_dir.string()},
                {"split", opt.split}};
    write_manifest(opt.out, "gen-pseudolabels", opt.argv, cfg, opt.segmenter.seed,
                   {"bundles_manifest.csv", "<id>__yint.png", "<id>__yuni.png", "<id>__unc.png"}, started);
}

void run_train(const TrainOptions& opt) {
    const std::string started = utc_now();
    const TrainConfig& cfg = opt.config;
    cfg.validate();
    const DatasetIndex ds = load_dataset(opt.data);
    const fs::path manifest = resolve_file(opt.pseudolabels, "bundles_manifest.csv");
    if (!fs::exists(manifest)) {
        throw MissingArtifactError("pseudo-labels not found at " + manifest.string() +
                                   "; run `wpseg gen-pseudolabels` first");
    }
    const fs::path bundle_dir = manifest.parent_path();
    const int s = cfg.image_size;

    std::vector<TrainSample> data;
    std::vector<ValidationItem> val;
    for (const auto& id : load_bundle_manifest_ids(manifest)) {
        const DatasetEntry& e = ds.at(id);
        const PseudoLabelBundle b = load_bundle(bundle_dir, id, e.dims);
        const Image image = load_image(e.image_path, id);
        TrainSample t{id, resize_bilinear(image.pixels, s, s), resize_nearest(b.y_int, s, s),
                      resize_nearest(b.y_uni, s, s), {}};
        t.u = uncertainty_map(t.y_int, t.y_uni);
        data.push_back(std::move(t));
        if (e.gt_path && static_cast<int>(val.size()) < cfg.val_count) {
            val.push_back({Image{id, resize_bilinear(image.pixels, s, s)},
                           resize_nearest(load_mask(*e.gt_path, e.dims), s, s)});
        }
    }

    prepare_output_dir(opt.out, opt.force);
    write_text(opt.out / "train_config.txt", cfg.serialize());
    std::ofstream losses(opt.out / "losses.csv", std::ios::binary);
    if (!losses) throw IoError("cannot write " + (opt.out / "losses.csv").string());
    losses << "step,lr,lambda,l_sup,l_ct_u,l_total,val_dsc\n";

    Trainer trainer(cfg, std::move(data), std::move(val), opt.mode);
    std::int64_t best_step = -1;
    double best = -1.0;
    trainer.run([&](const StepRecord& r) {
        losses << r.step << ',' << fmt("%.10g", r.lr) << ',' << fmt("%.10g", r.loss.lambda) << ','
               << fmt("%.10g", r.loss.l_sup) << ',' << fmt("%.10g", r.loss.l_ct_u) << ','
               << fmt("%.10g", r.loss.l_total) << ',';
        if (r.val_dsc) {
            losses << fmt("%.6f", *r.val_dsc);
            if (*r.val_dsc > best) {
                best = *r.val_dsc;
                best_step = r.step + 1;
            }
        }
        losses << '\n';
        if (!opt.quiet && (r.step % 50 == 0 || r.val_dsc)) {
            std::cerr << "step " << r.step << " lr " << r.lr << " l_total " << r.loss.l_total;
            if (r.val_dsc) std::cerr << " val_dsc " << *r.val_dsc;
            std::cerr << '\n';
        }
    });
    losses.close();
    if (!losses) throw IoError("write failed: losses.csv");

    const std::uint64_t hash = cfg.hash();
    const std::vector<SegModel> best_models = trainer.best_models();
    std::vector<std::string> outputs = {"losses.csv", "train_config.txt"};
    for (std::size_t k = 0; k < trainer.model_count(); ++k) {
        const std::string name = "f" + std::to_string(k + 1);
        save_checkpoint(opt.out / (name + "_last.ckpt"), trainer.model(k),
                        {trainer.current_step(), hash, trainer.rng_state()});
        save_checkpoint(opt.out / (name + "_best.ckpt"), best_models[k],
                        {best_step < 0 ? trainer.current_step() : best_step, hash, trainer.rng_state()});
        outputs.push_back(name + "_last.ckpt");
        outputs.push_back(name + "_best.ckpt");
    }
    json jc = config_json(cfg);
    jc["mode"] = mode_name(opt.mode);
    jc["data"] = opt.data.string();
    jc["pseudolabels"] = manifest.string();
    jc["best_val_dsc"] = best;
    write_manifest(opt.out, "train", opt.argv, jc, cfg.seed, outputs, started);
}

EvalSummary run_eval(const EvalOptions& opt) {
    const std::string started = utc_now();
    if (opt.which != "best" && opt.which != "last") throw ValidationError("--checkpoint must be best or last");
    const DatasetIndex ds = load_dataset(opt.data);
    auto load = [&](const char* name) -> std::optional<SegModel> {
        const fs::path p = opt.checkpoints / (std::string(name) + "_" + opt.which + ".ckpt");
        if (!fs::exists(p)) {
            throw MissingArtifactError("checkpoint " + p.string() + " not found; run `wpseg train --out " +
                                       opt.checkpoints.string() + "` first");
        }
        return load_checkpoint(p);
    };
    std::optional<SegModel> f1, f2;
    if (opt.mode != InferMode::f2) f1 = load("f1");
    if (opt.mode != InferMode::f1) f2 = load("f2");
    const int div = (f1 ? *f1 : *f2).config().divisor();

    const auto entries = ds.select(opt.split);
    std::vector<const DatasetEntry*> scored;
    for (const auto* e : entries)
        if (e->gt_path) scored.push_back(e);
    if (scored.empty()) throw ValidationError("split '" + opt.split + "' has no images with ground truth");
    prepare_output_dir(opt.out, opt.force);
    if (opt.save_predictions) fs::create_directories(opt.out / "predictions");

    std::vector<EvalResult> results(scored.size());
    for (std::size_t i = 0; i < scored.size(); ++i) {
        const DatasetEntry& e = *scored[i];
        Image image = load_image(e.image_path, e.id);
        const int h = snap(image.height(), div), w = snap(image.width(), div);
        const Image input{e.id, resize_bilinear(image.pixels, h, w)};
        const BinaryMask raw = infer(f1 ? &*f1 : nullptr, f2 ? &*f2 : nullptr, input, opt.mode);
        const BinaryMask pred = resize_nearest(raw, image.height(), image.width());
        results[i] = evaluate_one(e.id, pred, load_mask(*e.gt_path, e.dims));
        if (opt.save_predictions) save_mask(pred, opt.out / "predictions" / (e.id + ".png"));
    }
    const EvalSummary summary = summarize(results, entries.size() - scored.size());
    write_eval_csv(results, summary, opt.out / "eval.csv");
    write_summary(summary, "mode=" + to_string(opt.mode) + " checkpoint=" + opt.which + " split=" + opt.split,
                  opt.out / "summary.txt");
    json cfg = {{"data", opt.data.string()},
                {"checkpoints", opt.checkpoints.string()},
                {"mode", to_string(opt.mode)},
                {"checkpoint", opt.which},
                {"split", opt.split}};
    std::vector<std::string> outputs = {"eval.csv", "summary.txt"};
    if (opt.save_predictions) outputs.push_back("predictions/");
    write_manifest(opt.out, "eval", opt.argv, cfg, 0, outputs, started);
    return summary;
}

namespace {

EvalSummary train_and_eval(const SweepOptions& opt, const fs::path& dir, const TrainConfig& cfg, TrainMode mode,
                           InferMode infer_mode) {
    TrainOptions t;
    t.out = dir / "train";
    t.force = true;
    t.argv = opt.argv;
    t.data = opt.data;
    t.pseudolabels = opt.pseudolabels;
    t.config = cfg;
    t.mode = mode;
    run_train(t);
    EvalOptions e;
    e.out = dir / "eval";
    e.force = true;
    e.argv = opt.argv;
    e.data = opt.data;
    e.checkpoints = t.out;
    e.mode = infer_mode;
    return run_eval(e);
}

void check_upstream(const SweepOptions& opt) {
    load_dataset(opt.data);
    const fs::path m = resolve_file(opt.pseudolabels, "bundles_manifest.csv");
    if (!fs::exists(m)) {
        throw MissingArtifactError("pseudo-labels not found at " + m.string() + "; run `wpseg gen-pseudolabels` first");
    }
    opt.config.validate();
}

}  // namespace

std::vector<SweepRow> run_sweep_lambda(const SweepOptions& opt) {
    const std::string started = utc_now();
    check_upstream(opt);
    prepare_output_dir(opt.out, opt.force);
    struct Setting {
        std::string name;
        LambdaMode mode;
        double lambda;
    };
    const std::vector<Setting> grid = {{"lambda_0.1", LambdaMode::constant, 0.1},
                                       {"lambda_0.3", LambdaMode::constant, 0.3},
                                       {"lambda_0.5", LambdaMode::constant, 0.5},
                                       {"lambda_1", LambdaMode::constant, 1.0},
                                       {"warmup", LambdaMode::gaussian_warmup, opt.config.lambda_value}};
    std::ostringstream csv;
    csv << "lambda_mode,lambda,dsc_mean,dsc_std,hd95_mean,hd95_std\n";
    for (const auto& g : grid) {
        TrainConfig cfg = opt.config;
        cfg.lambda_mode = g.mode;
        cfg.lambda_value = g.lambda;
        const EvalSummary s = train_and_eval(opt, opt.out / "runs" / g.name, cfg, TrainMode::dual, InferMode::ensemble);
        csv << to_string(g.mode) << ',' << fmt("%g", g.lambda) << ',' << fmt("%.6f", s.dsc_mean) << ','
            << fmt("%.6f", s.dsc_std) << ',' << fmt("%.6f", s.hd95_mean) << ',' << fmt("%.6f", s.hd95_std) << '\n';
    }
    write_text(opt.out / "sweep.csv", csv.str());
    const auto rows = load_sweep_csv(opt.out / "sweep.csv");
    plot_sweep(rows, opt.out / "sweep.png");
    json cfg = config_json(opt.config);
    cfg["data"] = opt.data.string();
    cfg["pseudolabels"] = opt.pseudolabels.string();
    write_manifest(opt.out, "sweep-lambda", opt.argv, cfg, opt.config.seed, {"sweep.csv", "sweep.png", "runs/"},
                   started);
    return rows;
}

std::vector<SweepRow> load_sweep_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifactError("cannot open " + path.string() + "; run `wpseg sweep-lambda` first");
    std::string line;
    std::getline(in, line);
    if (line != "lambda_mode,lambda,dsc_mean,dsc_std,hd95_mean,hd95_std") {
        throw ParseError(path.string(), 1, "unexpected sweep header");
    }
    std::vector<SweepRow> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        SweepRow r;
        std::string f;
        std::vector<std::string> fields;
        while (std::getline(ls, f, ',')) fields.push_back(f);
        if (fields.size() != 6) throw ParseError(path.string(), lineno, "expected 6 fields");
        try {
            r.lambda_mode = fields[0];
            r.lambda = std::stod(fields[1]);
            r.dsc_mean = std::stod(fields[2]);
            r.dsc_std = std::stod(fields[3]);
            r.hd95_mean = std::stod(fields[4]);
            r.hd95_std = std::stod(fields[5]);
        } catch (const std::exception&) {
            throw ParseError(path.string(), lineno, "invalid number");
        }
        rows.push_back(r);
    }
    return rows;
}

std::vector<AblateRow> run_ablate(const AblateOptions& opt) {
    const std::string started = utc_now();
    check_upstream(opt);
    prepare_output_dir(opt.out, opt.force);
    std::vector<AblateRow> rows;
    rows.push_back({"single", "y_int",
                    train_and_eval(opt, opt.out / "runs" / "single_int", opt.config, TrainMode::single_int,
                                   InferMode::f1)});
    rows.push_back({"single", "y_uni",
                    train_and_eval(opt, opt.out / "runs" / "single_uni", opt.config, TrainMode::single_uni,
                                   InferMode::f1)});
    rows.push_back({"cross_teaching", "y_int+y_uni+u",
                    train_and_eval(opt, opt.out / "runs" / "dual", opt.config, TrainMode::dual,
                                   InferMode::ensemble)});
    std::ostringstream csv;
    csv << "method,supervision,dsc_mean,dsc_std,hd95_mean,hd95_std\n";
    for (const auto& r : rows) {
        csv << r.method << ',' << r.supervision << ',' << fmt("%.6f", r.summary.dsc_mean) << ','
            << fmt("%.6f", r.summary.dsc_std) << ',' << fmt("%.6f", r.summary.hd95_mean) << ','
            << fmt("%.6f", r.summary.hd95_std) << '\n';
    }
    write_text(opt.out / "ablation.csv", csv.str());
    json cfg = config_json(opt.config);
    cfg["data"] = opt.data.string();
    cfg["pseudolabels"] = opt.pseudolabels.string();
    write_manifest(opt.out, "ablate", opt.argv, cfg, opt.config.seed, {"ablation.csv", "runs/"}, started);
    return rows;
}

}  // namespace wpseg
