// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "hetseg/checkpoint.hpp"
#include "hetseg/config.hpp"
#include "hetseg/manifest.hpp"
#include "hetseg/metrics.hpp"
#include "hetseg/nifti.hpp"
#include "hetseg/synthetic.hpp"
#include "hetseg/training.hpp"

namespace hetseg::cli {
namespace fs = std::filesystem;

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<std::string> modality_list(const std::string& s) {
    std::vector<std::string> out;
    for (const auto& m : split(s, ',')) out.push_back(normalize_modality_name(m));
    return out;
}

std::optional<std::size_t> parse_budget(const std::string& s) {
    if (s.empty() || s == "all") return std::nullopt;
    std::size_t pos = 0;
    long n = 0;
    try {
        n = std::stol(s, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != s.size() || n < 1) throw ConfigError("--budget must be a positive integer or 'all', got '" + s + "'");
    return static_cast<std::size_t>(n);
}

// A relative manifest path that does not exist here is looked up under the
// data root.
fs::path locate(const fs::path& manifest, const std::optional<fs::path>& data_root) {
    if (manifest.is_relative() && !fs::exists(manifest) && data_root && fs::exists(*data_root / manifest)) {
        return *data_root / manifest;
    }
    return manifest;
}

std::vector<DatabaseManifest> read_manifests(const std::vector<fs::path>& files,
                                             const std::optional<fs::path>& data_root) {
    if (files.empty()) throw ConfigError("no manifest given");
    std::vector<DatabaseManifest> all;
    for (const auto& f : files) {
        const auto path = locate(f, data_root);
        if (!fs::exists(path)) throw ConfigError("manifest not found: " + path.string());
        for (auto& m : load_manifests(path, data_root)) all.push_back(std::move(m));
    }
    return all;
}

void write_metrics(const fs::path& dir, const MetricsReport& report) {
    write_csv(dir / "metrics.csv", report);
    write_summary_json(dir / "metrics_summary.json", report);
}

std::vector<CaseSample> eval_samples(const std::vector<DatabaseManifest>& manifests, const ModalityRegistry& registry,
                                     const LoadOptions& options, const std::string& split) {
    std::vector<CaseSample> out;
    for (const auto& m : manifests) {
        validate_manifest(m);
        for (const auto& c : m.cases) {
            const bool take = split == "all" || (split == "eval" && c.split == Split::eval) ||
                              (split == "train" && c.split == Split::train);
            if (take) out.push_back(load_case(m, c.case_id, registry, options));
        }
    }
    if (out.empty()) throw DataError("no " + split + " cases to evaluate");
    return out;
}

std::vector<std::string> declared_modalities(const std::vector<DatabaseManifest>& manifests) {
    return build_registry(std::span<const DatabaseManifest>(manifests)).names();
}

// --------------------------------------------------------------------- synth

struct SynthArgs {
    fs::path out;
    int databases = 1;
    std::string modalities = "FLAIR,T1";
    int cases = 4;
    int eval_cases = 0;
    int shape = 32;
    std::uint64_t seed = 0;
    std::string prefix = "SYN";
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    if (a.databases < 1) throw ConfigError("--databases must be >= 1");
    const auto groups = split(a.modalities, ';');
    if (groups.size() != 1 && static_cast<int>(groups.size()) != a.databases) {
        throw ConfigError("--modalities needs one set, or one set per database separated by ';'");
    }
    std::vector<DatabaseManifest> manifests;
    for (int i = 0; i < a.databases; ++i) {
        SyntheticSpec spec;
        spec.database_id = a.prefix + std::to_string(i + 1);
        spec.modalities = modality_list(groups[groups.size() == 1 ? 0 : static_cast<std::size_t>(i)]);
        spec.train_cases = a.cases;
        spec.eval_cases = a.eval_cases;
        spec.shape = {a.shape, a.shape, a.shape};
        spec.seed = splitmix64(a.seed + static_cast<std::uint64_t>(i));
        try {
            validate_synthetic_spec(spec);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
        manifests.push_back(generate_synthetic_database(a.out, spec));
    }
    save_manifests(a.out / "manifest.json", manifests);
    out << (a.out / "manifest.json").string() << '\n';
    return kOk;
}

// --------------------------------------------------------------------- train

struct RunArgs {
    fs::path config;
    std::optional<fs::path> data_root;
    std::vector<fs::path> manifests;
    std::optional<fs::path> out;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> family;
    std::optional<bool> drop;
    std::optional<int> epochs;
    std::optional<long> max_steps;
    bool dry_run = false;
    // finetune only
    std::optional<fs::path> source;
    std::optional<std::string> mode;
    std::optional<std::string> budget;
};

RunConfig resolve(const RunArgs& a) {
    RunConfig cfg = a.config.empty() ? run_config_from_json(nlohmann::json::object()) : load_run_config(a.config);
    cfg.data_root = resolve_data_root(cfg, a.data_root);
    if (!a.manifests.empty()) cfg.manifests = a.manifests;
    if (a.out) cfg.output_dir = *a.out;
    if (a.seed) cfg.seed = cfg.train.seed = *a.seed;
    try {
        if (a.family) cfg.model.family = parse_model_family(*a.family);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (a.drop) cfg.train.drop = *a.drop;
    if (a.epochs) cfg.train.epochs = *a.epochs;
    if (a.max_steps) cfg.train.max_steps = *a.max_steps;
    try {
        cfg.train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

void finish_run(const fs::path& dir, SegmentationNet& model, const TrainingSet& data, const RunConfig& cfg,
                const TrainResult& result, std::ostream& out) {
    nlohmann::json summary{{"steps", result.steps}, {"epochs", result.epochs}, {"final_loss", result.final_loss}};
    if (!data.eval.empty()) {
        const auto report = evaluate([&model](const CaseSample& s) { return predict(model, s); }, data.eval,
                                     ModalityRegistry(model.spec().modalities), std::nullopt,
                                     cfg.evaluate.threshold);
        write_metrics(dir, report);
        summary["eval_dice"] = report.grand_mean_dice;
    }
    std::ofstream(dir / "result.json") << summary.dump(2) << '\n';
    out << dir.string() << '\n';
}

int cmd_train(const RunArgs& a, std::ostream& out) {
    RunConfig cfg = resolve(a);
    if (cfg.model.family == ModelFamily::progressive) {
        throw ConfigError("progressive models are built by 'finetune --mode progressive'");
    }
    const auto manifests = read_manifests(cfg.manifests, cfg.data_root);
    for (const auto& m : manifests) validate_manifest(m);
    if (cfg.model.modalities.empty()) cfg.model.modalities = declared_modalities(manifests);
    const ModalityRegistry registry(cfg.model.modalities);

    write_run_header(cfg.output_dir, cfg, registry.names());
    if (a.dry_run) {
        out << cfg.output_dir.string() << '\n';
        return kOk;
    }
    const auto data = load_training_set(manifests, registry, cfg.data);

    if (cfg.deterministic) seed_everything(cfg.seed);
    torch::manual_seed(cfg.seed);
    auto model = make_model(cfg.model);
    TrainRunOptions run;
    run.output_dir = cfg.output_dir;
    run.config_hash = config_hash(cfg);
    const auto result = train(*model, data, cfg.train, run);
    finish_run(cfg.output_dir, *model, data, cfg, result, out);
    return kOk;
}

// ------------------------------------------------------------------ finetune

int cmd_finetune(const RunArgs& a, std::ostream& out) {
    RunConfig cfg = resolve(a);
    FinetuneBlock block = cfg.finetune.value_or(FinetuneBlock{});
    if (a.source) block.source = *a.source;
    try {
        if (a.mode) block.mode = parse_finetune_mode(*a.mode);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (a.budget) block.budget = parse_budget(*a.budget);
    if (block.source.empty()) throw ConfigError("finetune needs a source checkpoint (--source)");
    cfg.finetune = block;

    const auto source = load_checkpoint(block.source);
    auto manifests = read_manifests(cfg.manifests, cfg.data_root);
    for (auto& m : manifests) {
        validate_manifest(m);
        try {
            m = apply_budget(m, block.budget, cfg.seed);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    }
    FinetuneSetup setup;
    try {
        setup = prepare_finetune(source, declared_modalities(manifests), block.mode, cfg.seed);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    cfg.model = setup.model->spec();

    write_run_header(cfg.output_dir, cfg, setup.registry.names());
    std::ofstream(cfg.output_dir / "remap.json") << to_json(setup.remap).dump(2) << '\n';
    if (a.dry_run) {
        out << cfg.output_dir.string() << '\n';
        return kOk;
    }
    const auto data = load_training_set(manifests, setup.registry, cfg.data);
    if (cfg.deterministic) seed_everything(cfg.seed);
    TrainRunOptions run;
    run.output_dir = cfg.output_dir;
    run.config_hash = config_hash(cfg);
    run.remap = setup.remap;
    const auto result = train(*setup.model, data, cfg.train, run);
    finish_run(cfg.output_dir, *setup.model, data, cfg, result, out);
    return kOk;
}

// ------------------------------------------------------------------ evaluate

struct EvalArgs {
    std::vector<fs::path> checkpoints;
    std::vector<fs::path> manifests;
    std::optional<fs::path> data_root;
    fs::path out = "eval";
    std::string modalities;
    bool sweep = false;
    std::string split = "eval";
    double threshold = 0.5;
    std::size_t max_modalities = 6;
};

MetricsReport evaluate_checkpoint(const EvalArgs& a, const fs::path& checkpoint,
                                  const std::vector<DatabaseManifest>& manifests, std::size_t& cases) {
    const auto ckpt = load_checkpoint(checkpoint);
    const ModalityRegistry registry(ckpt.meta.registry);
    for (const auto& m : manifests) {
        for (const auto& mod : m.modalities) {
            if (!registry.contains(mod)) {
                throw DataError(m.database_id + " declares " + mod + ", which the checkpoint has no channel for");
            }
        }
    }
    const auto samples = eval_samples(manifests, registry, LoadOptions{}, a.split);
    cases = samples.size();
    const auto predictor = make_predictor(ckpt.model);
    if (a.sweep) {
        SweepOptions opt;
        opt.max_modalities = a.max_modalities;
        opt.threshold = a.threshold;
        return subset_sweep(predictor, samples, registry, opt);
    }
    std::optional<std::vector<std::string>> subset;
    if (!a.modalities.empty()) subset = modality_list(a.modalities);
    return evaluate(predictor, samples, registry, subset, a.threshold);
}

// Several checkpoints (one per seed) are evaluated into run1/, run2/, ...
// and their grand means averaged into runs_summary.json.
int cmd_evaluate(const EvalArgs& a, std::ostream& out) {
    if (a.sweep && !a.modalities.empty()) throw ConfigError("--subset-sweep and --modalities are exclusive");
    RunConfig defaults;
    const auto data_root = resolve_data_root(defaults, a.data_root);
    const auto manifests = read_manifests(a.manifests, data_root);

    std::vector<MetricsReport> reports;
    for (std::size_t i = 0; i < a.checkpoints.size(); ++i) {
        std::size_t cases = 0;
        reports.push_back(evaluate_checkpoint(a, a.checkpoints[i], manifests, cases));
        const auto& report = reports.back();
        const auto dir = a.checkpoints.size() == 1 ? a.out : a.out / ("run" + std::to_string(i + 1));
        fs::create_directories(dir);
        write_metrics(dir, report);
        out << "cases " << cases << " rows " << report.records.size() << " mean_dice " << report.grand_mean_dice
            << '\n';
    }
    if (reports.size() > 1) {
        const auto avg = average_runs(reports);
        std::ofstream f(a.out / "runs_summary.json");
        f << to_json(avg).dump(2) << '\n';
        out << "runs " << avg.runs << " mean_dice " << avg.dice.mean << " stddev " << avg.dice.stddev << '\n';
    }
    return kOk;
}

// ------------------------------------------------------------------- predict

struct PredictArgs {
    fs::path checkpoint;
    std::vector<fs::path> manifests;
    std::optional<fs::path> data_root;
    std::string database;
    std::string case_id;
    fs::path out;
    std::string modalities;
    std::optional<double> threshold;
};

int cmd_predict(const PredictArgs& a, std::ostream& out) {
    RunConfig defaults;
    const auto data_root = resolve_data_root(defaults, a.data_root);
    const auto ckpt = load_checkpoint(a.checkpoint);
    const ModalityRegistry registry(ckpt.meta.registry);
    const auto manifests = read_manifests(a.manifests, data_root);
    const DatabaseManifest* db = nullptr;
    for (const auto& m : manifests) {
        if (a.database.empty() || m.database_id == a.database) {
            for (const auto& c : m.cases) {
                if (c.case_id == a.case_id) db = &m;
            }
        }
        if (db) break;
    }
    if (!db) throw DataError("case '" + a.case_id + "' not found in the given manifests");
    LoadOptions opt;
    if (!a.modalities.empty()) opt.modalities = modality_list(a.modalities);
    const auto sample = load_case(*db, a.case_id, registry, opt);
    const auto prob = predict(*ckpt.model, sample);
    if (a.threshold) {
        write_nifti(a.out, binarize(prob, *a.threshold), sample.spacing);
    } else {
        write_nifti(a.out, prob, sample.spacing);
    }
    out << a.out.string() << '\n';
    return kOk;
}

void add_run_options(CLI::App* cmd, RunArgs& a) {
    cmd->add_option("--config", a.config, "Run config (JSON)");
    cmd->add_option("--data-root", a.data_root, "Data root; overrides $HETSEG_DATA_ROOT and the config");
    cmd->add_option("--manifest", a.manifests, "Manifest file(s); replaces the config list");
    cmd->add_option("--out", a.out, "Run directory");
    cmd->add_option("--seed", a.seed, "Seed");
    cmd->add_option("--epochs", a.epochs, "Epochs");
    cmd->add_option("--max-steps", a.max_steps, "Stop after this many optimizer steps");
    cmd->add_flag("--dry-run", a.dry_run, "Validate inputs and write the run header only");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"hetseg: lesion segmentation across databases with heterogeneous modalities", "hetseg"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* c_synth = app.add_subcommand("synth", "Write a synthetic multi-database dataset");
    c_synth->add_option("--out", synth.out, "Output directory")->required();
    c_synth->add_option("--databases", synth.databases, "Number of databases");
    c_synth->add_option("--modalities", synth.modalities, "Modality sets, e.g. \"FLAIR,T1;T1\"");
    c_synth->add_option("--cases", synth.cases, "Train cases per database");
    c_synth->add_option("--eval-cases", synth.eval_cases, "Eval cases per database");
    c_synth->add_option("--shape", synth.shape, "Cubic volume extent");
    c_synth->add_option("--seed", synth.seed, "Seed");
    c_synth->add_option("--prefix", synth.prefix, "Database id prefix");

    RunArgs train_args;
    auto* c_train = app.add_subcommand("train", "Joint training over one or more databases");
    add_run_options(c_train, train_args);
    c_train->add_option("--family", train_args.family, "multi_unet | lf_unet | maf_unet");
    c_train->add_flag("--drop,!--no-drop", train_args.drop, "Random modality dropping");

    RunArgs ft_args;
    auto* c_ft = app.add_subcommand("finetune", "Fine-tune a checkpoint on target databases");
    add_run_options(c_ft, ft_args);
    c_ft->add_option("--source", ft_args.source, "Pretrained checkpoint");
    c_ft->add_option("--mode", ft_args.mode, "scratch | finetune | progressive");
    c_ft->add_option("--budget", ft_args.budget, "Labelled train cases per database, or 'all'");
    c_ft->add_flag("--drop,!--no-drop", ft_args.drop, "Random modality dropping");

    EvalArgs eval;
    auto* c_eval = app.add_subcommand("evaluate", "Evaluate a checkpoint");
    c_eval->add_option("--checkpoint", eval.checkpoints, "Checkpoint; repeat to average runs")->required();
    c_eval->add_option("--manifest", eval.manifests, "Manifest file(s)")->required();
    c_eval->add_option("--data-root", eval.data_root, "Data root");
    c_eval->add_option("--out", eval.out, "Output directory for metrics.csv and metrics_summary.json");
    c_eval->add_option("--modalities", eval.modalities, "Evaluate with only these modalities, e.g. FLAIR,T1");
    c_eval->add_flag("--subset-sweep", eval.sweep, "Evaluate every non-empty modality subset");
    c_eval->add_option("--split", eval.split, "eval | train | all")
        ->check(CLI::IsMember({"eval", "train", "all"}));
    c_eval->add_option("--threshold", eval.threshold, "Binarization threshold")->check(CLI::Range(0.0, 1.0));
    c_eval->add_option("--max-modalities", eval.max_modalities, "Largest modality set a sweep accepts");

    PredictArgs pred;
    auto* c_pred = app.add_subcommand("predict", "Write a lesion probability map for one case");
    c_pred->add_option("--checkpoint", pred.checkpoint, "Checkpoint")->required();
    c_pred->add_option("--manifest", pred.manifests, "Manifest file(s)")->required();
    c_pred->add_option("--data-root", pred.data_root, "Data root");
    c_pred->add_option("--database", pred.database, "Database id");
    c_pred->add_option("--case", pred.case_id, "Case id")->required();
    c_pred->add_option("--out", pred.out, "Output NIfTI path")->required();
    c_pred->add_option("--modalities", pred.modalities, "Use only these modalities");
    c_pred->add_option("--threshold", pred.threshold, "Write a binary mask at this threshold");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (c_synth->parsed()) return cmd_synth(synth, out);
        if (c_train->parsed()) return cmd_train(train_args, out);
        if (c_ft->parsed()) return cmd_finetune(ft_args, out);
        if (c_eval->parsed()) return cmd_evaluate(eval, out);
        if (c_pred->parsed()) return cmd_predict(pred, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const CheckpointError& e) {
        err << "checkpoint error: " << e.what() << '\n';
        return kConfigError;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const UnknownModality& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const TrainingDivergence& e) {
        err << "training diverged: " << e.what() << '\n';
        return kDiverged;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kFailure;
}

}  // namespace hetseg::cli
