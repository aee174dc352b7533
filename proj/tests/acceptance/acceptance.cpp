// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance gate. Each criterion prints one PASS/FAIL line;
// the exit status is non-zero when any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cli.hpp"
#include "fixtures.hpp"
#include "hetseg/checkpoint.hpp"
#include "hetseg/config.hpp"
#include "hetseg/fusion.hpp"
#include "hetseg/metrics.hpp"
#include "hetseg/models.hpp"
#include "hetseg/sampler.hpp"
#include "hetseg/synthetic.hpp"
#include "hetseg/training.hpp"
#include "oracles.hpp"

using namespace hetseg;
using fixture::TempDir;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int precision = 4) {
    std::ostringstream s;
    s << std::setprecision(precision) << v;
    return s.str();
}

bool bit_equal(const FloatVolume& a, const FloatVolume& b) {
    return a.shape() == b.shape() && std::memcmp(a.raw().data(), b.raw().data(), a.size() * sizeof(float)) == 0;
}

// ------------------------------------------------------------------------ 1

Outcome fusion_normalization() {
    seed_everything(1);
    double worst = 0.0;
    double min_weight = 1.0;
    int maps = 0;
    for (auto family : {ModelFamily::lf_unet, ModelFamily::maf_unet}) {
        for (int c : {2, 3, 7}) {
            std::vector<std::string> mods;
            for (int i = 0; i < c; ++i) mods.push_back("M" + std::to_string(i));
            auto model = make_model(fixture::spec_for(family, mods));
            auto x = torch::randn({2, c, 16, 16, 16});
            x.index_put_({1, 0}, 0.0f);  // one absent modality in the second sample
            FusedForward f;
            torch::NoGradGuard guard;
            if (auto* lf = dynamic_cast<LFUnet*>(model.get())) {
                f = lf->forward_with_attention(x);
            } else {
                f = dynamic_cast<MAFUnet*>(model.get())->forward_with_attention(x);
            }
            for (const auto& a : f.attention) {
                worst = std::max(worst, (a.to(torch::kFloat64).sum(1) - 1.0).abs().max().item<double>());
                min_weight = std::min(min_weight, a.min().item<double>());
                ++maps;
            }
        }
    }
    return {worst <= 1e-5 && min_weight >= 0.0 && maps == 3 + 3 * fixture::tiny_backbone().levels,
            std::to_string(maps) + " attention maps, max |sum-1| = " + fmt(worst) + ", min weight = " +
                fmt(min_weight)};
}

// ------------------------------------------------------------------------ 2

Outcome zero_fill_equivalence() {
    seed_everything(2);
    auto model = std::make_shared<MultiUnet>(fixture::spec_for(ModelFamily::multi_unet, {"FLAIR", "T1", "T2"}));
    Rng rng(2);
    int identical = 0;
    int trials = 0;
    for (std::size_t m = 0; m < 3; ++m) {
        const auto full = fixture::random_sample({16, 16, 16}, {true, true, true}, rng);
        auto absent = full;
        absent.blank_channel(m);  // marked absent
        auto zeroed = full;
        std::fill(zeroed.channel(m).begin(), zeroed.channel(m).end(), 0.0f);  // still marked present
        const auto a = predict(*model, absent);
        const auto b = predict(*model, zeroed);
        identical += bit_equal(a, b);
        ++trials;
    }
    return {identical == trials, std::to_string(identical) + "/" + std::to_string(trials) + " bit-identical"};
}

// ------------------------------------------------------------------------ 3

Outcome drop_statistics() {
    Rng data_rng(3);
    const auto four = fixture::random_sample({2, 2, 2}, {true, true, true, true}, data_rng);
    const auto one = fixture::random_sample({2, 2, 2}, {true}, data_rng);
    DropPolicy policy;
    policy.seed = 3;
    Rng rng(33);
    const int draws = 100000;
    std::vector<int> survived(4, 0);
    for (int i = 0; i < draws; ++i) {
        const auto s = apply_drop(four, policy, rng);
        for (std::size_t c = 0; c < 4; ++c) survived[c] += s.presence[c];
    }
    int single_drops = 0;
    for (int i = 0; i < draws; ++i) single_drops += !apply_drop(one, policy, rng).presence[0];

    bool ok = single_drops == 0;
    std::string detail = "survival";
    for (int n : survived) {
        const double rate = static_cast<double>(n) / draws;
        ok = ok && std::abs(rate - 0.625) <= 0.01;
        detail += " " + fmt(rate);
    }
    detail += " (target 0.625 +- 0.01); C=1 drops: " + std::to_string(single_drops);
    return {ok, detail};
}

// ------------------------------------------------------------------------ 4

Outcome metric_oracles() {
    Rng rng(4);
    std::uniform_int_distribution<int> ext10(1, 10);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int exact = 0;
    for (int i = 0; i < 200; ++i) {
        const Shape3 s{ext10(rng), ext10(rng), ext10(rng)};
        const auto p = oracle::random_mask(s, u(rng), rng);
        const auto g = oracle::random_mask(s, u(rng), rng);
        const auto sp = sensitivity_precision(p, g);
        exact += dice(p, g) == oracle::dice(p, g) && sp.sensitivity == oracle::sensitivity(p, g) &&
                 sp.precision == oracle::precision(p, g);
    }
    std::uniform_int_distribution<int> ext20(2, 20);
    double worst = 0.0;
    int anisotropic = 0;
    for (int i = 0; i < 50; ++i) {
        const Shape3 s{ext20(rng), ext20(rng), ext20(rng)};
        Spacing3 spacing{1.0, 1.0, 1.0};
        if (i % 2 == 1) {
            spacing = {0.5 + 2.5 * u(rng), 0.5 + 2.5 * u(rng), 0.5 + 2.5 * u(rng)};
            ++anisotropic;
        }
        const auto a = oracle::random_blobs(s, rng);
        const auto b = i % 5 == 0 ? oracle::random_mask(s, 0.3, rng) : oracle::random_blobs(s, rng);
        bool nonempty = false;
        for (std::size_t k = 0; k < b.size(); ++k) nonempty = nonempty || b[k];
        if (!nonempty) continue;
        worst = std::max(worst, std::abs(assd(a, b, spacing) - oracle::assd(a, b, spacing)));
    }
    return {exact == 200 && worst <= 1e-9,
            std::to_string(exact) + "/200 exact Dice/Sens/Prec; ASSD max error " + fmt(worst) + " mm over 50 pairs (" +
                std::to_string(anisotropic) + " anisotropic)"};
}

// ------------------------------------------------------------------------ 5

Outcome oversampling() {
    const std::vector<DatabaseManifest> dbs{fixture::toy_manifest("A", {"FLAIR"}, 12),
                                            fixture::toy_manifest("B", {"T1"}, 3),
                                            fixture::toy_manifest("C", {"T2"}, 5)};
    Rng rng(5);
    int good = 0;
    const int epochs = 200;
    for (int e = 0; e < epochs; ++e) {
        const auto plan = plan_epoch(dbs, rng);
        std::map<std::string, int> counted;
        for (const auto& d : plan.draws) ++counted[d.database_id];
        bool ok = true;
        for (const char* id : {"A", "B", "C"}) ok = ok && std::abs(counted[id] - 12) <= 1;
        good += ok;
    }
    return {good == epochs, std::to_string(good) + "/" + std::to_string(epochs) + " epoch plans with 12 (+-1) draws per database"};
}

// ------------------------------------------------------------------------ 6

Outcome schedule() {
    TempDir dir("hetseg-acc6");
    std::ostringstream out, err;
    int rc = cli::run({"synth", "--out", (dir / "data").string(), "--cases", "1", "--shape", "16"}, out, err);
    if (rc != 0) return {false, "synth failed: " + err.str()};
    {
        std::ofstream cfg(dir / "cfg.json");
        cfg << nlohmann::json{{"manifests", {(dir / "data" / "manifest.json").string()}}}.dump();
    }
    rc = cli::run({"train", "--config", (dir / "cfg.json").string(), "--out", (dir / "run").string(), "--dry-run"},
                  out, err);
    if (rc != 0) return {false, "train --dry-run failed: " + err.str()};
    const auto resolved = load_run_config(dir / "run" / "config.json");
    const auto& t = resolved.train;
    const bool ok = t.learning_rate(150) == 0.001 && t.learning_rate(151) == 0.0001 && t.epochs == 600 &&
                    t.batch_size == 2;
    return {ok, "lr(150)=" + fmt(t.learning_rate(150)) + " lr(151)=" + fmt(t.learning_rate(151)) +
                    " epochs=" + std::to_string(t.epochs) + " batch=" + std::to_string(t.batch_size)};
}

// ------------------------------------------------------------------------ 7

Outcome overfit_smoke() {
    TempDir dir("hetseg-acc7");
    SyntheticSpec spec;
    spec.database_id = "OVERFIT";
    spec.shape = {48, 48, 48};
    spec.train_cases = 2;
    spec.modalities = {"FLAIR", "T1"};
    spec.seed = 7;
    const auto manifest = generate_synthetic_database(dir.path(), spec);
    const auto data = load_training_set({manifest}, build_registry(std::vector<std::vector<std::string>>{spec.modalities}));

    TrainConfig cfg;
    cfg.patch = spec.shape;
    cfg.drop = false;
    cfg.eval_every = 0;
    cfg.max_steps = 300;
    cfg.seed = 7;

    bool ok = true;
    std::string detail;
    for (auto family : {ModelFamily::multi_unet, ModelFamily::lf_unet, ModelFamily::maf_unet}) {
        seed_everything(7);
        ModelSpec ms;
        ms.family = family;
        ms.modalities = spec.modalities;
        auto model = make_model(ms);
        const auto registry = ModalityRegistry(ms.modalities);
        auto train_dice = [&](SegmentationNet& m) {
            return evaluate([&m](const CaseSample& s) { return predict(m, s); }, data.train, registry)
                .grand_mean_dice;
        };
        TrainRunOptions run;
        long reached = -1;
        run.hooks.should_stop = [&](const StepRecord& r, SegmentationNet& m) {
            if (r.step % 10 != 0) return false;
            if (train_dice(m) >= 0.95) reached = r.step;
            return reached > 0;
        };
        const auto t0 = std::chrono::steady_clock::now();
        const auto result = train(*model, data, cfg, run);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const double final_dice = train_dice(*model);
        const bool pass = final_dice >= 0.95 && result.steps <= 300;
        ok = ok && pass;
        detail += std::string(detail.empty() ? "" : "; ") + to_string(family) + " dice " + fmt(final_dice) +
                  " after " + std::to_string(result.steps) + " steps (" + fmt(secs, 3) + " s)";
    }
    return {ok, detail};
}

// ------------------------------------------------------------------------ 8

struct ToyScale {
    Shape3 shape{32, 32, 32};
    BackboneConfig backbone;
    ToyScale() {
        backbone.levels = 3;
        backbone.base_width = 8;
    }
};

double single_modality_drop(SegmentationNet& model, const std::vector<CaseSample>& eval,
                            const ModalityRegistry& registry) {
    const auto report = subset_sweep([&model](const CaseSample& s) { return predict(model, s); }, eval, registry);
    return -*report.mean_dice_drop;  // positive when subsets do worse than the full set
}

Outcome drop_training_direction() {
    TempDir dir("hetseg-acc8");
    const ToyScale toy;
    SyntheticSpec spec;
    spec.database_id = "BOTH";
    spec.shape = toy.shape;
    spec.train_cases = 8;
    spec.eval_cases = 6;
    spec.modalities = {"FLAIR", "T1"};
    spec.seed = 8;
    const auto manifest = generate_synthetic_database(dir.path(), spec);
    const ModalityRegistry registry(spec.modalities);
    const auto data = load_training_set({manifest}, registry);

    double sum_drop = 0.0, sum_all = 0.0;
    std::string detail;
    for (std::uint64_t seed : {0, 1, 2}) {
        double loss[2];
        for (int arm = 0; arm < 2; ++arm) {
            TrainConfig cfg;
            cfg.patch = toy.shape;
            cfg.drop = arm == 0;
            cfg.eval_every = 0;
            cfg.max_steps = 240;
            cfg.seed = seed;
            seed_everything(seed);
            MultiUnet model(fixture::spec_for(ModelFamily::multi_unet, spec.modalities, toy.backbone));
            train(model, data, cfg);
            loss[arm] = single_modality_drop(model, data.eval, registry);
        }
        sum_drop += loss[0];
        sum_all += loss[1];
        detail += "seed " + std::to_string(seed) + ": drop " + fmt(loss[0]) + " vs all " + fmt(loss[1]) + "; ";
    }
    detail += "mean single-modality Dice drop: drop-trained " + fmt(sum_drop / 3) + ", all-mods " + fmt(sum_all / 3);
    return {sum_drop < sum_all, detail};
}

// ------------------------------------------------------------------------ 9

Outcome finetune_direction() {
    TempDir dir("hetseg-acc9");
    const ToyScale toy;
    auto make_db = [&](const std::string& id, std::vector<std::string> mods, int train, int eval, std::uint64_t seed) {
        SyntheticSpec s;
        s.database_id = id;
        s.shape = toy.shape;
        s.train_cases = train;
        s.eval_cases = eval;
        s.modalities = std::move(mods);
        s.seed = seed;
        return generate_synthetic_database(dir.path(), s);
    };
    const std::vector<DatabaseManifest> sources{make_db("SRC1", {"FLAIR", "T1", "T2"}, 10, 0, 91),
                                                make_db("SRC2", {"PD", "FLAIR", "T1c"}, 10, 0, 92)};
    const auto target_full = make_db("TARGET", {"FLAIR", "T1", "T2"}, 12, 6, 93);

    const auto src_registry = build_registry(std::span<const DatabaseManifest>(sources));
    const auto src_data = load_training_set(sources, src_registry);
    TrainConfig pre;
    pre.patch = toy.shape;
    pre.eval_every = 0;
    pre.max_steps = 400;
    pre.seed = 90;
    seed_everything(90);
    MultiUnet pretrained(fixture::spec_for(ModelFamily::multi_unet, src_registry.names(), toy.backbone));
    train(pretrained, src_data, pre);
    save_checkpoint(dir / "pretrained.pt", pretrained,
                    CheckpointMeta{kCheckpointVersion, pretrained.spec(), pretrained.spec().modalities, "", 0, {}});
    const auto source = load_checkpoint(dir / "pretrained.pt");

    std::map<FinetuneMode, double> mean;
    std::string detail;
    for (std::uint64_t seed : {0, 1, 2}) {
        const auto target = apply_budget(target_full, 8, seed);
        for (auto mode : {FinetuneMode::scratch, FinetuneMode::finetune, FinetuneMode::progressive}) {
            auto setup = prepare_finetune(source, target.modalities, mode, seed);
            const auto data = load_training_set({target}, setup.registry);
            TrainConfig cfg;
            cfg.patch = toy.shape;
            cfg.eval_every = 0;
            cfg.max_steps = 60;
            cfg.seed = seed;
            seed_everything(seed);
            train(*setup.model, data, cfg);
            const auto d = evaluate(make_predictor(setup.model), data.eval, setup.registry).grand_mean_dice;
            mean[mode] += d / 3.0;
            detail += to_string(mode) + std::string("[") + std::to_string(seed) + "]=" + fmt(d, 3) + " ";
        }
    }
    detail += "| mean scratch " + fmt(mean[FinetuneMode::scratch]) + ", finetune " +
              fmt(mean[FinetuneMode::finetune]) + ", progressive " + fmt(mean[FinetuneMode::progressive]);
    return {mean[FinetuneMode::finetune] > mean[FinetuneMode::scratch] &&
                mean[FinetuneMode::progressive] > mean[FinetuneMode::scratch],
            detail};
}

// ----------------------------------------------------------------------- 10

Outcome progressive_freeze() {
    TempDir dir("hetseg-acc10");
    SyntheticSpec spec;
    spec.database_id = "PROG";
    spec.shape = {16, 16, 16};
    spec.lesions.max_radius = 5.0;
    spec.train_cases = 4;
    spec.modalities = {"FLAIR", "T1"};
    spec.seed = 10;
    const auto manifest = generate_synthetic_database(dir.path(), spec);

    seed_everything(10);
    auto column = std::make_shared<MultiUnet>(fixture::spec_for(ModelFamily::multi_unet, spec.modalities));
    ProgressiveUnet model(column);
    std::vector<torch::Tensor> before;
    for (const auto& p : model.frozen_parameters()) before.push_back(p.detach().clone());

    const auto data = load_training_set({manifest}, ModalityRegistry(spec.modalities));
    TrainConfig cfg;
    cfg.patch = spec.shape;
    cfg.eval_every = 0;
    cfg.max_steps = 20;
    double max_grad = 0.0;
    long steps = 0;
    TrainRunOptions run;
    run.hooks.on_step = [&](const StepRecord&, SegmentationNet&) {
        ++steps;
        for (const auto& p : model.frozen_parameters()) {
            if (p.grad().defined()) max_grad = std::max(max_grad, p.grad().norm().item<double>());
        }
    };
    train(model, data, cfg, run);

    double max_diff = 0.0;
    const auto after = model.frozen_parameters();
    for (std::size_t i = 0; i < after.size(); ++i) {
        max_diff = std::max(max_diff, (after[i] - before[i]).abs().max().item<double>());
    }
    return {max_diff == 0.0 && max_grad == 0.0 && steps == 20,
            "column-1 max abs diff " + fmt(max_diff) + ", max per-step grad norm " + fmt(max_grad) + " over " +
                std::to_string(steps) + " steps (" + std::to_string(after.size()) + " frozen tensors)"};
}

// ----------------------------------------------------------------------- 11

Outcome channel_remap() {
    seed_everything(11);
    const std::vector<std::vector<std::string>> pretrained_sets{{"PD", "FLAIR", "T1", "T1c"}, {"FLAIR", "T2", "DWI"}};
    const auto pretrained = build_registry(std::span<const std::vector<std::string>>(pretrained_sets));
    MultiUnet model(fixture::spec_for(ModelFamily::multi_unet, pretrained.names()));
    const auto pd = pretrained.channel_of("PD");
    const auto tbi = plan_remap(pretrained.names(), {"FLAIR", "T1", "T2", "SWI"});
    const auto applied = remap_channels(model, {"FLAIR", "T1", "T2", "SWI"});
    const bool first = tbi.reused.size() == 1 && tbi.reused.count("SWI") && tbi.reused.at("SWI") == pd &&
                       tbi.expansion_count() == 0 && applied == tbi &&
                       model.spec().modalities[pd] == "SWI" &&
                       model.encoder->in_channels() == static_cast<int>(pretrained.size());

    MultiUnet small(fixture::spec_for(ModelFamily::multi_unet, {"PD", "FLAIR", "T1"}));
    const auto w_before = small.encoder->input_conv()->weight.detach().clone();
    const auto r = remap_channels(small, {"FLAIR", "T1", "X1", "X2", "X3"});
    const auto w_after = small.encoder->input_conv()->weight.detach();
    const bool kept = torch::equal(w_after.slice(1, 0, 3), w_before);
    const bool second = r.reused.size() == 1 && r.expansion_count() == 2 && small.encoder->in_channels() == 5 && kept;

    return {first && second, "SWI -> channel " + (tbi.reused.count("SWI") ? std::to_string(tbi.reused.at("SWI")) : "?") +
                                 " (PD is " + std::to_string(pd) + "), expanded " +
                                 std::to_string(tbi.expansion_count()) + "; 3 novel/1 free: reused " +
                                 std::to_string(r.reused.size()) + ", expanded " + std::to_string(r.expansion_count()) +
                                 (kept ? ", old filters kept" : ", old filters changed")};
}

// ----------------------------------------------------------------------- 12

double relative_error(const torch::Tensor& a, const torch::Tensor& b) {
    const double scale = std::max({a.norm().item<double>(), b.norm().item<double>(), 1e-12});
    return (a - b).norm().item<double>() / scale;
}

Outcome fusion_gradcheck() {
    torch::manual_seed(12);
    const int c = 3, f = 2;
    FusionBlock block(c, f);
    block.to(torch::kFloat64);
    auto z = torch::randn({1, c, f, 4, 4, 4}, torch::kFloat64).requires_grad_(true);
    const auto w_fused = torch::randn({1, f, 4, 4, 4}, torch::kFloat64);
    const auto w_attn = torch::randn({1, c, 4, 4, 4}, torch::kFloat64);
    auto objective = [&]() {
        const auto out = block.forward(z);
        return (out.fused * w_fused).sum() + (out.attention * w_attn).sum();
    };

    std::vector<torch::Tensor> inputs{z};
    for (auto& p : block.parameters()) inputs.push_back(p);
    for (auto& t : inputs) t.mutable_grad() = torch::Tensor();
    objective().backward();

    const double h = 1e-5;
    double worst = 0.0;
    std::int64_t checked = 0;
    for (auto& t : inputs) {
        const auto analytic = t.grad().clone();
        auto numeric = torch::zeros_like(analytic);
        torch::NoGradGuard guard;
        auto flat = t.view({-1});
        auto nflat = numeric.view({-1});
        for (std::int64_t i = 0; i < flat.numel(); ++i) {
            const double orig = flat[i].item<double>();
            flat[i] = orig + h;
            const double up = objective().item<double>();
            flat[i] = orig - h;
            const double down = objective().item<double>();
            flat[i] = orig;
            nflat[i] = (up - down) / (2 * h);
        }
        worst = std::max(worst, relative_error(analytic, numeric));
        checked += flat.numel();
    }
    return {worst <= 1e-4, std::to_string(checked) + " partials, max relative error " + fmt(worst)};
}

// ----------------------------------------------------------------------- 13

Outcome subset_sweep_count() {
    TempDir dir("hetseg-acc13");
    SyntheticSpec spec;
    spec.database_id = "QUAD";
    spec.shape = {16, 16, 16};
    spec.lesions.max_radius = 5.0;
    spec.train_cases = 1;
    spec.eval_cases = 2;
    spec.modalities = {"FLAIR", "T1", "T1c", "T2"};
    spec.seed = 13;
    const auto manifest = generate_synthetic_database(dir.path(), spec);
    const ModalityRegistry registry(spec.modalities);
    const auto data = load_training_set({manifest}, registry);

    seed_everything(13);
    auto model = make_model(fixture::spec_for(ModelFamily::multi_unet, spec.modalities));
    TrainConfig cfg;
    cfg.patch = spec.shape;
    cfg.eval_every = 0;
    cfg.max_steps = 10;
    train(*model, data, cfg);

    const auto predictor = make_predictor(model);
    const auto sweep = subset_sweep(predictor, data.eval, registry);
    const auto plain = evaluate(predictor, data.eval, registry);

    bool counts = sweep.records.size() == 15 * data.eval.size() && sweep.groups.size() == 15;
    bool equal = true;
    for (const auto& p : plain.records) {
        const auto it = std::find_if(sweep.records.begin(), sweep.records.end(), [&](const CaseMetrics& r) {
            return r.case_id == p.case_id && r.subset.size() == 4;
        });
        equal = equal && it != sweep.records.end() && it->dice == p.dice && it->sensitivity == p.sensitivity &&
                it->precision == p.precision && it->assd_mm == p.assd_mm;
    }
    return {counts && equal, std::to_string(sweep.records.size() / data.eval.size()) + " subset evaluations per case, " +
                                 std::to_string(sweep.groups.size()) + " groups; full-subset rows " +
                                 (equal ? "bit-identical" : "DIFFER") + " to plain evaluation"};
}

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hetseg acceptance criteria"};
    std::vector<int> only;
    app.add_option("--only", only, "Criterion numbers to run (default: all)");
    CLI11_PARSE(app, argc, argv);

    const std::vector<Criterion> criteria{
        {1, "fusion normalization", fusion_normalization},
        {2, "zero-fill equivalence", zero_fill_equivalence},
        {3, "drop-rule statistics", drop_statistics},
        {4, "metric oracles", metric_oracles},
        {5, "oversampling", oversampling},
        {6, "schedule from resolved config", schedule},
        {7, "overfit smoke", overfit_smoke},
        {8, "modality-drop training direction", drop_training_direction},
        {9, "fine-tuning direction", finetune_direction},
        {10, "progressive freeze", progressive_freeze},
        {11, "channel remap", channel_remap},
        {12, "fusion gradient check", fusion_gradcheck},
        {13, "subset sweep count", subset_sweep_count},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::cout << (o.pass ? "PASS" : "FAIL") << "  " << std::setw(2) << c.id << "  " << c.name << "  ["
                  << std::fixed << std::setprecision(1) << secs << " s]  " << std::defaultfloat << o.detail
                  << std::endl;
        failed += !o.pass;
    }
    return failed == 0 ? 0 : 1;
}
