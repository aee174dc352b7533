// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace hetseg {
namespace {

const std::set<std::string> kTrainKeys = {
    "batch_size", "epochs", "lr_initial", "lr_after_decay", "decay_epoch", "loss",       "optimizer", "seed",
    "drop",       "drop_exempt", "patch", "foreground_bias", "eval_every", "max_steps"};

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("train config: " + what);
}

std::shared_ptr<SegmentationNet> clone_model(const SegmentationNet& model) {
    auto copy = make_model(model.spec());
    torch::NoGradGuard guard;
    const auto src = model.named_parameters();
    for (auto& dst : copy->named_parameters()) {
        dst.value().copy_(src[dst.key()]);
        dst.value().set_requires_grad(src[dst.key()].requires_grad());
    }
    return copy;
}

// Hard Dice of each sample of a batch; empty/empty counts as 1.
std::vector<double> batch_dice(const torch::Tensor& probability, const torch::Tensor& label) {
    torch::NoGradGuard guard;
    const auto b = probability.size(0);
    const auto p = (probability.reshape({b, -1}) >= 0.5).to(torch::kFloat64);
    const auto g = label.reshape({b, -1}).to(torch::kFloat64);
    const auto inter = (p * g).sum(1);
    const auto denom = p.sum(1) + g.sum(1);
    std::vector<double> out;
    for (std::int64_t i = 0; i < b; ++i) {
        const double d = denom[i].item<double>();
        out.push_back(d == 0.0 ? 1.0 : 2.0 * inter[i].item<double>() / d);
    }
    return out;
}

CheckpointMeta meta_for(const SegmentationNet& model, const TrainRunOptions& run, int epoch) {
    CheckpointMeta meta;
    meta.spec = model.spec();
    meta.registry = model.spec().modalities;
    meta.config_hash = run.config_hash;
    meta.epoch = epoch;
    meta.remap = run.remap;
    return meta;
}

}  // namespace

double TrainConfig::learning_rate(int epoch) const { return epoch <= decay_epoch ? lr_initial : lr_after_decay; }

void TrainConfig::validate() const {
    require(batch_size >= 1, "batch_size must be >= 1");
    require(epochs >= 1, "epochs must be >= 1");
    require(lr_initial > 0.0 && lr_after_decay > 0.0, "learning rates must be positive");
    require(decay_epoch >= 0, "decay_epoch must be >= 0");
    require(loss.dice_weight >= 0.0 && loss.ce_weight >= 0.0, "loss weights must be non-negative");
    require(loss.smooth >= 0.0, "loss smoothing must be non-negative");
    require(loss.eps > 0.0 && loss.eps < 0.5, "loss eps must be in (0, 0.5)");
    require(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0 && optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0,
            "optimizer betas must be in [0, 1)");
    require(patch.x >= 1 && patch.y >= 1 && patch.z >= 1, "patch extent must be positive");
    require(foreground_bias >= 0.0 && foreground_bias <= 1.0, "foreground_bias must be in [0, 1]");
    require(eval_every >= 0, "eval_every must be >= 0");
    require(max_steps >= 0, "max_steps must be >= 0");
}

nlohmann::json to_json(const TrainConfig& cfg) {
    return {{"batch_size", cfg.batch_size},
            {"epochs", cfg.epochs},
            {"lr_initial", cfg.lr_initial},
            {"lr_after_decay", cfg.lr_after_decay},
            {"decay_epoch", cfg.decay_epoch},
            {"loss",
             {{"dice_weight", cfg.loss.dice_weight},
              {"ce_weight", cfg.loss.ce_weight},
              {"smooth", cfg.loss.smooth},
              {"eps", cfg.loss.eps}}},
            {"optimizer",
             {{"name", "adam"},
              {"beta1", cfg.optimizer.beta1},
              {"beta2", cfg.optimizer.beta2},
              {"eps", cfg.optimizer.eps},
              {"weight_decay", cfg.optimizer.weight_decay}}},
            {"seed", cfg.seed},
            {"drop", cfg.drop},
            {"drop_exempt", cfg.drop_exempt},
            {"patch", {cfg.patch.x, cfg.patch.y, cfg.patch.z}},
            {"foreground_bias", cfg.foreground_bias},
            {"eval_every", cfg.eval_every},
            {"max_steps", cfg.max_steps}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    require(j.is_object(), "expected an object");
    for (const auto& [key, value] : j.items()) require(kTrainKeys.count(key) != 0, "unknown key '" + key + "'");
    TrainConfig c;
    try {
        c.batch_size = j.value("batch_size", c.batch_size);
        c.epochs = j.value("epochs", c.epochs);
        c.lr_initial = j.value("lr_initial", c.lr_initial);
        c.lr_after_decay = j.value("lr_after_decay", c.lr_after_decay);
        c.decay_epoch = j.value("decay_epoch", c.decay_epoch);
        if (j.contains("loss")) {
            const auto& l = j["loss"];
            c.loss.dice_weight = l.value("dice_weight", c.loss.dice_weight);
            c.loss.ce_weight = l.value("ce_weight", c.loss.ce_weight);
            c.loss.smooth = l.value("smooth", c.loss.smooth);
            c.loss.eps = l.value("eps", c.loss.eps);
        }
        if (j.contains("optimizer")) {
            const auto& o = j["optimizer"];
            require(o.value("name", std::string("adam")) == "adam", "only the adam optimizer is supported");
            c.optimizer.beta1 = o.value("beta1", c.optimizer.beta1);
            c.optimizer.beta2 = o.value("beta2", c.optimizer.beta2);
            c.optimizer.eps = o.value("eps", c.optimizer.eps);
            c.optimizer.weight_decay = o.value("weight_decay", c.optimizer.weight_decay);
        }
        c.seed = j.value("seed", c.seed);
        c.drop = j.value("drop", c.drop);
        if (j.contains("drop_exempt")) c.drop_exempt = j["drop_exempt"].get<std::set<std::string>>();
        if (j.contains("patch")) {
            const auto p = j["patch"].get<std::vector<std::int64_t>>();
            require(p.size() == 3, "patch must have three extents [x, y, z]");
            c.patch = {p[0], p[1], p[2]};
        }
        c.foreground_bias = j.value("foreground_bias", c.foreground_bias);
        c.eval_every = j.value("eval_every", c.eval_every);
        c.max_steps = j.value("max_steps", c.max_steps);
    } catch (const nlohmann::json::type_error& e) {
        throw std::invalid_argument(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

LossTerms segmentation_loss(const torch::Tensor& probability, const torch::Tensor& label, const LossSpec& spec) {
    if (probability.sizes() != label.sizes()) throw std::invalid_argument("loss: prediction and label shapes differ");
    const auto b = probability.size(0);
    const auto p = probability.reshape({b, -1});
    const auto g = label.reshape({b, -1}).to(probability.dtype());

    const auto inter = (p * g).sum(1);
    const auto denom = p.sum(1) + g.sum(1);
    const auto dice = (1.0 - (2.0 * inter + spec.smooth) / (denom + spec.smooth)).mean();

    const auto pc = p.clamp(spec.eps, 1.0 - spec.eps);
    const auto ce = -(g * torch::log(pc) + (1.0 - g) * torch::log(1.0 - pc)).mean();
    return {spec.dice_weight * dice + spec.ce_weight * ce, dice, ce};
}

void seed_everything(std::uint64_t seed) {
    torch::manual_seed(seed);
    torch::set_num_threads(1);
    at::globalContext().setDeterministicAlgorithms(true, false);
}

const CaseSample& TrainingSet::find_train(const std::string& database_id, const std::string& case_id) const {
    for (const auto& s : train) {
        if (s.database_id == database_id && s.case_id == case_id) return s;
    }
    throw DataError("no loaded train case " + database_id + "/" + case_id);
}

TrainingSet load_training_set(std::vector<DatabaseManifest> manifests, const ModalityRegistry& registry,
                              const LoadOptions& options) {
    TrainingSet set;
    for (const auto& m : manifests) {
        validate_manifest(m);
        for (const auto& rec : m.cases) {
            auto sample = load_case(m, rec.case_id, registry, options);
            (rec.split == Split::train ? set.train : set.eval).push_back(std::move(sample));
        }
    }
    set.manifests = std::move(manifests);
    return set;
}

Shape3 training_patch_shape(const TrainConfig& cfg, std::span<const CaseSample> samples, std::int64_t divisor) {
    Shape3 p = cfg.patch;
    for (const auto& s : samples) p = clip_patch_shape(p, s.shape);
    auto round_down = [divisor](std::int64_t n) { return n / divisor * divisor; };
    p = {round_down(p.x), round_down(p.y), round_down(p.z)};
    if (p.x < divisor || p.y < divisor || p.z < divisor) {
        throw DataError("training volumes are smaller than the backbone divisor " + std::to_string(divisor));
    }
    return p;
}

nlohmann::json to_json(const EpochRecord& r) {
    nlohmann::json j{{"epoch", r.epoch}, {"step", r.step}, {"loss", r.loss}, {"lr", r.lr}, {"train_dice", r.train_dice}};
    j["eval_dice"] = r.eval_dice ? nlohmann::json(*r.eval_dice) : nlohmann::json(nullptr);
    return j;
}

TrainResult train(SegmentationNet& model, const TrainingSet& data, const TrainConfig& cfg,
                  const TrainRunOptions& run) {
    cfg.validate();
    if (data.train.empty()) throw DataError("no train cases");
    // Saturated attention and sigmoid outputs drift into subnormal floats,
    // which are orders of magnitude slower on x86.
    at::globalContext().setFlushDenormal(true);

    std::vector<torch::Tensor> params;
    for (const auto& p : model.parameters()) {
        if (p.requires_grad()) params.push_back(p);
    }
    if (params.empty()) throw std::invalid_argument("model has no trainable parameters");
    torch::optim::Adam optimizer(params, torch::optim::AdamOptions(cfg.lr_initial)
                                             .betas({cfg.optimizer.beta1, cfg.optimizer.beta2})
                                             .eps(cfg.optimizer.eps)
                                             .weight_decay(cfg.optimizer.weight_decay));

    const Shape3 patch = training_patch_shape(cfg, data.train, model.spec().backbone.divisor());
    const DropPolicy policy{cfg.drop, cfg.seed, cfg.drop_exempt};

    std::ofstream log;
    std::filesystem::path ckpt_dir;
    if (run.output_dir) {
        ckpt_dir = *run.output_dir / "checkpoints";
        std::filesystem::create_directories(ckpt_dir);
        log.open(*run.output_dir / "train_log.jsonl");
        if (!log) throw std::runtime_error("cannot write " + (*run.output_dir / "train_log.jsonl").string());
    }

    TrainResult result;
    bool stop = false;
    for (int epoch = 1; epoch <= cfg.epochs && !stop; ++epoch) {
        const double lr = cfg.learning_rate(epoch);
        for (auto& group : optimizer.param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);

        Rng plan_rng = substream(cfg.seed, {1, static_cast<std::uint64_t>(epoch)});
        const EpochPlan plan = plan_epoch(data.manifests, plan_rng);

        std::map<std::string, std::pair<double, int>> dice_acc;
        double loss_sum = 0.0;
        int batches = 0;
        model.train();
        for (std::size_t i = 0; i < plan.draws.size() && !stop; i += static_cast<std::size_t>(cfg.batch_size)) {
            std::vector<CaseSample> batch;
            for (std::size_t j = i; j < std::min(plan.draws.size(), i + cfg.batch_size); ++j) {
                const Draw& d = plan.draws[j];
                Rng rng = substream(cfg.seed, {2, static_cast<std::uint64_t>(epoch), j});
                const auto dropped = apply_drop(data.find_train(d.database_id, d.case_id), policy, rng);
                batch.push_back(extract_patch(dropped, patch, cfg.foreground_bias, rng).sample);
            }
            std::vector<const CaseSample*> ptrs;
            for (const auto& s : batch) ptrs.push_back(&s);
            const auto x = image_tensor(ptrs);
            const auto presence = presence_tensor(ptrs);
            const auto y = label_tensor(ptrs);

            optimizer.zero_grad();
            const auto prob = model.forward(x, presence);
            const auto terms = segmentation_loss(prob, y, cfg.loss);
            const double loss = terms.total.item<double>();
            ++result.steps;
            if (!std::isfinite(loss)) {
                throw TrainingDivergence("non-finite loss at step " + std::to_string(result.steps) + " (epoch " +
                                             std::to_string(epoch) + ")",
                                         result.steps);
            }
            terms.total.backward();
            optimizer.step();

            loss_sum += loss;
            ++batches;
            const auto dices = batch_dice(prob, y);
            for (std::size_t b = 0; b < batch.size(); ++b) {
                auto& acc = dice_acc[batch[b].database_id];
                acc.first += dices[b];
                ++acc.second;
            }

            const StepRecord rec{result.steps, epoch, loss, lr};
            if (run.hooks.on_step) run.hooks.on_step(rec, model);
            if (run.hooks.should_stop && run.hooks.should_stop(rec, model)) stop = true;
            if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) stop = true;
        }

        EpochRecord er;
        er.epoch = epoch;
        er.step = result.steps;
        er.loss = batches ? loss_sum / batches : 0.0;
        er.lr = lr;
        for (const auto& [db, acc] : dice_acc) er.train_dice[db] = acc.first / acc.second;
        result.final_loss = er.loss;
        result.epochs = epoch;

        if (cfg.eval_every > 0 && epoch % cfg.eval_every == 0 && !data.eval.empty()) {
            const Predictor predictor = [&model](const CaseSample& s) { return predict(model, s); };
            er.eval_dice = evaluate(predictor, data.eval, ModalityRegistry(model.spec().modalities)).grand_mean_dice;
            if (!result.best_eval_dice || *er.eval_dice > *result.best_eval_dice) {
                result.best_eval_dice = er.eval_dice;
                if (run.output_dir) {
                    result.best_checkpoint = ckpt_dir / "best.pt";
                    save_checkpoint(*result.best_checkpoint, model, meta_for(model, run, epoch));
                }
            }
        }
        if (run.output_dir) {
            log << to_json(er).dump() << '\n' << std::flush;
            result.last_checkpoint = ckpt_dir / "last.pt";
            save_checkpoint(*result.last_checkpoint, model, meta_for(model, run, epoch));
        }
        result.history.push_back(std::move(er));
    }
    return result;
}

// ---------------------------------------------------------------- transfer

ChannelRemap plan_remap(const std::vector<std::string>& pretrained, const std::vector<std::string>& target) {
    std::vector<std::string> wanted;
    for (const auto& m : target) {
        if (std::find(wanted.begin(), wanted.end(), m) == wanted.end()) wanted.push_back(m);
    }
    auto in = [](const std::vector<std::string>& v, const std::string& m) {
        return std::find(v.begin(), v.end(), m) != v.end();
    };
    std::vector<std::size_t> free;
    for (std::size_t c = 0; c < pretrained.size(); ++c) {
        if (!in(wanted, pretrained[c])) free.push_back(c);
    }
    ChannelRemap remap;
    std::size_t next = 0;
    for (const auto& m : wanted) {
        if (in(pretrained, m)) continue;
        if (next < free.size()) {
            remap.reused[m] = free[next++];
        } else {
            remap.expanded.push_back(m);
        }
    }
    return remap;
}

ChannelRemap remap_channels(SegmentationNet& model, const std::vector<std::string>& target_modalities) {
    const auto remap = plan_remap(model.spec().modalities, target_modalities);
    for (const auto& [name, channel] : remap.reused) model.rename_channel(channel, name);
    if (!remap.expanded.empty()) model.expand_input_channels(remap.expanded);
    return remap;
}

const char* to_string(FinetuneMode m) {
    switch (m) {
        case FinetuneMode::scratch: return "scratch";
        case FinetuneMode::finetune: return "finetune";
        case FinetuneMode::progressive: return "progressive";
    }
    return "?";
}

FinetuneMode parse_finetune_mode(const std::string& s) {
    if (s == "scratch") return FinetuneMode::scratch;
    if (s == "finetune") return FinetuneMode::finetune;
    if (s == "progressive") return FinetuneMode::progressive;
    throw std::invalid_argument("unknown fine-tuning mode '" + s + "'");
}

DatabaseManifest apply_budget(const DatabaseManifest& manifest, std::optional<std::size_t> budget,
                              std::uint64_t seed) {
    if (!budget) return manifest;
    const auto train_cases = manifest.cases_in(Split::train);
    if (*budget > train_cases.size()) {
        throw std::invalid_argument("label budget " + std::to_string(*budget) + " exceeds the " +
                                    std::to_string(train_cases.size()) + " train cases of " + manifest.database_id);
    }
    std::vector<std::string> ids;
    for (const auto* c : train_cases) ids.push_back(c->case_id);
    Rng rng = substream(seed, {stable_hash("budget"), stable_hash(manifest.database_id)});
    std::shuffle(ids.begin(), ids.end(), rng);
    const std::set<std::string> keep(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(*budget));

    DatabaseManifest out = manifest;
    out.cases.clear();
    for (const auto& c : manifest.cases) {
        if (c.split == Split::eval || keep.count(c.case_id) != 0) out.cases.push_back(c);
    }
    return out;
}

FinetuneSetup prepare_finetune(const LoadedCheckpoint& source, const std::vector<std::string>& target_modalities,
                               FinetuneMode mode, std::uint64_t seed) {
    if (mode == FinetuneMode::progressive && source.meta.spec.family != ModelFamily::multi_unet) {
        throw std::invalid_argument("progressive fine-tuning needs a multi_unet source, got " +
                                    std::string(to_string(source.meta.spec.family)));
    }
    torch::manual_seed(seed);
    auto model = clone_model(*source.model);
    FinetuneSetup setup;
    setup.remap = remap_channels(*model, target_modalities);

    switch (mode) {
        case FinetuneMode::scratch: {
            torch::manual_seed(seed);
            setup.model = make_model(model->spec());
            break;
        }
        case FinetuneMode::finetune: setup.model = model; break;
        case FinetuneMode::progressive: {
            torch::manual_seed(seed);
            setup.model = std::make_shared<ProgressiveUnet>(std::static_pointer_cast<MultiUnet>(model));
            break;
        }
    }
    setup.registry = ModalityRegistry(setup.model->spec().modalities);
    return setup;
}

}  // namespace hetseg
