// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "hetseg/checkpoint.hpp"
#include "hetseg/dataset.hpp"
#include "hetseg/manifest.hpp"
#include "hetseg/metrics.hpp"
#include "hetseg/models.hpp"
#include "hetseg/sampler.hpp"

namespace hetseg {

/// Non-finite loss; carries the step at which it happened.
class TrainingDivergence : public std::runtime_error {
public:
    TrainingDivergence(const std::string& what, long step) : std::runtime_error(what), step_(step) {}
    [[nodiscard]] long step() const { return step_; }

private:
    long step_;
};

struct LossSpec {
    double dice_weight = 1.0;
    double ce_weight = 1.0;
    double smooth = 1.0;
    /// Probabilities are clamped to [eps, 1-eps] inside the log.
    double eps = 1e-7;

    [[nodiscard]] bool operator==(const LossSpec&) const = default;
};

struct OptimizerSpec {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;

    [[nodiscard]] bool operator==(const OptimizerSpec&) const = default;
};

struct TrainConfig {
    int batch_size = 2;
    int epochs = 600;
    double lr_initial = 1e-3;
    double lr_after_decay = 1e-4;
    /// Last epoch (1-based) trained at lr_initial.
    int decay_epoch = 150;
    LossSpec loss;
    OptimizerSpec optimizer;
    std::uint64_t seed = 0;

    bool drop = true;
    std::set<std::string> drop_exempt;
    Shape3 patch{96, 96, 96};
    double foreground_bias = 0.5;

    /// Evaluate on the eval split every this many epochs (0 disables).
    int eval_every = 10;
    /// Stop after this many optimizer steps regardless of epochs (0: no cap).
    long max_steps = 0;

    [[nodiscard]] double learning_rate(int epoch) const;
    void validate() const;
    [[nodiscard]] bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults; throws std::invalid_argument on bad values.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct LossTerms {
    torch::Tensor total;
    torch::Tensor dice;
    torch::Tensor cross_entropy;
};

/// Soft Dice (1 - (2<p,g> + s) / (|p| + |g| + s), per sample, batch mean)
/// plus mean voxelwise binary cross-entropy, weighted by `spec`.
LossTerms segmentation_loss(const torch::Tensor& probability, const torch::Tensor& label, const LossSpec& spec = {});

/// Seeds torch and pins it to deterministic single-threaded kernels.
void seed_everything(std::uint64_t seed);

struct TrainingSet {
    std::vector<DatabaseManifest> manifests;
    std::vector<CaseSample> train;
    std::vector<CaseSample> eval;

    [[nodiscard]] const CaseSample& find_train(const std::string& database_id, const std::string& case_id) const;
};

/// Loads every train and eval case of `manifests` against `registry`.
TrainingSet load_training_set(std::vector<DatabaseManifest> manifests, const ModalityRegistry& registry,
                              const LoadOptions& options = {});

/// Patch extent used for a training set: the configured patch clipped to the
/// smallest volume and rounded down to the backbone divisor.
Shape3 training_patch_shape(const TrainConfig& cfg, std::span<const CaseSample> samples, std::int64_t divisor);

struct StepRecord {
    long step = 0;  ///< 1-based
    int epoch = 0;  ///< 1-based
    double loss = 0.0;
    double lr = 0.0;
};

struct EpochRecord {
    int epoch = 0;
    long step = 0;
    double loss = 0.0;
    double lr = 0.0;
    /// Running hard Dice of training predictions, per database.
    std::map<std::string, double> train_dice;
    std::optional<double> eval_dice;
};

nlohmann::json to_json(const EpochRecord& r);

struct TrainHooks {
    /// After every optimizer step, before the next batch is built.
    std::function<void(const StepRecord&, SegmentationNet&)> on_step;
    /// Checked after every step; returning true ends training.
    std::function<bool(const StepRecord&, SegmentationNet&)> should_stop;
};

struct TrainRunOptions {
    /// When set: train_log.jsonl, checkpoints/last.pt and checkpoints/best.pt go here.
    std::optional<std::filesystem::path> output_dir;
    std::string config_hash;
    std::optional<ChannelRemap> remap;
    TrainHooks hooks;
};

struct TrainResult {
    long steps = 0;
    int epochs = 0;
    double final_loss = 0.0;
    std::vector<EpochRecord> history;
    std::optional<double> best_eval_dice;
    std::optional<std::filesystem::path> last_checkpoint;
    std::optional<std::filesystem::path> best_checkpoint;
};

/// Joint training over every database of `data`: each epoch follows
/// plan_epoch, every draw gets apply_drop and a patch, batches of
/// cfg.batch_size go through Adam with the step schedule. Only parameters
/// that require gradients are optimized. Throws TrainingDivergence.
TrainResult train(SegmentationNet& model, const TrainingSet& data, const TrainConfig& cfg,
                  const TrainRunOptions& run = {});

// ---------------------------------------------------------------- transfer

/// Decides channel reuse without touching a model: every target modality
/// missing from `pretrained` takes the lowest-index pretrained channel whose
/// modality the target does not use, in target order; the rest are expanded.
ChannelRemap plan_remap(const std::vector<std::string>& pretrained, const std::vector<std::string>& target);

/// Applies plan_remap to `model`: renames reused channels, then appends
/// freshly initialised input channels for the expanded modalities.
ChannelRemap remap_channels(SegmentationNet& model, const std::vector<std::string>& target_modalities);

enum class FinetuneMode { scratch, finetune, progressive };

[[nodiscard]] const char* to_string(FinetuneMode m);
[[nodiscard]] FinetuneMode parse_finetune_mode(const std::string& s);

struct FinetuneConfig {
    std::filesystem::path source;
    FinetuneMode mode = FinetuneMode::finetune;
    /// Number of labelled train cases per target database; nullopt = all.
    std::optional<std::size_t> budget;
    TrainConfig train;
};

/// Deterministic label budget: shuffles the train case ids with `seed` and
/// keeps the first `budget`. Eval cases are untouched. Throws
/// std::invalid_argument when the budget exceeds the train split.
DatabaseManifest apply_budget(const DatabaseManifest& manifest, std::optional<std::size_t> budget,
                              std::uint64_t seed);

struct FinetuneSetup {
    std::shared_ptr<SegmentationNet> model;
    ModalityRegistry registry;
    ChannelRemap remap;
};

/// Builds the network to fine-tune on databases declaring `target_modalities`:
/// scratch re-initialises the remapped architecture, finetune keeps all
/// weights, progressive freezes the remapped source as column one of a new
/// ProgressiveUnet (source must be a MultiUnet).
FinetuneSetup prepare_finetune(const LoadedCheckpoint& source, const std::vector<std::string>& target_modalities,
                               FinetuneMode mode, std::uint64_t seed);

}  // namespace hetseg
