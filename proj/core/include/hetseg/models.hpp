// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "hetseg/backbone.hpp"
#include "hetseg/dataset.hpp"
#include "hetseg/fusion.hpp"
#include "hetseg/metrics.hpp"
#include "hetseg/modality_registry.hpp"

namespace hetseg {

enum class ModelFamily { multi_unet, lf_unet, maf_unet, progressive };

[[nodiscard]] const char* to_string(ModelFamily f);
[[nodiscard]] ModelFamily parse_model_family(const std::string& s);

struct ModelSpec {
    ModelFamily family = ModelFamily::multi_unet;
    BackboneConfig backbone;
    /// Channel order of the model input; its length is the input width.
    std::vector<std::string> modalities;
    /// MAFUnet: one encoder shared by all modalities (LFUnet always shares).
    bool share_encoders = true;
    /// LFUnet/MAFUnet: give absent modalities zero attention instead of
    /// letting their zero volumes take part in the softmax.
    bool mask_absent = false;

    [[nodiscard]] int in_channels() const { return static_cast<int>(modalities.size()); }
    [[nodiscard]] bool operator==(const ModelSpec&) const = default;
};

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

/// Common interface: input [B, C, D, H, W] in registry channel order with
/// absent modalities zero-filled, presence [B, C] bool; output lesion
/// probabilities [B, 1, D, H, W].
class SegmentationNet : public torch::nn::Module {
public:
    explicit SegmentationNet(ModelSpec spec);

    virtual torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& presence = {}) = 0;

    [[nodiscard]] const ModelSpec& spec() const { return spec_; }
    /// Adds `extra` input channels (new modalities) with random filters.
    virtual void expand_input_channels(const std::vector<std::string>& new_modalities) = 0;
    /// Renames channel `channel` (channel reuse for an unseen modality).
    void rename_channel(std::size_t channel, const std::string& modality);

protected:
    void check_input(const torch::Tensor& x) const;
    ModelSpec spec_;
};

/// Single residual U-Net over all C channels; absent modalities are just
/// zero channels and `presence` is ignored.
class MultiUnet : public SegmentationNet {
public:
    explicit MultiUnet(ModelSpec spec);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& presence = {}) override;
    void expand_input_channels(const std::vector<std::string>& new_modalities) override;

    /// Forward pass recording the input of every downsampling layer
    /// (`down_taps`) and every upsampling layer (`up_taps`).
    torch::Tensor forward_tapped(const torch::Tensor& x, std::vector<torch::Tensor>& down_taps,
                                 std::vector<torch::Tensor>& up_taps);

    std::shared_ptr<Encoder> encoder;
    std::shared_ptr<Decoder> decoder;
    torch::nn::Conv3d head{nullptr};
};

struct FusedForward {
    torch::Tensor probability;
    /// One [B, C, D, H, W] attention map per fusion block, finest first.
    std::vector<torch::Tensor> attention;
};

/// Late fusion: one single-channel U-Net (weights shared across
/// modalities) per modality, penultimate embeddings fused by attention.
class LFUnet : public SegmentationNet {
public:
    explicit LFUnet(ModelSpec spec);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& presence = {}) override;
    FusedForward forward_with_attention(const torch::Tensor& x, const torch::Tensor& presence = {});
    void expand_input_channels(const std::vector<std::string>& new_modalities) override;

    std::shared_ptr<Encoder> encoder;
    std::shared_ptr<Decoder> decoder;
    std::shared_ptr<FusionBlock> fusion;
    torch::nn::Conv3d head{nullptr};
};

/// Multi-scale attention fusion: per-modality encoders, an attention fusion
/// block at every scale, and one decoder over the fused pyramid.
class MAFUnet : public SegmentationNet {
public:
    explicit MAFUnet(ModelSpec spec);
    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& presence = {}) override;
    FusedForward forward_with_attention(const torch::Tensor& x, const torch::Tensor& presence = {});
    void expand_input_channels(const std::vector<std::string>& new_modalities) override;

    /// One entry when shared, else one per modality.
    std::vector<std::shared_ptr<Encoder>> encoders;
    std::vector<std::shared_ptr<FusionBlock>> fusion;  ///< one per level
    std::shared_ptr<Decoder> decoder;
    torch::nn::Conv3d head{nullptr};
};

/// Two-column progressive network. Column one is a frozen MultiUnet; column
/// two is a fresh U-Net whose downsampling and upsampling layers also read
/// column one's activations at the same position, each projected by a 1x1x1
/// adapter and concatenated to column two's own features.
class ProgressiveUnet : public SegmentationNet {
public:
    /// `frozen` becomes column one; its parameters stop requiring gradients.
    explicit ProgressiveUnet(std::shared_ptr<MultiUnet> frozen);
    /// Fresh instance for loading a saved progressive model.
    explicit ProgressiveUnet(ModelSpec spec);

    torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& presence = {}) override;
    void expand_input_channels(const std::vector<std::string>& new_modalities) override;

    /// Number of lateral connections: (levels-1) down + (levels-1) up.
    [[nodiscard]] std::size_t lateral_count() const { return down_adapters.size() + up_adapters.size(); }

    /// When false, every lateral input is replaced with zeros.
    void set_laterals_enabled(bool on) { laterals_enabled_ = on; }

    /// Column two as a stand-alone MultiUnet (lateral input slices dropped);
    /// equals this model's output when laterals are disabled.
    [[nodiscard]] std::shared_ptr<MultiUnet> second_column_as_plain() const;

    [[nodiscard]] std::vector<torch::Tensor> frozen_parameters() const;
    [[nodiscard]] std::vector<torch::Tensor> trainable_parameters() const;

    std::shared_ptr<MultiUnet> column1;
    std::shared_ptr<Encoder> encoder;
    std::shared_ptr<Decoder> decoder;
    torch::nn::Conv3d head{nullptr};
    std::vector<torch::nn::Conv3d> down_adapters;
    std::vector<torch::nn::Conv3d> up_adapters;

private:
    void build();
    bool laterals_enabled_ = true;
};

/// Builds a randomly initialised model. For `progressive` the first column is
/// also random; use ProgressiveUnet(frozen) to wrap a trained network.
std::shared_ptr<SegmentationNet> make_model(const ModelSpec& spec);

[[nodiscard]] std::int64_t parameter_count(const torch::nn::Module& module, bool trainable_only = false);

/// Activation elements written by backbone layers in one forward pass.
[[nodiscard]] std::int64_t activation_elements(SegmentationNet& model, const torch::Tensor& x);

/// Stacks samples into [B, C, D, H, W] (D = z, W = x) and presence [B, C].
torch::Tensor image_tensor(std::span<const CaseSample* const> samples);
torch::Tensor presence_tensor(std::span<const CaseSample* const> samples);
torch::Tensor label_tensor(std::span<const CaseSample* const> samples);

/// Whole-volume inference. Pads each axis with zeros to a multiple of the
/// backbone divisor and crops back. Runs without gradient tracking.
FloatVolume predict(SegmentationNet& model, const CaseSample& sample);

/// Predictor for metrics evaluation; shares the model.
Predictor make_predictor(std::shared_ptr<SegmentationNet> model);

}  // namespace hetseg
