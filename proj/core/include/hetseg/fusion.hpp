// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <torch/torch.h>

namespace hetseg {

struct FusionOutput {
    torch::Tensor fused;      ///< [B, F, D, H, W]
    torch::Tensor attention;  ///< [B, C, D, H, W], sums to 1 over dim 1
};

/// Softmax over modalities followed by the attention-weighted sum of the
/// per-modality embeddings:
///   a = softmax(logits, dim=1),  fused = sum_i a_i * z_i.
/// logits: [B, C, S...]; embeddings: [B, C, F, S...].
/// Gradients are computed in closed form, not by tracing the softmax.
FusionOutput attention_fuse(const torch::Tensor& logits, const torch::Tensor& embeddings);

/// Attention fusion of C per-modality embeddings of width F: two stacked 3x3x3
/// convolutions (C*F -> F -> C) produce per-voxel logits that are normalised
/// across modalities.
class FusionBlock : public torch::nn::Module {
public:
    FusionBlock(int modalities, int features);

    /// embeddings: [B, C, F, D, H, W]. When `absent` is defined ([B, C] bool)
    /// those modalities get zero weight; each row must keep one modality.
    FusionOutput forward(const torch::Tensor& embeddings, const torch::Tensor& absent = {});

    [[nodiscard]] int modalities() const { return modalities_; }
    [[nodiscard]] int features() const { return features_; }

    /// Adds `extra` modality slots with randomly initialised weights.
    void expand_modalities(int extra);

    torch::nn::Conv3d squeeze{nullptr};
    torch::nn::Conv3d score{nullptr};

private:
    int modalities_;
    int features_;
};

}  // namespace hetseg
