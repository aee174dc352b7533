// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

namespace hetseg {

/// Residual U-Net shape. Level l has width base_width * 2^l; inputs must be
/// divisible by 2^(levels-1) on every spatial axis.
struct BackboneConfig {
    int levels = 4;
    int base_width = 8;
    int blocks_per_level = 1;
    double leaky_slope = 0.01;
    double norm_eps = 1e-5;

    [[nodiscard]] int width(int level) const { return base_width << level; }
    [[nodiscard]] std::int64_t divisor() const { return std::int64_t{1} << (levels - 1); }
    void validate() const;
    [[nodiscard]] bool operator==(const BackboneConfig&) const = default;
};

/// Counts activation elements produced by backbone layers while alive.
/// Not thread-safe; meant for single forward passes in tests and benchmarks.
class ActivationMeter {
public:
    ActivationMeter();
    ~ActivationMeter();
    ActivationMeter(const ActivationMeter&) = delete;
    ActivationMeter& operator=(const ActivationMeter&) = delete;

    [[nodiscard]] std::int64_t elements() const { return elements_; }
    static void record(const torch::Tensor& t);

private:
    std::int64_t elements_ = 0;
    ActivationMeter* previous_;
};

/// conv-norm-act-conv-norm plus a shortcut, then act.
class ResidualBlock : public torch::nn::Module {
public:
    /// The shortcut is a 1x1 projection when widths differ or `project` is set.
    ResidualBlock(int in_channels, int out_channels, const BackboneConfig& cfg, bool project = false);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv3d conv1{nullptr};
    torch::nn::InstanceNorm3d norm1{nullptr};
    torch::nn::Conv3d conv2{nullptr};
    torch::nn::InstanceNorm3d norm2{nullptr};
    torch::nn::Conv3d shortcut{nullptr};

private:
    double slope_;
};

/// Feature maps at every level, finest first.
using Pyramid = std::vector<torch::Tensor>;

/// Contracting path. With `lateral` set, every downsampling convolution
/// takes twice its usual input width: its own features concatenated with a
/// lateral feature map of the same width.
class Encoder : public torch::nn::Module {
public:
    Encoder(int in_channels, const BackboneConfig& cfg, bool lateral = false);

    /// laterals (when lateral): one map per downsampling layer, levels-1 total.
    Pyramid forward(const torch::Tensor& x, const std::vector<torch::Tensor>* laterals = nullptr);

    /// First convolution, the only layer that sees raw input channels.
    [[nodiscard]] torch::nn::Conv3d& input_conv();
    [[nodiscard]] int in_channels() const { return in_channels_; }
    /// Adds input channels with randomly initialised filters.
    void expand_input_channels(int extra);

    std::vector<std::shared_ptr<ResidualBlock>> blocks;  ///< blocks_per_level per level, flattened
    std::vector<torch::nn::Conv3d> down;                 ///< levels-1 stride-2 convolutions

private:
    BackboneConfig cfg_;
    bool lateral_;
    int in_channels_;
};

/// Expanding path: transposed-convolution upsampling, skip concatenation and
/// a residual block per level. Returns base_width features at full resolution.
class Decoder : public torch::nn::Module {
public:
    explicit Decoder(const BackboneConfig& cfg, bool lateral = false);

    /// `taps`, when given, receives the input of every upsampling layer
    /// (coarsest first). laterals: one per upsampling layer, same order.
    torch::Tensor forward(const Pyramid& skips, const std::vector<torch::Tensor>* laterals = nullptr,
                          std::vector<torch::Tensor>* taps = nullptr);

    std::vector<torch::nn::ConvTranspose3d> up;          ///< coarsest first
    std::vector<std::shared_ptr<ResidualBlock>> blocks;  ///< blocks_per_level per stage, flattened

private:
    BackboneConfig cfg_;
    bool lateral_;
};

}  // namespace hetseg
