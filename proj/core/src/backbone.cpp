// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetseg/backbone.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hetseg {
namespace {

thread_local ActivationMeter* active_meter = nullptr;

torch::nn::Conv3d conv3(int in, int out, int stride = 1) {
    return torch::nn::Conv3d(torch::nn::Conv3dOptions(in, out, 3).stride(stride).padding(1));
}

torch::nn::InstanceNorm3d norm(int channels, const BackboneConfig& cfg) {
    return torch::nn::InstanceNorm3d(
        torch::nn::InstanceNorm3dOptions(channels).affine(true).track_running_stats(false).eps(cfg.norm_eps));
}

// Grows dim 1 of a convolution weight, keeping existing filters.
torch::nn::Conv3d widen_input(const torch::nn::Conv3d& conv, int extra) {
    const auto& opt = conv->options;
    auto grown = torch::nn::Conv3d(torch::nn::Conv3dOptions(opt.in_channels() + extra, opt.out_channels(),
                                                            opt.kernel_size())
                                       .stride(opt.stride())
                                       .padding(opt.padding())
                                       .bias(opt.bias()));
    grown->to(conv->weight.scalar_type());
    torch::NoGradGuard guard;
    grown->weight.slice(1, 0, opt.in_channels()).copy_(conv->weight);
    if (opt.bias()) grown->bias.copy_(conv->bias);
    return grown;
}

}  // namespace

void BackboneConfig::validate() const {
    if (levels < 2) throw std::invalid_argument("backbone needs at least 2 levels");
    if (base_width < 1) throw std::invalid_argument("backbone base_width must be positive");
    if (blocks_per_level < 1) throw std::invalid_argument("backbone needs at least one block per level");
}

ActivationMeter::ActivationMeter() : previous_(active_meter) { active_meter = this; }
ActivationMeter::~ActivationMeter() { active_meter = previous_; }

void ActivationMeter::record(const torch::Tensor& t) {
    if (active_meter != nullptr) active_meter->elements_ += t.numel();
}

ResidualBlock::ResidualBlock(int in_channels, int out_channels, const BackboneConfig& cfg, bool project)
    : slope_(cfg.leaky_slope) {
    conv1 = register_module("conv1", conv3(in_channels, out_channels));
    norm1 = register_module("norm1", norm(out_channels, cfg));
    conv2 = register_module("conv2", conv3(out_channels, out_channels));
    norm2 = register_module("norm2", norm(out_channels, cfg));
    if (project || in_channels != out_channels) {
        shortcut = register_module(
            "shortcut", torch::nn::Conv3d(torch::nn::Conv3dOptions(in_channels, out_channels, 1)));
    }
}

torch::Tensor ResidualBlock::forward(const torch::Tensor& x) {
    auto h = torch::leaky_relu(norm1->forward(conv1->forward(x)), slope_);
    ActivationMeter::record(h);
    h = norm2->forward(conv2->forward(h));
    ActivationMeter::record(h);
    const auto skip = shortcut ? shortcut->forward(x) : x;
    auto out = torch::leaky_relu(h + skip, slope_);
    ActivationMeter::record(out);
    return out;
}

Encoder::Encoder(int in_channels, const BackboneConfig& cfg, bool lateral)
    : cfg_(cfg), lateral_(lateral), in_channels_(in_channels) {
    cfg.validate();
    for (int l = 0; l < cfg.levels; ++l) {
        if (l > 0) {
            const int in = cfg.width(l - 1) * (lateral ? 2 : 1);
            down.push_back(register_module("down" + std::to_string(l), conv3(in, cfg.width(l), 2)));
        }
        for (int b = 0; b < cfg.blocks_per_level; ++b) {
            const int in = (l == 0 && b == 0) ? in_channels : cfg.width(l);
            blocks.push_back(register_module("block" + std::to_string(l) + "_" + std::to_string(b),
                                             std::make_shared<ResidualBlock>(in, cfg.width(l), cfg, l == 0 && b == 0)));
        }
    }
}

Pyramid Encoder::forward(const torch::Tensor& x, const std::vector<torch::Tensor>* laterals) {
    if (x.size(1) != in_channels_) {
        throw std::invalid_argument("encoder expects " + std::to_string(in_channels_) + " input channels, got " +
                                    std::to_string(x.size(1)));
    }
    if (lateral_ && (laterals == nullptr || static_cast<int>(laterals->size()) != cfg_.levels - 1)) {
        throw std::invalid_argument("lateral encoder needs one lateral map per downsampling layer");
    }
    Pyramid out;
    auto h = x;
    std::size_t block = 0;
    for (int l = 0; l < cfg_.levels; ++l) {
        if (l > 0) {
            auto in = out.back();
            if (lateral_) in = torch::cat({in, (*laterals)[static_cast<std::size_t>(l - 1)]}, 1);
            h = down[static_cast<std::size_t>(l - 1)]->forward(in);
            ActivationMeter::record(h);
        }
        for (int b = 0; b < cfg_.blocks_per_level; ++b) h = blocks[block++]->forward(h);
        out.push_back(h);
    }
    return out;
}

torch::nn::Conv3d& Encoder::input_conv() { return blocks.front()->conv1; }

void Encoder::expand_input_channels(int extra) {
    if (extra <= 0) return;
    auto& stem = *blocks.front();
    auto conv = widen_input(stem.conv1, extra);
    auto proj = widen_input(stem.shortcut, extra);
    {
        torch::NoGradGuard guard;
        const auto fresh = [](torch::Tensor w, int from, std::int64_t fan_in) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            w.slice(1, from).uniform_(-bound, bound);
        };
        fresh(conv->weight, in_channels_, conv->weight[0].numel());
        fresh(proj->weight, in_channels_, proj->weight[0].numel());
    }
    stem.conv1 = stem.replace_module("conv1", conv);
    stem.shortcut = stem.replace_module("shortcut", proj);
    in_channels_ += extra;
}

Decoder::Decoder(const BackboneConfig& cfg, bool lateral) : cfg_(cfg), lateral_(lateral) {
    cfg.validate();
    for (int l = cfg.levels - 2; l >= 0; --l) {
        const int in = cfg.width(l + 1) * (lateral ? 2 : 1);
        up.push_back(register_module(
            "up" + std::to_string(l),
            torch::nn::ConvTranspose3d(torch::nn::ConvTranspose3dOptions(in, cfg.width(l), 2).stride(2))));
        for (int b = 0; b < cfg.blocks_per_level; ++b) {
            const int block_in = b == 0 ? 2 * cfg.width(l) : cfg.width(l);
            blocks.push_back(register_module("block" + std::to_string(l) + "_" + std::to_string(b),
                                             std::make_shared<ResidualBlock>(block_in, cfg.width(l), cfg)));
        }
    }
}

torch::Tensor Decoder::forward(const Pyramid& skips, const std::vector<torch::Tensor>* laterals,
                               std::vector<torch::Tensor>* taps) {
    if (static_cast<int>(skips.size()) != cfg_.levels) {
        throw std::invalid_argument("decoder expects " + std::to_string(cfg_.levels) + " feature levels");
    }
    if (lateral_ && (laterals == nullptr || static_cast<int>(laterals->size()) != cfg_.levels - 1)) {
        throw std::invalid_argument("lateral decoder needs one lateral map per upsampling layer");
    }
    auto h = skips.back();
    std::size_t block = 0;
    for (int stage = 0; stage < cfg_.levels - 1; ++stage) {
        const int l = cfg_.levels - 2 - stage;
        if (taps) taps->push_back(h);
        auto in = lateral_ ? torch::cat({h, (*laterals)[static_cast<std::size_t>(stage)]}, 1) : h;
        h = up[static_cast<std::size_t>(stage)]->forward(in);
        ActivationMeter::record(h);
        h = torch::cat({h, skips[static_cast<std::size_t>(l)]}, 1);
        for (int b = 0; b < cfg_.blocks_per_level; ++b) h = blocks[block++]->forward(h);
    }
    return h;
}

}  // namespace hetseg
