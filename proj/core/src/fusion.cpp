// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetseg/fusion.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace hetseg {
namespace {

using torch::autograd::AutogradContext;
using torch::autograd::variable_list;

struct AttentionFuseFunction : public torch::autograd::Function<AttentionFuseFunction> {
    static variable_list forward(AutogradContext* ctx, const torch::Tensor& logits, const torch::Tensor& embeddings) {
        const auto attention = torch::softmax(logits, 1);
        const auto fused = (attention.unsqueeze(2) * embeddings).sum(1);
        ctx->save_for_backward({attention, embeddings});
        return {fused, attention};
    }

    static variable_list backward(AutogradContext* ctx, variable_list grad_outputs) {
        const auto saved = ctx->get_saved_variables();
        const auto& a = saved[0];
        const auto& z = saved[1];
        const auto& g_fused = grad_outputs[0];
        const auto& g_attention = grad_outputs[1];

        torch::Tensor g_embeddings;
        torch::Tensor g_a;
        if (g_fused.defined()) {
            // d fused / d z_i = a_i ; d fused / d a_i = z_i
            g_embeddings = a.unsqueeze(2) * g_fused.unsqueeze(1);
            g_a = (g_fused.unsqueeze(1) * z).sum(2);
        } else {
            g_embeddings = torch::zeros_like(z);
            g_a = torch::zeros_like(a);
        }
        if (g_attention.defined()) g_a = g_a + g_attention;
        // Softmax Jacobian-vector product: a * (g - <a, g>).
        const auto g_logits = a * (g_a - (a * g_a).sum(1, true));
        return {g_logits, g_embeddings};
    }
};

void init_uniform(torch::Tensor t, std::int64_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    torch::NoGradGuard guard;
    t.uniform_(-bound, bound);
}

}  // namespace

FusionOutput attention_fuse(const torch::Tensor& logits, const torch::Tensor& embeddings) {
    if (logits.dim() < 2 || embeddings.dim() != logits.dim() + 1 || logits.size(1) != embeddings.size(1)) {
        throw std::invalid_argument("attention_fuse: expected logits [B,C,S..] and embeddings [B,C,F,S..]");
    }
    auto out = AttentionFuseFunction::apply(logits, embeddings);
    return {out[0], out[1]};
}

FusionBlock::FusionBlock(int modalities, int features) : modalities_(modalities), features_(features) {
    if (modalities < 1 || features < 1) throw std::invalid_argument("FusionBlock: bad sizes");
    squeeze = register_module(
        "squeeze", torch::nn::Conv3d(torch::nn::Conv3dOptions(modalities * features, features, 3).padding(1)));
    score = register_module("score", torch::nn::Conv3d(torch::nn::Conv3dOptions(features, modalities, 3).padding(1)));
}

FusionOutput FusionBlock::forward(const torch::Tensor& embeddings, const torch::Tensor& absent) {
    if (embeddings.dim() != 6 || embeddings.size(1) != modalities_ || embeddings.size(2) != features_) {
        throw std::invalid_argument("FusionBlock: expected embeddings [B," + std::to_string(modalities_) + "," +
                                    std::to_string(features_) + ",D,H,W]");
    }
    const auto sizes = embeddings.sizes();
    const auto stacked = embeddings.reshape({sizes[0], sizes[1] * sizes[2], sizes[3], sizes[4], sizes[5]});
    auto logits = score->forward(squeeze->forward(stacked));
    if (absent.defined()) {
        const auto mask = absent.to(torch::kBool).view({sizes[0], sizes[1], 1, 1, 1}).expand_as(logits);
        logits = logits.masked_fill(mask, -std::numeric_limits<float>::infinity());
    }
    return attention_fuse(logits, embeddings);
}

void FusionBlock::expand_modalities(int extra) {
    if (extra <= 0) return;
    const int c_new = modalities_ + extra;
    auto new_squeeze =
        torch::nn::Conv3d(torch::nn::Conv3dOptions(c_new * features_, features_, 3).padding(1));
    auto new_score = torch::nn::Conv3d(torch::nn::Conv3dOptions(features_, c_new, 3).padding(1));
    new_squeeze->to(squeeze->weight.scalar_type());
    new_score->to(score->weight.scalar_type());
    {
        torch::NoGradGuard guard;
        const std::int64_t old_in = static_cast<std::int64_t>(modalities_) * features_;
        init_uniform(new_squeeze->weight, c_new * features_ * 27);
        new_squeeze->weight.slice(1, 0, old_in).copy_(squeeze->weight);
        new_squeeze->bias.copy_(squeeze->bias);
        new_score->weight.slice(0, 0, modalities_).copy_(score->weight);
        new_score->bias.slice(0, 0, modalities_).copy_(score->bias);
    }
    squeeze = replace_module("squeeze", new_squeeze);
    score = replace_module("score", new_score);
    modalities_ = c_new;
}

}  // namespace hetseg
