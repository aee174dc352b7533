// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetseg/models.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace hetseg {
namespace {

torch::nn::Conv3d pointwise(int in, int out) { return torch::nn::Conv3d(torch::nn::Conv3dOptions(in, out, 1)); }

// Lesions are a small fraction of the volume; starting the output at a 1%
// foreground rate instead of 50% avoids a long initial phase of pushing
// every voxel towards background.
torch::nn::Conv3d output_head(int width) {
    auto head = pointwise(width, 1);
    torch::NoGradGuard guard;
    head->bias.fill_(std::log(0.01 / 0.99));
    return head;
}

void freeze(torch::nn::Module& m) {
    for (auto& p : m.parameters()) p.set_requires_grad(false);
}

// [B, C, S...] -> [B*C, 1, S...]
torch::Tensor split_modalities(const torch::Tensor& x) {
    auto sizes = x.sizes().vec();
    sizes[0] *= sizes[1];
    sizes[1] = 1;
    return x.reshape(sizes);
}

// [B*C, F, S...] -> [B, C, F, S...]
torch::Tensor group_modalities(const torch::Tensor& t, std::int64_t batch, std::int64_t modalities) {
    auto sizes = t.sizes().vec();
    sizes.erase(sizes.begin());
    sizes.insert(sizes.begin(), {batch, modalities});
    return t.reshape(sizes);
}

torch::Tensor absent_mask(const torch::Tensor& presence, bool enabled) {
    if (!enabled || !presence.defined()) return {};
    return presence.to(torch::kBool).logical_not();
}

}  // namespace

const char* to_string(ModelFamily f) {
    switch (f) {
        case ModelFamily::multi_unet: return "multi_unet";
        case ModelFamily::lf_unet: return "lf_unet";
        case ModelFamily::maf_unet: return "maf_unet";
        case ModelFamily::progressive: return "progressive";
    }
    return "?";
}

ModelFamily parse_model_family(const std::string& s) {
    if (s == "multi_unet") return ModelFamily::multi_unet;
    if (s == "lf_unet") return ModelFamily::lf_unet;
    if (s == "maf_unet") return ModelFamily::maf_unet;
    if (s == "progressive") return ModelFamily::progressive;
    throw std::invalid_argument("unknown model family '" + s + "'");
}

nlohmann::json to_json(const ModelSpec& spec) {
    return {{"family", to_string(spec.family)},
            {"modalities", spec.modalities},
            {"share_encoders", spec.share_encoders},
            {"mask_absent", spec.mask_absent},
            {"backbone",
             {{"levels", spec.backbone.levels},
              {"base_width", spec.backbone.base_width},
              {"blocks_per_level", spec.backbone.blocks_per_level},
              {"leaky_slope", spec.backbone.leaky_slope},
              {"norm_eps", spec.backbone.norm_eps}}}};
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
    ModelSpec s;
    s.family = parse_model_family(j.at("family").get<std::string>());
    s.modalities = j.at("modalities").get<std::vector<std::string>>();
    s.share_encoders = j.value("share_encoders", true);
    s.mask_absent = j.value("mask_absent", false);
    const auto& b = j.at("backbone");
    s.backbone.levels = b.value("levels", 4);
    s.backbone.base_width = b.value("base_width", 8);
    s.backbone.blocks_per_level = b.value("blocks_per_level", 1);
    s.backbone.leaky_slope = b.value("leaky_slope", 0.01);
    s.backbone.norm_eps = b.value("norm_eps", 1e-5);
    return s;
}

SegmentationNet::SegmentationNet(ModelSpec spec) : spec_(std::move(spec)) {
    if (spec_.modalities.empty()) throw std::invalid_argument("model needs at least one input modality");
    ModalityRegistry check(spec_.modalities);  // rejects duplicates
    spec_.backbone.validate();
}

void SegmentationNet::rename_channel(std::size_t channel, const std::string& modality) {
    auto names = spec_.modalities;
    names.at(channel) = modality;
    ModalityRegistry check(names);
    spec_.modalities = std::move(names);
}

void SegmentationNet::check_input(const torch::Tensor& x) const {
    if (x.dim() != 5) throw std::invalid_argument("model input must be [B, C, D, H, W]");
    if (x.size(1) != spec_.in_channels()) {
        throw std::invalid_argument("model expects " + std::to_string(spec_.in_channels()) + " channels, got " +
                                    std::to_string(x.size(1)));
    }
    const auto d = spec_.backbone.divisor();
    for (int i = 2; i < 5; ++i) {
        if (x.size(i) % d != 0) {
            throw std::invalid_argument("spatial extent " + std::to_string(x.size(i)) + " not divisible by " +
                                        std::to_string(d));
        }
    }
}

// ---------------------------------------------------------------- MultiUnet

MultiUnet::MultiUnet(ModelSpec spec) : SegmentationNet(std::move(spec)) {
    encoder = register_module("encoder", std::make_shared<Encoder>(spec_.in_channels(), spec_.backbone));
    decoder = register_module("decoder", std::make_shared<Decoder>(spec_.backbone));
    head = register_module("head", output_head(spec_.backbone.width(0)));
}

torch::Tensor MultiUnet::forward(const torch::Tensor& x, const torch::Tensor&) {
    check_input(x);
    return torch::sigmoid(head->forward(decoder->forward(encoder->forward(x))));
}

torch::Tensor MultiUnet::forward_tapped(const torch::Tensor& x, std::vector<torch::Tensor>& down_taps,
                                        std::vector<torch::Tensor>& up_taps) {
    check_input(x);
    const Pyramid features = encoder->forward(x);
    down_taps.assign(features.begin(), features.end() - 1);
    return torch::sigmoid(head->forward(decoder->forward(features, nullptr, &up_taps)));
}

void MultiUnet::expand_input_channels(const std::vector<std::string>& new_modalities) {
    encoder->expand_input_channels(static_cast<int>(new_modalities.size()));
    spec_.modalities.insert(spec_.modalities.end(), new_modalities.begin(), new_modalities.end());
    ModalityRegistry check(spec_.modalities);
}

// ------------------------------------------------------------------- LFUnet

LFUnet::LFUnet(ModelSpec spec) : SegmentationNet(std::move(spec)) {
    encoder = register_module("encoder", std::make_shared<Encoder>(1, spec_.backbone));
    decoder = register_module("decoder", std::make_shared<Decoder>(spec_.backbone));
    fusion = register_module("fusion", std::make_shared<FusionBlock>(spec_.in_channels(), spec_.backbone.width(0)));
    head = register_module("head", output_head(spec_.backbone.width(0)));
}

FusedForward LFUnet::forward_with_attention(const torch::Tensor& x, const torch::Tensor& presence) {
    check_input(x);
    const auto batch = x.size(0);
    const auto c = x.size(1);
    const auto embeddings = decoder->forward(encoder->forward(split_modalities(x)));
    auto fused = fusion->forward(group_modalities(embeddings, batch, c), absent_mask(presence, spec_.mask_absent));
    ActivationMeter::record(fused.fused);
    return {torch::sigmoid(head->forward(fused.fused)), {fused.attention}};
}

torch::Tensor LFUnet::forward(const torch::Tensor& x, const torch::Tensor& presence) {
    return forward_with_attention(x, presence).probability;
}

void LFUnet::expand_input_channels(const std::vector<std::string>& new_modalities) {
    fusion->expand_modalities(static_cast<int>(new_modalities.size()));
    spec_.modalities.insert(spec_.modalities.end(), new_modalities.begin(), new_modalities.end());
    ModalityRegistry check(spec_.modalities);
}

// ------------------------------------------------------------------ MAFUnet

MAFUnet::MAFUnet(ModelSpec spec) : SegmentationNet(std::move(spec)) {
    const int n_encoders = spec_.share_encoders ? 1 : spec_.in_channels();
    for (int i = 0; i < n_encoders; ++i) {
        encoders.push_back(
            register_module("encoder" + std::to_string(i), std::make_shared<Encoder>(1, spec_.backbone)));
    }
    for (int l = 0; l < spec_.backbone.levels; ++l) {
        fusion.push_back(register_module("fusion" + std::to_string(l),
                                         std::make_shared<FusionBlock>(spec_.in_channels(), spec_.backbone.width(l))));
    }
    decoder = register_module("decoder", std::make_shared<Decoder>(spec_.backbone));
    head = register_module("head", output_head(spec_.backbone.width(0)));
}

FusedForward MAFUnet::forward_with_attention(const torch::Tensor& x, const torch::Tensor& presence) {
    check_input(x);
    const auto batch = x.size(0);
    const auto c = x.size(1);

    std::vector<torch::Tensor> per_level;  // [B, C, F_l, S_l]
    if (encoders.size() == 1) {
        const Pyramid p = encoders.front()->forward(split_modalities(x));
        for (const auto& t : p) per_level.push_back(group_modalities(t, batch, c));
    } else {
        std::vector<Pyramid> pyramids;
        for (std::int64_t i = 0; i < c; ++i) {
            pyramids.push_back(encoders[static_cast<std::size_t>(i)]->forward(x.narrow(1, i, 1)));
        }
        for (std::size_t l = 0; l < pyramids.front().size(); ++l) {
            std::vector<torch::Tensor> level;
            for (const auto& p : pyramids) level.push_back(p[l]);
            per_level.push_back(torch::stack(level, 1));
        }
    }

    const auto absent = absent_mask(presence, spec_.mask_absent);
    FusedForward out;
    Pyramid fused;
    for (std::size_t l = 0; l < per_level.size(); ++l) {
        auto f = fusion[l]->forward(per_level[l], absent);
        ActivationMeter::record(f.fused);
        fused.push_back(f.fused);
        out.attention.push_back(f.attention);
    }
    out.probability = torch::sigmoid(head->forward(decoder->forward(fused)));
    return out;
}

torch::Tensor MAFUnet::forward(const torch::Tensor& x, const torch::Tensor& presence) {
    return forward_with_attention(x, presence).probability;
}

void MAFUnet::expand_input_channels(const std::vector<std::string>& new_modalities) {
    const int extra = static_cast<int>(new_modalities.size());
    for (auto& f : fusion) f->expand_modalities(extra);
    if (encoders.size() > 1) {
        for (int i = 0; i < extra; ++i) {
            encoders.push_back(register_module("encoder" + std::to_string(encoders.size()),
                                               std::make_shared<Encoder>(1, spec_.backbone)));
        }
    }
    spec_.modalities.insert(spec_.modalities.end(), new_modalities.begin(), new_modalities.end());
    ModalityRegistry check(spec_.modalities);
}

// ---------------------------------------------------------- ProgressiveUnet

namespace {

ModelSpec column_spec(ModelSpec s) {
    s.family = ModelFamily::multi_unet;
    return s;
}

ModelSpec progressive_spec(ModelSpec s) {
    s.family = ModelFamily::progressive;
    return s;
}

}  // namespace

ProgressiveUnet::ProgressiveUnet(std::shared_ptr<MultiUnet> frozen)
    : SegmentationNet(progressive_spec(frozen->spec())) {
    column1 = register_module("column1", std::move(frozen));
    build();
}

ProgressiveUnet::ProgressiveUnet(ModelSpec spec) : SegmentationNet(progressive_spec(std::move(spec))) {
    column1 = register_module("column1", std::make_shared<MultiUnet>(column_spec(spec_)));
    build();
}

void ProgressiveUnet::build() {
    freeze(*column1);
    const auto& cfg = spec_.backbone;
    encoder = register_module("encoder", std::make_shared<Encoder>(spec_.in_channels(), cfg, true));
    decoder = register_module("decoder", std::make_shared<Decoder>(cfg, true));
    head = register_module("head", output_head(cfg.width(0)));
    for (int l = 0; l + 1 < cfg.levels; ++l) {
        down_adapters.push_back(
            register_module("lateral_down" + std::to_string(l), pointwise(cfg.width(l), cfg.width(l))));
    }
    for (int l = cfg.levels - 2; l >= 0; --l) {
        up_adapters.push_back(
            register_module("lateral_up" + std::to_string(l), pointwise(cfg.width(l + 1), cfg.width(l + 1))));
    }
}

torch::Tensor ProgressiveUnet::forward(const torch::Tensor& x, const torch::Tensor&) {
    check_input(x);
    std::vector<torch::Tensor> down_taps;
    std::vector<torch::Tensor> up_taps;
    {
        torch::NoGradGuard frozen;
        column1->forward_tapped(x, down_taps, up_taps);
    }

    auto lateral = [&](std::vector<torch::nn::Conv3d>& adapters, const std::vector<torch::Tensor>& taps) {
        std::vector<torch::Tensor> out;
        for (std::size_t i = 0; i < taps.size(); ++i) {
            auto t = adapters[i]->forward(taps[i]);
            out.push_back(laterals_enabled_ ? t : torch::zeros_like(t));
        }
        return out;
    };
    const auto down_lateral = lateral(down_adapters, down_taps);
    const auto up_lateral = lateral(up_adapters, up_taps);
    const Pyramid features = encoder->forward(x, &down_lateral);
    return torch::sigmoid(head->forward(decoder->forward(features, &up_lateral)));
}

void ProgressiveUnet::expand_input_channels(const std::vector<std::string>& new_modalities) {
    const int extra = static_cast<int>(new_modalities.size());
    column1->expand_input_channels(new_modalities);
    freeze(*column1);
    encoder->expand_input_channels(extra);
    spec_.modalities.insert(spec_.modalities.end(), new_modalities.begin(), new_modalities.end());
    ModalityRegistry check(spec_.modalities);
}

std::shared_ptr<MultiUnet> ProgressiveUnet::second_column_as_plain() const {
    auto plain = std::make_shared<MultiUnet>(column_spec(spec_));
    plain->to(head->weight.scalar_type());
    torch::NoGradGuard guard;
    auto src = named_parameters();
    for (auto& dst : plain->named_parameters()) {
        const auto& t = src[dst.key()];
        auto& d = dst.value();
        if (t.sizes() == d.sizes()) {
            d.copy_(t);
        } else if (dst.key().find("encoder.down") == 0) {
            d.copy_(t.narrow(1, 0, d.size(1)));  // Conv3d weight [out, in, ...]
        } else if (dst.key().find("decoder.up") == 0) {
            d.copy_(t.narrow(0, 0, d.size(0)));  // ConvTranspose3d weight [in, out, ...]
        } else {
            throw std::logic_error("unexpected parameter shape for " + dst.key());
        }
    }
    return plain;
}

std::vector<torch::Tensor> ProgressiveUnet::frozen_parameters() const { return column1->parameters(); }

std::vector<torch::Tensor> ProgressiveUnet::trainable_parameters() const {
    std::vector<torch::Tensor> out;
    for (const auto& p : parameters()) {
        if (p.requires_grad()) out.push_back(p);
    }
    return out;
}

// ------------------------------------------------------------------ helpers

std::shared_ptr<SegmentationNet> make_model(const ModelSpec& spec) {
    switch (spec.family) {
        case ModelFamily::multi_unet: return std::make_shared<MultiUnet>(spec);
        case ModelFamily::lf_unet: return std::make_shared<LFUnet>(spec);
        case ModelFamily::maf_unet: return std::make_shared<MAFUnet>(spec);
        case ModelFamily::progressive: return std::make_shared<ProgressiveUnet>(spec);
    }
    throw std::invalid_argument("unknown model family");
}

std::int64_t parameter_count(const torch::nn::Module& module, bool trainable_only) {
    std::int64_t n = 0;
    for (const auto& p : module.parameters()) {
        if (!trainable_only || p.requires_grad()) n += p.numel();
    }
    return n;
}

std::int64_t activation_elements(SegmentationNet& model, const torch::Tensor& x) {
    torch::NoGradGuard guard;
    ActivationMeter meter;
    model.forward(x, torch::ones({x.size(0), x.size(1)}, torch::kBool));
    return meter.elements();
}

torch::Tensor image_tensor(std::span<const CaseSample* const> samples) {
    if (samples.empty()) throw std::invalid_argument("image_tensor: no samples");
    const auto& first = *samples.front();
    const auto c = static_cast<std::int64_t>(first.channels());
    const Shape3 s = first.shape;
    auto out = torch::empty({static_cast<std::int64_t>(samples.size()), c, s.z, s.y, s.x}, torch::kFloat32);
    for (std::size_t b = 0; b < samples.size(); ++b) {
        const auto& smp = *samples[b];
        if (!(smp.shape == s) || static_cast<std::int64_t>(smp.channels()) != c) {
            throw std::invalid_argument("image_tensor: samples differ in shape or channel count");
        }
        std::memcpy(out[static_cast<std::int64_t>(b)].data_ptr<float>(), smp.image.data(),
                    smp.image.size() * sizeof(float));
    }
    return out;
}

torch::Tensor presence_tensor(std::span<const CaseSample* const> samples) {
    const auto c = static_cast<std::int64_t>(samples.front()->channels());
    auto out = torch::zeros({static_cast<std::int64_t>(samples.size()), c}, torch::kBool);
    auto acc = out.accessor<bool, 2>();
    for (std::size_t b = 0; b < samples.size(); ++b) {
        for (std::int64_t i = 0; i < c; ++i) acc[static_cast<std::int64_t>(b)][i] = samples[b]->presence[i];
    }
    return out;
}

torch::Tensor label_tensor(std::span<const CaseSample* const> samples) {
    const Shape3 s = samples.front()->shape;
    auto out = torch::empty({static_cast<std::int64_t>(samples.size()), 1, s.z, s.y, s.x}, torch::kFloat32);
    for (std::size_t b = 0; b < samples.size(); ++b) {
        const auto& lab = samples[b]->label.raw();
        auto* dst = out[static_cast<std::int64_t>(b)].data_ptr<float>();
        for (std::size_t i = 0; i < lab.size(); ++i) dst[i] = lab[i] ? 1.0f : 0.0f;
    }
    return out;
}

FloatVolume predict(SegmentationNet& model, const CaseSample& sample) {
    torch::NoGradGuard guard;
    const bool was_training = model.is_training();
    model.eval();
    const CaseSample* ptr = &sample;
    auto x = image_tensor(std::span<const CaseSample* const>(&ptr, 1));
    const auto presence = presence_tensor(std::span<const CaseSample* const>(&ptr, 1));

    const auto d = model.spec().backbone.divisor();
    const Shape3 s = sample.shape;
    auto pad_to = [d](std::int64_t n) { return (n + d - 1) / d * d; };
    const std::int64_t pz = pad_to(s.z) - s.z;
    const std::int64_t py = pad_to(s.y) - s.y;
    const std::int64_t px = pad_to(s.x) - s.x;
    if (pz || py || px) x = torch::constant_pad_nd(x, {0, px, 0, py, 0, pz}, 0.0);

    auto prob = model.forward(x.to(model.parameters().front().scalar_type()), presence);
    prob = prob.index({0, 0}).narrow(0, 0, s.z).narrow(1, 0, s.y).narrow(2, 0, s.x).to(torch::kFloat32).contiguous();
    model.train(was_training);

    std::vector<float> values(prob.data_ptr<float>(), prob.data_ptr<float>() + prob.numel());
    return FloatVolume(s, std::move(values));
}

Predictor make_predictor(std::shared_ptr<SegmentationNet> model) {
    return [model](const CaseSample& s) { return predict(*model, s); };
}

}  // namespace hetseg
