// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>

#include <torch/torch.h>

#include "fixtures.hpp"
#include "hetseg/checkpoint.hpp"
#include "hetseg/fusion.hpp"
#include "hetseg/models.hpp"
#include "hetseg/training.hpp"

using namespace hetseg;

namespace {

const std::vector<std::string> kMods{"FLAIR", "T1", "T2"};

class Families : public ::testing::TestWithParam<ModelFamily> {
protected:
    void SetUp() override { seed_everything(0); }
};

std::string family_name(const ::testing::TestParamInfo<ModelFamily>& info) { return to_string(info.param); }

double max_abs_diff(const torch::Tensor& a, const torch::Tensor& b) {
    return (a - b).abs().max().item<double>();
}

}  // namespace

// ------------------------------------------------------------ shape contract

TEST_P(Families, OutputMatchesInputGrid) {
    auto model = make_model(fixture::spec_for(GetParam(), kMods));
    const auto x = torch::randn({2, 3, 8, 12, 16});
    const auto presence = torch::ones({2, 3}, torch::kBool);
    const auto y = model->forward(x, presence);
    EXPECT_EQ(y.sizes(), (std::vector<std::int64_t>{2, 1, 8, 12, 16}));
    EXPECT_GE(y.min().item<float>(), 0.0f);
    EXPECT_LE(y.max().item<float>(), 1.0f);
}

TEST_P(Families, RejectsBadInputs) {
    auto model = make_model(fixture::spec_for(GetParam(), kMods));
    EXPECT_THROW(model->forward(torch::randn({1, 2, 8, 8, 8})), std::invalid_argument);
    EXPECT_THROW(model->forward(torch::randn({1, 3, 8, 8, 6})), std::invalid_argument);
    EXPECT_THROW(model->forward(torch::randn({3, 8, 8, 8})), std::invalid_argument);
}

TEST_P(Families, ZeroFilledInputStaysFinite) {
    auto model = make_model(fixture::spec_for(GetParam(), kMods));
    auto x = torch::randn({1, 3, 8, 8, 8});
    x.index_put_({0, 1}, 0.0);
    const auto presence = torch::tensor({true, false, true}).view({1, 3});
    EXPECT_TRUE(torch::isfinite(model->forward(x, presence)).all().item<bool>());
    EXPECT_TRUE(torch::isfinite(model->forward(torch::zeros({1, 3, 8, 8, 8}))).all().item<bool>());
}

TEST_P(Families, SameSeedSameNetwork) {
    torch::manual_seed(3);
    auto a = make_model(fixture::spec_for(GetParam(), kMods));
    torch::manual_seed(3);
    auto b = make_model(fixture::spec_for(GetParam(), kMods));
    const auto x = torch::randn({1, 3, 8, 8, 8});
    EXPECT_TRUE(torch::equal(a->forward(x), b->forward(x)));
    EXPECT_TRUE(torch::equal(a->forward(x), a->forward(x)));
}

TEST_P(Families, CheckpointRoundTrip) {
    fixture::TempDir dir;
    auto model = make_model(fixture::spec_for(GetParam(), kMods));
    CheckpointMeta meta;
    meta.spec = model->spec();
    meta.registry = model->spec().modalities;
    meta.config_hash = "abc";
    meta.epoch = 7;
    save_checkpoint(dir / "m.pt", *model, meta);

    const auto loaded = load_checkpoint(dir / "m.pt");
    EXPECT_EQ(loaded.meta.spec, model->spec());
    EXPECT_EQ(loaded.meta.epoch, 7);
    EXPECT_EQ(loaded.meta.config_hash, "abc");
    model->eval();
    loaded.model->eval();
    const auto x = torch::randn({1, 3, 8, 8, 8});
    EXPECT_TRUE(torch::equal(model->forward(x), loaded.model->forward(x)));
    EXPECT_EQ(parameter_count(*model, true), parameter_count(*loaded.model, true));

    const ModalityRegistry same(kMods);
    EXPECT_NO_THROW(load_checkpoint(dir / "m.pt", &same));
    const ModalityRegistry wider({"PD", "FLAIR", "T1", "T2"});
    EXPECT_THROW(load_checkpoint(dir / "m.pt", &wider), CheckpointError);
}

TEST_P(Families, PredictHandlesIndivisibleShapes) {
    auto model = make_model(fixture::spec_for(GetParam(), kMods));
    Rng rng(0);
    const auto s = fixture::random_sample({10, 7, 9}, {true, false, true}, rng);
    const auto p = predict(*model, s);
    EXPECT_EQ(p.shape(), s.shape);
    for (float v : p.raw()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
    EXPECT_TRUE(model->is_training());
}

INSTANTIATE_TEST_SUITE_P(All, Families,
                         ::testing::Values(ModelFamily::multi_unet, ModelFamily::lf_unet, ModelFamily::maf_unet,
                                           ModelFamily::progressive),
                         family_name);

// ------------------------------------------------------------------- specs

TEST(ModelSpec, JsonRoundTrip) {
    auto spec = fixture::spec_for(ModelFamily::maf_unet, kMods);
    spec.share_encoders = false;
    spec.mask_absent = true;
    EXPECT_EQ(model_spec_from_json(to_json(spec)), spec);
    EXPECT_THROW((void)parse_model_family("transformer"), std::invalid_argument);
    for (auto f : {ModelFamily::multi_unet, ModelFamily::lf_unet, ModelFamily::maf_unet, ModelFamily::progressive}) {
        EXPECT_EQ(parse_model_family(to_string(f)), f);
    }
}

TEST(ModelSpec, BackboneValidation) {
    BackboneConfig b;
    b.levels = 1;
    EXPECT_THROW(b.validate(), std::invalid_argument);
    EXPECT_EQ(fixture::tiny_backbone().divisor(), 4);
    EXPECT_THROW(make_model(fixture::spec_for(ModelFamily::multi_unet, {})), std::invalid_argument);
}

TEST(Checkpoint, Failures) {
    fixture::TempDir dir;
    EXPECT_THROW(load_checkpoint(dir / "none.pt"), CheckpointError);
    {
        std::ofstream f(dir / "junk.pt");
        f << "not a checkpoint";
    }
    EXPECT_THROW(load_checkpoint(dir / "junk.pt"), CheckpointError);

    auto meta_json = to_json(CheckpointMeta{kCheckpointVersion + 1, fixture::spec_for(ModelFamily::multi_unet, kMods),
                                            kMods, "", 0, std::nullopt});
    EXPECT_THROW(checkpoint_meta_from_json(meta_json), CheckpointError);
    meta_json["version"] = kCheckpointVersion;
    meta_json["registry"] = std::vector<std::string>{"FLAIR"};
    EXPECT_THROW(checkpoint_meta_from_json(meta_json), CheckpointError);
}

TEST(Checkpoint, RemapIsStored) {
    fixture::TempDir dir;
    auto model = make_model(fixture::spec_for(ModelFamily::multi_unet, kMods));
    CheckpointMeta meta;
    meta.spec = model->spec();
    meta.registry = model->spec().modalities;
    meta.remap = ChannelRemap{{{"PD", 2}}, {"DWI"}};
    save_checkpoint(dir / "m.pt", *model, meta);
    EXPECT_EQ(read_checkpoint_meta(dir / "m.pt").remap, meta.remap);
}

// ------------------------------------------------------------------ fusion

TEST(Fusion, SingleModalityIsIdentity) {
    torch::manual_seed(0);
    FusionBlock block(1, 4);
    const auto z = torch::randn({2, 1, 4, 4, 4, 4});
    const auto out = block.forward(z);
    EXPECT_TRUE(torch::allclose(out.attention, torch::ones({2, 1, 4, 4, 4})));
    EXPECT_TRUE(torch::allclose(out.fused, z.select(1, 0)));
}

TEST(Fusion, AttentionIsADistribution) {
    torch::manual_seed(1);
    FusionBlock block(3, 2);
    const auto out = block.forward(torch::randn({2, 3, 2, 4, 4, 4}) * 5.0);
    EXPECT_GE(out.attention.min().item<float>(), 0.0f);
    EXPECT_TRUE(torch::allclose(out.attention.sum(1), torch::ones({2, 4, 4, 4}), 1e-5, 1e-6));
}

// Swapping two modalities, together with their weight slots, swaps their
// attention maps and leaves the fused embedding unchanged.
TEST(Fusion, PermutationEquivariance) {
    torch::manual_seed(2);
    const int C = 3, F = 2;
    FusionBlock a(C, F), b(C, F);
    const std::vector<std::int64_t> perm{2, 0, 1};
    {
        torch::NoGradGuard g;
        for (int i = 0; i < C; ++i) {
            const auto src = perm[static_cast<std::size_t>(i)];
            b.squeeze->weight.slice(1, i * F, (i + 1) * F).copy_(a.squeeze->weight.slice(1, src * F, (src + 1) * F));
            b.score->weight[i].copy_(a.score->weight[src]);
            b.score->bias[i].copy_(a.score->bias[src]);
        }
        b.squeeze->bias.copy_(a.squeeze->bias);
    }
    const auto z = torch::randn({1, C, F, 4, 4, 4});
    const auto idx = torch::tensor(perm);
    const auto ra = a.forward(z);
    const auto rb = b.forward(z.index_select(1, idx));
    EXPECT_LT(max_abs_diff(ra.fused, rb.fused), 1e-5);
    EXPECT_LT(max_abs_diff(ra.attention.index_select(1, idx), rb.attention), 1e-6);
}

TEST(Fusion, AbsentModalitiesGetNoWeight) {
    torch::manual_seed(3);
    FusionBlock block(3, 2);
    auto z = torch::randn({2, 3, 2, 4, 4, 4});
    const auto absent = torch::tensor({false, true, false, true, false, false}).view({2, 3});
    const auto out = block.forward(z, absent);
    EXPECT_EQ(out.attention.select(0, 0).select(0, 1).abs().max().item<float>(), 0.0f);
    EXPECT_EQ(out.attention.select(0, 1).select(0, 0).abs().max().item<float>(), 0.0f);
    EXPECT_TRUE(torch::allclose(out.attention.sum(1), torch::ones({2, 4, 4, 4}), 1e-5, 1e-6));
}

// The hand-written backward agrees with autograd through a plain softmax.
TEST(Fusion, ClosedFormGradientMatchesAutograd) {
    torch::manual_seed(4);
    const auto opts = torch::TensorOptions().dtype(torch::kFloat64);
    const auto logits0 = torch::randn({2, 3, 3, 2, 2}, opts);
    const auto z0 = torch::randn({2, 3, 4, 3, 2, 2}, opts);
    const auto w_fused = torch::randn({2, 4, 3, 2, 2}, opts);
    const auto w_attn = torch::randn({2, 3, 3, 2, 2}, opts);

    auto l1 = logits0.clone().requires_grad_(true);
    auto z1 = z0.clone().requires_grad_(true);
    const auto out = attention_fuse(l1, z1);
    ((out.fused * w_fused).sum() + (out.attention * w_attn).sum()).backward();

    auto l2 = logits0.clone().requires_grad_(true);
    auto z2 = z0.clone().requires_grad_(true);
    const auto a = torch::softmax(l2, 1);
    const auto fused = (a.unsqueeze(2) * z2).sum(1);
    ((fused * w_fused).sum() + (a * w_attn).sum()).backward();

    EXPECT_LT(max_abs_diff(l1.grad(), l2.grad()), 1e-12);
    EXPECT_LT(max_abs_diff(z1.grad(), z2.grad()), 1e-12);
}

TEST(Fusion, ExpansionKeepsExistingWeights) {
    torch::manual_seed(5);
    FusionBlock block(2, 3);
    const auto sq = block.squeeze->weight.clone();
    const auto sc = block.score->weight.clone();
    block.expand_modalities(2);
    EXPECT_EQ(block.modalities(), 4);
    EXPECT_TRUE(torch::equal(block.squeeze->weight.slice(1, 0, 6), sq));
    EXPECT_TRUE(torch::equal(block.score->weight.slice(0, 0, 2), sc));
    EXPECT_NO_THROW(block.forward(torch::randn({1, 4, 3, 4, 4, 4})));
}

// ------------------------------------------------------------ fused models

TEST(FusedModels, AttentionMapCounts) {
    seed_everything(0);
    const auto x = torch::randn({1, 3, 8, 8, 8});
    auto lf = std::dynamic_pointer_cast<LFUnet>(make_model(fixture::spec_for(ModelFamily::lf_unet, kMods)));
    auto maf = std::dynamic_pointer_cast<MAFUnet>(make_model(fixture::spec_for(ModelFamily::maf_unet, kMods)));
    ASSERT_TRUE(lf && maf);
    const auto lf_out = lf->forward_with_attention(x);
    const auto maf_out = maf->forward_with_attention(x);
    ASSERT_EQ(lf_out.attention.size(), 1u);
    ASSERT_EQ(maf_out.attention.size(), static_cast<std::size_t>(fixture::tiny_backbone().levels));
    EXPECT_EQ(lf_out.attention[0].sizes(), (std::vector<std::int64_t>{1, 3, 8, 8, 8}));
    EXPECT_EQ(maf_out.attention.back().sizes(), (std::vector<std::int64_t>{1, 3, 2, 2, 2}));
    EXPECT_EQ(maf->encoders.size(), 1u);
}

TEST(FusedModels, SeparateEncoders) {
    seed_everything(0);
    auto spec = fixture::spec_for(ModelFamily::maf_unet, kMods);
    auto shared = make_model(spec);
    spec.share_encoders = false;
    auto separate = make_model(spec);
    EXPECT_EQ(std::dynamic_pointer_cast<MAFUnet>(separate)->encoders.size(), 3u);
    EXPECT_GT(parameter_count(*separate), parameter_count(*shared));
    EXPECT_EQ(separate->forward(torch::randn({1, 3, 8, 8, 8})).sizes(),
              (std::vector<std::int64_t>{1, 1, 8, 8, 8}));
}

TEST(FusedModels, MaskedAbsentModalityGetsNoAttention) {
    seed_everything(0);
    for (auto f : {ModelFamily::lf_unet, ModelFamily::maf_unet}) {
        auto spec = fixture::spec_for(f, kMods);
        spec.mask_absent = true;
        auto model = make_model(spec);
        auto x = torch::randn({2, 3, 8, 8, 8});
        x.index_put_({0, 1}, 0.0);
        const auto presence = torch::tensor({true, false, true, true, true, true}).view({2, 3});
        const auto out = f == ModelFamily::lf_unet
                             ? std::dynamic_pointer_cast<LFUnet>(model)->forward_with_attention(x, presence)
                             : std::dynamic_pointer_cast<MAFUnet>(model)->forward_with_attention(x, presence);
        for (const auto& a : out.attention) {
            EXPECT_EQ(a.select(0, 0).select(0, 1).abs().max().item<float>(), 0.0f);
            EXPECT_GT(a.select(0, 1).select(0, 1).min().item<float>(), 0.0f);
        }
    }
}

// One shared encoder plus per-level fusion is smaller than the activation
// volume a late-fusion network writes at 64^3.
TEST(FusedModels, MafParametersBelowLfActivations) {
    seed_everything(0);
    const BackboneConfig b;
    auto maf = make_model(fixture::spec_for(ModelFamily::maf_unet, {"FLAIR", "T1"}, b));
    auto lf = make_model(fixture::spec_for(ModelFamily::lf_unet, {"FLAIR", "T1"}, b));
    torch::NoGradGuard g;
    const auto acts = activation_elements(*lf, torch::randn({1, 2, 64, 64, 64}));
    EXPECT_LT(parameter_count(*maf), acts);
    EXPECT_GT(acts, 64 * 64 * 64);
}

// ------------------------------------------------------- channel expansion

TEST(Expansion, MultiUnetIgnoresZeroNewChannel) {
    seed_everything(0);
    auto model = make_model(fixture::spec_for(ModelFamily::multi_unet, {"FLAIR", "T1"}));
    model->eval();
    const auto x = torch::randn({1, 2, 8, 8, 8});
    const auto before = model->forward(x);
    model->expand_input_channels({"DWI"});
    EXPECT_EQ(model->spec().modalities, (std::vector<std::string>{"FLAIR", "T1", "DWI"}));
    const auto after = model->forward(torch::cat({x, torch::zeros({1, 1, 8, 8, 8})}, 1));
    EXPECT_LT(max_abs_diff(before, after), 1e-6);
}

TEST(Expansion, RenameKeepsWeights) {
    seed_everything(0);
    auto model = make_model(fixture::spec_for(ModelFamily::multi_unet, {"FLAIR", "T1"}));
    const auto x = torch::randn({1, 2, 8, 8, 8});
    model->eval();
    const auto before = model->forward(x);
    model->rename_channel(1, "PD");
    EXPECT_EQ(model->spec().modalities, (std::vector<std::string>{"FLAIR", "PD"}));
    EXPECT_TRUE(torch::equal(before, model->forward(x)));
    EXPECT_THROW(model->rename_channel(0, "PD"), std::invalid_argument);
}

TEST(Expansion, FusedModelsGrowFusionSlots) {
    seed_everything(0);
    for (auto f : {ModelFamily::lf_unet, ModelFamily::maf_unet}) {
        auto model = make_model(fixture::spec_for(f, {"FLAIR", "T1"}));
        model->expand_input_channels({"T2", "DWI"});
        EXPECT_EQ(model->spec().in_channels(), 4);
        EXPECT_EQ(model->forward(torch::randn({1, 4, 8, 8, 8})).size(1), 1);
    }
}

// ------------------------------------------------------------- progressive

namespace {

std::shared_ptr<ProgressiveUnet> progressive_net() {
    auto base = std::dynamic_pointer_cast<MultiUnet>(make_model(fixture::spec_for(ModelFamily::multi_unet, kMods)));
    return std::make_shared<ProgressiveUnet>(base);
}

}  // namespace

TEST(Progressive, LateralCountAndFreezing) {
    seed_everything(0);
    auto net = progressive_net();
    const int levels = fixture::tiny_backbone().levels;
    EXPECT_EQ(net->lateral_count(), static_cast<std::size_t>(2 * (levels - 1)));
    for (const auto& p : net->column1->parameters()) EXPECT_FALSE(p.requires_grad());
    std::int64_t frozen = 0, trainable = 0;
    for (const auto& p : net->frozen_parameters()) frozen += p.numel();
    for (const auto& p : net->trainable_parameters()) trainable += p.numel();
    EXPECT_EQ(frozen, parameter_count(*net->column1));
    EXPECT_EQ(frozen + trainable, parameter_count(*net));
    EXPECT_EQ(trainable, parameter_count(*net, true));
}

TEST(Progressive, LateralsOffEqualsPlainSecondColumn) {
    seed_everything(0);
    auto net = progressive_net();
    net->eval();
    const auto x = torch::randn({2, 3, 8, 8, 8});
    const auto with = net->forward(x);
    net->set_laterals_enabled(false);
    const auto without = net->forward(x);
    auto plain = net->second_column_as_plain();
    plain->eval();
    EXPECT_LT(max_abs_diff(without, plain->forward(x)), 1e-6);
    EXPECT_GT(max_abs_diff(with, without), 1e-6);
}

TEST(Progressive, TrainingStepLeavesColumnOneUntouched) {
    seed_everything(0);
    auto net = progressive_net();
    std::vector<torch::Tensor> before;
    for (const auto& p : net->column1->parameters()) before.push_back(p.clone());
    torch::optim::Adam opt(net->trainable_parameters(), torch::optim::AdamOptions(1e-2));
    const auto x = torch::randn({1, 3, 8, 8, 8});
    const auto y = (torch::rand({1, 1, 8, 8, 8}) > 0.7).to(torch::kFloat32);
    for (int i = 0; i < 3; ++i) {
        opt.zero_grad();
        segmentation_loss(net->forward(x), y).total.backward();
        opt.step();
    }
    const auto after = net->column1->parameters();
    for (std::size_t i = 0; i < before.size(); ++i) EXPECT_TRUE(torch::equal(before[i], after[i]));
}

TEST(Progressive, ExpansionReachesBothColumns) {
    seed_everything(0);
    auto net = progressive_net();
    net->expand_input_channels({"DWI"});
    EXPECT_EQ(net->spec().in_channels(), 4);
    EXPECT_EQ(net->column1->spec().in_channels(), 4);
    EXPECT_EQ(net->forward(torch::randn({1, 4, 8, 8, 8})).size(1), 1);
}

// -------------------------------------------------------------- batching

TEST(Batching, TensorLayout) {
    Rng rng(0);
    auto a = fixture::random_sample({4, 5, 6}, {true, false}, rng);
    a.image[1] = 42.0f;  // x = 1, y = 0, z = 0
    const CaseSample* ptrs[] = {&a, &a};
    const auto x = image_tensor(ptrs);
    EXPECT_EQ(x.sizes(), (std::vector<std::int64_t>{2, 2, 6, 5, 4}));
    EXPECT_EQ(x.index({1, 0, 0, 0, 1}).item<float>(), 42.0f);
    EXPECT_TRUE(torch::equal(presence_tensor(ptrs), torch::tensor({true, false, true, false}).view({2, 2})));
    EXPECT_EQ(label_tensor(ptrs).sizes(), (std::vector<std::int64_t>{2, 1, 6, 5, 4}));
}
