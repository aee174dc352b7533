// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#include "fixtures.hpp"

#include <random>
#include <system_error>

namespace fixture {

TempDir::TempDir(const std::string& tag) {
    std::random_device rd;
    const auto base = std::filesystem::temp_directory_path();
    for (int attempt = 0; attempt < 100; ++attempt) {
        auto candidate = base / (tag + "-" + std::to_string(rd()));
        if (std::filesystem::create_directory(candidate)) {
            path_ = candidate;
            return;
        }
    }
    throw std::runtime_error("cannot create a temporary directory");
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

hetseg::DatabaseManifest toy_manifest(const std::string& id, std::vector<std::string> modalities, int train,
                                      int eval) {
    hetseg::DatabaseManifest m;
    m.database_id = id;
    m.modalities = std::move(modalities);
    for (int i = 0; i < train + eval; ++i) {
        hetseg::CaseRecord c;
        c.case_id = id + "_" + std::to_string(i);
        c.split = i < train ? hetseg::Split::train : hetseg::Split::eval;
        for (const auto& mod : m.modalities) c.images[mod] = c.case_id + "/" + mod + ".nii.gz";
        c.label = c.case_id + "/label.nii.gz";
        m.cases.push_back(std::move(c));
    }
    return m;
}

hetseg::CaseSample random_sample(const hetseg::Shape3& shape, const std::vector<bool>& present, hetseg::Rng& rng) {
    hetseg::CaseSample s;
    s.database_id = "RND";
    s.case_id = "case";
    s.shape = shape;
    s.presence = present;
    const auto n = static_cast<std::size_t>(shape.voxels());
    s.image.assign(present.size() * n, 0.0f);
    std::normal_distribution<float> g(0.0f, 1.0f);
    for (std::size_t c = 0; c < present.size(); ++c) {
        if (!present[c]) continue;
        for (std::size_t i = 0; i < n; ++i) s.image[c * n + i] = g(rng);
    }
    s.label = hetseg::MaskVolume(shape);
    for (std::int64_t z = shape.z / 4; z < 3 * shape.z / 4; ++z)
        for (std::int64_t y = shape.y / 4; y < 3 * shape.y / 4; ++y)
            for (std::int64_t x = shape.x / 4; x < 3 * shape.x / 4; ++x) s.label.at(x, y, z) = 1;
    return s;
}

hetseg::BackboneConfig tiny_backbone() {
    hetseg::BackboneConfig b;
    b.levels = 3;
    b.base_width = 4;
    return b;
}

hetseg::ModelSpec spec_for(hetseg::ModelFamily family, std::vector<std::string> modalities,
                           hetseg::BackboneConfig backbone) {
    hetseg::ModelSpec s;
    s.family = family;
    s.modalities = std::move(modalities);
    s.backbone = backbone;
    return s;
}

}  // namespace fixture
