// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hetseg/dataset.hpp"
#include "hetseg/manifest.hpp"
#include "hetseg/models.hpp"
#include "hetseg/rng.hpp"
#include "hetseg/synthetic.hpp"

namespace fixture {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "hetseg");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    [[nodiscard]] std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

private:
    std::filesystem::path path_;
};

/// Manifest with placeholder paths; enough for registry and sampler logic.
hetseg::DatabaseManifest toy_manifest(const std::string& id, std::vector<std::string> modalities, int train,
                                      int eval = 0);

/// In-memory sample with Gaussian channels; channel c is present when
/// present[c] is true. The label is a centred cube.
hetseg::CaseSample random_sample(const hetseg::Shape3& shape, const std::vector<bool>& present, hetseg::Rng& rng);

/// Three levels, base width 4.
hetseg::BackboneConfig tiny_backbone();

hetseg::ModelSpec spec_for(hetseg::ModelFamily family, std::vector<std::string> modalities,
                           hetseg::BackboneConfig backbone = tiny_backbone());

}  // namespace fixture
