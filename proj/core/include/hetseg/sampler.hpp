// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "hetseg/dataset.hpp"
#include "hetseg/manifest.hpp"
#include "hetseg/rng.hpp"

namespace hetseg {

/// Random modality dropping. For a sample with k present modalities the
/// number dropped is uniform on [0, k-1]; which ones is uniform without
/// replacement.
struct DropPolicy {
    bool enabled = true;
    std::uint64_t seed = 0;
    std::set<std::string> exempt_databases;
};

struct Draw {
    std::string database_id;
    std::string case_id;

    [[nodiscard]] bool operator==(const Draw&) const = default;
};

struct EpochPlan {
    std::vector<Draw> draws;
    std::map<std::string, std::size_t> per_database;
};

/// Every database contributes as many draws as the largest one has train
/// cases. A database with n cases and target M yields floor(M/n) copies of
/// each case plus M mod n distinct extra cases; the whole list is shuffled.
/// Throws std::invalid_argument if no database has a train case.
EpochPlan plan_epoch(std::span<const DatabaseManifest> manifests, Rng& rng);

/// Number of modalities the policy would drop for this draw.
std::size_t draw_drop_count(std::size_t present, Rng& rng);

/// Returns a copy with n randomly chosen present channels blanked, where n is
/// drawn by draw_drop_count. Never blanks the last present channel. Returns
/// the input unchanged when the policy is disabled or the database exempt.
CaseSample apply_drop(const CaseSample& sample, const DropPolicy& policy, Rng& rng);

struct PatchPolicy {
    Shape3 shape{96, 96, 96};
    double foreground_bias = 0.5;
};

struct Patch {
    CaseSample sample;
    Index3 origin;
    bool lesion_centered = false;
};

/// Crops a patch. With probability foreground_bias (when the label has any
/// lesion) the patch is centred on a uniformly chosen lesion voxel, clamped
/// to stay inside the volume; otherwise the origin is uniform. Throws
/// std::invalid_argument when the patch exceeds the volume.
Patch extract_patch(const CaseSample& sample, const Shape3& patch_shape, double foreground_bias, Rng& rng);

/// Patch policy shape clipped to the sample extent on every axis.
Shape3 clip_patch_shape(const Shape3& patch, const Shape3& volume);

}  // namespace hetseg
