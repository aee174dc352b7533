// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hetseg/manifest.hpp"
#include "hetseg/modality_registry.hpp"
#include "hetseg/volume.hpp"

namespace hetseg {

/// One subject: C registry-ordered channels, a presence flag per channel and
/// a binary lesion label. Absent channels hold exact zeros.
struct CaseSample {
    std::string database_id;
    std::string case_id;
    Shape3 shape;
    Spacing3 spacing;
    /// Channel-major: channel c occupies [c * voxels, (c + 1) * voxels).
    std::vector<float> image;
    std::vector<bool> presence;
    MaskVolume label;
    bool has_label = true;

    [[nodiscard]] std::size_t channels() const { return presence.size(); }
    [[nodiscard]] std::size_t voxels() const { return static_cast<std::size_t>(shape.voxels()); }
    [[nodiscard]] std::size_t present_count() const;
    [[nodiscard]] std::span<float> channel(std::size_t c);
    [[nodiscard]] std::span<const float> channel(std::size_t c) const;

    /// Zeroes channel c and clears its presence flag.
    void blank_channel(std::size_t c);

    [[nodiscard]] bool operator==(const CaseSample&) const = default;
};

/// Checks the sample invariants (absent channels zero, binary label, sizes
/// consistent); throws DataError.
void check_sample(const CaseSample& sample);

enum class NormalizationMask { nonzero, full };

struct LoadOptions {
    NormalizationMask mask = NormalizationMask::nonzero;
    bool resample = true;
    Spacing3 target_spacing{1.0, 1.0, 1.0};
    /// When set, only these modalities are read; every other channel is blank.
    std::optional<std::vector<std::string>> modalities;
};

/// Standardizes `values` to zero mean and unit population standard deviation
/// over voxels where mask != 0; voxels outside the mask become 0.
/// Throws DataError if the mask selects fewer than two voxels or the selected
/// values have zero variance.
std::vector<double> zscore(std::span<const double> values, std::span<const std::uint8_t> mask);
FloatVolume zscore(const FloatVolume& volume, const MaskVolume& mask);

/// Nonzero-intensity voxels (data is expected to be skull-stripped).
MaskVolume nonzero_mask(const FloatVolume& volume);

/// Any label value > 0 becomes 1.
MaskVolume merge_labels(const FloatVolume& label);

/// Output extent for resampling `shape` from `from` to `to` spacing.
Shape3 resampled_shape(const Shape3& shape, const Spacing3& from, const Spacing3& to);

/// Trilinear resampling with voxel centres aligned at index 0.
FloatVolume resample_linear(const FloatVolume& volume, const Spacing3& from, const Spacing3& to);

/// Nearest-neighbour resampling on the same grid as resample_linear.
MaskVolume resample_nearest(const MaskVolume& volume, const Spacing3& from, const Spacing3& to);

/// Reads one case: declared modalities land at their registry channels,
/// absent channels stay zero, labels are merged to {0,1}, volumes are
/// resampled to the target spacing when they differ and each present channel
/// is z-scored over its brain mask. Throws DataError.
CaseSample load_case(const DatabaseManifest& manifest, const std::string& case_id, const ModalityRegistry& registry,
                     const LoadOptions& options = {});

/// Copy with every channel outside `keep` blanked. Names in `keep` must be in
/// the registry.
CaseSample restrict_modalities(const CaseSample& sample, const ModalityRegistry& registry,
                               std::span<const std::string> keep);

}  // namespace hetseg
