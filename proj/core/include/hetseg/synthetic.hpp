// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hetseg/manifest.hpp"
#include "hetseg/volume.hpp"

namespace hetseg {

struct LesionModel {
    int min_lesions = 1;
    int max_lesions = 3;
    double min_radius = 3.0;  ///< voxels
    double max_radius = 6.0;  ///< voxels
    /// Multiplies every modality's lesion contrast.
    double contrast_scale = 1.0;
};

struct SyntheticSpec {
    std::string database_id = "SYN";
    Shape3 shape{32, 32, 32};
    Spacing3 spacing{1.0, 1.0, 1.0};
    int train_cases = 4;
    int eval_cases = 0;
    std::vector<std::string> modalities{"FLAIR", "T1"};
    LesionModel lesions;
    /// Per-modality lesion contrast replacing the built-in profile.
    std::map<std::string, double> contrast_override;
    /// Label lesions with classes {1,2,4} instead of {1}.
    bool multi_class_labels = false;
    double noise_sigma = 4.0;
    std::uint64_t seed = 0;
};

struct SyntheticCase {
    std::map<std::string, FloatVolume> images;
    MaskVolume label;
};

/// Intensity profile of a modality: tissue offset, tissue gain and lesion
/// contrast, before contrast_scale.
struct ModalityProfile {
    double base;
    double gain;
    double lesion_contrast;
};
[[nodiscard]] ModalityProfile modality_profile(const std::string& modality);

/// Throws std::invalid_argument when the spec is unusable (no cases, an axis
/// under 16 voxels, a lesion radius above half the smallest axis, ...).
void validate_synthetic_spec(const SyntheticSpec& spec);

/// Case `index` of the database: every modality is a fixed transform of one
/// smooth anatomy field inside an ellipsoidal brain, with ellipsoidal lesions
/// adding modality-specific contrast. Voxels outside the brain are 0.
/// Depends only on (spec, index).
SyntheticCase synthesize_case(const SyntheticSpec& spec, int index);

/// Writes <root>/<database_id>/<case_id>/<MODALITY>.nii.gz and label.nii.gz
/// for every case and returns the manifest (paths relative to root).
DatabaseManifest generate_synthetic_database(const std::filesystem::path& root, const SyntheticSpec& spec);

}  // namespace hetseg
