// Copyright (c) 2026 The hetseg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include "hetseg/volume.hpp"

namespace hetseg {

struct NiftiVolume {
    FloatVolume data;
    Spacing3 spacing;
};

/// Reads a 3D NIfTI-1 single-file image (.nii or .nii.gz). Integer and
/// floating voxel types are converted to float with scl_slope/scl_inter
/// applied. Throws DataError on I/O failure or unsupported content.
NiftiVolume read_nifti(const std::filesystem::path& path);

/// Writes float32 voxels. A ".gz" suffix selects gzip compression; output
/// bytes depend only on the arguments.
void write_nifti(const std::filesystem::path& path, const FloatVolume& volume, const Spacing3& spacing);

/// Writes uint8 voxels (labels).
void write_nifti(const std::filesystem::path& path, const MaskVolume& volume, const Spacing3& spacing);

}  // namespace hetseg
