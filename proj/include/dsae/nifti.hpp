#pragma once

#include <filesystem>

#include "dsae/volume.hpp"

namespace dsae {

/// Reads an uncompressed little-endian single-file NIfTI-1 image.
/// Supported datatypes: uint8, int16, int32, float32, float64. A nonzero
/// scl_slope is applied. The affine comes from the sform when present, else
/// the qform, else the voxel spacing.
Volume4D read_nifti(const std::filesystem::path& path);

/// Writes `v` as NIfTI-1 ("n+1", vox_offset 352) with float32 data. Values are
/// rounded to single precision.
void write_nifti(const Volume4D& v, const std::filesystem::path& path);

}  // namespace dsae
