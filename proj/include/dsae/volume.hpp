#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

namespace dsae {

enum class Intent { dwi, sh_coeffs, scalar, labels };

using Affine = std::array<std::array<double, 4>, 4>;

Affine identity_affine(const std::array<double, 3>& spacing = {1.0, 1.0, 1.0});

/// In-plane 2-D image with one or more channels, stored channel-major
/// (c * height * width + y * width + x).
struct SliceImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;
  /// Per-channel (min, max) captured by normalize_slice.
  std::optional<std::vector<std::pair<double, double>>> norm_range;

  SliceImage() = default;
  SliceImage(int width, int height, int channels, double fill = 0.0);

  std::size_t plane() const { return static_cast<std::size_t>(width) * height; }
  double& at(int x, int y, int c) { return data[c * plane() + y * static_cast<std::size_t>(width) + x]; }
  double at(int x, int y, int c) const { return data[c * plane() + y * static_cast<std::size_t>(width) + x]; }
};

/// 4-D voxel array (X, Y, Z, V) with x varying fastest.
class Volume4D {
 public:
  Volume4D() = default;
  Volume4D(std::array<int, 4> dims, std::array<double, 3> spacing,
           Intent intent = Intent::dwi, double fill = 0.0);
  Volume4D(std::array<int, 4> dims, std::array<double, 3> spacing,
           Affine affine, Intent intent, std::vector<double> data);

  const std::array<int, 4>& dims() const { return dims_; }
  int nx() const { return dims_[0]; }
  int ny() const { return dims_[1]; }
  int nz() const { return dims_[2]; }
  int nv() const { return dims_[3]; }
  std::size_t voxels_per_volume() const {
    return static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
  }

  const std::array<double, 3>& spacing() const { return spacing_; }
  const Affine& affine() const { return affine_; }
  void set_affine(const Affine& a) { affine_ = a; }
  Intent intent() const { return intent_; }
  void set_intent(Intent intent);

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  std::size_t index(int x, int y, int z, int v) const {
    return static_cast<std::size_t>(x) +
           static_cast<std::size_t>(dims_[0]) *
               (y + static_cast<std::size_t>(dims_[1]) *
                        (z + static_cast<std::size_t>(dims_[2]) * v));
  }
  double& at(int x, int y, int z, int v = 0) { return data_[index(x, y, z, v)]; }
  double at(int x, int y, int z, int v = 0) const { return data_[index(x, y, z, v)]; }

  /// Slice z across the given volumes (all volumes when empty).
  SliceImage slice(int z, const std::vector<int>& volumes = {}) const;
  /// Writes the slice back; channel k goes to volumes[k] (or volume k).
  void set_slice(int z, const SliceImage& s, const std::vector<int>& volumes = {});

  /// New volume holding the listed volumes, in order.
  Volume4D select_volumes(const std::vector<int>& volumes) const;
  /// Voxelwise mean over all volumes, returned as a single-volume image.
  Volume4D mean_volume() const;

  /// Checks the structural invariants; throws Error on violation.
  void validate() const;

 private:
  std::array<int, 4> dims_{0, 0, 0, 0};
  std::array<double, 3> spacing_{1.0, 1.0, 1.0};
  Affine affine_ = identity_affine();
  Intent intent_ = Intent::dwi;
  std::vector<double> data_;
};

/// Concatenates along the volume axis. Spatial grids must agree.
Volume4D concat_volumes(const Volume4D& a, const Volume4D& b);

/// Per-channel min-max normalization to [0, 1]; a constant channel maps to 0.
SliceImage normalize_slice(const SliceImage& s);
/// Inverse of normalize_slice using the recorded norm_range.
SliceImage denormalize_slice(const SliceImage& s);
/// Joint variant: one (min, max) over all channels, recorded for each channel.
SliceImage normalize_slice_joint(const SliceImage& s);

}  // namespace dsae

namespace dsae {

/// Center crop and/or zero-pad to width x height. Applying it again with the
/// original size restores the original pixels that survived the crop.
SliceImage center_fit(const SliceImage& s, int width, int height);

}  // namespace dsae
