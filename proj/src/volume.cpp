#include "dsae/volume.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dsae/error.hpp"

namespace dsae {

Affine identity_affine(const std::array<double, 3>& spacing) {
  Affine a{};
  for (int i = 0; i < 3; ++i) a[i][i] = spacing[i];
  a[3][3] = 1.0;
  return a;
}

SliceImage::SliceImage(int w, int h, int c, double fill)
    : width(w), height(h), channels(c),
      data(static_cast<std::size_t>(w) * h * c, fill) {}

Volume4D::Volume4D(std::array<int, 4> dims, std::array<double, 3> spacing,
                   Intent intent, double fill)
    : dims_(dims),
      spacing_(spacing),
      affine_(identity_affine(spacing)),
      intent_(intent) {
  for (int d : dims_)
    if (d <= 0) fail(ErrorKind::Shape, "volume dimensions must be positive");
  data_.assign(voxels_per_volume() * dims_[3], fill);
  validate();
}

Volume4D::Volume4D(std::array<int, 4> dims, std::array<double, 3> spacing,
                   Affine affine, Intent intent, std::vector<double> data)
    : dims_(dims),
      spacing_(spacing),
      affine_(affine),
      intent_(intent),
      data_(std::move(data)) {
  validate();
}

void Volume4D::set_intent(Intent intent) {
  intent_ = intent;
  validate();
}

void Volume4D::validate() const {
  for (int d : dims_)
    if (d <= 0) fail(ErrorKind::Shape, "volume dimensions must be positive");
  if (data_.size() != voxels_per_volume() * static_cast<std::size_t>(dims_[3]))
    fail(ErrorKind::Shape, "data length " + std::to_string(data_.size()) +
                               " does not match dims");
  for (double s : spacing_)
    if (!(s > 0.0)) fail(ErrorKind::Shape, "voxel spacing must be strictly positive");
  if (intent_ == Intent::labels) {
    for (double v : data_)
      if (v < 0.0 || v != std::floor(v))
        fail(ErrorKind::Shape, "label volumes must hold non-negative integers");
  }
}

SliceImage Volume4D::slice(int z, const std::vector<int>& volumes) const {
  if (z < 0 || z >= nz()) fail(ErrorKind::Shape, "slice index out of range");
  std::vector<int> vols = volumes;
  if (vols.empty())
    for (int v = 0; v < nv(); ++v) vols.push_back(v);
  SliceImage s(nx(), ny(), static_cast<int>(vols.size()));
  for (std::size_t c = 0; c < vols.size(); ++c) {
    const double* src = &data_[index(0, 0, z, vols[c])];
    std::copy(src, src + s.plane(), s.data.begin() + c * s.plane());
  }
  return s;
}

void Volume4D::set_slice(int z, const SliceImage& s, const std::vector<int>& volumes) {
  if (z < 0 || z >= nz()) fail(ErrorKind::Shape, "slice index out of range");
  if (s.width != nx() || s.height != ny())
    fail(ErrorKind::Shape, "slice in-plane size does not match volume");
  std::vector<int> vols = volumes;
  if (vols.empty())
    for (int v = 0; v < nv(); ++v) vols.push_back(v);
  if (static_cast<int>(vols.size()) != s.channels)
    fail(ErrorKind::Shape, "slice channel count does not match target volumes");
  for (std::size_t c = 0; c < vols.size(); ++c) {
    auto first = s.data.begin() + c * s.plane();
    std::copy(first, first + s.plane(), &data_[index(0, 0, z, vols[c])]);
  }
}

Volume4D Volume4D::select_volumes(const std::vector<int>& volumes) const {
  if (volumes.empty()) fail(ErrorKind::Shape, "no volumes selected");
  std::vector<double> out;
  out.reserve(voxels_per_volume() * volumes.size());
  for (int v : volumes) {
    if (v < 0 || v >= nv()) fail(ErrorKind::Shape, "volume index out of range");
    auto first = data_.begin() + voxels_per_volume() * v;
    out.insert(out.end(), first, first + voxels_per_volume());
  }
  return Volume4D({nx(), ny(), nz(), static_cast<int>(volumes.size())}, spacing_,
                  affine_, intent_, std::move(out));
}

Volume4D Volume4D::mean_volume() const {
  std::vector<double> out(voxels_per_volume(), 0.0);
  for (int v = 0; v < nv(); ++v)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += data_[v * voxels_per_volume() + i];
  for (double& x : out) x /= nv();
  return Volume4D({nx(), ny(), nz(), 1}, spacing_, affine_,
                  intent_ == Intent::labels ? Intent::scalar : intent_, std::move(out));
}

Volume4D concat_volumes(const Volume4D& a, const Volume4D& b) {
  if (a.nx() != b.nx() || a.ny() != b.ny() || a.nz() != b.nz())
    fail(ErrorKind::Shape, "cannot concatenate volumes on different grids");
  std::vector<double> data = a.data();
  data.insert(data.end(), b.data().begin(), b.data().end());
  return Volume4D({a.nx(), a.ny(), a.nz(), a.nv() + b.nv()}, a.spacing(), a.affine(),
                  a.intent(), std::move(data));
}

SliceImage normalize_slice(const SliceImage& s) {
  SliceImage out = s;
  std::vector<std::pair<double, double>> ranges;
  const std::size_t n = s.plane();
  for (int c = 0; c < s.channels; ++c) {
    auto first = s.data.begin() + c * n;
    auto [lo, hi] = std::minmax_element(first, first + n);
    const double mn = n ? *lo : 0.0;
    const double mx = n ? *hi : 0.0;
    ranges.emplace_back(mn, mx > mn ? mx : mn);
    for (std::size_t i = 0; i < n; ++i) {
      double& v = out.data[c * n + i];
      v = mx > mn ? std::clamp((v - mn) / (mx - mn), 0.0, 1.0) : 0.0;
    }
  }
  out.norm_range = std::move(ranges);
  return out;
}

SliceImage normalize_slice_joint(const SliceImage& s) {
  SliceImage out = s;
  double mn = 0.0, mx = 0.0;
  if (!s.data.empty()) {
    auto [lo, hi] = std::minmax_element(s.data.begin(), s.data.end());
    mn = *lo;
    mx = *hi;
  }
  for (double& v : out.data) v = mx > mn ? std::clamp((v - mn) / (mx - mn), 0.0, 1.0) : 0.0;
  out.norm_range = std::vector<std::pair<double, double>>(s.channels, {mn, mx > mn ? mx : mn});
  return out;
}

SliceImage denormalize_slice(const SliceImage& s) {
  if (!s.norm_range || static_cast<int>(s.norm_range->size()) != s.channels)
    fail(ErrorKind::InvalidArgument, "slice carries no normalization range");
  SliceImage out = s;
  const std::size_t n = s.plane();
  for (int c = 0; c < s.channels; ++c) {
    const auto [mn, mx] = (*s.norm_range)[c];
    for (std::size_t i = 0; i < n; ++i) {
      double& v = out.data[c * n + i];
      v = mn + v * (mx - mn);
    }
  }
  out.norm_range.reset();
  return out;
}

}  // namespace dsae

namespace dsae {

SliceImage center_fit(const SliceImage& s, int width, int height) {
  if (s.width == width && s.height == height) return s;
  SliceImage out(width, height, s.channels);
  out.norm_range = s.norm_range;
  // Offset of the source origin inside the destination (negative when cropping).
  const int ox = width >= s.width ? (width - s.width) / 2 : -((s.width - width) / 2);
  const int oy = height >= s.height ? (height - s.height) / 2 : -((s.height - height) / 2);
  for (int c = 0; c < s.channels; ++c)
    for (int y = 0; y < height; ++y) {
      const int sy = y - oy;
      if (sy < 0 || sy >= s.height) continue;
      for (int x = 0; x < width; ++x) {
        const int sx = x - ox;
        if (sx >= 0 && sx < s.width) out.at(x, y, c) = s.at(sx, sy, c);
      }
    }
  return out;
}

}  // namespace dsae
