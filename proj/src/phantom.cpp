#include "dsae/phantom.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "dsae/error.hpp"

namespace dsae {

NoiseKind parse_noise_kind(const std::string& s) {
  if (s == "none") return NoiseKind::none;
  if (s == "gaussian") return NoiseKind::gaussian;
  if (s == "rician") return NoiseKind::rician;
  fail(ErrorKind::InvalidArgument, "unknown noise model '" + s + "' (none, gaussian, rician)");
}

std::string to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::none: return "none";
    case NoiseKind::gaussian: return "gaussian";
    case NoiseKind::rician: return "rician";
  }
  return "none";
}

void PhantomSpec::validate() const {
  for (int d : dims)
    if (d < 4) fail(ErrorKind::InvalidArgument, "phantom dimensions must be at least 4");
  if (!(bval > kB0Threshold)) fail(ErrorKind::InvalidArgument, "phantom b-value must exceed the b0 threshold");
  if (n_directions < 6) fail(ErrorKind::InvalidArgument, "phantom needs at least 6 directions");
  if (n_b0 < 1) fail(ErrorKind::InvalidArgument, "phantom needs at least one b0 volume");
  if (sigma < 0.0) fail(ErrorKind::InvalidArgument, "noise sigma must be non-negative");
}

Volume4D Phantom::combined() const { return concat_volumes(b0, dwi); }

GradientTable Phantom::combined_table() const {
  GradientTable t;
  for (int i = 0; i < b0.nv(); ++i) {
    t.bvals.push_back(0.0);
    t.bvecs.push_back({0.0, 0.0, 0.0});
  }
  t.bvals.insert(t.bvals.end(), g.bvals.begin(), g.bvals.end());
  t.bvecs.insert(t.bvecs.end(), g.bvecs.begin(), g.bvecs.end());
  return t;
}

namespace {

struct Tissue {
  int label = kBackground;
  double s0 = 0.0;
  Tensor6 d{};
};

Tensor6 cylinder(const Vec3& e, double l1, double l2) {
  const double a = l1 - l2;
  return {l2 + a * e[0] * e[0], l2 + a * e[1] * e[1], l2 + a * e[2] * e[2],
          a * e[0] * e[1],      a * e[0] * e[2],      a * e[1] * e[2]};
}

Tissue tissue_at(const PhantomSpec& s, int x, int y, int z) {
  const double u = (x - 0.5 * (s.dims[0] - 1)) / (0.45 * s.dims[0]);
  const double v = (y - 0.5 * (s.dims[1] - 1)) / (0.45 * s.dims[1]);
  const double w = (z - 0.5 * (s.dims[2] - 1)) / (0.6 * s.dims[2]);
  const double r = std::sqrt(u * u + v * v + w * w);
  const double iso_csf = kCsfDiffusivity, iso_gm = kGrayDiffusivity;
  const auto& wm = kWhiteEigenvalues;

  if (r > 1.0) return {};
  if (r > 0.85) return {kCsf, 1.0, {iso_csf, iso_csf, iso_csf, 0, 0, 0}};
  if (r > 0.65) return {kCorticalGm, 0.85, {iso_gm, iso_gm, iso_gm, 0, 0, 0}};
  if (std::abs(v) < 0.12 && std::abs(w) < 0.5) return {kCorpusCallosum, 0.75, cylinder({1.0, 0.0, 0.0}, wm[0], wm[1])};

  const double azimuth = 0.9 * std::numbers::pi * u + 0.3 * z;
  const double elevation = 0.45 * std::sin(std::numbers::pi * v);
  const Vec3 e{std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth), std::sin(elevation)};
  return {kWhiteMatter, 0.7, cylinder(e, wm[0], wm[1])};
}

}  // namespace

Phantom make_phantom(const PhantomSpec& spec) {
  spec.validate();
  const auto [nx, ny, nz] = spec.dims;
  Phantom p;
  p.g.bvecs = spherical_fibonacci(spec.n_directions);
  p.g.bvals.assign(spec.n_directions, spec.bval);
  p.dwi = Volume4D({nx, ny, nz, spec.n_directions}, spec.spacing, Intent::dwi);
  p.b0 = Volume4D({nx, ny, nz, spec.n_b0}, spec.spacing, Intent::dwi);
  p.labels = Volume4D({nx, ny, nz, 1}, spec.spacing, Intent::labels);
  p.truth.tensors = Volume4D({nx, ny, nz, 6}, spec.spacing, Intent::scalar);
  p.truth.s0 = Volume4D({nx, ny, nz, 1}, spec.spacing, Intent::scalar);

  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) {
        const Tissue t = tissue_at(spec, x, y, z);
        p.labels.at(x, y, z) = t.label;
        p.truth.s0.at(x, y, z) = t.s0;
        for (int c = 0; c < 6; ++c) p.truth.tensors.at(x, y, z, c) = t.d[c];
        for (int v = 0; v < spec.n_b0; ++v) p.b0.at(x, y, z, v) = t.s0;
        if (t.s0 == 0.0) continue;
        const auto& d = t.d;
        for (int v = 0; v < spec.n_directions; ++v) {
          const Vec3& g = p.g.bvecs[v];
          const double q = d[0] * g[0] * g[0] + d[1] * g[1] * g[1] + d[2] * g[2] * g[2] +
                           2.0 * (d[3] * g[0] * g[1] + d[4] * g[0] * g[2] + d[5] * g[1] * g[2]);
          p.dwi.at(x, y, z, v) = t.s0 * std::exp(-spec.bval * q);
        }
      }

  if (spec.noise != NoiseKind::none && spec.sigma > 0.0) {
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, spec.sigma);
    const bool rician = spec.noise == NoiseKind::rician;
    for (Volume4D* vol : {&p.b0, &p.dwi})
      for (double& s : vol->data()) {
        const double re = s + normal(rng);
        if (rician) {
          const double im = normal(rng);
          s = std::sqrt(re * re + im * im);
        } else {
          s = re;
        }
      }
  }
  return p;
}

double mse_region(const Volume4D& est, const Volume4D& gt, const Volume4D& labels, int label) {
  if (est.dims() != gt.dims()) fail(ErrorKind::Shape, "estimate and ground truth differ in shape");
  if (labels.nx() != gt.nx() || labels.ny() != gt.ny() || labels.nz() != gt.nz())
    fail(ErrorKind::Shape, "label grid does not match the volumes");
  const std::size_t nvox = gt.voxels_per_volume();
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < nvox; ++i) {
    if (labels.data()[i] != label) continue;
    for (int v = 0; v < gt.nv(); ++v) {
      const double d = est.data()[i + v * nvox] - gt.data()[i + v * nvox];
      sum += d * d;
      ++count;
    }
  }
  if (count == 0) fail(ErrorKind::EmptyMask, "region " + std::to_string(label) + " is empty");
  return sum / static_cast<double>(count);
}

}  // namespace dsae
