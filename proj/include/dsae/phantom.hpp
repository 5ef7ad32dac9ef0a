#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "dsae/dti.hpp"
#include "dsae/gradients.hpp"
#include "dsae/volume.hpp"

namespace dsae {

enum class NoiseKind { none, gaussian, rician };

NoiseKind parse_noise_kind(const std::string& s);
std::string to_string(NoiseKind k);

/// Tissue labels of the synthetic phantom.
enum Label : int { kBackground = 0, kCsf = 1, kCorticalGm = 2, kWhiteMatter = 3, kCorpusCallosum = 4 };

struct PhantomSpec {
  std::array<int, 3> dims{64, 64, 16};
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  double bval = 1000.0;
  int n_directions = 88;
  int n_b0 = 4;
  NoiseKind noise = NoiseKind::none;
  /// Noise standard deviation relative to the brightest S0 (1.0).
  double sigma = 0.02;
  std::uint64_t seed = 0;

  void validate() const;
};

/// A nested-ellipsoid head: CSF rim, cortical gray matter, white matter with a
/// smoothly rotating fiber axis, and a corpus-callosum band running left-right.
struct Phantom {
  Volume4D dwi;       // the b = bval shell
  Volume4D b0;
  GradientTable g;    // table of `dwi`
  Volume4D labels;
  TensorVolume truth;

  /// b0 volumes followed by the shell, with the matching table.
  Volume4D combined() const;
  GradientTable combined_table() const;
};

Phantom make_phantom(const PhantomSpec& spec);

/// Principal diffusivities used by the phantom, in mm^2/s.
inline constexpr double kCsfDiffusivity = 3.0e-3;
inline constexpr double kGrayDiffusivity = 0.8e-3;
inline constexpr std::array<double, 3> kWhiteEigenvalues{1.7e-3, 0.3e-3, 0.3e-3};

/// Mean squared difference over voxels of `est`/`gt` whose label equals
/// `label`, across all volumes.
double mse_region(const Volume4D& est, const Volume4D& gt, const Volume4D& labels, int label);

}  // namespace dsae
