#pragma once

#include <array>
#include <filesystem>

#include "dsae/gradients.hpp"
#include "dsae/volume.hpp"

namespace dsae {

/// Symmetric 3x3 tensor stored as (Dxx, Dyy, Dzz, Dxy, Dxz, Dyz).
using Tensor6 = std::array<double, 6>;

struct SymEigen {
  std::array<double, 3> values;   // descending
  std::array<Vec3, 3> vectors;    // vectors[i] pairs with values[i]
};

/// Closed-form (trigonometric) eigen-decomposition of a symmetric 3x3 matrix.
SymEigen eig_sym3(const Tensor6& t);

/// Per-voxel tensors (V = 6, component order as Tensor6) in mm^2/s and the
/// fitted non-weighted signal S0.
struct TensorVolume {
  Volume4D tensors;
  Volume4D s0;

  Tensor6 tensor(int x, int y, int z) const;
};

/// Ordinary log-linear least-squares tensor fit. `b0` holds one or more
/// unweighted volumes; `dwi` and `g` describe the weighted measurements.
/// Non-positive signals are floored to 1e-6 before the logarithm.
TensorVolume fit_dti(const Volume4D& dwi, const Volume4D& b0, const GradientTable& g,
                     const Volume4D* mask = nullptr);

double fractional_anisotropy(std::array<double, 3> eigenvalues);
double mean_diffusivity(std::array<double, 3> eigenvalues);

/// FA with negative eigenvalues clamped to zero; 0 where all eigenvalues vanish.
Volume4D fa_map(const TensorVolume& t);
/// MD = trace / 3 with negative eigenvalues clamped to zero.
Volume4D md_map(const TensorVolume& t);

}  // namespace dsae
