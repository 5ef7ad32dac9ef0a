#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dsae/gradients.hpp"
#include "dsae/volume.hpp"

namespace dsae {

/// Number of even-order real SH coefficients up to lmax.
constexpr int sh_coeff_count(int lmax) { return (lmax + 1) * (lmax + 2) / 2; }

/// Index of (l, m) in the fixed ordering: l ascending (even only), m from -l to l.
constexpr int sh_index(int l, int m) { return l * (l + 1) / 2 + m; }

/// Real symmetric SH basis sampled on a direction set (rows = directions).
///
/// Column (l, m) holds sqrt(2) Re(Y_l^|m|) for m < 0, Y_l^0 for m = 0 and
/// sqrt(2) Im(Y_l^m) for m > 0, where Y_l^m carries the Condon-Shortley
/// phase, theta is measured from +z and phi from +x.
struct ShBasisMatrix {
  Eigen::MatrixXd matrix;
  int lmax = 0;
  std::vector<std::pair<int, int>> order_index;

  Eigen::Index rows() const { return matrix.rows(); }
  Eigen::Index cols() const { return matrix.cols(); }
};

ShBasisMatrix sh_basis_matrix(std::span<const Vec3> directions, int lmax);

/// Value of a single real SH basis function at a unit direction.
double real_sh(int l, int m, const Vec3& direction);

/// Linear operator mapping D signal samples to R coefficients, built once per
/// (directions, lmax, lambda) and shared by all voxels.
class ShFitter {
 public:
  ShFitter(std::span<const Vec3> directions, int lmax, double lambda_reg = 0.0);

  int lmax() const { return basis_.lmax; }
  double lambda_reg() const { return lambda_; }
  bool ill_conditioned() const { return ill_conditioned_; }
  const ShBasisMatrix& basis() const { return basis_; }
  const Eigen::MatrixXd& fit_matrix() const { return fit_; }

  Eigen::VectorXd fit(const Eigen::VectorXd& signal) const { return fit_ * signal; }

 private:
  ShBasisMatrix basis_;
  double lambda_ = 0.0;
  bool ill_conditioned_ = false;
  Eigen::MatrixXd fit_;
};

struct ShCoeffVolume {
  Volume4D coeffs;  // V = R, intent sh_coeffs
  int lmax = 0;
  double lambda_reg = 0.0;
  /// Set when the fit was exactly or under-determined without regularization.
  bool ill_conditioned = false;
};

/// Least-squares SH fit of a single-shell DWI, optionally with Laplace-Beltrami
/// regularization weighted by lambda_reg. Voxels outside a nonzero mask get
/// zero coefficients.
ShCoeffVolume fit_sh(const Volume4D& dwi, const GradientTable& g, int lmax,
                     double lambda_reg = 0.0, const Volume4D* mask = nullptr);

/// Evaluates the SH expansion on the given directions.
Volume4D project_sh(const ShCoeffVolume& sh, std::span<const Vec3> directions);
/// Same for one slice of coefficients (channels = basis columns).
SliceImage project_sh_slice(const ShBasisMatrix& basis, const SliceImage& coeffs);

struct RoundtripOptions {
  double lambda_reg = 0.0;
  /// Normalization range; defaults to min/max of the input DWI.
  std::optional<std::pair<double, double>> intensity_range;
  /// Restrict the error to these z slices (all when empty).
  std::vector<int> slices;
};

/// MSE between the DWI and its SH fit projected back onto the acquisition
/// directions, over mask voxels, on [0, 1]-normalized intensities.
double sh_roundtrip_error(const Volume4D& dwi, const GradientTable& g, int lmax,
                          const Volume4D* mask = nullptr, const RoundtripOptions& opts = {});

/// Writes coefficients as NIfTI plus a JSON sidecar next to it (path with
/// extension replaced by .json).
void write_sh(const ShCoeffVolume& sh, const std::filesystem::path& nii_path);
ShCoeffVolume read_sh(const std::filesystem::path& nii_path);

}  // namespace dsae
