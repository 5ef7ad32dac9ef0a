#pragma once

#include <array>
#include <filesystem>
#include <utility>
#include <vector>

#include "dsae/volume.hpp"

namespace dsae {

using Vec3 = std::array<double, 3>;

inline constexpr double kB0Threshold = 50.0;
inline constexpr double kShellTolerance = 50.0;

/// Per-volume b-values (s/mm^2) and gradient directions.
struct GradientTable {
  std::vector<double> bvals;
  std::vector<Vec3> bvecs;

  std::size_t size() const { return bvals.size(); }
  /// Throws when the direction or b-value invariants are violated.
  void validate() const;
  /// Indices of volumes with |b - target| <= tol, in order.
  std::vector<int> shell_indices(double b_target, double tol = kShellTolerance) const;
  GradientTable subset(const std::vector<int>& indices) const;
};

/// Parses FSL-style bval (one row of V values) and bvec (3 rows of V values)
/// files. Nonzero directions are rescaled to unit length.
GradientTable read_gradient_table(const std::filesystem::path& bval_path,
                                  const std::filesystem::path& bvec_path);
GradientTable parse_gradient_table(const std::string& bval_text, const std::string& bvec_text);
void write_gradient_table(const GradientTable& g, const std::filesystem::path& bval_path,
                          const std::filesystem::path& bvec_path);

/// Keeps the volumes whose b-value lies within tol of b_target.
std::pair<Volume4D, GradientTable> select_shell(const Volume4D& v, const GradientTable& g,
                                                double b_target, double tol = kShellTolerance);

}  // namespace dsae

namespace dsae {

/// Deterministic near-uniform unit vectors on the sphere (spherical
/// Fibonacci lattice).
std::vector<Vec3> spherical_fibonacci(int n);

}  // namespace dsae
