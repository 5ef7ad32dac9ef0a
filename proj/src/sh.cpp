#include "dsae/sh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <string>

#include "json.hpp"

#include "dsae/error.hpp"
#include "dsae/nifti.hpp"
#include "dsae/parallel.hpp"

namespace dsae {
namespace {

constexpr double kPi = std::numbers::pi;

// Associated Legendre P_l^m(x), m >= 0, including the Condon-Shortley phase.
double legendre(int l, int m, double x) {
  double pmm = 1.0;
  if (m > 0) {
    const double s = std::sqrt(std::max(0.0, (1.0 - x) * (1.0 + x)));
    double fact = 1.0;
    for (int i = 1; i <= m; ++i) {
      pmm *= -fact * s;
      fact += 2.0;
    }
  }
  if (l == m) return pmm;
  double pmm1 = x * (2.0 * m + 1.0) * pmm;
  if (l == m + 1) return pmm1;
  double pll = 0.0;
  for (int ll = m + 2; ll <= l; ++ll) {
    pll = ((2.0 * ll - 1.0) * x * pmm1 - (ll + m - 1.0) * pmm) / (ll - m);
    pmm = pmm1;
    pmm1 = pll;
  }
  return pll;
}

double sh_norm(int l, int m) {
  double ratio = 1.0;  // (l-m)! / (l+m)!
  for (int k = l - m + 1; k <= l + m; ++k) ratio /= k;
  return std::sqrt((2.0 * l + 1.0) / (4.0 * kPi) * ratio);
}

void check_direction(const Vec3& d) {
  const double n = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
  if (std::fabs(n - 1.0) > 1e-6) fail(ErrorKind::InvalidDirection, "direction is not unit length");
}

void check_single_shell(const GradientTable& g) {
  if (g.size() == 0) fail(ErrorKind::Shape, "empty gradient table");
  double lo = g.bvals.front(), hi = g.bvals.front();
  for (double b : g.bvals) {
    if (b <= kB0Threshold)
      fail(ErrorKind::InvalidArgument, "SH fitting expects a single nonzero shell (found b0 volumes)");
    lo = std::min(lo, b);
    hi = std::max(hi, b);
  }
  if (hi - lo > 2.0 * kShellTolerance)
    fail(ErrorKind::InvalidArgument, "SH fitting expects a single shell; select one first");
}

bool in_mask(const Volume4D* mask, int x, int y, int z) {
  return mask == nullptr || mask->at(x, y, z, 0) > 0.0;
}

}  // namespace

double real_sh(int l, int m, const Vec3& d) {
  const double theta = std::acos(std::clamp(d[2], -1.0, 1.0));
  const double phi = std::atan2(d[1], d[0]);
  const int am = std::abs(m);
  const double base = sh_norm(l, am) * legendre(l, am, std::cos(theta));
  if (m == 0) return base;
  if (m < 0) return std::numbers::sqrt2 * base * std::cos(am * phi);
  return std::numbers::sqrt2 * base * std::sin(am * phi);
}

ShBasisMatrix sh_basis_matrix(std::span<const Vec3> directions, int lmax) {
  if (lmax < 0 || lmax > 8 || lmax % 2 != 0)
    fail(ErrorKind::InvalidOrder, "lmax must be one of 0, 2, 4, 6, 8");
  ShBasisMatrix b;
  b.lmax = lmax;
  for (int l = 0; l <= lmax; l += 2)
    for (int m = -l; m <= l; ++m) b.order_index.emplace_back(l, m);
  b.matrix.resize(static_cast<Eigen::Index>(directions.size()), sh_coeff_count(lmax));
  for (std::size_t i = 0; i < directions.size(); ++i) {
    check_direction(directions[i]);
    for (std::size_t j = 0; j < b.order_index.size(); ++j) {
      const auto [l, m] = b.order_index[j];
      b.matrix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = real_sh(l, m, directions[i]);
    }
  }
  return b;
}

ShFitter::ShFitter(std::span<const Vec3> directions, int lmax, double lambda_reg)
    : basis_(sh_basis_matrix(directions, lmax)), lambda_(lambda_reg) {
  if (lambda_reg < 0.0) fail(ErrorKind::InvalidArgument, "lambda_reg must be non-negative");
  const Eigen::Index d = basis_.rows();
  const Eigen::Index r = basis_.cols();

  // Stack [B; sqrt(lambda) * L] so the regularized normal equations become a
  // plain least-squares problem solved by one truncated pseudo-inverse.
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d + r, r);
  a.topRows(d) = basis_.matrix;
  for (Eigen::Index j = 0; j < r; ++j) {
    const int l = basis_.order_index[static_cast<std::size_t>(j)].first;
    a(d + j, j) = std::sqrt(lambda_reg) * l * (l + 1);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double cutoff = 1e-10 * (s.size() ? s(0) : 0.0);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  bool truncated = false;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cutoff)
      inv(i) = 1.0 / s(i);
    else
      truncated = true;
  }
  const Eigen::MatrixXd pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  fit_ = pinv.leftCols(d);
  ill_conditioned_ = truncated || (lambda_reg == 0.0 && d <= r);
}

ShCoeffVolume fit_sh(const Volume4D& dwi, const GradientTable& g, int lmax, double lambda_reg,
                     const Volume4D* mask) {
  if (static_cast<int>(g.size()) != dwi.nv())
    fail(ErrorKind::Shape, "gradient table length does not match volume count");
  check_single_shell(g);
  if (mask && (mask->nx() != dwi.nx() || mask->ny() != dwi.ny() || mask->nz() != dwi.nz()))
    fail(ErrorKind::Shape, "mask grid does not match DWI");

  const ShFitter fitter(g.bvecs, lmax, lambda_reg);
  const int r = sh_coeff_count(lmax);
  const int nd = dwi.nv();

  ShCoeffVolume out;
  out.lmax = lmax;
  out.lambda_reg = lambda_reg;
  out.ill_conditioned = fitter.ill_conditioned();
  out.coeffs = Volume4D({dwi.nx(), dwi.ny(), dwi.nz(), r}, dwi.spacing(), Intent::sh_coeffs);
  out.coeffs.set_affine(dwi.affine());

  parallel_for(0, dwi.nz(), [&](int z) {
    Eigen::VectorXd s(nd);
    for (int y = 0; y < dwi.ny(); ++y)
      for (int x = 0; x < dwi.nx(); ++x) {
        if (!in_mask(mask, x, y, z)) continue;
        for (int v = 0; v < nd; ++v) s(v) = dwi.at(x, y, z, v);
        const Eigen::VectorXd c = fitter.fit(s);
        for (int j = 0; j < r; ++j) out.coeffs.at(x, y, z, j) = c(j);
      }
  });
  return out;
}

Volume4D project_sh(const ShCoeffVolume& sh, std::span<const Vec3> directions) {
  const ShBasisMatrix b = sh_basis_matrix(directions, sh.lmax);
  const auto& c = sh.coeffs;
  if (c.nv() != b.cols()) fail(ErrorKind::Shape, "coefficient count does not match lmax");
  const int nd = static_cast<int>(directions.size());
  Volume4D out({c.nx(), c.ny(), c.nz(), nd}, c.spacing(), Intent::dwi);
  out.set_affine(c.affine());
  parallel_for(0, c.nz(), [&](int z) {
    Eigen::VectorXd coef(b.cols());
    for (int y = 0; y < c.ny(); ++y)
      for (int x = 0; x < c.nx(); ++x) {
        for (Eigen::Index j = 0; j < b.cols(); ++j) coef(j) = c.at(x, y, z, static_cast<int>(j));
        const Eigen::VectorXd s = b.matrix * coef;
        for (int v = 0; v < nd; ++v) out.at(x, y, z, v) = s(v);
      }
  });
  return out;
}

SliceImage project_sh_slice(const ShBasisMatrix& basis, const SliceImage& coeffs) {
  if (coeffs.channels != basis.cols()) fail(ErrorKind::Shape, "coefficient count does not match lmax");
  const auto nd = static_cast<int>(basis.rows());
  SliceImage out(coeffs.width, coeffs.height, nd);
  Eigen::VectorXd c(basis.cols());
  for (int y = 0; y < coeffs.height; ++y)
    for (int x = 0; x < coeffs.width; ++x) {
      for (int j = 0; j < coeffs.channels; ++j) c(j) = coeffs.at(x, y, j);
      const Eigen::VectorXd s = basis.matrix * c;
      for (int d = 0; d < nd; ++d) out.at(x, y, d) = s(d);
    }
  return out;
}

double sh_roundtrip_error(const Volume4D& dwi, const GradientTable& g, int lmax, const Volume4D* mask,
                          const RoundtripOptions& opts) {
  const auto sh = fit_sh(dwi, g, lmax, opts.lambda_reg, nullptr);
  const Volume4D back = project_sh(sh, g.bvecs);

  double lo = 0.0, hi = 1.0;
  if (opts.intensity_range) {
    std::tie(lo, hi) = *opts.intensity_range;
  } else {
    const auto [mn, mx] = std::minmax_element(dwi.data().begin(), dwi.data().end());
    lo = *mn;
    hi = *mx;
  }
  const double scale = hi > lo ? 1.0 / (hi - lo) : 0.0;

  std::vector<int> zs = opts.slices;
  if (zs.empty())
    for (int z = 0; z < dwi.nz(); ++z) zs.push_back(z);

  double sum = 0.0;
  std::size_t count = 0;
  for (int z : zs)
    for (int y = 0; y < dwi.ny(); ++y)
      for (int x = 0; x < dwi.nx(); ++x) {
        if (!in_mask(mask, x, y, z)) continue;
        for (int v = 0; v < dwi.nv(); ++v) {
          const double d = (back.at(x, y, z, v) - dwi.at(x, y, z, v)) * scale;
          sum += d * d;
        }
        count += static_cast<std::size_t>(dwi.nv());
      }
  if (count == 0) fail(ErrorKind::EmptyMask, "no voxels in mask");
  return sum / static_cast<double>(count);
}

void write_sh(const ShCoeffVolume& sh, const std::filesystem::path& nii_path) {
  write_nifti(sh.coeffs, nii_path);
  nlohmann::json meta = {{"lmax", sh.lmax},
                         {"basis", "modified_real_symmetric"},
                         {"lambda_reg", sh.lambda_reg},
                         {"ill_conditioned", sh.ill_conditioned}};
  auto json_path = nii_path;
  json_path.replace_extension(".json");
  std::ofstream out(json_path);
  if (!out) fail(ErrorKind::Io, "cannot write " + json_path.string());
  out << meta.dump(2) << '\n';
}

ShCoeffVolume read_sh(const std::filesystem::path& nii_path) {
  ShCoeffVolume sh;
  sh.coeffs = read_nifti(nii_path);
  sh.coeffs.set_intent(Intent::sh_coeffs);
  auto json_path = nii_path;
  json_path.replace_extension(".json");
  std::ifstream in(json_path);
  if (in) {
    nlohmann::json meta;
    try {
      in >> meta;
      sh.lmax = meta.at("lmax").get<int>();
      sh.lambda_reg = meta.value("lambda_reg", 0.0);
      sh.ill_conditioned = meta.value("ill_conditioned", false);
      if (meta.value("basis", std::string{}) != "modified_real_symmetric")
        fail(ErrorKind::UnsupportedFormat, "unknown SH basis in " + json_path.string());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Parse, std::string("bad SH sidecar: ") + e.what());
    }
  } else {
    // No sidecar: infer lmax from the channel count.
    sh.lmax = -1;
    for (int l = 0; l <= 8; l += 2)
      if (sh_coeff_count(l) == sh.coeffs.nv()) sh.lmax = l;
    if (sh.lmax < 0) fail(ErrorKind::Shape, "channel count is not a valid SH coefficient count");
  }
  if (sh_coeff_count(sh.lmax) != sh.coeffs.nv())
    fail(ErrorKind::Shape, "SH sidecar lmax does not match channel count");
  return sh;
}

}  // namespace dsae
