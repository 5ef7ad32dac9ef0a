#include "dsae/dti.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "dsae/error.hpp"
#include "dsae/parallel.hpp"

namespace dsae {
namespace {

constexpr double kSignalFloor = 1e-6;

using Mat3 = Eigen::Matrix3d;

Mat3 to_matrix(const Tensor6& t) {
  Mat3 m;
  m << t[0], t[3], t[4],
       t[3], t[1], t[5],
       t[4], t[5], t[2];
  return m;
}

Vec3 to_vec(const Eigen::Vector3d& v) { return {v(0), v(1), v(2)}; }

// Unit null vector of (A - lambda I) from the best-conditioned row cross product.
Eigen::Vector3d null_vector(const Mat3& a, double lambda) {
  const Mat3 m = a - lambda * Mat3::Identity();
  const Eigen::Vector3d c[3] = {m.row(0).cross(m.row(1)), m.row(0).cross(m.row(2)),
                                m.row(1).cross(m.row(2))};
  int best = 0;
  for (int i = 1; i < 3; ++i)
    if (c[i].squaredNorm() > c[best].squaredNorm()) best = i;
  if (c[best].squaredNorm() <= 0.0) return Eigen::Vector3d::UnitX();
  return c[best].normalized();
}

Eigen::Vector3d any_orthogonal(const Eigen::Vector3d& v) {
  const Eigen::Vector3d trial =
      std::fabs(v(0)) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  return (trial - trial.dot(v) * v).normalized();
}

}  // namespace

SymEigen eig_sym3(const Tensor6& t) {
  const Mat3 a = to_matrix(t);
  const double p1 = t[3] * t[3] + t[4] * t[4] + t[5] * t[5];
  const double q = (t[0] + t[1] + t[2]) / 3.0;
  std::array<double, 3> lam;
  const double p2 = (t[0] - q) * (t[0] - q) + (t[1] - q) * (t[1] - q) + (t[2] - q) * (t[2] - q) +
                    2.0 * p1;
  if (p2 <= 0.0) {
    lam = {q, q, q};
  } else {
    const double p = std::sqrt(p2 / 6.0);
    const Mat3 b = (a - q * Mat3::Identity()) / p;
    const double r = std::clamp(b.determinant() / 2.0, -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;
    lam[0] = q + 2.0 * p * std::cos(phi);
    lam[2] = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
    lam[1] = 3.0 * q - lam[0] - lam[2];
  }

  SymEigen out;
  out.values = lam;
  const double spread = lam[0] - lam[2];
  if (!(spread > 1e-300 + 1e-14 * (std::fabs(lam[0]) + std::fabs(lam[2])))) {
    out.vectors = {Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};
    return out;
  }

  // Resolve the most isolated eigenvalue first, then diagonalize the 2x2
  // restriction to its orthogonal complement.
  const bool top_isolated = (lam[0] - lam[1]) >= (lam[1] - lam[2]);
  const int iso = top_isolated ? 0 : 2;
  const Eigen::Vector3d v = null_vector(a, lam[iso]);
  const Eigen::Vector3d u = any_orthogonal(v);
  const Eigen::Vector3d w = v.cross(u);
  const double m00 = u.dot(a * u), m11 = w.dot(a * w), m01 = u.dot(a * w);
  const double theta = 0.5 * std::atan2(2.0 * m01, m00 - m11);
  const Eigen::Vector3d e1 = std::cos(theta) * u + std::sin(theta) * w;
  const Eigen::Vector3d e2 = -std::sin(theta) * u + std::cos(theta) * w;
  const bool e1_larger = e1.dot(a * e1) >= e2.dot(a * e2);
  const Eigen::Vector3d hi = e1_larger ? e1 : e2;
  const Eigen::Vector3d lo = e1_larger ? e2 : e1;
  if (top_isolated) {
    out.vectors = {to_vec(v), to_vec(hi), to_vec(lo)};
  } else {
    out.vectors = {to_vec(hi), to_vec(lo), to_vec(v)};
  }
  return out;
}

Tensor6 TensorVolume::tensor(int x, int y, int z) const {
  Tensor6 t;
  for (int k = 0; k < 6; ++k) t[k] = tensors.at(x, y, z, k);
  return t;
}

TensorVolume fit_dti(const Volume4D& dwi, const Volume4D& b0, const GradientTable& g,
                     const Volume4D* mask) {
  if (static_cast<int>(g.size()) != dwi.nv())
    fail(ErrorKind::Shape, "gradient table length does not match volume count");
  if (b0.nx() != dwi.nx() || b0.ny() != dwi.ny() || b0.nz() != dwi.nz())
    fail(ErrorKind::Shape, "b0 grid does not match DWI");
  if (mask && (mask->nx() != dwi.nx() || mask->ny() != dwi.ny() || mask->nz() != dwi.nz()))
    fail(ErrorKind::Shape, "mask grid does not match DWI");

  const int n0 = b0.nv();
  const int nd = dwi.nv();
  const int rows = n0 + nd;
  if (rows < 7)
    fail(ErrorKind::Underdetermined,
         "tensor fit needs at least 7 measurements, got " + std::to_string(rows));

  Eigen::MatrixXd design(rows, 7);
  for (int i = 0; i < n0; ++i) design.row(i) << 1, 0, 0, 0, 0, 0, 0;
  for (int i = 0; i < nd; ++i) {
    const double b = g.bvals[i];
    const auto& v = g.bvecs[i];
    design.row(n0 + i) << 1, -b * v[0] * v[0], -b * v[1] * v[1], -b * v[2] * v[2],
        -2 * b * v[0] * v[1], -2 * b * v[0] * v[2], -2 * b * v[1] * v[2];
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s(i) > 1e-12 * s(0)) inv(i) = 1.0 / s(i);
  if ((inv.array() == 0.0).any())
    fail(ErrorKind::Underdetermined, "gradient directions do not determine the tensor");
  const Eigen::MatrixXd pinv = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();

  bool any = mask == nullptr;
  if (mask)
    for (double m : mask->data())
      if (m > 0.0) {
        any = true;
        break;
      }
  if (!any) fail(ErrorKind::EmptyMask, "tensor fit mask is empty");

  TensorVolume out;
  out.tensors = Volume4D({dwi.nx(), dwi.ny(), dwi.nz(), 6}, dwi.spacing(), Intent::scalar);
  out.tensors.set_affine(dwi.affine());
  out.s0 = Volume4D({dwi.nx(), dwi.ny(), dwi.nz(), 1}, dwi.spacing(), Intent::scalar);
  out.s0.set_affine(dwi.affine());

  parallel_for(0, dwi.nz(), [&](int z) {
    Eigen::VectorXd y(rows);
    for (int yy = 0; yy < dwi.ny(); ++yy)
      for (int x = 0; x < dwi.nx(); ++x) {
        if (mask && !(mask->at(x, yy, z) > 0.0)) continue;
        for (int i = 0; i < n0; ++i) y(i) = std::log(std::max(b0.at(x, yy, z, i), kSignalFloor));
        for (int i = 0; i < nd; ++i) y(n0 + i) = std::log(std::max(dwi.at(x, yy, z, i), kSignalFloor));
        const Eigen::VectorXd beta = pinv * y;
        out.s0.at(x, yy, z) = std::exp(beta(0));
        for (int k = 0; k < 6; ++k) out.tensors.at(x, yy, z, k) = beta(k + 1);
      }
  });
  return out;
}

double fractional_anisotropy(std::array<double, 3> l) {
  for (double& v : l) v = std::max(v, 0.0);
  const double norm2 = l[0] * l[0] + l[1] * l[1] + l[2] * l[2];
  if (norm2 <= 0.0) return 0.0;
  const double d = (l[0] - l[1]) * (l[0] - l[1]) + (l[1] - l[2]) * (l[1] - l[2]) +
                   (l[2] - l[0]) * (l[2] - l[0]);
  return std::min(1.0, std::sqrt(0.5) * std::sqrt(d) / std::sqrt(norm2));
}

double mean_diffusivity(std::array<double, 3> l) {
  for (double& v : l) v = std::max(v, 0.0);
  return (l[0] + l[1] + l[2]) / 3.0;
}

namespace {

template <typename F>
Volume4D scalar_map(const TensorVolume& t, F&& f) {
  const auto& tv = t.tensors;
  Volume4D out({tv.nx(), tv.ny(), tv.nz(), 1}, tv.spacing(), Intent::scalar);
  out.set_affine(tv.affine());
  parallel_for(0, tv.nz(), [&](int z) {
    for (int y = 0; y < tv.ny(); ++y)
      for (int x = 0; x < tv.nx(); ++x) out.at(x, y, z) = f(eig_sym3(t.tensor(x, y, z)).values);
  });
  return out;
}

}  // namespace

Volume4D fa_map(const TensorVolume& t) { return scalar_map(t, fractional_anisotropy); }
Volume4D md_map(const TensorVolume& t) { return scalar_map(t, mean_diffusivity); }

}  // namespace dsae
