#include <cmath>
#include <numbers>

#include "dsae/sh.hpp"
#include "test_util.hpp"

using namespace dsae;

namespace {

// Reference real SH built from the standard library's associated Legendre
// functions (which omit the Condon-Shortley phase, restored here).
double reference_sh(int l, int m, const Vec3& d) {
  const double theta = std::acos(std::clamp(d[2], -1.0, 1.0));
  const double phi = std::atan2(d[1], d[0]);
  const int am = std::abs(m);
  const double norm = std::sqrt((2.0 * l + 1.0) / (4.0 * std::numbers::pi) * std::tgamma(l - am + 1.0) /
                                std::tgamma(l + am + 1.0));
  const double p = (am % 2 ? -1.0 : 1.0) * std::assoc_legendre(l, am, std::cos(theta));
  if (m == 0) return norm * p;
  if (m < 0) return std::sqrt(2.0) * norm * p * std::cos(am * phi);
  return std::sqrt(2.0) * norm * p * std::sin(am * phi);
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Vec3 v{n(rng), n(rng), n(rng)};
  const double len = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  return {v[0] / len, v[1] / len, v[2] / len};
}

GradientTable shell(int n, double b = 1000.0) {
  GradientTable g;
  g.bvecs = spherical_fibonacci(n);
  g.bvals.assign(n, b);
  return g;
}

// Volume whose voxels hold B * c for random band-limited coefficients.
Volume4D band_limited(const GradientTable& g, int lmax, int nx, int ny, int nz, std::uint64_t seed,
                      std::vector<Eigen::VectorXd>* coeffs = nullptr) {
  const auto b = sh_basis_matrix(g.bvecs, lmax);
  Volume4D v({nx, ny, nz, static_cast<int>(g.size())}, {1, 1, 1});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int z = 0; z < nz; ++z)
    for (int y = 0; y < ny; ++y)
      for (int x = 0; x < nx; ++x) {
        Eigen::VectorXd c(b.cols());
        for (Eigen::Index j = 0; j < c.size(); ++j) c(j) = u(rng);
        c(0) += 5.0;
        const Eigen::VectorXd s = b.matrix * c;
        for (int d = 0; d < s.size(); ++d) v.at(x, y, z, d) = s(d);
        if (coeffs) coeffs->push_back(c);
      }
  return v;
}

}  // namespace

TEST_CASE("basis matches the reference construction") {
  std::mt19937_64 rng(5);
  std::vector<Vec3> dirs;
  for (int i = 0; i < 40; ++i) dirs.push_back(random_unit(rng));
  dirs.push_back({0.0, 0.0, 1.0});
  dirs.push_back({0.0, 0.0, -1.0});
  const auto b = sh_basis_matrix(dirs, 8);
  REQUIRE(b.cols() == 45);
  for (std::size_t i = 0; i < dirs.size(); ++i)
    for (int l = 0; l <= 8; l += 2)
      for (int m = -l; m <= l; ++m) {
        const double want = reference_sh(l, m, dirs[i]);
        CHECK(b.matrix(static_cast<Eigen::Index>(i), sh_index(l, m)) == doctest::Approx(want).epsilon(1e-10));
        CHECK(b.order_index[sh_index(l, m)] == std::pair{l, m});
      }
}

TEST_CASE("basis shape and special values") {
  const auto dirs = spherical_fibonacci(88);
  const auto b = sh_basis_matrix(dirs, 4);
  CHECK(b.rows() == 88);
  CHECK(b.cols() == 15);
  CHECK(sh_coeff_count(4) == 15);
  for (Eigen::Index i = 0; i < b.rows(); ++i) CHECK(b.matrix(i, 0) == doctest::Approx(0.2820948).epsilon(1e-7));

  const std::vector<Vec3> pole{{0.0, 0.0, 1.0}};
  const auto bp = sh_basis_matrix(pole, 8);
  for (int l = 0; l <= 8; l += 2)
    for (int m = -l; m <= l; ++m)
      if (m != 0) CHECK(std::abs(bp.matrix(0, sh_index(l, m))) < 1e-14);

  CHECK_ERROR_KIND(sh_basis_matrix(dirs, 3), ErrorKind::InvalidOrder);
  CHECK_ERROR_KIND(sh_basis_matrix(dirs, 10), ErrorKind::InvalidOrder);
  const std::vector<Vec3> bad{{1.0, 0.0, 0.1}};
  CHECK_ERROR_KIND(sh_basis_matrix(bad, 4), ErrorKind::InvalidDirection);
}

TEST_CASE("Gram matrix is near identity under dense quadrature") {
  const auto dirs = spherical_fibonacci(400);
  const auto b = sh_basis_matrix(dirs, 8);
  const Eigen::MatrixXd gram = (4.0 * std::numbers::pi / 400.0) * b.matrix.transpose() * b.matrix;
  const Eigen::MatrixXd err = gram - Eigen::MatrixXd::Identity(b.cols(), b.cols());
  CHECK(err.cwiseAbs().maxCoeff() < 5e-2);
}

TEST_CASE("fit of a constant signal") {
  const auto g = shell(88);
  Volume4D v({1, 1, 1, 88}, {1, 1, 1}, Intent::dwi, 3.0);
  const auto sh = fit_sh(v, g, 4);
  CHECK(sh.coeffs.nv() == 15);
  CHECK(sh.coeffs.intent() == Intent::sh_coeffs);
  CHECK(sh.coeffs.at(0, 0, 0, 0) == doctest::Approx(3.0 * 2.0 * std::sqrt(std::numbers::pi)).epsilon(1e-12));
  for (int j = 1; j < 15; ++j) CHECK(std::abs(sh.coeffs.at(0, 0, 0, j)) < 1e-8);
  CHECK_FALSE(sh.ill_conditioned);
}

TEST_CASE("fit recovers band-limited coefficients and projection round-trips") {
  const auto g = shell(88);
  std::vector<Eigen::VectorXd> truth;
  const Volume4D v = band_limited(g, 4, 3, 3, 2, 17, &truth);
  const auto sh = fit_sh(v, g, 4);
  std::size_t k = 0;
  for (int z = 0; z < 2; ++z)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x, ++k)
        for (int j = 0; j < 15; ++j) CHECK(sh.coeffs.at(x, y, z, j) == doctest::Approx(truth[k](j)).epsilon(1e-8));

  const Volume4D back = project_sh(sh, g.bvecs);
  for (std::size_t i = 0; i < v.data().size(); ++i) CHECK(std::abs(back.data()[i] - v.data()[i]) < 1e-8);
  CHECK(sh_roundtrip_error(v, g, 4) <= 1e-12);
}

TEST_CASE("projection of zero and constant coefficients") {
  const auto g = shell(30);
  ShCoeffVolume sh;
  sh.lmax = 4;
  sh.coeffs = Volume4D({2, 1, 1, 15}, {1, 1, 1}, Intent::sh_coeffs);
  const Volume4D zero = project_sh(sh, g.bvecs);
  for (double x : zero.data()) CHECK(x == 0.0);
  sh.coeffs.at(0, 0, 0, 0) = 1.0;
  sh.coeffs.at(1, 0, 0, 0) = 1.0;
  const Volume4D constant = project_sh(sh, g.bvecs);
  for (double x : constant.data()) CHECK(x == doctest::Approx(0.2820948).epsilon(1e-7));
}

TEST_CASE("exactly determined fit is flagged") {
  const auto g = shell(15, 700.0);
  const Volume4D v = band_limited(g, 4, 2, 2, 1, 3);
  const auto sh = fit_sh(v, g, 4);
  CHECK(sh.ill_conditioned);
  CHECK_FALSE(fit_sh(v, g, 4, 0.006).ill_conditioned);
  CHECK_FALSE(fit_sh(band_limited(shell(88), 4, 1, 1, 1, 3), shell(88), 4).ill_conditioned);
  CHECK(fit_sh(band_limited(shell(10), 4, 1, 1, 1, 3), shell(10), 4).ill_conditioned);
}

TEST_CASE("fit is scale-equivariant and fit-project is idempotent") {
  const auto g = shell(60);
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  Volume4D v({2, 2, 1, 60}, {1, 1, 1});
  for (double& x : v.data()) x = 10.0 + n(rng);
  for (double lambda : {0.0, 0.006}) {
    const auto a = fit_sh(v, g, 6, lambda);
    Volume4D scaled = v;
    for (double& x : scaled.data()) x *= -2.5;
    const auto b = fit_sh(scaled, g, 6, lambda);
    for (std::size_t i = 0; i < a.coeffs.data().size(); ++i)
      CHECK(b.coeffs.data()[i] == doctest::Approx(-2.5 * a.coeffs.data()[i]).epsilon(1e-10));

    const Volume4D once = project_sh(a, g.bvecs);
    const Volume4D twice = project_sh(fit_sh(once, g, 6, 0.0), g.bvecs);
    if (lambda == 0.0)
      for (std::size_t i = 0; i < once.data().size(); ++i) CHECK(std::abs(once.data()[i] - twice.data()[i]) < 1e-10);
  }
}

TEST_CASE("projection is antipodally symmetric") {
  const auto g = shell(40);
  const auto sh = fit_sh(band_limited(g, 6, 2, 1, 1, 21), g, 6);
  std::mt19937_64 rng(2);
  std::vector<Vec3> dirs, neg;
  for (int i = 0; i < 25; ++i) {
    dirs.push_back(random_unit(rng));
    neg.push_back({-dirs.back()[0], -dirs.back()[1], -dirs.back()[2]});
  }
  const Volume4D a = project_sh(sh, dirs), b = project_sh(sh, neg);
  for (std::size_t i = 0; i < a.data().size(); ++i) CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-12));
}

TEST_CASE("white-noise round-trip error equals the projection residual") {
  const auto g = shell(88);
  const double sigma = 0.1;
  std::mt19937_64 rng(123);
  std::normal_distribution<double> n(0.0, sigma);
  Volume4D v({20, 20, 5, 88}, {1, 1, 1});
  for (double& x : v.data()) x = 0.5 + n(rng);
  RoundtripOptions opts;
  opts.intensity_range = std::pair{0.0, 1.0};
  const double err = sh_roundtrip_error(v, g, 4, nullptr, opts);
  const double expected = (88.0 - 15.0) / 88.0 * sigma * sigma;
  CHECK(err == doctest::Approx(expected).epsilon(0.03));
}

TEST_CASE("mask handling") {
  const auto g = shell(30);
  Volume4D v({2, 1, 1, 30}, {1, 1, 1}, Intent::dwi, 4.0);
  Volume4D mask({2, 1, 1, 1}, {1, 1, 1}, Intent::labels);
  mask.at(1, 0, 0) = 1;
  const auto sh = fit_sh(v, g, 2, 0.0, &mask);
  CHECK(sh.coeffs.at(0, 0, 0, 0) == 0.0);
  CHECK(sh.coeffs.at(1, 0, 0, 0) != 0.0);
  Volume4D empty({2, 1, 1, 1}, {1, 1, 1}, Intent::labels);
  CHECK_ERROR_KIND(sh_roundtrip_error(v, g, 2, &empty), ErrorKind::EmptyMask);
}

TEST_CASE("coefficient files carry a sidecar") {
  const auto dir = test::temp_dir("sh_io");
  const auto g = shell(20);
  auto sh = fit_sh(band_limited(g, 4, 2, 2, 2, 4), g, 4, 0.01);
  write_sh(sh, dir / "c.nii");
  CHECK(std::filesystem::exists(dir / "c.json"));
  const auto r = read_sh(dir / "c.nii");
  CHECK(r.lmax == 4);
  CHECK(r.lambda_reg == 0.01);
  CHECK(r.coeffs.nv() == 15);
  CHECK(r.coeffs.intent() == Intent::sh_coeffs);
  CHECK(r.coeffs.data() == sh.coeffs.data());
}
