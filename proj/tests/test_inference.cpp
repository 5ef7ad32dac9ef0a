#include <algorithm>

#include "dsae/inference.hpp"
#include "dsae/nn/batch.hpp"
#include "dsae/nn/train.hpp"
#include "dsae/sh.hpp"
#include "test_util.hpp"

using namespace dsae;
using namespace dsae::nn;

namespace {

ModelConfig tiny(int channels, int size = 16) {
  ModelConfig c;
  c.input_channels = channels;
  c.input_size = size;
  c.latent_maps = 4;
  c.width_divisor = 8;
  c.seed = 21;
  return c;
}

LatentCode filled(float v, int c = 4, int s = 2) { return LatentCode(1, c, s, s, v); }

SliceImage random_slice(int w, int h, int c, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  SliceImage s(w, h, c);
  for (double& x : s.data) x = u(rng);
  return s;
}

Volume4D random_volume(int nx, int ny, int nz, int nv, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 100.0);
  Volume4D v({nx, ny, nz, nv}, {1, 1, 1});
  for (double& x : v.data()) x = u(rng);
  return v;
}

}  // namespace

TEST_CASE("gap weights") {
  const GapSpec one{3, 1};
  CHECK(one.alpha(0) == 0.5);
  const GapSpec two{3, 2};
  CHECK(two.alpha(0) == 2.0 / 3.0);
  CHECK(two.alpha(1) == 1.0 / 3.0);
  CHECK(two.above() == 2);
  CHECK(two.below() == 5);
}

TEST_CASE("latent blending examples") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(-3.0f, 3.0f);
  LatentCode a(1, 4, 2, 2), b(1, 4, 2, 2);
  for (float& x : a.data) x = u(rng);
  for (float& x : b.data) x = u(rng);
  for (double alpha : {0.1, 0.5, 2.0 / 3.0}) CHECK(blend_latents(a, a, alpha).data == a.data);
  const auto mean = blend_latents(a, b, 0.5);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(mean.data[i] == doctest::Approx(0.5 * (a.data[i] + b.data[i])));
  for (float v : blend_latents(filled(1.0f), filled(0.0f), 2.0 / 3.0).data) CHECK(v == static_cast<float>(2.0 / 3.0));
  CHECK_ERROR_KIND(blend_latents(filled(1.0f, 4), filled(1.0f, 3), 0.5), ErrorKind::Shape);

  // Affine inputs commute with blending.
  const double scale = 1.7, shift = -0.4;
  LatentCode as = a, bs = b;
  for (float& x : as.data) x = static_cast<float>(scale * x + shift);
  for (float& x : bs.data) x = static_cast<float>(scale * x + shift);
  const auto lhs = blend_latents(as, bs, 1.0 / 3.0);
  const auto rhs = blend_latents(a, b, 1.0 / 3.0);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(lhs.data[i] == doctest::Approx(scale * rhs.data[i] + shift).epsilon(1e-5));
}

TEST_CASE("histogram matching examples") {
  const SliceImage src = random_slice(9, 7, 2, 4);
  CHECK(histogram_match(src, src).data == src.data);

  SliceImage ref(5, 5, 2, 3.25);
  for (double v : histogram_match(src, ref).data) CHECK(v == 3.25);

  SliceImage affine = src;
  for (double& x : affine.data) x = 2.0 * x + 1.0;
  const auto out = histogram_match(src, affine);
  for (std::size_t i = 0; i < src.data.size(); ++i) CHECK(std::abs(out.data[i] - (2.0 * src.data[i] + 1.0)) < 1e-8);

  SliceImage tied(4, 1, 1);
  tied.data = {1, 1, 2, 2};
  CHECK(histogram_match(tied, tied).data == tied.data);

  CHECK_ERROR_KIND(histogram_match(src, SliceImage(3, 3, 1)), ErrorKind::Shape);
}

TEST_CASE("histogram matching is monotone and lands in the reference range") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const SliceImage src = random_slice(8, 8, 3, seed, -5.0, 5.0);
    const SliceImage ref = random_slice(6, 5, 3, seed + 100, 10.0, 20.0);
    const SliceImage out = histogram_match(src, ref);
    for (int c = 0; c < 3; ++c) {
      const auto rp = ref.plane();
      const double lo = *std::min_element(ref.data.begin() + c * rp, ref.data.begin() + (c + 1) * rp);
      const double hi = *std::max_element(ref.data.begin() + c * rp, ref.data.begin() + (c + 1) * rp);
      for (int i = 0; i < 64; ++i) {
        const double v = out.data[c * 64 + i];
        CHECK((v >= lo && v <= hi));
        for (int j = 0; j < 64; ++j)
          if (src.data[c * 64 + i] < src.data[c * 64 + j]) CHECK(v <= out.data[c * 64 + j]);
      }
    }
  }
}

TEST_CASE("masked histogram matching leaves the background to the reference") {
  const SliceImage src = random_slice(4, 4, 1, 8);
  SliceImage ref = random_slice(4, 4, 1, 9, 5.0, 6.0);
  SliceImage mask(4, 4, 1);
  for (int i = 0; i < 8; ++i) mask.data[i] = 1.0;
  const auto out = histogram_match(src, ref, &mask);
  for (int i = 8; i < 16; ++i) CHECK(out.data[i] == ref.data[i]);
  std::vector<double> in_ref(ref.data.begin(), ref.data.begin() + 8), in_out(out.data.begin(), out.data.begin() + 8);
  std::sort(in_ref.begin(), in_ref.end());
  std::sort(in_out.begin(), in_out.end());
  for (int i = 0; i < 8; ++i) CHECK(in_out[i] == doctest::Approx(in_ref[i]).epsilon(1e-12));
}

TEST_CASE("identical neighbors reduce to the matched reconstruction") {
  Autoencoder<float> model(tiny(1));
  Volume4D v({16, 16, 3, 1}, {1, 1, 1});
  const SliceImage x = random_slice(16, 16, 1, 30, 10.0, 50.0);
  v.set_slice(0, x);
  v.set_slice(2, x);
  const auto out = infer_gap_signal(model, v, {1, 1});
  REQUIRE(out.size() == 1);
  const auto recon = model.forward(to_tensor<float>(normalize_slice(x)), Mode::eval);
  const auto want = histogram_match(from_tensor(recon), x);
  for (std::size_t i = 0; i < want.data.size(); ++i) CHECK(out[0].data[i] == doctest::Approx(want.data[i]).epsilon(1e-12));
}

TEST_CASE("zero neighbors give zero slices") {
  Autoencoder<float> model(tiny(2));
  Volume4D v({16, 16, 4, 2}, {1, 1, 1});
  v.at(3, 3, 1, 0) = 7.0;
  for (const auto& s : infer_gap_signal(model, v, {1, 2}))
    for (double x : s.data) CHECK(x == 0.0);
}

TEST_CASE("signal inference shapes, ranges and errors") {
  Autoencoder<float> one(tiny(1, 16));
  const Volume4D v = random_volume(12, 20, 6, 3, 5);
  const auto out = infer_gap_signal(one, v, {2, 2});
  REQUIRE(out.size() == 2);
  for (int k = 0; k < 2; ++k) {
    CHECK(out[k].width == 12);
    CHECK(out[k].height == 20);
    CHECK(out[k].channels == 3);
    const SliceImage ref = weighted_average(v.slice(1), v.slice(4), GapSpec{2, 2}.alpha(k));
    for (int c = 0; c < 3; ++c) {
      const auto p = ref.plane();
      const double lo = *std::min_element(ref.data.begin() + c * p, ref.data.begin() + (c + 1) * p);
      const double hi = *std::max_element(ref.data.begin() + c * p, ref.data.begin() + (c + 1) * p);
      for (std::size_t i = 0; i < p; ++i) CHECK((out[k].data[c * p + i] >= lo && out[k].data[c * p + i] <= hi));
    }
  }
  Autoencoder<float> two(tiny(2));
  CHECK_ERROR_KIND(infer_gap_signal(two, v, {2, 1}), ErrorKind::Shape);
  CHECK_ERROR_KIND(infer_gap_signal(one, v, {0, 1}), ErrorKind::BoundaryGap);
  CHECK_ERROR_KIND(infer_gap_signal(one, v, {4, 2}), ErrorKind::BoundaryGap);
}

TEST_CASE("mirrored volumes give mirrored slices") {
  Autoencoder<float> model(tiny(1));
  const Volume4D v = random_volume(16, 16, 8, 1, 6);
  Volume4D flipped = v;
  for (int z = 0; z < 8; ++z) flipped.set_slice(z, v.slice(7 - z));
  const auto a = infer_gap_signal(model, v, {3, 2});
  const auto b = infer_gap_signal(model, flipped, {3, 2});
  for (std::size_t i = 0; i < a[0].data.size(); ++i) {
    CHECK(std::abs(a[0].data[i] - b[1].data[i]) <= 1e-6 * std::max(1.0, std::abs(a[0].data[i])));
    CHECK(std::abs(a[1].data[i] - b[0].data[i]) <= 1e-6 * std::max(1.0, std::abs(a[1].data[i])));
  }
}

TEST_CASE("SH-domain inference returns slices on the acquisition directions") {
  GradientTable g;
  g.bvecs = spherical_fibonacci(88);
  g.bvals.assign(88, 1000.0);
  const Volume4D shell = random_volume(16, 16, 5, 88, 7);
  const Volume4D b0 = random_volume(16, 16, 5, 2, 8);
  Autoencoder<float> sh(tiny(15)), b0net(tiny(1));
  const auto r = infer_gap_sh(sh, b0net, shell, b0, g, {2, 2});
  REQUIRE(r.dwi.size() == 2);
  CHECK(r.dwi[0].channels == 88);
  CHECK(r.sh[0].channels == 15);
  CHECK(r.b0[1].channels == 2);
  CHECK_ERROR_KIND(infer_gap_sh(b0net, b0net, shell, b0, g, {2, 1}), ErrorKind::Shape);

  GradientTable fetal;
  fetal.bvecs = spherical_fibonacci(15);
  fetal.bvals.assign(15, 700.0);
  const Volume4D f = random_volume(16, 16, 4, 15, 9);
  const auto rf = infer_gap_sh(sh, b0net, f, random_volume(16, 16, 4, 1, 3), fetal, {1, 2}, 4, 0.006);
  CHECK(rf.dwi[0].channels == 15);
}

TEST_CASE("overfit SH model reconstructs a band-limited slice") {
  GradientTable g;
  g.bvecs = spherical_fibonacci(30);
  g.bvals.assign(30, 1000.0);
  const auto basis = sh_basis_matrix(g.bvecs, 4);
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  Volume4D shell({16, 16, 3, 30}, {1, 1, 1});
  Eigen::VectorXd c(15);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      for (int j = 0; j < 15; ++j) c(j) = u(rng) * (1.0 + 0.1 * x) + (j == 0 ? 3.0 + 0.05 * y : 0.0);
      const Eigen::VectorXd s = basis.matrix * c;
      for (int z = 0; z < 3; ++z)
        for (int d = 0; d < 30; ++d) shell.at(x, y, z, d) = s(d);
    }
  const Volume4D b0({16, 16, 3, 1}, {1, 1, 1}, Intent::dwi, 5.0);

  const auto sh = fit_sh(shell, g, 4);
  std::vector<SliceSample> data(4, SliceSample{prepare_slice(sh.coeffs.slice(1), 16, Normalization::per_channel), 0});
  TrainConfig tc;
  tc.batch = 2;
  tc.epochs = 250;
  tc.adam.lr = 5e-3;
  // Full width: the reduced network cannot memorize fifteen unstructured maps.
  ModelConfig mc = tiny(15);
  mc.width_divisor = 1;
  const auto trained = train(data, tc, mc);
  Autoencoder<float> model(trained.best), b0net(tiny(1));
  const auto r = infer_gap_sh(model, b0net, shell, b0, g, {1, 1});

  const auto [mn, mx] = std::minmax_element(shell.data().begin(), shell.data().end());
  double mse = 0.0;
  for (int d = 0; d < 30; ++d)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        const double e = (r.dwi[0].at(x, y, d) - shell.at(x, y, 1, d)) / (*mx - *mn);
        mse += e * e / (30.0 * 256.0);
      }
  CHECK(mse < sh_roundtrip_error(shell, g, 4) + 1e-3);

  // Whatever the network produces, the reconstruction lies in the SH span.
  Volume4D out({16, 16, 1, 30}, {1, 1, 1});
  out.set_slice(0, r.dwi[0]);
  CHECK(sh_roundtrip_error(out, g, 4) < 1e-20);
}

TEST_CASE("fill_gap writes the slices back") {
  const Volume4D v = random_volume(3, 3, 5, 2, 11);
  SliceImage a(3, 3, 2, 1.0), b(3, 3, 2, 2.0);
  const Volume4D f = fill_gap(v, {2, 2}, {a, b});
  CHECK(f.slice(2).data == a.data);
  CHECK(f.slice(3).data == b.data);
  CHECK(f.slice(1).data == v.slice(1).data);
  CHECK_ERROR_KIND(fill_gap(v, {2, 2}, {a}), ErrorKind::Shape);
}
