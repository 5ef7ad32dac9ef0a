#include <cmath>
#include <set>

#include "dsae/dti.hpp"
#include "dsae/eval.hpp"
#include "dsae/phantom.hpp"
#include "dsae/sh.hpp"
#include "dsae/stats.hpp"
#include "test_util.hpp"

using namespace dsae;

namespace {

// Two-sided p by listing all 2^n sign assignments of the given ranks.
double brute_force_p(const std::vector<double>& ranks, double w) {
  const int n = static_cast<int>(ranks.size());
  double lower = 0, upper = 0;
  for (long mask = 0; mask < (1L << n); ++mask) {
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      if (mask & (1L << i)) s += ranks[i];
    if (s <= w + 1e-9) ++lower;
    if (s >= w - 1e-9) ++upper;
  }
  return std::min(1.0, 2.0 * std::min(lower, upper) / std::ldexp(1.0, n));
}

std::vector<double> average_ranks(std::vector<double> mags) {
  std::vector<std::size_t> idx(mags.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return mags[a] < mags[b]; });
  std::vector<double> r(mags.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && mags[idx[j]] == mags[idx[i]]) ++j;
    for (std::size_t k = i; k < j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + 1 + j);
    i = j;
  }
  return r;
}

PhantomSpec small_spec() {
  PhantomSpec s;
  s.dims = {32, 32, 16};
  s.n_directions = 30;
  s.n_b0 = 2;
  return s;
}

nn::ModelParams random_model(int channels, const std::string& net) {
  nn::ModelConfig c;
  c.input_channels = channels;
  c.input_size = 32;
  c.latent_maps = 4;
  c.width_divisor = 8;
  c.seed = 3;
  c.net = net;
  return nn::Autoencoder<float>(c).export_params();
}

}  // namespace

TEST_CASE("noiseless phantom has the simulated tensors") {
  const Phantom p = make_phantom(PhantomSpec{});
  CHECK(p.dwi.dims() == std::array<int, 4>{64, 64, 16, 88});
  CHECK(p.b0.nv() == 4);
  std::set<int> seen;
  for (double l : p.labels.data()) seen.insert(static_cast<int>(l));
  CHECK(seen == std::set<int>{0, 1, 2, 3, 4});

  const TensorVolume fit = fit_dti(p.dwi, p.b0, p.g, &p.labels);
  const Volume4D fa = fa_map(fit), md = md_map(fit);
  const double fa_wm = 1.4 / std::sqrt(3.07);
  int wm = 0, csf = 0;
  for (int z = 0; z < 16; ++z)
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const int l = static_cast<int>(p.labels.at(x, y, z));
        if (l == kWhiteMatter || l == kCorpusCallosum) {
          CHECK(std::abs(fa.at(x, y, z) - fa_wm) < 1e-6);
          ++wm;
        }
        if (l == kCsf) {
          CHECK(std::abs(md.at(x, y, z) - 3.0e-3) < 1e-10);
          ++csf;
        }
      }
  CHECK(wm > 100);
  CHECK(csf > 100);
}

TEST_CASE("phantom generation is seeded") {
  PhantomSpec s = small_spec();
  s.noise = NoiseKind::rician;
  s.seed = 4;
  const Phantom a = make_phantom(s), b = make_phantom(s);
  CHECK(a.dwi.data() == b.dwi.data());
  CHECK(a.b0.data() == b.b0.data());
  for (double x : a.dwi.data()) CHECK(x >= 0.0);
  s.seed = 5;
  CHECK(make_phantom(s).dwi.data() != a.dwi.data());
  s.noise = NoiseKind::gaussian;
  CHECK(make_phantom(s).dwi.data() != a.dwi.data());
  CHECK(parse_noise_kind("rician") == NoiseKind::rician);
  CHECK_ERROR_KIND(parse_noise_kind("poisson"), ErrorKind::InvalidArgument);

  const Volume4D all = a.combined();
  const GradientTable t = a.combined_table();
  CHECK(all.nv() == 32);
  CHECK(t.bvals[0] == 0.0);
  CHECK(t.bvals[2] == s.bval);
  CHECK_NOTHROW(t.validate());
}

TEST_CASE("mse_region examples") {
  Volume4D gt({4, 1, 1, 2}, {1, 1, 1}), labels({4, 1, 1, 1}, {1, 1, 1}, Intent::labels);
  for (std::size_t i = 0; i < gt.data().size(); ++i) gt.data()[i] = 0.1 * static_cast<double>(i);
  labels.data() = {3, 3, 1, 0};
  CHECK(mse_region(gt, gt, labels, 3) == 0.0);
  Volume4D est = gt;
  for (double& x : est.data()) x += 0.1;
  CHECK(mse_region(est, gt, labels, 3) == doctest::Approx(0.01).epsilon(1e-12));
  est = gt;
  est.at(0, 0, 0, 0) += 0.2;
  est.at(0, 0, 0, 1) += 0.2;
  CHECK(mse_region(est, gt, labels, 3) == doctest::Approx(0.02).epsilon(1e-12));
  est.at(2, 0, 0, 0) += 5.0;
  est.at(3, 0, 0, 1) -= 5.0;
  CHECK(mse_region(est, gt, labels, 3) == doctest::Approx(0.02).epsilon(1e-12));
  CHECK_ERROR_KIND(mse_region(est, gt, labels, 4), ErrorKind::EmptyMask);
}

TEST_CASE("Wilcoxon signed-rank examples") {
  const std::vector<double> x{1.1, 2.2, 3.5, 4.1, 5.9}, y{1, 2, 3, 4, 5};
  const auto r = wilcoxon_signed_rank(x, y);
  CHECK(r.w == 15.0);
  CHECK(r.p == doctest::Approx(0.0625).epsilon(1e-12));
  CHECK(r.exact);
  CHECK_ERROR_KIND(wilcoxon_signed_rank(x, x), ErrorKind::DegenerateSample);
  const std::vector<double> four{1, 2, 3, 4};
  CHECK_ERROR_KIND(wilcoxon_signed_rank(four, std::vector<double>{0, 0, 0, 0}), ErrorKind::DegenerateSample);
  CHECK_ERROR_KIND(wilcoxon_signed_rank(four, x), ErrorKind::Shape);

  const auto s = wilcoxon_signed_rank(y, x);
  CHECK(s.p == r.p);
  CHECK(s.w == 0.0);
}

TEST_CASE("swapping samples mirrors W and keeps p") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const int len = 5 + trial % 25;
    std::vector<double> x(len), y(len);
    for (int i = 0; i < len; ++i) {
      x[i] = std::round(n(rng) * 4.0) / 4.0;
      y[i] = std::round((n(rng) + 0.3) * 4.0) / 4.0;
    }
    WilcoxonResult a, b;
    try {
      a = wilcoxon_signed_rank(x, y);
      b = wilcoxon_signed_rank(y, x);
    } catch (const Error&) {
      continue;
    }
    CHECK(b.p == doctest::Approx(a.p).epsilon(1e-12));
    CHECK(b.w == doctest::Approx(a.n * (a.n + 1) / 2.0 - a.w));
    CHECK((a.p > 0.0 && a.p <= 1.0));
  }
}

TEST_CASE("exact p equals sign-flip enumeration, ties included") {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> u(-6, 6);
  for (int trial = 0; trial < 40; ++trial) {
    const int len = 5 + trial % 10;
    std::vector<double> x(len), y(len, 0.0);
    for (double& v : x) {
      do v = u(rng); while (v == 0);
    }
    const auto r = wilcoxon_signed_rank(x, y, WilcoxonMethod::exact);
    std::vector<double> mags;
    for (double v : x) mags.push_back(std::abs(v));
    CHECK(r.p == doctest::Approx(brute_force_p(average_ranks(mags), r.w)).epsilon(1e-12));
  }
}

TEST_CASE("exact and normal approximations agree at n = 20") {
  std::mt19937_64 rng(20);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(20), y(20);
    const double shift = 0.1 * (trial % 8);
    for (int i = 0; i < 20; ++i) {
      x[i] = n(rng) + shift;
      y[i] = n(rng);
    }
    const auto e = wilcoxon_signed_rank(x, y, WilcoxonMethod::exact);
    const auto a = wilcoxon_signed_rank(x, y, WilcoxonMethod::normal);
    CHECK(e.exact);
    CHECK_FALSE(a.exact);
    CHECK(std::abs(e.p - a.p) < 0.02);
    CHECK(wilcoxon_signed_rank(x, y).exact);
  }
  std::vector<double> x(25), y(25, 0.0);
  for (double& v : x) v = n(rng);
  CHECK_FALSE(wilcoxon_signed_rank(x, y).exact);
}

TEST_CASE("constant z-profile data is reconstructed exactly") {
  const Phantom p = make_phantom(small_spec());
  EvalData d;
  // Band-limit the signal and repeat one slice along z.
  const Volume4D bl = project_sh(fit_sh(p.dwi, p.g, 4), p.g.bvecs);
  d.shell = bl;
  d.b0 = p.b0;
  d.labels = p.labels;
  d.g = p.g;
  for (int z = 0; z < 16; ++z) {
    d.shell.set_slice(z, bl.slice(8));
    d.b0.set_slice(z, p.b0.slice(8));
    d.labels.set_slice(z, p.labels.slice(8));
  }
  EvalConfig cfg;
  cfg.methods = {Method::linear, Method::cubic, Method::bspline5, Method::lin_sh4, Method::sh4_gt};
  cfg.gaps = {3, 7, 11};
  const auto report = run_experiment(d, {}, cfg);
  CHECK(report.cells.size() == 10);
  for (const auto& c : report.cells) {
    INFO(to_string(c.method));
    for (double m : c.signal_mse) CHECK(m < 1e-20);
    for (int i = 0; i < 3; ++i) CHECK(*c.mean_fa(i) < 1e-16);
  }
}

TEST_CASE("harness report shape, bounds and determinism") {
  PhantomSpec spec = small_spec();
  spec.noise = NoiseKind::rician;
  spec.seed = 12;
  const Phantom p = make_phantom(spec);
  const EvalData d{p.dwi, p.b0, p.g, p.labels};
  EvalModels models;
  models.b0 = random_model(1, "b0");
  models.avg = random_model(1, "avg-b1000");
  models.sh4 = random_model(15, "sh4");

  const auto gaps1 = default_gaps(p.labels, 1), gaps2 = default_gaps(p.labels, 2);
  CHECK(gaps1.size() >= 5);
  CHECK(gaps2.size() >= 5);

  const EvalReport r = run_experiment(d, models, EvalConfig{});
  CHECK(r.cells.size() == all_methods().size() * 2);
  for (const auto& c : r.cells) {
    CHECK(c.signal_mse.size() == (c.n == 1 ? gaps1.size() : gaps2.size()));
    for (double m : c.signal_mse) CHECK(m >= 0.0);
    for (int i = 0; i < 3; ++i) {
      REQUIRE(c.mean_fa(i));
      REQUIRE(c.mean_md(i));
    }
    if (c.method == Method::sh4_gt) CHECK(c.mean_signal() == doctest::Approx(r.sh_lower_bound.at(c.n)).epsilon(1e-9));
    if (c.method == Method::lin_sh4 || c.method == Method::sh4_net)
      CHECK(r.sh_lower_bound.at(c.n) <= c.mean_signal());
  }
  bool any_p = false;
  for (const auto& c : r.comparisons)
    if (c.result) {
      any_p = true;
      CHECK((c.result->p > 0.0 && c.result->p <= 1.0));
    }
  CHECK(any_p);

  const std::string json = report_json(r);
  for (const char* key : {"\"WM\"", "\"cGM\"", "\"CC\"", "\"sh_lower_bound\"", "\"comparisons\"", "\"sh4-net\""})
    CHECK(json.find(key) != std::string::npos);
  const EvalReport again = run_experiment(d, models, EvalConfig{});
  CHECK(report_json(again) == json);
  CHECK(report_csv(again) == report_csv(r));

  const auto dir = test::temp_dir("report");
  write_report(r, dir);
  CHECK(std::filesystem::exists(dir / "report.json"));
  CHECK(std::filesystem::exists(dir / "report.csv"));
}

TEST_CASE("network methods need their models") {
  const Phantom p = make_phantom(small_spec());
  const EvalData d{p.dwi, p.b0, p.g, p.labels};
  EvalConfig cfg;
  cfg.methods = {Method::ae};
  CHECK_ERROR_KIND(run_experiment(d, {}, cfg), ErrorKind::ModelMissing);
  cfg.methods = {Method::sh4_net};
  EvalModels m;
  m.sh4 = random_model(15, "sh4");
  CHECK_ERROR_KIND(run_experiment(d, m, cfg), ErrorKind::ModelMissing);
  CHECK(parse_method("lin-sh4") == Method::lin_sh4);
  CHECK_ERROR_KIND(parse_method("nearest"), ErrorKind::InvalidArgument);
}
