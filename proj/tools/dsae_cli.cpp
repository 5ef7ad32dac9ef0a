// dsae: command-line front end for slice reconstruction of diffusion MRI.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dsae/dti.hpp"
#include "dsae/eval.hpp"
#include "dsae/gradients.hpp"
#include "dsae/inference.hpp"
#include "dsae/interp.hpp"
#include "dsae/nifti.hpp"
#include "dsae/nn/checkpoint.hpp"
#include "dsae/nn/train.hpp"
#include "dsae/parallel.hpp"
#include "dsae/phantom.hpp"
#include "dsae/sh.hpp"

namespace fs = std::filesystem;
using namespace dsae;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  unsigned threads = 0;
  bool verbose = false;
};

Globals g_opts;

void log(const std::string& msg) {
  if (g_opts.verbose) std::cerr << msg << '\n';
}

// A diffusion acquisition split into its b0 volumes and one shell.
struct Acquisition {
  Volume4D all;
  GradientTable table;
  std::vector<int> b0_idx;
  std::vector<int> shell_idx;
  Volume4D b0;
  Volume4D shell;
  GradientTable shell_table;
};

Acquisition load_acquisition(const fs::path& dwi, const fs::path& bval, const fs::path& bvec, double shell_b,
                             double tol) {
  Acquisition a;
  a.all = read_nifti(dwi);
  a.table = read_gradient_table(bval, bvec);
  if (a.table.size() != static_cast<std::size_t>(a.all.nv()))
    fail(ErrorKind::Shape, "gradient table has " + std::to_string(a.table.size()) + " entries but " +
                               dwi.string() + " has " + std::to_string(a.all.nv()) + " volumes");
  a.b0_idx = a.table.shell_indices(0.0, kB0Threshold);
  a.shell_idx = a.table.shell_indices(shell_b, tol);
  if (a.shell_idx.empty()) fail(ErrorKind::EmptyShell, "no volumes near b=" + std::to_string(shell_b));
  a.shell = a.all.select_volumes(a.shell_idx);
  a.shell_table = a.table.subset(a.shell_idx);
  if (!a.b0_idx.empty()) a.b0 = a.all.select_volumes(a.b0_idx);
  return a;
}

std::optional<Volume4D> load_mask(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return read_nifti(path);
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_text(const fs::path& p, const std::string& text) {
  ensure_parent(p);
  std::ofstream f(p, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot write " + p.string());
  f << text;
}

nn::ModelParams load_model(const std::string& path) { return nn::load_checkpoint(path); }

// ---- fit-sh ---------------------------------------------------------------

struct FitShOpts {
  std::string dwi, bval, bvec, mask, out;
  double shell = 1000.0, tol = kShellTolerance, lambda = 0.0;
  int lmax = 4;
};

void run_fit_sh(const FitShOpts& o) {
  const Acquisition a = load_acquisition(o.dwi, o.bval, o.bvec, o.shell, o.tol);
  const auto mask = load_mask(o.mask);
  const ShCoeffVolume sh = fit_sh(a.shell, a.shell_table, o.lmax, o.lambda, mask ? &*mask : nullptr);
  if (sh.ill_conditioned)
    std::cerr << "warning: SH fit is ill-conditioned (" << a.shell.nv() << " directions for "
              << sh_coeff_count(o.lmax) << " coefficients); consider --lambda\n";
  ensure_parent(o.out);
  write_sh(sh, o.out);
  log("wrote " + o.out + " with " + std::to_string(sh.coeffs.nv()) + " coefficients");
}

// ---- project-sh -----------------------------------------------------------

struct ProjectShOpts {
  std::string sh, bval, bvec, out;
};

void run_project_sh(const ProjectShOpts& o) {
  const ShCoeffVolume sh = read_sh(o.sh);
  const GradientTable t = read_gradient_table(o.bval, o.bvec);
  std::vector<Vec3> dirs;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t.bvals[i] > kB0Threshold) dirs.push_back(t.bvecs[i]);
  if (dirs.empty()) fail(ErrorKind::EmptyShell, "gradient table has no diffusion-weighted directions");
  ensure_parent(o.out);
  write_nifti(project_sh(sh, dirs), o.out);
}

// ---- fit-dti --------------------------------------------------------------

struct FitDtiOpts {
  std::string dwi, bval, bvec, mask, out_prefix;
  double shell = 1000.0, tol = kShellTolerance;
};

void run_fit_dti(const FitDtiOpts& o) {
  const Acquisition a = load_acquisition(o.dwi, o.bval, o.bvec, o.shell, o.tol);
  if (a.b0_idx.empty()) fail(ErrorKind::Underdetermined, "tensor fit needs at least one b0 volume");
  const auto mask = load_mask(o.mask);
  const TensorVolume t = fit_dti(a.shell, a.b0, a.shell_table, mask ? &*mask : nullptr);
  ensure_parent(o.out_prefix + "_fa.nii");
  write_nifti(t.tensors, o.out_prefix + "_tensor.nii");
  write_nifti(t.s0, o.out_prefix + "_s0.nii");
  write_nifti(fa_map(t), o.out_prefix + "_fa.nii");
  write_nifti(md_map(t), o.out_prefix + "_md.nii");
}

// ---- interp ---------------------------------------------------------------

struct InterpOpts {
  std::string in, out, method = "linear";
  int gap_start = 1, n = 1;
};

void run_interp(const InterpOpts& o) {
  const Volume4D v = read_nifti(o.in);
  const auto slices = interp_missing_slices(v, o.gap_start, o.n, {parse_interp_kind(o.method)});
  ensure_parent(o.out);
  write_nifti(fill_gap(v, {o.gap_start, o.n}, slices), o.out);
}

// ---- train ----------------------------------------------------------------

struct TrainOpts {
  std::string net = "b0";
  std::vector<std::string> dwi, bval, bvec, mask;
  std::string out, loss_csv, upsample = "nearest", normalization = "per_channel", split = "subject";
  double shell = 1000.0, tol = kShellTolerance, lr = 5e-5, val_fraction = 0.15, lambda = 0.0;
  int avg_n = 15, samples_per_slice = 1, latent = 0, epochs = 200, batch = 32, width_div = 1, input_size = 128,
      lmax = 4;
};

void run_train(const TrainOpts& o) {
  const std::size_t subjects = o.dwi.size();
  auto pick = [&](const std::vector<std::string>& v, std::size_t i, const char* what) -> std::string {
    if (v.size() == 1) return v[0];
    if (v.size() != subjects)
      fail(ErrorKind::InvalidArgument, std::string("give --") + what + " once or once per --dwi");
    return v[i];
  };
  if (!o.mask.empty() && o.mask.size() != 1 && o.mask.size() != subjects)
    fail(ErrorKind::InvalidArgument, "give --mask once or once per --dwi");

  nn::ModelConfig mc;
  mc.net = o.net;
  mc.input_size = o.input_size;
  mc.width_divisor = o.width_div;
  mc.seed = g_opts.seed;
  mc.upsample = nn::parse_upsampling(o.upsample);
  mc.normalization = nn::parse_normalization(o.normalization);
  mc.input_channels = o.net == "sh4" ? sh_coeff_count(o.lmax) : 1;
  mc.latent_maps = o.latent > 0 ? o.latent : (o.net == "sh4" ? 64 : 32);

  nn::DatasetOptions dopt;
  dopt.input_size = o.input_size;
  dopt.normalization = mc.normalization;

  std::vector<nn::SliceSample> data;
  for (std::size_t s = 0; s < subjects; ++s) {
    const Acquisition a = load_acquisition(o.dwi[s], pick(o.bval, s, "bval"), pick(o.bvec, s, "bvec"), o.shell, o.tol);
    const auto mask = o.mask.empty() ? std::nullopt : load_mask(pick(o.mask, s, "mask"));
    const Volume4D* m = mask ? &*mask : nullptr;
    dopt.subject = static_cast<int>(s);
    std::vector<nn::SliceSample> part;
    if (o.net == "b0") {
      if (a.b0_idx.empty()) fail(ErrorKind::EmptyShell, o.dwi[s] + " has no b0 volumes");
      part = nn::slices_per_volume(a.b0, m, dopt);
    } else if (o.net == "avg-b1000") {
      part = nn::averaged_slices(a.shell, m, o.avg_n, o.samples_per_slice, g_opts.seed + s, dopt);
    } else {
      const ShCoeffVolume sh = fit_sh(a.shell, a.shell_table, o.lmax, o.lambda);
      part = nn::slices_multichannel(sh.coeffs, m, dopt);
    }
    data.insert(data.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  log("training " + o.net + " on " + std::to_string(data.size()) + " slices");

  nn::TrainConfig tc;
  tc.adam.lr = o.lr;
  tc.batch = o.batch;
  tc.epochs = o.epochs;
  tc.val_fraction = o.val_fraction;
  tc.split = o.split == "slice" ? nn::SplitMode::by_slice : nn::SplitMode::by_subject;
  tc.seed = g_opts.seed;
  tc.on_epoch = [](const nn::EpochLog& e) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "epoch %d train %.6g val %.6g", e.epoch, e.train_mse, e.val_mse);
    log(buf);
  };
  const nn::TrainResult r = nn::train(data, tc, mc);
  ensure_parent(o.out);
  nn::save_checkpoint(r.best, o.out);
  nn::write_loss_csv(r.history, o.loss_csv.empty() ? o.out + ".loss.csv" : o.loss_csv);
  std::printf("best epoch %d, validation MSE %.6g\n", r.best_epoch, r.history[r.best_epoch - 1].val_mse);
}

// ---- infer ----------------------------------------------------------------

struct InferOpts {
  std::string model, b0_model, domain = "signal", dwi, bval, bvec, out, hist_mask, slices_dir;
  double shell = 1000.0, tol = kShellTolerance, lambda = 0.0;
  int gap_start = 1, n = 1, lmax = 4;
};

void scatter(std::vector<SliceImage>& dst, const std::vector<SliceImage>& src, const std::vector<int>& vols) {
  for (std::size_t k = 0; k < dst.size(); ++k)
    for (std::size_t c = 0; c < vols.size(); ++c)
      std::copy(src[k].data.begin() + c * src[k].plane(), src[k].data.begin() + (c + 1) * src[k].plane(),
                dst[k].data.begin() + vols[c] * dst[k].plane());
}

void run_infer(const InferOpts& o) {
  const GapSpec gap{o.gap_start, o.n};
  nn::Autoencoder<float> model(load_model(o.model));
  std::optional<nn::Autoencoder<float>> b0_model;
  if (!o.b0_model.empty()) b0_model.emplace(load_model(o.b0_model));
  const auto hmask = load_mask(o.hist_mask);
  InferenceOptions io;
  io.histogram_mask = hmask ? &*hmask : nullptr;

  Volume4D v;
  std::vector<SliceImage> slices;
  const bool have_table = !o.bval.empty() && !o.bvec.empty();
  if (o.domain == "sh4") {
    if (!have_table) fail(ErrorKind::InvalidArgument, "--domain sh4 needs --bval and --bvec");
    if (!b0_model) fail(ErrorKind::ModelMissing, "--domain sh4 needs --b0-model");
    const Acquisition a = load_acquisition(o.dwi, o.bval, o.bvec, o.shell, o.tol);
    if (a.b0_idx.empty()) fail(ErrorKind::EmptyShell, "input has no b0 volumes for the b0 network");
    v = a.all;
    const ShGapResult r = infer_gap_sh(model, *b0_model, a.shell, a.b0, a.shell_table, gap, o.lmax, o.lambda, io);
    slices.assign(o.n, SliceImage(v.nx(), v.ny(), v.nv()));
    scatter(slices, r.dwi, a.shell_idx);
    scatter(slices, r.b0, a.b0_idx);
  } else if (have_table && b0_model) {
    const Acquisition a = load_acquisition(o.dwi, o.bval, o.bvec, o.shell, o.tol);
    v = a.all;
    slices.assign(o.n, SliceImage(v.nx(), v.ny(), v.nv()));
    scatter(slices, infer_gap_signal(model, a.shell, gap, io), a.shell_idx);
    if (!a.b0_idx.empty()) scatter(slices, infer_gap_signal(*b0_model, a.b0, gap, io), a.b0_idx);
  } else {
    v = read_nifti(o.dwi);
    slices = infer_gap_signal(model, v, gap, io);
  }

  for (int k = 0; k < o.n; ++k) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "slice %d: weights %.6f (z=%d) / %.6f (z=%d)", o.gap_start + k, gap.alpha(k),
                  gap.above(), 1.0 - gap.alpha(k), gap.below());
    log(buf);
  }
  ensure_parent(o.out);
  write_nifti(fill_gap(v, gap, slices), o.out);
  if (!o.slices_dir.empty()) {
    fs::create_directories(o.slices_dir);
    for (int k = 0; k < o.n; ++k) {
      Volume4D s({v.nx(), v.ny(), 1, v.nv()}, v.spacing(), v.intent());
      s.set_slice(0, slices[k]);
      write_nifti(s, fs::path(o.slices_dir) / ("slice_z" + std::to_string(o.gap_start + k) + ".nii"));
    }
  }
  std::printf("wrote %d slice%s starting at z=%d to %s\n", o.n, o.n == 1 ? "" : "s", o.gap_start, o.out.c_str());
}

// ---- phantom --------------------------------------------------------------

struct PhantomOpts {
  std::string out_dir, noise = "none";
  int size = 64, slices = 16, directions = 88, b0 = 4;
  double bval = 1000.0, sigma = 0.02;
};

void run_phantom(const PhantomOpts& o) {
  PhantomSpec s;
  s.dims = {o.size, o.size, o.slices};
  s.n_directions = o.directions;
  s.n_b0 = o.b0;
  s.bval = o.bval;
  s.noise = parse_noise_kind(o.noise);
  s.sigma = o.sigma;
  s.seed = g_opts.seed;
  const Phantom p = make_phantom(s);
  const fs::path dir(o.out_dir);
  fs::create_directories(dir);
  write_nifti(p.combined(), dir / "dwi.nii");
  write_gradient_table(p.combined_table(), dir / "dwi.bval", dir / "dwi.bvec");
  write_nifti(p.labels, dir / "labels.nii");
  write_nifti(p.truth.tensors, dir / "tensor.nii");
  write_nifti(p.truth.s0, dir / "s0.nii");
  log("phantom written to " + dir.string());
}

// ---- evaluate -------------------------------------------------------------

struct EvaluateOpts {
  std::string dwi, bval, bvec, labels, b0_model, avg_model, sh4_model, out_dir;
  std::vector<std::string> methods;
  std::vector<int> ns{1, 2}, gaps;
  double shell = 1000.0, tol = kShellTolerance, lambda = 0.0;
  int lmax = 4;
};

void run_evaluate(const EvaluateOpts& o) {
  const Acquisition a = load_acquisition(o.dwi, o.bval, o.bvec, o.shell, o.tol);
  if (a.b0_idx.empty()) fail(ErrorKind::EmptyShell, "evaluation needs b0 volumes");
  EvalData d{a.shell, a.b0, a.shell_table, read_nifti(o.labels)};
  EvalModels m;
  if (!o.b0_model.empty()) m.b0 = load_model(o.b0_model);
  if (!o.avg_model.empty()) m.avg = load_model(o.avg_model);
  if (!o.sh4_model.empty()) m.sh4 = load_model(o.sh4_model);

  EvalConfig cfg;
  cfg.ns = o.ns;
  cfg.gaps = o.gaps;
  cfg.lmax = o.lmax;
  cfg.lambda_reg = o.lambda;
  cfg.methods.clear();
  if (o.methods.empty()) {
    for (Method mt : all_methods()) {
      if (mt == Method::ae && !(m.avg && m.b0)) continue;
      if (mt == Method::sh4_net && !(m.sh4 && m.b0)) continue;
      cfg.methods.push_back(mt);
    }
  } else {
    for (const auto& s : o.methods) cfg.methods.push_back(parse_method(s));
  }

  const EvalReport r = run_experiment(d, m, cfg);
  write_report(r, o.out_dir);
  nlohmann::ordered_json timing{{"runtime_s", r.runtime_s}};
  write_text(fs::path(o.out_dir) / "timing.json", timing.dump(2) + "\n");

  std::printf("%-10s %2s %12s %12s %12s %12s\n", "method", "N", "signal", "FA(WM)", "FA(cGM)", "FA(CC)");
  for (const auto& c : r.cells)
    std::printf("%-10s %2d %12.4e %12.4e %12.4e %12.4e\n", to_string(c.method).c_str(), c.n, c.mean_signal(),
                c.mean_fa(0).value_or(NAN), c.mean_fa(1).value_or(NAN), c.mean_fa(2).value_or(NAN));
  for (const auto& [n, b] : r.sh_lower_bound) std::printf("SH lower bound N=%d: %.4e\n", n, b);
  std::printf("report written to %s (%.1f s)\n", o.out_dir.c_str(), r.runtime_s);
}

// ---- sh-bound -------------------------------------------------------------

struct ShBoundOpts {
  std::string dwi, bval, bvec, mask, out;
  std::vector<int> lmax{4, 6, 8};
  double shell = 1000.0, tol = kShellTolerance, lambda = 0.0;
};

void run_sh_bound(const ShBoundOpts& o) {
  const Acquisition a = load_acquisition(o.dwi, o.bval, o.bvec, o.shell, o.tol);
  const auto mask = load_mask(o.mask);
  RoundtripOptions ro;
  ro.lambda_reg = o.lambda;
  std::string csv = "lmax,mse\n";
  for (int l : o.lmax) {
    const double e = sh_roundtrip_error(a.shell, a.shell_table, l, mask ? &*mask : nullptr, ro);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%d,%.10g\n", l, e);
    csv += buf;
    std::printf("lmax %d: %.6e\n", l, e);
  }
  if (!o.out.empty()) write_text(o.out, csv);
}

const std::vector<std::string> kNets{"b0", "avg-b1000", "sh4"};
const std::vector<std::string> kMethods{"linear", "cubic", "bspline5", "lin-sh4", "sh4-gt", "ae", "sh4-net"};

void add_shell_opts(CLI::App* c, double& shell, double& tol) {
  c->add_option("--shell", shell, "b-value of the diffusion shell (s/mm^2)")->capture_default_str();
  c->add_option("--shell-tol", tol, "tolerance for shell membership (s/mm^2)")->capture_default_str();
}

void add_table_opts(CLI::App* c, std::string& bval, std::string& bvec, bool required) {
  auto* a = c->add_option("--bval", bval, "FSL b-value file")->check(CLI::ExistingFile);
  auto* b = c->add_option("--bvec", bvec, "FSL gradient direction file")->check(CLI::ExistingFile);
  if (required) {
    a->required();
    b->required();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent-space slice reconstruction for diffusion MRI"};
  app.name("dsae");
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML file with option values (command-line flags take precedence)");
  app.allow_config_extras(false);
  app.add_option("--seed", g_opts.seed, "random seed for initialization, shuffling and noise")->capture_default_str();
  app.add_option("--threads", g_opts.threads, "worker thread cap (0 = all cores)")->capture_default_str();
  app.add_flag("-v,--verbose", g_opts.verbose, "progress messages on stderr");

  FitShOpts fso;
  auto* fit_sh_cmd = app.add_subcommand("fit-sh", "fit spherical harmonics to one shell");
  fit_sh_cmd->add_option("--dwi", fso.dwi, "4-D DWI NIfTI")->required()->check(CLI::ExistingFile);
  add_table_opts(fit_sh_cmd, fso.bval, fso.bvec, true);
  fit_sh_cmd->add_option("--mask", fso.mask, "mask NIfTI (nonzero = fit)")->check(CLI::ExistingFile);
  fit_sh_cmd->add_option("--lmax", fso.lmax, "maximum even SH order")->capture_default_str();
  fit_sh_cmd->add_option("--lambda", fso.lambda, "Laplace-Beltrami regularization weight")->capture_default_str();
  add_shell_opts(fit_sh_cmd, fso.shell, fso.tol);
  fit_sh_cmd->add_option("--out", fso.out, "output coefficient NIfTI (JSON sidecar alongside)")->required();

  ProjectShOpts pso;
  auto* project_cmd = app.add_subcommand("project-sh", "evaluate SH coefficients on a direction set");
  project_cmd->add_option("--sh", pso.sh, "coefficient NIfTI written by fit-sh")->required()->check(CLI::ExistingFile);
  add_table_opts(project_cmd, pso.bval, pso.bvec, true);
  project_cmd->add_option("--out", pso.out, "output DWI NIfTI")->required();

  FitDtiOpts fdo;
  auto* dti_cmd = app.add_subcommand("fit-dti", "log-linear tensor fit with FA and MD maps");
  dti_cmd->add_option("--dwi", fdo.dwi, "4-D DWI NIfTI with b0 volumes")->required()->check(CLI::ExistingFile);
  add_table_opts(dti_cmd, fdo.bval, fdo.bvec, true);
  dti_cmd->add_option("--mask", fdo.mask, "mask NIfTI")->check(CLI::ExistingFile);
  add_shell_opts(dti_cmd, fdo.shell, fdo.tol);
  dti_cmd->add_option("--out-prefix", fdo.out_prefix, "writes <prefix>_tensor/_s0/_fa/_md.nii")->required();

  InterpOpts io;
  auto* interp_cmd = app.add_subcommand("interp", "fill a slice gap by through-plane interpolation");
  interp_cmd->add_option("--in", io.in, "input NIfTI")->required()->check(CLI::ExistingFile);
  interp_cmd->add_option("--gap-start", io.gap_start, "first missing slice")->required();
  interp_cmd->add_option("--n", io.n, "number of missing slices")->check(CLI::Range(1, 2))->capture_default_str();
  interp_cmd->add_option("--method", io.method, "interpolation kernel")
      ->check(CLI::IsMember({"linear", "cubic", "bspline5"}))
      ->capture_default_str();
  interp_cmd->add_option("--out", io.out, "output NIfTI with the gap filled")->required();

  TrainOpts to;
  auto* train_cmd = app.add_subcommand("train", "train a slice autoencoder");
  train_cmd->add_option("--net", to.net, "network role")->check(CLI::IsMember(kNets))->capture_default_str();
  train_cmd->add_option("--dwi", to.dwi, "4-D DWI NIfTI; repeat for several subjects")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--bval", to.bval, "FSL b-value file (once, or once per --dwi)")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--bvec", to.bvec, "FSL gradient file (once, or once per --dwi)")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--mask", to.mask, "brain mask; slices under 1% coverage are skipped")->check(CLI::ExistingFile);
  add_shell_opts(train_cmd, to.shell, to.tol);
  train_cmd->add_option("--avg-n", to.avg_n, "DWIs averaged per avg-b1000 sample")->capture_default_str();
  train_cmd->add_option("--samples-per-slice", to.samples_per_slice, "avg-b1000 samples drawn per slice")
      ->capture_default_str();
  train_cmd->add_option("--latent", to.latent, "latent feature maps M (default 32, or 64 for sh4)");
  train_cmd->add_option("--epochs", to.epochs, "training epochs")->capture_default_str();
  train_cmd->add_option("--batch", to.batch, "batch size")->capture_default_str();
  train_cmd->add_option("--lr", to.lr, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--val-fraction", to.val_fraction, "held-out fraction")->capture_default_str();
  train_cmd->add_option("--split", to.split, "validation split unit")
      ->check(CLI::IsMember({"subject", "slice"}))
      ->capture_default_str();
  train_cmd->add_option("--width-div", to.width_div, "divide hidden widths (reduced models)")->capture_default_str();
  train_cmd->add_option("--input-size", to.input_size, "network grid, a multiple of 16")->capture_default_str();
  train_cmd->add_option("--upsample", to.upsample, "decoder upsampling")
      ->check(CLI::IsMember({"nearest", "transposed"}))
      ->capture_default_str();
  train_cmd->add_option("--normalization", to.normalization, "slice normalization")
      ->check(CLI::IsMember({"per_channel", "joint"}))
      ->capture_default_str();
  train_cmd->add_option("--lmax", to.lmax, "SH order for --net sh4")->capture_default_str();
  train_cmd->add_option("--lambda", to.lambda, "SH regularization for --net sh4")->capture_default_str();
  train_cmd->add_option("--out", to.out, "output checkpoint")->required();
  train_cmd->add_option("--loss-csv", to.loss_csv, "loss history CSV (default <out>.loss.csv)");

  InferOpts ifo;
  auto* infer_cmd = app.add_subcommand("infer", "reconstruct missing slices by latent blending");
  infer_cmd->add_option("--model", ifo.model, "checkpoint (avg-b1000/b0 for signal, sh4 for sh4)")
      ->required()
      ->check(CLI::ExistingFile);
  infer_cmd->add_option("--b0-model", ifo.b0_model, "b0 checkpoint for the b0 volumes")->check(CLI::ExistingFile);
  infer_cmd->add_option("--domain", ifo.domain, "reconstruction domain")
      ->check(CLI::IsMember({"signal", "sh4"}))
      ->capture_default_str();
  infer_cmd->add_option("--dwi", ifo.dwi, "input NIfTI")->required()->check(CLI::ExistingFile);
  add_table_opts(infer_cmd, ifo.bval, ifo.bvec, false);
  add_shell_opts(infer_cmd, ifo.shell, ifo.tol);
  infer_cmd->add_option("--gap-start", ifo.gap_start, "first missing slice")->required();
  infer_cmd->add_option("--n", ifo.n, "number of missing slices")->check(CLI::Range(1, 2))->capture_default_str();
  infer_cmd->add_option("--lmax", ifo.lmax, "SH order for --domain sh4")->capture_default_str();
  infer_cmd->add_option("--lambda", ifo.lambda, "SH regularization for --domain sh4")->capture_default_str();
  infer_cmd->add_option("--hist-mask", ifo.hist_mask, "restrict histogram matching to this mask")
      ->check(CLI::ExistingFile);
  infer_cmd->add_option("--out", ifo.out, "output NIfTI with the gap filled")->required();
  infer_cmd->add_option("--slices-dir", ifo.slices_dir, "also write each reconstructed slice here");

  PhantomOpts po;
  auto* phantom_cmd = app.add_subcommand("phantom", "write a synthetic DWI phantom with labels and tensors");
  phantom_cmd->add_option("--out-dir", po.out_dir, "output directory")->required();
  phantom_cmd->add_option("--size", po.size, "in-plane size")->capture_default_str();
  phantom_cmd->add_option("--slices", po.slices, "number of slices")->capture_default_str();
  phantom_cmd->add_option("--directions", po.directions, "gradient directions")->capture_default_str();
  phantom_cmd->add_option("--b0", po.b0, "b0 volumes")->capture_default_str();
  phantom_cmd->add_option("--bval", po.bval, "shell b-value")->capture_default_str();
  phantom_cmd->add_option("--noise", po.noise, "noise model")
      ->check(CLI::IsMember({"none", "gaussian", "rician"}))
      ->capture_default_str();
  phantom_cmd->add_option("--sigma", po.sigma, "noise standard deviation")->capture_default_str();

  EvaluateOpts eo;
  auto* eval_cmd = app.add_subcommand("evaluate", "slice-removal experiment with MSE and Wilcoxon report");
  eval_cmd->add_option("--dwi", eo.dwi, "complete 4-D DWI (ground truth)")->required()->check(CLI::ExistingFile);
  add_table_opts(eval_cmd, eo.bval, eo.bvec, true);
  eval_cmd->add_option("--labels", eo.labels, "tissue labels (1 CSF, 2 cGM, 3 WM, 4 CC)")
      ->required()
      ->check(CLI::ExistingFile);
  add_shell_opts(eval_cmd, eo.shell, eo.tol);
  eval_cmd->add_option("--methods", eo.methods, "methods to run (default: all with models available)")
      ->check(CLI::IsMember(kMethods));
  eval_cmd->add_option("--b0-model", eo.b0_model, "b0 checkpoint")->check(CLI::ExistingFile);
  eval_cmd->add_option("--avg-model", eo.avg_model, "avg-b1000 checkpoint")->check(CLI::ExistingFile);
  eval_cmd->add_option("--sh4-model", eo.sh4_model, "sh4 checkpoint")->check(CLI::ExistingFile);
  eval_cmd->add_option("--n", eo.ns, "gap sizes")->check(CLI::Range(1, 2))->capture_default_str();
  eval_cmd->add_option("--gaps", eo.gaps, "gap start slices (default: all with WM, cGM and CC present)");
  eval_cmd->add_option("--lmax", eo.lmax, "SH order")->capture_default_str();
  eval_cmd->add_option("--lambda", eo.lambda, "SH regularization")->capture_default_str();
  eval_cmd->add_option("--out-dir", eo.out_dir, "directory for report.json, report.csv, timing.json")->required();

  ShBoundOpts sbo;
  auto* bound_cmd = app.add_subcommand("sh-bound", "SH round-trip error per order");
  bound_cmd->add_option("--dwi", sbo.dwi, "4-D DWI NIfTI")->required()->check(CLI::ExistingFile);
  add_table_opts(bound_cmd, sbo.bval, sbo.bvec, true);
  bound_cmd->add_option("--mask", sbo.mask, "mask NIfTI")->check(CLI::ExistingFile);
  add_shell_opts(bound_cmd, sbo.shell, sbo.tol);
  bound_cmd->add_option("--lmax", sbo.lmax, "orders to evaluate")->capture_default_str();
  bound_cmd->add_option("--lambda", sbo.lambda, "SH regularization")->capture_default_str();
  bound_cmd->add_option("--out", sbo.out, "CSV output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  set_max_threads(g_opts.threads);
  try {
    if (*fit_sh_cmd) run_fit_sh(fso);
    else if (*project_cmd) run_project_sh(pso);
    else if (*dti_cmd) run_fit_dti(fdo);
    else if (*interp_cmd) run_interp(io);
    else if (*train_cmd) run_train(to);
    else if (*infer_cmd) run_infer(ifo);
    else if (*phantom_cmd) run_phantom(po);
    else if (*eval_cmd) run_evaluate(eo);
    else if (*bound_cmd) run_sh_bound(sbo);
  } catch (const Error& e) {
    std::cerr << "dsae: " << e.what() << '\n';
    return e.kind() == ErrorKind::InvalidArgument ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "dsae: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
