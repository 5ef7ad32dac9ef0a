#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dsae/gradients.hpp"
#include "dsae/nn/model.hpp"
#include "dsae/stats.hpp"
#include "dsae/volume.hpp"

namespace dsae {

/// Slice reconstruction methods compared by the harness.
///   linear, cubic, bspline5: through-plane interpolation of the raw signal
///   lin_sh4: linear interpolation of order-4 SH coefficients
///   sh4_gt:  order-4 SH fit of the true slices (the SH lower bound)
///   ae:      latent blending with the averaged-DWI network, b0 network for b0
///   sh4_net: latent blending of SH coefficient stacks, b0 network for b0
enum class Method { linear, cubic, bspline5, lin_sh4, sh4_gt, ae, sh4_net };

Method parse_method(const std::string& s);
std::string to_string(Method m);
std::vector<Method> all_methods();

/// Regions reported for FA and MD, in report order.
inline constexpr std::array<int, 3> kEvalRegions{3, 2, 4};
std::string region_name(int label);

struct EvalData {
  Volume4D shell;   // single-shell DWI (ground truth)
  Volume4D b0;
  GradientTable g;  // table of `shell`
  Volume4D labels;  // 0 background, 1 CSF, 2 cGM, 3 WM, 4 CC
};

struct EvalModels {
  std::optional<nn::ModelParams> b0;
  std::optional<nn::ModelParams> avg;
  std::optional<nn::ModelParams> sh4;
};

struct EvalConfig {
  std::vector<Method> methods = all_methods();
  std::vector<int> ns{1, 2};
  /// Gap start slices; when empty, every interior start whose gap slices all
  /// contain WM, cGM and CC voxels.
  std::vector<int> gaps;
  int lmax = 4;
  double lambda_reg = 0.0;
};

/// Per-gap scores of one method at one N.
struct CellResult {
  Method method = Method::linear;
  int n = 1;
  std::vector<int> gaps;
  std::vector<double> signal_mse;
  /// Indexed like kEvalRegions; empty entries where the region is absent.
  std::array<std::vector<std::optional<double>>, 3> fa_mse;
  std::array<std::vector<std::optional<double>>, 3> md_mse;

  double mean_signal() const;
  std::optional<double> mean_fa(int region_index) const;
  std::optional<double> mean_md(int region_index) const;
};

struct Comparison {
  std::string metric;  // "signal", "fa" or "md"
  std::string region;  // empty for signal
  int n = 1;
  Method a = Method::linear;
  Method b = Method::linear;
  std::optional<WilcoxonResult> result;
  std::string status;  // "ok" or the reason no test was run
};

struct EvalReport {
  EvalConfig config;
  std::vector<CellResult> cells;
  std::vector<Comparison> comparisons;
  /// Mean over gaps of the order-lmax SH round-trip error, per N.
  std::map<int, double> sh_lower_bound;
  double runtime_s = 0.0;
};

/// Gap starts usable for `n` missing slices (see EvalConfig::gaps).
std::vector<int> default_gaps(const Volume4D& labels, int n);

/// Removes each gap, reconstructs it with every method, and scores signal
/// MSE on [0, 1]-normalized intensities (brain voxels of the gap slices) and
/// FA/MD MSE per region against the tensor fit of the complete data.
EvalReport run_experiment(const EvalData& data, const EvalModels& models, const EvalConfig& cfg);

/// Deterministic serializations; wall-clock runtime is left out so identical
/// inputs give identical bytes.
std::string report_json(const EvalReport& r);
std::string report_csv(const EvalReport& r);
/// Writes report.json and report.csv into `dir`.
void write_report(const EvalReport& r, const std::filesystem::path& dir);

}  // namespace dsae
