#include "dsae/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <memory>

#include "json.hpp"

#include "dsae/dti.hpp"
#include "dsae/inference.hpp"
#include "dsae/interp.hpp"
#include "dsae/phantom.hpp"
#include "dsae/sh.hpp"

namespace dsae {

Method parse_method(const std::string& s) {
  for (Method m : all_methods())
    if (to_string(m) == s) return m;
  fail(ErrorKind::InvalidArgument, "unknown method '" + s + "'");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::linear: return "linear";
    case Method::cubic: return "cubic";
    case Method::bspline5: return "bspline5";
    case Method::lin_sh4: return "lin-sh4";
    case Method::sh4_gt: return "sh4-gt";
    case Method::ae: return "ae";
    case Method::sh4_net: return "sh4-net";
  }
  return "linear";
}

std::vector<Method> all_methods() {
  return {Method::linear, Method::cubic, Method::bspline5, Method::lin_sh4,
          Method::sh4_gt, Method::ae,    Method::sh4_net};
}

std::string region_name(int label) {
  switch (label) {
    case 1: return "CSF";
    case 2: return "cGM";
    case 3: return "WM";
    case 4: return "CC";
    default: return "background";
  }
}

namespace {

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

std::optional<double> mean_of(const std::vector<std::optional<double>>& v) {
  double s = 0.0;
  int n = 0;
  for (const auto& x : v)
    if (x) {
      s += *x;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return s / n;
}

}  // namespace

double CellResult::mean_signal() const { return mean_of(signal_mse); }
std::optional<double> CellResult::mean_fa(int i) const { return mean_of(fa_mse[i]); }
std::optional<double> CellResult::mean_md(int i) const { return mean_of(md_mse[i]); }

std::vector<int> default_gaps(const Volume4D& labels, int n) {
  std::vector<bool> complete(labels.nz(), false);
  for (int z = 0; z < labels.nz(); ++z) {
    std::array<bool, 3> seen{};
    for (int y = 0; y < labels.ny(); ++y)
      for (int x = 0; x < labels.nx(); ++x)
        for (std::size_t r = 0; r < kEvalRegions.size(); ++r)
          if (labels.at(x, y, z) == kEvalRegions[r]) seen[r] = true;
    complete[z] = seen[0] && seen[1] && seen[2];
  }
  std::vector<int> gaps;
  for (int g = 1; g + n <= labels.nz() - 1; ++g) {
    bool ok = true;
    for (int z = g; z < g + n; ++z) ok = ok && complete[z];
    if (ok) gaps.push_back(g);
  }
  return gaps;
}

namespace {

struct Recon {
  std::vector<SliceImage> shell;
  std::vector<SliceImage> b0;
};

struct Context {
  const EvalData& data;
  const EvalConfig& cfg;
  ShCoeffVolume sh;
  Volume4D sh_projected;
  ShBasisMatrix basis;
  std::unique_ptr<nn::Autoencoder<float>> b0_net, avg_net, sh4_net;
  Volume4D fa_gt, md_gt;
  double scale = 1.0;
};

nn::Autoencoder<float>& need(const std::unique_ptr<nn::Autoencoder<float>>& m, Method method, const char* which) {
  if (!m)
    fail(ErrorKind::ModelMissing, "method " + to_string(method) + " needs the " + std::string(which) + " model");
  return *m;
}

Recon reconstruct(Context& ctx, Method method, const GapSpec& gap) {
  const EvalData& d = ctx.data;
  Recon r;
  switch (method) {
    case Method::linear:
    case Method::cubic:
    case Method::bspline5: {
      const InterpMethod im{method == Method::linear  ? InterpKind::linear
                            : method == Method::cubic ? InterpKind::cubic
                                                      : InterpKind::bspline5};
      r.shell = interp_missing_slices(d.shell, gap.gap_start, gap.n_missing, im);
      r.b0 = interp_missing_slices(d.b0, gap.gap_start, gap.n_missing, im);
      break;
    }
    case Method::lin_sh4: {
      const InterpMethod im{InterpKind::linear};
      for (const auto& s : interp_missing_slices(ctx.sh.coeffs, gap.gap_start, gap.n_missing, im))
        r.shell.push_back(project_sh_slice(ctx.basis, s));
      r.b0 = interp_missing_slices(d.b0, gap.gap_start, gap.n_missing, im);
      break;
    }
    case Method::sh4_gt:
      for (int k = 0; k < gap.n_missing; ++k) {
        r.shell.push_back(ctx.sh_projected.slice(gap.gap_start + k));
        r.b0.push_back(d.b0.slice(gap.gap_start + k));
      }
      break;
    case Method::ae: {
      auto& avg = need(ctx.avg_net, method, "averaged-DWI");
      auto& b0 = need(ctx.b0_net, method, "b0");
      r.shell = infer_gap_signal(avg, d.shell, gap);
      r.b0 = infer_gap_signal(b0, d.b0, gap);
      break;
    }
    case Method::sh4_net: {
      auto& shn = need(ctx.sh4_net, method, "SH");
      auto& b0 = need(ctx.b0_net, method, "b0");
      auto res = infer_gap_sh(shn, b0, d.shell, d.b0, d.g, gap, ctx.cfg.lmax, ctx.cfg.lambda_reg);
      r.shell = std::move(res.dwi);
      r.b0 = std::move(res.b0);
      break;
    }
  }
  return r;
}

double signal_mse(const Context& ctx, const GapSpec& gap, const std::vector<SliceImage>& est) {
  const EvalData& d = ctx.data;
  double sum = 0.0;
  std::size_t count = 0;
  for (int k = 0; k < gap.n_missing; ++k) {
    const int z = gap.gap_start + k;
    for (int y = 0; y < d.shell.ny(); ++y)
      for (int x = 0; x < d.shell.nx(); ++x) {
        if (!(d.labels.at(x, y, z) > 0)) continue;
        for (int v = 0; v < d.shell.nv(); ++v) {
          const double e = (est[k].at(x, y, v) - d.shell.at(x, y, z, v)) * ctx.scale;
          sum += e * e;
        }
        count += static_cast<std::size_t>(d.shell.nv());
      }
  }
  if (count == 0) fail(ErrorKind::EmptyMask, "gap slices contain no brain voxels");
  return sum / static_cast<double>(count);
}

Volume4D gap_labels(const Volume4D& labels, const GapSpec& gap) {
  Volume4D out = labels;
  for (int z = 0; z < labels.nz(); ++z) {
    if (z >= gap.gap_start && z < gap.gap_start + gap.n_missing) continue;
    for (int y = 0; y < labels.ny(); ++y)
      for (int x = 0; x < labels.nx(); ++x) out.at(x, y, z) = 0.0;
  }
  return out;
}

std::optional<double> region_mse(const Volume4D& est, const Volume4D& gt, const Volume4D& labels, int label) {
  try {
    return mse_region(est, gt, labels, label);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::EmptyMask) return std::nullopt;
    throw;
  }
}

struct Pair {
  const char* metric;
  Method a, b;
};

}  // namespace

EvalReport run_experiment(const EvalData& data, const EvalModels& models, const EvalConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  data.g.validate();
  if (data.g.size() != static_cast<std::size_t>(data.shell.nv()))
    fail(ErrorKind::Shape, "gradient table does not match the shell");
  if (data.b0.nx() != data.shell.nx() || data.b0.ny() != data.shell.ny() || data.b0.nz() != data.shell.nz() ||
      data.labels.nx() != data.shell.nx() || data.labels.ny() != data.shell.ny() ||
      data.labels.nz() != data.shell.nz())
    fail(ErrorKind::Shape, "shell, b0 and labels must share one grid");
  for (int n : cfg.ns)
    if (n < 1) fail(ErrorKind::InvalidArgument, "N must be at least 1");

  Context ctx{data, cfg, fit_sh(data.shell, data.g, cfg.lmax, cfg.lambda_reg), {}, {}, {}, {}, {}, {}, {}, 1.0};
  ctx.sh_projected = project_sh(ctx.sh, data.g.bvecs);
  ctx.basis = sh_basis_matrix(data.g.bvecs, cfg.lmax);
  if (models.b0) ctx.b0_net = std::make_unique<nn::Autoencoder<float>>(*models.b0);
  if (models.avg) ctx.avg_net = std::make_unique<nn::Autoencoder<float>>(*models.avg);
  if (models.sh4) ctx.sh4_net = std::make_unique<nn::Autoencoder<float>>(*models.sh4);
  for (Method m : cfg.methods) {
    if (m == Method::ae) {
      need(ctx.avg_net, m, "averaged-DWI");
      need(ctx.b0_net, m, "b0");
    } else if (m == Method::sh4_net) {
      need(ctx.sh4_net, m, "SH");
      need(ctx.b0_net, m, "b0");
    }
  }

  const auto [mn, mx] = std::minmax_element(data.shell.data().begin(), data.shell.data().end());
  ctx.scale = *mx > *mn ? 1.0 / (*mx - *mn) : 0.0;

  Volume4D brain = data.labels;
  for (double& v : brain.data()) v = v > 0 ? 1.0 : 0.0;
  const TensorVolume gt_fit = fit_dti(data.shell, data.b0, data.g, &brain);
  ctx.fa_gt = fa_map(gt_fit);
  ctx.md_gt = md_map(gt_fit);

  EvalReport report;
  report.config = cfg;
  for (int n : cfg.ns) {
    const std::vector<int> gaps = cfg.gaps.empty() ? default_gaps(data.labels, n) : cfg.gaps;
    if (gaps.empty()) fail(ErrorKind::InsufficientData, "no usable gap for N=" + std::to_string(n));
    for (int g : gaps) check_gap(data.shell, g, n);

    double bound = 0.0;
    for (int g : gaps) {
      RoundtripOptions ro;
      ro.lambda_reg = cfg.lambda_reg;
      for (int k = 0; k < n; ++k) ro.slices.push_back(g + k);
      bound += sh_roundtrip_error(data.shell, data.g, cfg.lmax, &brain, ro);
    }
    report.sh_lower_bound[n] = bound / static_cast<double>(gaps.size());

    for (Method m : cfg.methods) {
      CellResult cell;
      cell.method = m;
      cell.n = n;
      cell.gaps = gaps;
      for (int g : gaps) {
        const GapSpec gap{g, n};
        const Recon r = reconstruct(ctx, m, gap);
        cell.signal_mse.push_back(signal_mse(ctx, gap, r.shell));

        const Volume4D labels = gap_labels(data.labels, gap);
        Volume4D mask = labels;
        for (double& v : mask.data()) v = v > 0 ? 1.0 : 0.0;
        const TensorVolume fit = fit_dti(fill_gap(data.shell, gap, r.shell), fill_gap(data.b0, gap, r.b0), data.g,
                                         &mask);
        const Volume4D fa = fa_map(fit), md = md_map(fit);
        for (std::size_t i = 0; i < kEvalRegions.size(); ++i) {
          cell.fa_mse[i].push_back(region_mse(fa, ctx.fa_gt, labels, kEvalRegions[i]));
          cell.md_mse[i].push_back(region_mse(md, ctx.md_gt, labels, kEvalRegions[i]));
        }
      }
      report.cells.push_back(std::move(cell));
    }
  }

  auto find = [&](Method m, int n) -> const CellResult* {
    for (const auto& c : report.cells)
      if (c.method == m && c.n == n) return &c;
    return nullptr;
  };
  const std::array<Pair, 6> signal_pairs{{{"signal", Method::ae, Method::linear},
                                          {"signal", Method::sh4_net, Method::lin_sh4},
                                          {"signal", Method::ae, Method::sh4_net},
                                          {"signal", Method::sh4_net, Method::linear},
                                          {"signal", Method::cubic, Method::linear},
                                          {"signal", Method::bspline5, Method::linear}}};
  const std::array<Pair, 4> tensor_pairs{{{"", Method::ae, Method::linear},
                                          {"", Method::sh4_net, Method::lin_sh4},
                                          {"", Method::ae, Method::sh4_net},
                                          {"", Method::sh4_net, Method::linear}}};

  auto compare = [&](const std::string& metric, const std::string& region, int n, Method a, Method b,
                     const std::vector<std::optional<double>>& xa, const std::vector<std::optional<double>>& xb) {
    Comparison c{metric, region, n, a, b, std::nullopt, "ok"};
    std::vector<double> x, y;
    for (std::size_t i = 0; i < xa.size(); ++i)
      if (xa[i] && xb[i]) {
        x.push_back(*xa[i]);
        y.push_back(*xb[i]);
      }
    try {
      c.result = wilcoxon_signed_rank(x, y);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateSample) throw;
      c.status = e.what();
    }
    report.comparisons.push_back(std::move(c));
  };
  auto wrap = [](const std::vector<double>& v) {
    return std::vector<std::optional<double>>(v.begin(), v.end());
  };

  for (int n : cfg.ns) {
    for (const auto& p : signal_pairs) {
      const CellResult *ca = find(p.a, n), *cb = find(p.b, n);
      if (ca && cb) compare("signal", "", n, p.a, p.b, wrap(ca->signal_mse), wrap(cb->signal_mse));
    }
    for (const char* metric : {"fa", "md"})
      for (std::size_t i = 0; i < kEvalRegions.size(); ++i)
        for (const auto& p : tensor_pairs) {
          const CellResult *ca = find(p.a, n), *cb = find(p.b, n);
          if (!ca || !cb) continue;
          const bool fa = std::string(metric) == "fa";
          compare(metric, region_name(kEvalRegions[i]), n, p.a, p.b, fa ? ca->fa_mse[i] : ca->md_mse[i],
                  fa ? cb->fa_mse[i] : cb->md_mse[i]);
        }
  }

  report.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

namespace {

using ojson = nlohmann::ordered_json;

ojson opt_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

}  // namespace

std::string report_json(const EvalReport& r) {
  ojson j;
  ojson methods = ojson::array();
  for (Method m : r.config.methods) methods.push_back(to_string(m));
  j["config"] = {{"methods", methods},
                 {"ns", r.config.ns},
                 {"lmax", r.config.lmax},
                 {"lambda_reg", r.config.lambda_reg}};

  ojson bound = ojson::object();
  for (const auto& [n, v] : r.sh_lower_bound) bound["N=" + std::to_string(n)] = v;
  j["sh_lower_bound"] = bound;

  ojson cells = ojson::array();
  for (const auto& c : r.cells) {
    ojson cell;
    cell["method"] = to_string(c.method);
    cell["n"] = c.n;
    cell["gaps"] = c.gaps;
    cell["signal_mse"] = c.mean_signal();
    cell["signal_mse_per_gap"] = c.signal_mse;
    ojson fa, md;
    for (std::size_t i = 0; i < kEvalRegions.size(); ++i) {
      const std::string name = region_name(kEvalRegions[i]);
      fa[name] = opt_json(c.mean_fa(static_cast<int>(i)));
      md[name] = opt_json(c.mean_md(static_cast<int>(i)));
    }
    cell["fa_mse"] = fa;
    cell["md_mse"] = md;
    cells.push_back(cell);
  }
  j["cells"] = cells;

  ojson comps = ojson::array();
  for (const auto& c : r.comparisons) {
    ojson o;
    o["metric"] = c.metric;
    o["region"] = c.region.empty() ? ojson(nullptr) : ojson(c.region);
    o["n"] = c.n;
    o["a"] = to_string(c.a);
    o["b"] = to_string(c.b);
    o["status"] = c.status;
    o["pairs"] = c.result ? ojson(c.result->n) : ojson(nullptr);
    o["W"] = c.result ? ojson(c.result->w) : ojson(nullptr);
    o["p"] = c.result ? ojson(c.result->p) : ojson(nullptr);
    o["exact"] = c.result ? ojson(c.result->exact) : ojson(nullptr);
    comps.push_back(o);
  }
  j["comparisons"] = comps;
  return j.dump(2) + "\n";
}

std::string report_csv(const EvalReport& r) {
  std::string out = "kind,method,other,n,metric,region,statistic,value\n";
  auto row = [&](const std::string& kind, const std::string& m, const std::string& o, int n, const std::string& metric,
                 const std::string& region, const std::string& stat, const std::string& value) {
    out += kind + "," + m + "," + o + "," + std::to_string(n) + "," + metric + "," + region + "," + stat + "," +
           value + "\n";
  };
  for (const auto& [n, v] : r.sh_lower_bound) row("bound", "sh-roundtrip", "", n, "signal", "", "mse", fmt(v));
  for (const auto& c : r.cells) {
    const std::string m = to_string(c.method);
    row("cell", m, "", c.n, "signal", "", "mse", fmt(c.mean_signal()));
    for (std::size_t i = 0; i < kEvalRegions.size(); ++i)
      row("cell", m, "", c.n, "fa", region_name(kEvalRegions[i]), "mse", fmt(c.mean_fa(static_cast<int>(i))));
    for (std::size_t i = 0; i < kEvalRegions.size(); ++i)
      row("cell", m, "", c.n, "md", region_name(kEvalRegions[i]), "mse", fmt(c.mean_md(static_cast<int>(i))));
  }
  for (const auto& c : r.comparisons) {
    const std::string a = to_string(c.a), b = to_string(c.b);
    if (c.result) {
      row("wilcoxon", a, b, c.n, c.metric, c.region, "W", fmt(c.result->w));
      row("wilcoxon", a, b, c.n, c.metric, c.region, "p", fmt(c.result->p));
    } else {
      row("wilcoxon", a, b, c.n, c.metric, c.region, "p", "");
    }
  }
  return out;
}

void write_report(const EvalReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, text] : {std::pair{"report.json", report_json(r)}, std::pair{"report.csv", report_csv(r)}}) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) fail(ErrorKind::Io, "cannot write " + (dir / name).string());
    f << text;
    if (!f) fail(ErrorKind::Io, "failed writing " + (dir / name).string());
  }
}

}  // namespace dsae
