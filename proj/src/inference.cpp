#include "dsae/inference.hpp"

#include <algorithm>
#include <numeric>
#include <optional>

#include "dsae/interp.hpp"
#include "dsae/nn/batch.hpp"
#include "dsae/nn/train.hpp"
#include "dsae/sh.hpp"

namespace dsae {

double GapSpec::alpha(int k) const {
  return static_cast<double>(n_missing - k) / static_cast<double>(n_missing + 1);
}

LatentCode blend_latents(const LatentCode& a, const LatentCode& b, double alpha) {
  nn::require_shape(a, b, "latent codes differ in shape");
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorKind::InvalidArgument, "blend weight must lie in (0, 1)");
  LatentCode out(a.n, a.c, a.h, a.w);
  for (std::size_t i = 0; i < a.size(); ++i)
    out.data[i] = static_cast<float>(alpha * a.data[i] + (1.0 - alpha) * b.data[i]);
  return out;
}

SliceImage weighted_average(const SliceImage& a, const SliceImage& b, double alpha) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels)
    fail(ErrorKind::Shape, "slices differ in shape");
  SliceImage out(a.width, a.height, a.channels);
  for (std::size_t i = 0; i < a.data.size(); ++i) out.data[i] = alpha * a.data[i] + (1.0 - alpha) * b.data[i];
  return out;
}

namespace {

// Maps values[idx] in place onto the quantiles of the sorted reference.
void match_channel(std::vector<double>& values, const std::vector<std::size_t>& idx, std::vector<double> ref) {
  const std::size_t n = idx.size();
  if (n == 0 || ref.empty()) return;
  std::sort(ref.begin(), ref.end());
  const std::size_t m = ref.size();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[idx[a]] < values[idx[b]]; });

  std::vector<double> mapped(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[idx[order[j + 1]]] == values[idx[order[i]]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j);
    const double q = n > 1 ? rank / static_cast<double>(n - 1) : 0.5;
    const double pos = q * static_cast<double>(m - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, m - 1);
    const double frac = pos - static_cast<double>(lo);
    const double v = frac == 0.0 ? ref[lo] : ref[lo] + frac * (ref[hi] - ref[lo]);
    for (std::size_t k = i; k <= j; ++k) mapped[order[k]] = v;
    i = j + 1;
  }
  for (std::size_t k = 0; k < n; ++k) values[idx[k]] = mapped[k];
}

}  // namespace

SliceImage histogram_match(const SliceImage& source, const SliceImage& reference, const SliceImage* mask) {
  if (source.channels != reference.channels)
    fail(ErrorKind::Shape, "histogram matching needs equal channel counts");
  if (mask && (mask->width != source.width || mask->height != source.height ||
               reference.width != source.width || reference.height != source.height))
    fail(ErrorKind::Shape, "masked histogram matching needs equal slice sizes");

  SliceImage out = source;
  out.norm_range.reset();
  const std::size_t sp = source.plane(), rp = reference.plane();
  std::vector<std::size_t> src_idx;
  for (std::size_t k = 0; k < sp; ++k)
    if (!mask || mask->data[k] > 0.0) src_idx.push_back(k);

  for (int c = 0; c < source.channels; ++c) {
    std::vector<double> ref;
    for (std::size_t k = 0; k < rp; ++k)
      if (!mask || mask->data[k] > 0.0) ref.push_back(reference.data[c * rp + k]);
    std::vector<std::size_t> idx(src_idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = c * sp + src_idx[k];
    match_channel(out.data, idx, std::move(ref));
    if (mask)
      for (std::size_t k = 0; k < sp; ++k)
        if (!(mask->data[k] > 0.0)) out.data[c * sp + k] = reference.data[c * rp + k];
  }
  return out;
}

namespace {

// Runs the latent-blending pipeline on one channel group of two neighbors.
std::vector<SliceImage> infer_group(nn::Autoencoder<float>& model, const SliceImage& above, const SliceImage& below,
                                    const GapSpec& gap, const SliceImage* hist_mask) {
  const auto& cfg = model.config();
  const auto ta = nn::to_tensor<float>(nn::prepare_slice(above, cfg.input_size, cfg.normalization));
  const auto tb = nn::to_tensor<float>(nn::prepare_slice(below, cfg.input_size, cfg.normalization));
  const LatentCode za = model.encode(ta, nn::Mode::eval);
  const LatentCode zb = model.encode(tb, nn::Mode::eval);

  std::vector<SliceImage> out;
  for (int k = 0; k < gap.n_missing; ++k) {
    const double alpha = gap.alpha(k);
    const auto decoded = model.decode(blend_latents(za, zb, alpha), nn::Mode::eval);
    const SliceImage restored = center_fit(nn::from_tensor(decoded), above.width, above.height);
    out.push_back(histogram_match(restored, weighted_average(above, below, alpha), hist_mask));
  }
  return out;
}

}  // namespace

std::vector<SliceImage> infer_gap_signal(nn::Autoencoder<float>& model, const Volume4D& v, const GapSpec& gap,
                                         const InferenceOptions& opts) {
  check_gap(v, gap.gap_start, gap.n_missing);
  if (gap.n_missing < 1) fail(ErrorKind::InvalidArgument, "gap must contain at least one slice");
  const int channels = model.config().input_channels;

  std::optional<SliceImage> hist_mask;
  if (opts.histogram_mask) {
    const auto& m = *opts.histogram_mask;
    if (m.nx() != v.nx() || m.ny() != v.ny() || m.nz() != v.nz())
      fail(ErrorKind::Shape, "histogram mask grid does not match volume");
    // Union of the two neighbor slices' masks.
    hist_mask = m.slice(gap.above(), {0});
    const SliceImage mb = m.slice(gap.below(), {0});
    for (std::size_t i = 0; i < hist_mask->data.size(); ++i)
      hist_mask->data[i] = std::max(hist_mask->data[i], mb.data[i]);
  }
  const SliceImage* hm = hist_mask ? &*hist_mask : nullptr;

  if (channels == v.nv())
    return infer_group(model, v.slice(gap.above()), v.slice(gap.below()), gap, hm);
  if (channels != 1)
    fail(ErrorKind::Shape, "model has " + std::to_string(channels) + " channels but the volume has " +
                               std::to_string(v.nv()));

  std::vector<SliceImage> out(gap.n_missing, SliceImage(v.nx(), v.ny(), v.nv()));
  for (int vol = 0; vol < v.nv(); ++vol) {
    const auto parts = infer_group(model, v.slice(gap.above(), {vol}), v.slice(gap.below(), {vol}), gap, hm);
    for (int k = 0; k < gap.n_missing; ++k)
      std::copy(parts[k].data.begin(), parts[k].data.end(), out[k].data.begin() + vol * out[k].plane());
  }
  return out;
}

ShGapResult infer_gap_sh(nn::Autoencoder<float>& model_sh, nn::Autoencoder<float>& model_b0, const Volume4D& shell,
                         const Volume4D& b0, const GradientTable& g_shell, const GapSpec& gap, int lmax,
                         double lambda_reg, const InferenceOptions& opts) {
  check_gap(shell, gap.gap_start, gap.n_missing);
  const int r = sh_coeff_count(lmax);
  if (model_sh.config().input_channels != r)
    fail(ErrorKind::Shape, "SH model expects " + std::to_string(model_sh.config().input_channels) +
                               " channels but lmax=" + std::to_string(lmax) + " gives " + std::to_string(r));
  if (model_b0.config().input_channels != 1 && model_b0.config().input_channels != b0.nv())
    fail(ErrorKind::Shape, "b0 model channel count does not match the b0 volume");

  const ShCoeffVolume sh = fit_sh(shell, g_shell, lmax, lambda_reg);
  ShGapResult out;
  out.sh = infer_gap_signal(model_sh, sh.coeffs, gap, opts);

  const ShBasisMatrix basis = sh_basis_matrix(g_shell.bvecs, lmax);
  for (const auto& s : out.sh) out.dwi.push_back(project_sh_slice(basis, s));
  out.b0 = infer_gap_signal(model_b0, b0, gap, opts);
  return out;
}

Volume4D fill_gap(const Volume4D& v, const GapSpec& gap, const std::vector<SliceImage>& slices) {
  if (static_cast<int>(slices.size()) != gap.n_missing) fail(ErrorKind::Shape, "wrong number of gap slices");
  Volume4D out = v;
  for (int k = 0; k < gap.n_missing; ++k) out.set_slice(gap.gap_start + k, slices[k]);
  return out;
}

}  // namespace dsae
