#pragma once

#include <vector>

#include "dsae/gradients.hpp"
#include "dsae/nn/model.hpp"
#include "dsae/volume.hpp"

namespace dsae {

/// N consecutive missing slices starting at gap_start.
struct GapSpec {
  int gap_start = 1;
  int n_missing = 1;

  /// Weight on the neighbor below the gap (gap_start - 1) for missing slice k
  /// (0-based): 1/2 for N = 1; 2/3 then 1/3 for N = 2. In general
  /// (N + 1 - (k + 1)) / (N + 1).
  double alpha(int k) const;
  int above() const { return gap_start - 1; }
  int below() const { return gap_start + n_missing; }
};

using LatentCode = nn::Tensor<float>;

/// alpha * a + (1 - alpha) * b, elementwise.
LatentCode blend_latents(const LatentCode& a, const LatentCode& b, double alpha);

/// alpha * a + (1 - alpha) * b for slices.
SliceImage weighted_average(const SliceImage& a, const SliceImage& b, double alpha);

/// Per-channel histogram matching by exact sorted-quantile mapping: each
/// source value is sent to the reference quantile of its (tie-averaged) rank.
/// With a single-channel `mask`, only masked pixels take part and unmasked
/// pixels are copied from the reference.
SliceImage histogram_match(const SliceImage& source, const SliceImage& reference,
                           const SliceImage* mask = nullptr);

struct InferenceOptions {
  /// Restrict histogram matching to mask > 0 pixels.
  const Volume4D* histogram_mask = nullptr;
};

/// Latent-blending reconstruction of the gap slices of `v`. A model with as
/// many channels as `v` has volumes runs once over all channels; a
/// single-channel model runs once per volume.
std::vector<SliceImage> infer_gap_signal(nn::Autoencoder<float>& model, const Volume4D& v, const GapSpec& gap,
                                         const InferenceOptions& opts = {});

struct ShGapResult {
  std::vector<SliceImage> dwi;  // on the shell's directions
  std::vector<SliceImage> b0;
  std::vector<SliceImage> sh;   // inferred coefficients
};

/// SH-domain reconstruction: fit SH to the shell, infer the coefficient
/// slices with the SH model, project back onto the shell directions, and
/// infer the b0 slices with the b0 model.
ShGapResult infer_gap_sh(nn::Autoencoder<float>& model_sh, nn::Autoencoder<float>& model_b0, const Volume4D& shell,
                         const Volume4D& b0, const GradientTable& g_shell, const GapSpec& gap, int lmax = 4,
                         double lambda_reg = 0.0, const InferenceOptions& opts = {});

/// Copy of `v` with the gap slices replaced.
Volume4D fill_gap(const Volume4D& v, const GapSpec& gap, const std::vector<SliceImage>& slices);

}  // namespace dsae
