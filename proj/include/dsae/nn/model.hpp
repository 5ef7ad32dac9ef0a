#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dsae/nn/layers.hpp"

namespace dsae::nn {

enum class Upsampling { nearest, transposed };
enum class Normalization { per_channel, joint };

struct ModelConfig {
  int input_channels = 1;
  int latent_maps = 32;
  int input_size = 128;
  Upsampling upsample = Upsampling::nearest;
  /// Divides every hidden width (not the latent width); 1 is the full model.
  int width_divisor = 1;
  double bn_momentum = 0.99;
  double bn_epsilon = 1e-3;
  std::uint64_t seed = 0;
  /// Slice normalization the model was trained with.
  Normalization normalization = Normalization::per_channel;
  /// Free-form role label ("b0", "avg-b1000", "sh4").
  std::string net;

  void validate() const;
  /// Spatial size of the latent code (input_size / 16).
  int latent_size() const { return input_size / 16; }

  bool operator==(const ModelConfig&) const = default;
};

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;

  bool operator==(const NamedTensor&) const = default;
};

/// Persistent model state: configuration plus every trainable tensor and
/// batch-norm buffer in declaration order, in single precision.
struct ModelParams {
  ModelConfig config;
  std::vector<NamedTensor> tensors;

  bool operator==(const ModelParams&) const = default;
};

/// Encoder: four blocks of two (3x3 conv, batch norm, ELU) layers with widths
/// 32, 64, 128, 256, each followed by 2x2 average pooling; the last block adds
/// three more layers of widths 512, 256 and M before its pooling. The pooled
/// M-map output is the latent code. Decoder: a 512-wide layer, then four
/// blocks that upsample by 2 and apply two layers of widths 256, 128, 64, 32,
/// then a 1x1 conv with sigmoid back to the input channel count.
template <typename T>
class Autoencoder {
 public:
  explicit Autoencoder(const ModelConfig& cfg);
  explicit Autoencoder(const ModelParams& params);

  const ModelConfig& config() const { return cfg_; }
  /// (M, latent_size, latent_size)
  std::array<int, 3> latent_shape() const;

  Tensor<T> encode(const Tensor<T>& x, Mode mode);
  Tensor<T> decode(const Tensor<T>& latent, Mode mode);
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Tensor<T>* latent = nullptr);
  /// Back-propagates through decoder then encoder (after a train forward).
  Tensor<T> backward(const Tensor<T>& grad_out);

  std::vector<Param<T>*> params();
  std::vector<Param<T>*> buffers();
  void zero_grad();

  ModelParams export_params();
  void import_params(const ModelParams& p);

 private:
  void build();
  void initialize();

  ModelConfig cfg_;
  Sequential<T> encoder_;
  Sequential<T> decoder_;
};

template <typename T>
struct LossAndGrads {
  double mse = 0.0;
  std::vector<std::vector<T>> grads;  // aligned with Autoencoder::params()
};

/// Mean squared error between `output` and `target` and its gradient.
template <typename T>
double mse_loss(const Tensor<T>& output, const Tensor<T>& target, Tensor<T>* grad = nullptr);

/// Train-mode forward/backward of the reconstruction MSE. The target defaults
/// to the input (autoencoding).
template <typename T>
LossAndGrads<T> loss_and_grads(Autoencoder<T>& model, const Tensor<T>& input,
                               const Tensor<T>* target = nullptr);

std::string to_string(Upsampling u);
std::string to_string(Normalization n);
Upsampling parse_upsampling(const std::string& s);
Normalization parse_normalization(const std::string& s);

}  // namespace dsae::nn
