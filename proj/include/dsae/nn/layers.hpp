#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "dsae/nn/tensor.hpp"

namespace dsae::nn {

enum class Mode { train, eval };

/// Trainable tensor (or persistent buffer) with its accumulated gradient.
template <typename T>
struct Param {
  std::string name;
  std::vector<int> shape;
  Buffer<T> value;
  Buffer<T> grad;

  Param() = default;
  Param(std::string n, std::vector<int> s, T fill = T(0));
  std::size_t size() const { return value.size(); }
};

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  /// Gradient w.r.t. the input of the most recent forward call; parameter
  /// gradients are accumulated into Param::grad.
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  virtual std::vector<Param<T>*> params() { return {}; }
  /// Non-trainable persistent state (batch-norm running statistics).
  virtual std::vector<Param<T>*> buffers() { return {}; }
  virtual std::string kind() const = 0;
};

/// Square kernel (1x1 or 3x3), stride 1, zero "same" padding, with bias.
/// Weights are laid out (out, in, ky, kx).
template <typename T>
class Conv2d : public Layer<T> {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, std::string name);
  void init_he_uniform(std::mt19937_64& rng);
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }
  std::string kind() const override { return "conv2d"; }
  int out_channels() const { return out_; }

 private:
  int in_, out_, k_;
  Param<T> weight_, bias_;
  Tensor<T> input_;
};

/// 3x3 transposed convolution with stride 2 doubling the spatial size.
/// Weights are laid out (out, ky, kx, in).
template <typename T>
class ConvTranspose2d : public Layer<T> {
 public:
  ConvTranspose2d(int in_channels, int out_channels, std::string name);
  void init_he_uniform(std::mt19937_64& rng);
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::vector<Param<T>*> params() override { return {&weight_, &bias_}; }
  std::string kind() const override { return "conv_transpose2d"; }

 private:
  int in_, out_;
  Param<T> weight_, bias_;
  Tensor<T> input_;
};

/// Per-channel batch normalization. Train mode normalizes with biased batch
/// statistics and updates running = momentum * running + (1 - momentum) * batch.
template <typename T>
class BatchNorm2d : public Layer<T> {
 public:
  BatchNorm2d(int channels, double momentum, double epsilon, std::string name);
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::vector<Param<T>*> params() override { return {&gamma_, &beta_}; }
  std::vector<Param<T>*> buffers() override { return {&running_mean_, &running_var_}; }
  std::string kind() const override { return "batchnorm"; }

 private:
  int channels_;
  double momentum_, epsilon_;
  Param<T> gamma_, beta_, running_mean_, running_var_;
  Mode last_mode_ = Mode::eval;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

template <typename T>
class Elu : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::string kind() const override { return "elu"; }

 private:
  Tensor<T> output_;
};

template <typename T>
class Sigmoid : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::string kind() const override { return "sigmoid"; }

 private:
  Tensor<T> output_;
};

/// 2x2 average pooling, stride 2.
template <typename T>
class AvgPool2 : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::string kind() const override { return "avgpool2"; }
};

/// 2x nearest-neighbor upsampling.
template <typename T>
class Upsample2 : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  std::string kind() const override { return "upsample2"; }
};

/// Layers applied in order; backward runs them in reverse.
template <typename T>
class Sequential {
 public:
  void add(std::unique_ptr<Layer<T>> layer) { layers_.push_back(std::move(layer)); }
  Tensor<T> forward(const Tensor<T>& x, Mode mode);
  Tensor<T> backward(const Tensor<T>& grad_out);
  std::vector<Param<T>*> params();
  std::vector<Param<T>*> buffers();
  std::size_t size() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

}  // namespace dsae::nn
