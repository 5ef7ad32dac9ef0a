#include "dsae/nn/model.hpp"

#include <algorithm>
#include <random>

namespace dsae::nn {

std::string to_string(Upsampling u) { return u == Upsampling::nearest ? "nearest" : "transposed"; }
std::string to_string(Normalization n) { return n == Normalization::per_channel ? "per_channel" : "joint"; }

Upsampling parse_upsampling(const std::string& s) {
  if (s == "nearest") return Upsampling::nearest;
  if (s == "transposed") return Upsampling::transposed;
  fail(ErrorKind::InvalidArgument, "unknown upsampling '" + s + "'");
}

Normalization parse_normalization(const std::string& s) {
  if (s == "per_channel") return Normalization::per_channel;
  if (s == "joint") return Normalization::joint;
  fail(ErrorKind::InvalidArgument, "unknown normalization '" + s + "'");
}

void ModelConfig::validate() const {
  if (input_channels < 1) fail(ErrorKind::InvalidArgument, "input_channels must be positive");
  if (latent_maps < 1) fail(ErrorKind::InvalidArgument, "latent_maps must be positive");
  if (input_size < 16 || input_size % 16 != 0)
    fail(ErrorKind::InvalidArgument, "input_size must be a positive multiple of 16");
  if (width_divisor < 1) fail(ErrorKind::InvalidArgument, "width_divisor must be >= 1");
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0))
    fail(ErrorKind::InvalidArgument, "bn_momentum must lie in [0, 1)");
  if (!(bn_epsilon > 0.0)) fail(ErrorKind::InvalidArgument, "bn_epsilon must be positive");
}

namespace {

int scaled(int width, int divisor) { return std::max(1, width / divisor); }

template <typename T>
void add_conv_bn_elu(Sequential<T>& seq, int in, int out, const std::string& name,
                     const ModelConfig& cfg) {
  seq.add(std::make_unique<Conv2d<T>>(in, out, 3, name + ".conv"));
  seq.add(std::make_unique<BatchNorm2d<T>>(out, cfg.bn_momentum, cfg.bn_epsilon, name + ".bn"));
  seq.add(std::make_unique<Elu<T>>());
}

}  // namespace

template <typename T>
Autoencoder<T>::Autoencoder(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  build();
  initialize();
}

template <typename T>
Autoencoder<T>::Autoencoder(const ModelParams& p) : cfg_(p.config) {
  cfg_.validate();
  build();
  import_params(p);
}

template <typename T>
void Autoencoder<T>::build() {
  const int d = cfg_.width_divisor;
  int prev = cfg_.input_channels;
  const int enc_widths[4] = {32, 64, 128, 256};
  for (int b = 0; b < 4; ++b) {
    const int w = scaled(enc_widths[b], d);
    const std::string block = "enc" + std::to_string(b + 1);
    add_conv_bn_elu(encoder_, prev, w, block + ".l1", cfg_);
    add_conv_bn_elu(encoder_, w, w, block + ".l2", cfg_);
    prev = w;
    if (b == 3) {
      add_conv_bn_elu(encoder_, prev, scaled(512, d), block + ".l3", cfg_);
      add_conv_bn_elu(encoder_, scaled(512, d), scaled(256, d), block + ".l4", cfg_);
      add_conv_bn_elu(encoder_, scaled(256, d), cfg_.latent_maps, block + ".latent", cfg_);
      prev = cfg_.latent_maps;
    }
    encoder_.add(std::make_unique<AvgPool2<T>>());
  }

  add_conv_bn_elu(decoder_, prev, scaled(512, d), "dec0.l1", cfg_);
  prev = scaled(512, d);
  const int dec_widths[4] = {256, 128, 64, 32};
  for (int b = 0; b < 4; ++b) {
    const int w = scaled(dec_widths[b], d);
    const std::string block = "dec" + std::to_string(b + 1);
    if (cfg_.upsample == Upsampling::nearest) {
      decoder_.add(std::make_unique<Upsample2<T>>());
      add_conv_bn_elu(decoder_, prev, w, block + ".l1", cfg_);
    } else {
      decoder_.add(std::make_unique<ConvTranspose2d<T>>(prev, w, block + ".up"));
      decoder_.add(std::make_unique<BatchNorm2d<T>>(w, cfg_.bn_momentum, cfg_.bn_epsilon, block + ".up.bn"));
      decoder_.add(std::make_unique<Elu<T>>());
    }
    add_conv_bn_elu(decoder_, w, w, block + ".l2", cfg_);
    prev = w;
  }
  decoder_.add(std::make_unique<Conv2d<T>>(prev, cfg_.input_channels, 1, "out.conv"));
  decoder_.add(std::make_unique<Sigmoid<T>>());
}

template <typename T>
void Autoencoder<T>::initialize() {
  std::mt19937_64 rng(cfg_.seed);
  for (auto* seq : {&encoder_, &decoder_})
    for (std::size_t i = 0; i < seq->size(); ++i) {
      auto& l = seq->layer(i);
      if (auto* c = dynamic_cast<Conv2d<T>*>(&l)) c->init_he_uniform(rng);
      if (auto* c = dynamic_cast<ConvTranspose2d<T>*>(&l)) c->init_he_uniform(rng);
    }
}

template <typename T>
std::array<int, 3> Autoencoder<T>::latent_shape() const {
  return {cfg_.latent_maps, cfg_.latent_size(), cfg_.latent_size()};
}

template <typename T>
Tensor<T> Autoencoder<T>::encode(const Tensor<T>& x, Mode mode) {
  if (x.c != cfg_.input_channels)
    fail(ErrorKind::Shape, "model expects " + std::to_string(cfg_.input_channels) + " channels, got " +
                               std::to_string(x.c));
  if (x.h != cfg_.input_size || x.w != cfg_.input_size)
    fail(ErrorKind::Shape, "model expects " + std::to_string(cfg_.input_size) + "x" +
                               std::to_string(cfg_.input_size) + " slices, got " + std::to_string(x.w) +
                               "x" + std::to_string(x.h));
  return encoder_.forward(x, mode);
}

template <typename T>
Tensor<T> Autoencoder<T>::decode(const Tensor<T>& z, Mode mode) {
  const auto s = latent_shape();
  if (z.c != s[0] || z.h != s[1] || z.w != s[2]) fail(ErrorKind::Shape, "latent shape mismatch");
  return decoder_.forward(z, mode);
}

template <typename T>
Tensor<T> Autoencoder<T>::forward(const Tensor<T>& x, Mode mode, Tensor<T>* latent) {
  Tensor<T> z = encode(x, mode);
  Tensor<T> y = decode(z, mode);
  if (latent) *latent = std::move(z);
  return y;
}

template <typename T>
Tensor<T> Autoencoder<T>::backward(const Tensor<T>& g) {
  return encoder_.backward(decoder_.backward(g));
}

template <typename T>
std::vector<Param<T>*> Autoencoder<T>::params() {
  auto p = encoder_.params();
  for (auto* q : decoder_.params()) p.push_back(q);
  return p;
}

template <typename T>
std::vector<Param<T>*> Autoencoder<T>::buffers() {
  auto p = encoder_.buffers();
  for (auto* q : decoder_.buffers()) p.push_back(q);
  return p;
}

template <typename T>
void Autoencoder<T>::zero_grad() {
  for (auto* p : params()) std::fill(p->grad.begin(), p->grad.end(), T(0));
}

template <typename T>
ModelParams Autoencoder<T>::export_params() {
  ModelParams out;
  out.config = cfg_;
  auto add = [&](Param<T>* p) {
    out.tensors.push_back({p->name, p->shape, std::vector<float>(p->value.begin(), p->value.end())});
  };
  for (auto* p : params()) add(p);
  for (auto* p : buffers()) add(p);
  return out;
}

template <typename T>
void Autoencoder<T>::import_params(const ModelParams& src) {
  if (!(src.config == cfg_)) {
    // Only the seed may differ; everything else shapes the network.
    ModelConfig a = src.config, b = cfg_;
    a.seed = b.seed = 0;
    if (!(a == b)) fail(ErrorKind::Shape, "parameter set was produced for a different configuration");
  }
  std::vector<Param<T>*> all = params();
  for (auto* p : buffers()) all.push_back(p);
  if (all.size() != src.tensors.size()) fail(ErrorKind::Shape, "parameter tensor count mismatch");
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto& t = src.tensors[i];
    if (t.name != all[i]->name || t.shape != all[i]->shape || t.data.size() != all[i]->size())
      fail(ErrorKind::Shape, "parameter tensor '" + t.name + "' does not match '" + all[i]->name + "'");
    std::copy(t.data.begin(), t.data.end(), all[i]->value.begin());
  }
}

template <typename T>
double mse_loss(const Tensor<T>& output, const Tensor<T>& target, Tensor<T>* grad) {
  require_shape(output, target, "loss: output and target shapes differ");
  const double n = static_cast<double>(output.size());
  double sum = 0.0;
  if (grad) *grad = Tensor<T>(output.n, output.c, output.h, output.w);
  for (std::size_t i = 0; i < output.size(); ++i) {
    const double d = static_cast<double>(output.data[i]) - static_cast<double>(target.data[i]);
    sum += d * d;
    if (grad) grad->data[i] = static_cast<T>(2.0 * d / n);
  }
  return sum / n;
}

template <typename T>
LossAndGrads<T> loss_and_grads(Autoencoder<T>& model, const Tensor<T>& input, const Tensor<T>* target) {
  if (input.n < 1) fail(ErrorKind::InsufficientData, "empty batch");
  model.zero_grad();
  const Tensor<T> y = model.forward(input, Mode::train);
  Tensor<T> g;
  LossAndGrads<T> out;
  out.mse = mse_loss(y, target ? *target : input, &g);
  model.backward(g);
  for (auto* p : model.params()) out.grads.emplace_back(p->grad.begin(), p->grad.end());
  return out;
}

template class Autoencoder<float>;
template class Autoencoder<double>;
template double mse_loss(const Tensor<float>&, const Tensor<float>&, Tensor<float>*);
template double mse_loss(const Tensor<double>&, const Tensor<double>&, Tensor<double>*);
template LossAndGrads<float> loss_and_grads(Autoencoder<float>&, const Tensor<float>&, const Tensor<float>*);
template LossAndGrads<double> loss_and_grads(Autoencoder<double>&, const Tensor<double>&,
                                             const Tensor<double>*);

}  // namespace dsae::nn
