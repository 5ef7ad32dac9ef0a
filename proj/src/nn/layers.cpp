#include "dsae/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

namespace dsae::nn {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

// col[(c * k * k + ky * k + kx), y * w + x] = in[c, y + ky - pad, x + kx - pad]
template <typename T>
void im2col(const T* in, int c, int h, int w, int k, Buffer<T>& col) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  col.assign(static_cast<std::size_t>(c) * k * k * hw, T(0));
  for (int ci = 0; ci < c; ++ci)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col.data() + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * hw;
        const T* src = in + ci * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          const int x0 = std::max(0, pad - kx);
          const int x1 = std::min(w, w + pad - kx);
          for (int x = x0; x < x1; ++x) dst[y * w + x] = src[sy * w + x + kx - pad];
        }
      }
}

template <typename T>
void col2im(const Buffer<T>& col, int c, int h, int w, int k, T* out) {
  const int pad = k / 2;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  std::fill(out, out + c * hw, T(0));
  for (int ci = 0; ci < c; ++ci)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* src = col.data() + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * hw;
        T* dst = out + ci * hw;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          const int x0 = std::max(0, pad - kx);
          const int x1 = std::min(w, w + pad - kx);
          for (int x = x0; x < x1; ++x) dst[sy * w + x + kx - pad] += src[y * w + x];
        }
      }
}

template <typename T>
void he_uniform(Buffer<T>& w, int fan_in, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (T& v : w) v = static_cast<T>(dist(rng));
}

}  // namespace

template <typename T>
Param<T>::Param(std::string n, std::vector<int> s, T fill) : name(std::move(n)), shape(std::move(s)) {
  std::size_t count = 1;
  for (int d : shape) count *= static_cast<std::size_t>(d);
  value.assign(count, fill);
  grad.assign(count, T(0));
}

// ---- Conv2d ----

template <typename T>
Conv2d<T>::Conv2d(int in_channels, int out_channels, int kernel, std::string name)
    : in_(in_channels),
      out_(out_channels),
      k_(kernel),
      weight_(name + ".weight", {out_channels, in_channels, kernel, kernel}),
      bias_(name + ".bias", {out_channels}) {
  if (kernel != 1 && kernel != 3) fail(ErrorKind::InvalidArgument, "conv kernel must be 1 or 3");
}

template <typename T>
void Conv2d<T>::init_he_uniform(std::mt19937_64& rng) {
  he_uniform(weight_.value, in_ * k_ * k_, rng);
  std::fill(bias_.value.begin(), bias_.value.end(), T(0));
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x, Mode) {
  if (x.c != in_) fail(ErrorKind::Shape, weight_.name + ": input channel mismatch");
  input_ = x;
  Tensor<T> y(x.n, out_, x.h, x.w);
  const Eigen::Index hw = static_cast<Eigen::Index>(x.plane());
  const Eigen::Index kk = static_cast<Eigen::Index>(in_) * k_ * k_;
  ConstMapMat<T> wm(weight_.value.data(), out_, kk);
  Buffer<T> col;
  for (int i = 0; i < x.n; ++i) {
    MapMat<T> out(y.sample(i), out_, hw);
    if (k_ == 1) {
      out.noalias() = wm * ConstMapMat<T>(x.sample(i), in_, hw);
    } else {
      im2col(x.sample(i), in_, x.h, x.w, k_, col);
      out.noalias() = wm * ConstMapMat<T>(col.data(), kk, hw);
    }
    for (int o = 0; o < out_; ++o) out.row(o).array() += bias_.value[o];
  }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& g) {
  const Tensor<T>& x = input_;
  Tensor<T> dx(x.n, x.c, x.h, x.w);
  const Eigen::Index hw = static_cast<Eigen::Index>(x.plane());
  const Eigen::Index kk = static_cast<Eigen::Index>(in_) * k_ * k_;
  ConstMapMat<T> wm(weight_.value.data(), out_, kk);
  MapMat<T> dw(weight_.grad.data(), out_, kk);
  Buffer<T> col, dcol(static_cast<std::size_t>(kk * hw));
  for (int i = 0; i < x.n; ++i) {
    ConstMapMat<T> gi(g.sample(i), out_, hw);
    for (int o = 0; o < out_; ++o) bias_.grad[o] += gi.row(o).sum();
    if (k_ == 1) {
      ConstMapMat<T> xi(x.sample(i), in_, hw);
      dw.noalias() += gi * xi.transpose();
      MapMat<T>(dx.sample(i), in_, hw).noalias() = wm.transpose() * gi;
    } else {
      im2col(x.sample(i), in_, x.h, x.w, k_, col);
      dw.noalias() += gi * ConstMapMat<T>(col.data(), kk, hw).transpose();
      MapMat<T>(dcol.data(), kk, hw).noalias() = wm.transpose() * gi;
      col2im(dcol, in_, x.h, x.w, k_, dx.sample(i));
    }
  }
  return dx;
}

// ---- ConvTranspose2d ----
// out[o, 2y + ky, 2x + kx] += W[o, ky, kx, c] * in[c, y, x] for in-range outputs.

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(int in_channels, int out_channels, std::string name)
    : in_(in_channels),
      out_(out_channels),
      weight_(name + ".weight", {out_channels, 3, 3, in_channels}),
      bias_(name + ".bias", {out_channels}) {}

template <typename T>
void ConvTranspose2d<T>::init_he_uniform(std::mt19937_64& rng) {
  he_uniform(weight_.value, in_ * 9, rng);
  std::fill(bias_.value.begin(), bias_.value.end(), T(0));
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::forward(const Tensor<T>& x, Mode) {
  if (x.c != in_) fail(ErrorKind::Shape, weight_.name + ": input channel mismatch");
  input_ = x;
  const int oh = 2 * x.h, ow = 2 * x.w;
  Tensor<T> y(x.n, out_, oh, ow);
  const Eigen::Index hw = static_cast<Eigen::Index>(x.plane());
  ConstMapMat<T> wm(weight_.value.data(), static_cast<Eigen::Index>(out_) * 9, in_);
  RowMat<T> cols;
  for (int i = 0; i < x.n; ++i) {
    cols.noalias() = wm * ConstMapMat<T>(x.sample(i), in_, hw);
    T* out = y.sample(i);
    for (int o = 0; o < out_; ++o) {
      T* plane = out + static_cast<std::size_t>(o) * oh * ow;
      std::fill(plane, plane + static_cast<std::size_t>(oh) * ow, bias_.value[o]);
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          const T* src = cols.row((o * 3 + ky) * 3 + kx).data();
          for (int yy = 0; yy < x.h; ++yy) {
            const int oy = 2 * yy + ky;
            if (oy >= oh) continue;
            for (int xx = 0; xx < x.w; ++xx) {
              const int ox = 2 * xx + kx;
              if (ox < ow) plane[oy * ow + ox] += src[yy * x.w + xx];
            }
          }
        }
    }
  }
  return y;
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::backward(const Tensor<T>& g) {
  const Tensor<T>& x = input_;
  const int oh = 2 * x.h, ow = 2 * x.w;
  Tensor<T> dx(x.n, x.c, x.h, x.w);
  const Eigen::Index hw = static_cast<Eigen::Index>(x.plane());
  ConstMapMat<T> wm(weight_.value.data(), static_cast<Eigen::Index>(out_) * 9, in_);
  MapMat<T> dw(weight_.grad.data(), static_cast<Eigen::Index>(out_) * 9, in_);
  RowMat<T> gcols(static_cast<Eigen::Index>(out_) * 9, hw);
  for (int i = 0; i < x.n; ++i) {
    const T* gi = g.sample(i);
    gcols.setZero();
    for (int o = 0; o < out_; ++o) {
      const T* plane = gi + static_cast<std::size_t>(o) * oh * ow;
      T acc = T(0);
      for (std::size_t p = 0; p < static_cast<std::size_t>(oh) * ow; ++p) acc += plane[p];
      bias_.grad[o] += acc;
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          T* dst = gcols.row((o * 3 + ky) * 3 + kx).data();
          for (int yy = 0; yy < x.h; ++yy) {
            const int oy = 2 * yy + ky;
            if (oy >= oh) continue;
            for (int xx = 0; xx < x.w; ++xx) {
              const int ox = 2 * xx + kx;
              if (ox < ow) dst[yy * x.w + xx] = plane[oy * ow + ox];
            }
          }
        }
    }
    ConstMapMat<T> xi(x.sample(i), in_, hw);
    dw.noalias() += gcols * xi.transpose();
    MapMat<T>(dx.sample(i), in_, hw).noalias() = wm.transpose() * gcols;
  }
  return dx;
}

// ---- BatchNorm2d ----

template <typename T>
BatchNorm2d<T>::BatchNorm2d(int channels, double momentum, double epsilon, std::string name)
    : channels_(channels),
      momentum_(momentum),
      epsilon_(epsilon),
      gamma_(name + ".gamma", {channels}, T(1)),
      beta_(name + ".beta", {channels}, T(0)),
      running_mean_(name + ".running_mean", {channels}, T(0)),
      running_var_(name + ".running_var", {channels}, T(1)) {}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, Mode mode) {
  if (x.c != channels_) fail(ErrorKind::Shape, gamma_.name + ": channel mismatch");
  last_mode_ = mode;
  Tensor<T> y(x.n, x.c, x.h, x.w);
  xhat_ = Tensor<T>(x.n, x.c, x.h, x.w);
  inv_std_.assign(channels_, T(0));
  const std::size_t hw = x.plane();
  const double count = static_cast<double>(x.n) * hw;
  for (int c = 0; c < channels_; ++c) {
    double mean, var;
    if (mode == Mode::train) {
      double s = 0.0;
      for (int i = 0; i < x.n; ++i) {
        const T* p = x.sample(i) + c * hw;
        for (std::size_t k = 0; k < hw; ++k) s += p[k];
      }
      mean = s / count;
      double ss = 0.0;
      for (int i = 0; i < x.n; ++i) {
        const T* p = x.sample(i) + c * hw;
        for (std::size_t k = 0; k < hw; ++k) ss += (p[k] - mean) * (p[k] - mean);
      }
      var = ss / count;
      running_mean_.value[c] =
          static_cast<T>(momentum_ * running_mean_.value[c] + (1.0 - momentum_) * mean);
      running_var_.value[c] =
          static_cast<T>(momentum_ * running_var_.value[c] + (1.0 - momentum_) * var);
    } else {
      mean = running_mean_.value[c];
      var = running_var_.value[c];
    }
    const T inv = static_cast<T>(1.0 / std::sqrt(var + epsilon_));
    inv_std_[c] = inv;
    const T m = static_cast<T>(mean);
    const T gm = gamma_.value[c], bt = beta_.value[c];
    for (int i = 0; i < x.n; ++i) {
      const T* p = x.sample(i) + c * hw;
      T* xh = xhat_.sample(i) + c * hw;
      T* q = y.sample(i) + c * hw;
      for (std::size_t k = 0; k < hw; ++k) {
        xh[k] = (p[k] - m) * inv;
        q[k] = gm * xh[k] + bt;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& g) {
  Tensor<T> dx(g.n, g.c, g.h, g.w);
  const std::size_t hw = g.plane();
  const double count = static_cast<double>(g.n) * hw;
  for (int c = 0; c < channels_; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (int i = 0; i < g.n; ++i) {
      const T* gp = g.sample(i) + c * hw;
      const T* xh = xhat_.sample(i) + c * hw;
      for (std::size_t k = 0; k < hw; ++k) {
        sum_g += gp[k];
        sum_gx += gp[k] * xh[k];
      }
    }
    beta_.grad[c] += static_cast<T>(sum_g);
    gamma_.grad[c] += static_cast<T>(sum_gx);
    const double scale = static_cast<double>(gamma_.value[c]) * inv_std_[c];
    for (int i = 0; i < g.n; ++i) {
      const T* gp = g.sample(i) + c * hw;
      const T* xh = xhat_.sample(i) + c * hw;
      T* d = dx.sample(i) + c * hw;
      if (last_mode_ == Mode::train) {
        for (std::size_t k = 0; k < hw; ++k)
          d[k] = static_cast<T>(scale * (gp[k] - sum_g / count - xh[k] * sum_gx / count));
      } else {
        for (std::size_t k = 0; k < hw; ++k) d[k] = static_cast<T>(scale * gp[k]);
      }
    }
  }
  return dx;
}

// ---- activations, pooling ----

template <typename T>
Tensor<T> Elu<T>::forward(const Tensor<T>& x, Mode) {
  output_ = x;
  for (T& v : output_.data) v = v > T(0) ? v : std::expm1(v);
  return output_;
}

template <typename T>
Tensor<T> Elu<T>::backward(const Tensor<T>& g) {
  Tensor<T> dx = g;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (!(output_.data[i] > T(0))) dx.data[i] *= output_.data[i] + T(1);
  return dx;
}

template <typename T>
Tensor<T> Sigmoid<T>::forward(const Tensor<T>& x, Mode) {
  // Keep the output strictly inside (0, 1) even where the exact value rounds.
  const T lo = std::numeric_limits<T>::min();
  const T hi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
  output_ = x;
  for (T& v : output_.data) v = std::clamp(T(1) / (T(1) + std::exp(-v)), lo, hi);
  return output_;
}

template <typename T>
Tensor<T> Sigmoid<T>::backward(const Tensor<T>& g) {
  Tensor<T> dx = g;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    const T y = output_.data[i];
    dx.data[i] *= y * (T(1) - y);
  }
  return dx;
}

template <typename T>
Tensor<T> AvgPool2<T>::forward(const Tensor<T>& x, Mode) {
  if (x.h % 2 || x.w % 2) fail(ErrorKind::Shape, "average pooling needs even spatial size");
  Tensor<T> y(x.n, x.c, x.h / 2, x.w / 2);
  for (int i = 0; i < x.n; ++i)
    for (int c = 0; c < x.c; ++c)
      for (int yy = 0; yy < y.h; ++yy)
        for (int xx = 0; xx < y.w; ++xx)
          y.at(i, c, yy, xx) = T(0.25) * (x.at(i, c, 2 * yy, 2 * xx) + x.at(i, c, 2 * yy, 2 * xx + 1) +
                                          x.at(i, c, 2 * yy + 1, 2 * xx) +
                                          x.at(i, c, 2 * yy + 1, 2 * xx + 1));
  return y;
}

template <typename T>
Tensor<T> AvgPool2<T>::backward(const Tensor<T>& g) {
  Tensor<T> dx(g.n, g.c, g.h * 2, g.w * 2);
  for (int i = 0; i < g.n; ++i)
    for (int c = 0; c < g.c; ++c)
      for (int yy = 0; yy < dx.h; ++yy)
        for (int xx = 0; xx < dx.w; ++xx) dx.at(i, c, yy, xx) = T(0.25) * g.at(i, c, yy / 2, xx / 2);
  return dx;
}

template <typename T>
Tensor<T> Upsample2<T>::forward(const Tensor<T>& x, Mode) {
  Tensor<T> y(x.n, x.c, x.h * 2, x.w * 2);
  for (int i = 0; i < x.n; ++i)
    for (int c = 0; c < x.c; ++c)
      for (int yy = 0; yy < y.h; ++yy)
        for (int xx = 0; xx < y.w; ++xx) y.at(i, c, yy, xx) = x.at(i, c, yy / 2, xx / 2);
  return y;
}

template <typename T>
Tensor<T> Upsample2<T>::backward(const Tensor<T>& g) {
  Tensor<T> dx(g.n, g.c, g.h / 2, g.w / 2);
  for (int i = 0; i < g.n; ++i)
    for (int c = 0; c < g.c; ++c)
      for (int yy = 0; yy < g.h; ++yy)
        for (int xx = 0; xx < g.w; ++xx) dx.at(i, c, yy / 2, xx / 2) += g.at(i, c, yy, xx);
  return dx;
}

// ---- Sequential ----

template <typename T>
Tensor<T> Sequential<T>::forward(const Tensor<T>& x, Mode mode) {
  Tensor<T> h = x;
  for (auto& l : layers_) h = l->forward(h, mode);
  return h;
}

template <typename T>
Tensor<T> Sequential<T>::backward(const Tensor<T>& g) {
  Tensor<T> d = g;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) d = (*it)->backward(d);
  return d;
}

template <typename T>
std::vector<Param<T>*> Sequential<T>::params() {
  std::vector<Param<T>*> out;
  for (auto& l : layers_)
    for (auto* p : l->params()) out.push_back(p);
  return out;
}

template <typename T>
std::vector<Param<T>*> Sequential<T>::buffers() {
  std::vector<Param<T>*> out;
  for (auto& l : layers_)
    for (auto* p : l->buffers()) out.push_back(p);
  return out;
}

#define DSAE_INSTANTIATE(T)          \
  template struct Param<T>;          \
  template class Conv2d<T>;          \
  template class ConvTranspose2d<T>; \
  template class BatchNorm2d<T>;     \
  template class Elu<T>;             \
  template class Sigmoid<T>;         \
  template class AvgPool2<T>;        \
  template class Upsample2<T>;       \
  template class Sequential<T>;

DSAE_INSTANTIATE(float)
DSAE_INSTANTIATE(double)

}  // namespace dsae::nn
