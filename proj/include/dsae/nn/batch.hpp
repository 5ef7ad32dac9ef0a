#pragma once

#include <vector>

#include "dsae/nn/tensor.hpp"
#include "dsae/volume.hpp"

namespace dsae::nn {

/// Stacks same-shaped slices into an NCHW batch.
template <typename T>
Tensor<T> to_tensor(const std::vector<const SliceImage*>& slices) {
  if (slices.empty()) fail(ErrorKind::InsufficientData, "empty batch");
  const SliceImage& f = *slices.front();
  Tensor<T> t(static_cast<int>(slices.size()), f.channels, f.height, f.width);
  for (std::size_t i = 0; i < slices.size(); ++i) {
    const SliceImage& s = *slices[i];
    if (s.width != f.width || s.height != f.height || s.channels != f.channels)
      fail(ErrorKind::Shape, "slices in a batch must share one shape");
    std::copy(s.data.begin(), s.data.end(), t.sample(static_cast<int>(i)));
  }
  return t;
}

template <typename T>
Tensor<T> to_tensor(const SliceImage& s) {
  return to_tensor<T>(std::vector<const SliceImage*>{&s});
}

template <typename T>
SliceImage from_tensor(const Tensor<T>& t, int index = 0) {
  SliceImage s(t.w, t.h, t.c);
  const T* src = t.sample(index);
  std::copy(src, src + t.sample_size(), s.data.begin());
  return s;
}

}  // namespace dsae::nn
