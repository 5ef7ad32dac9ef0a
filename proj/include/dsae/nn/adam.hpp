#pragma once

#include <vector>

#include "dsae/nn/layers.hpp"

namespace dsae::nn {

struct AdamConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
};

/// One bias-corrected Adam update using each parameter's accumulated grad.
/// `step` is the 1-based update count.
template <typename T>
void adam_step(const std::vector<Param<T>*>& params, AdamState<T>& state, long step, const AdamConfig& cfg);

}  // namespace dsae::nn
