#include "dsae/nn/adam.hpp"

#include <cmath>

namespace dsae::nn {

template <typename T>
void adam_step(const std::vector<Param<T>*>& params, AdamState<T>& state, long step, const AdamConfig& cfg) {
  if (step < 1) fail(ErrorKind::InvalidArgument, "Adam step count starts at 1");
  if (state.m.empty()) {
    for (auto* p : params) {
      state.m.emplace_back(p->size(), T(0));
      state.v.emplace_back(p->size(), T(0));
    }
  }
  if (state.m.size() != params.size()) fail(ErrorKind::Shape, "Adam state does not match parameters");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = cfg.lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.epsilon);
      p.value[i] = static_cast<T>(p.value[i] - update);
    }
  }
}

template void adam_step(const std::vector<Param<float>*>&, AdamState<float>&, long, const AdamConfig&);
template void adam_step(const std::vector<Param<double>*>&, AdamState<double>&, long, const AdamConfig&);

}  // namespace dsae::nn
