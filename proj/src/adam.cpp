#include "director/adam.hpp"

#include <cmath>

namespace director {

void OptimizerConfig::validate() const {
  if (lr <= 0 || weight_decay < 0 || eps <= 0)
    throw ConfigError("optimizer: lr/eps must be positive, weight decay non-negative");
  if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1)
    throw ConfigError("optimizer: betas must lie in (0,1)");
}

Adam::Adam(OptimizerConfig cfg, std::vector<Parameter*> params)
    : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
}

void adam_update(Parameter& p, const OptimizerConfig& cfg, float grad_scale) {
  if (p.grad.empty()) return;
  p.step += 1;
  const float bc1 = 1.0f - std::pow(cfg.beta1, static_cast<float>(p.step));
  const float bc2 = 1.0f - std::pow(cfg.beta2, static_cast<float>(p.step));
  float* value = p.value.data_mut();
  float* m = p.adam_m.data_mut();
  float* v = p.adam_v.data_mut();
  const float* g = p.grad.data();
  const int64_t n = p.value.numel();
  for (int64_t i = 0; i < n; ++i) {
    value[i] -= cfg.lr * cfg.weight_decay * value[i];
    const float gi = g[i] * grad_scale;
    m[i] = cfg.beta1 * m[i] + (1.0f - cfg.beta1) * gi;
    v[i] = cfg.beta2 * v[i] + (1.0f - cfg.beta2) * gi * gi;
    const float mhat = m[i] / bc1;
    const float vhat = v[i] / bc2;
    value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
  p.zero_grad();
}

void Adam::step() {
  float scale = 1.0f;
  if (cfg_.clip_norm > 0) {
    double sq = 0;
    for (Parameter* p : params_) {
      if (p->grad.empty()) continue;
      for (int64_t i = 0; i < p->grad.numel(); ++i)
        sq += double(p->grad.data()[i]) * p->grad.data()[i];
    }
    const double norm = std::sqrt(sq);
    if (norm > cfg_.clip_norm) scale = static_cast<float>(cfg_.clip_norm / norm);
  }
  for (Parameter* p : params_) adam_update(*p, cfg_, scale);
}

}  // namespace director
