#pragma once

#include <vector>

#include "director/nn.hpp"

namespace director {

struct OptimizerConfig {
  float lr = 1e-4f;
  float weight_decay = 1e-2f;
  float eps = 1e-6f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  // Global gradient-norm clip over the parameter group; 0 disables.
  float clip_norm = 0.0f;

  void validate() const;
};

// Adam with bias correction and decoupled weight decay. Weight decay shrinks
// the value before the moment update is applied.
class Adam {
 public:
  Adam(OptimizerConfig cfg, std::vector<Parameter*> params);

  // Applies one update from the accumulated gradients, then clears them.
  // Parameters without a gradient keep their moments and value untouched.
  void step();

  const std::vector<Parameter*>& params() const { return params_; }
  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::vector<Parameter*> params_;
};

// Single-parameter update with explicit config; the class above loops this.
void adam_update(Parameter& p, const OptimizerConfig& cfg, float grad_scale = 1.0f);

}  // namespace director
