#pragma once

#include <vector>

#include "director/autodiff.hpp"
#include "director/tensor.hpp"

namespace director {

// Lambda-return recursion, computed backward in double precision:
//   V_T = values[T],  V_t = rewards[t] + discount*((1-lambda)*values[t+1] +
//   lambda*V_{t+1})
// rewards has one entry fewer than values; the result pairs with states
// 0..T-1 (the final state only supplies the bootstrap).
std::vector<double> lambda_returns(const std::vector<double>& rewards,
                                   const std::vector<double>& values, double discount,
                                   double lambda);

// Exponential moving standard deviation of returns. The first batch
// initializes the statistic directly; afterwards it decays toward each
// batch's population std.
struct EmaNormalizer {
  double decay = 0.999;
  double floor = 1e-8;
  bool initialized = false;
  double running_std = 0.0;

  // Updates the statistic from the batch and returns the divisor
  // max(running_std, floor) that applies to returns and baselines alike.
  double update(const std::vector<double>& batch);
  double scale() const;
};

// 1/2 * mean((v - target)^2) with the targets held constant.
diff::Var critic_loss(const diff::Var& values, const Tensor& targets);

// -mean(log_prob * advantage + eta * entropy); advantages enter as constants.
diff::Var actor_loss(const diff::Var& log_probs, const Tensor& advantages,
                     const diff::Var& entropies, float eta);

// Elementwise weighted sum over advantage streams.
std::vector<double> combine_advantages(const std::vector<std::vector<double>>& streams,
                                       const std::vector<double>& weights);

double population_std(const std::vector<double>& values);

}  // namespace director
