#include "director/policy.hpp"

#include <cmath>

namespace director {

std::vector<double> lambda_returns(const std::vector<double>& rewards,
                                   const std::vector<double>& values, double discount,
                                   double lambda) {
  if (values.size() != rewards.size() + 1)
    throw ContractError("lambda_returns: need len(values) == len(rewards)+1");
  if (discount < 0 || discount > 1 || lambda < 0 || lambda > 1)
    throw ContractError("lambda_returns: discount and lambda must lie in [0,1]");
  const size_t n = rewards.size();
  std::vector<double> out(n);
  double next = values[n];
  for (size_t i = n; i-- > 0;) {
    next = rewards[i] + discount * ((1.0 - lambda) * values[i + 1] + lambda * next);
    out[i] = next;
  }
  return out;
}

double population_std(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  double mean = 0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0;
  for (double v : values) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(values.size()));
}

double EmaNormalizer::update(const std::vector<double>& batch) {
  const double batch_std = population_std(batch);
  if (!initialized) {
    running_std = batch_std;
    initialized = true;
  } else {
    running_std = decay * running_std + (1.0 - decay) * batch_std;
  }
  return scale();
}

double EmaNormalizer::scale() const { return std::max(running_std, floor); }

diff::Var critic_loss(const diff::Var& values, const Tensor& targets) {
  if (values.numel() != targets.numel())
    throw ContractError("critic_loss: length mismatch");
  diff::Var diff_v = diff::sub(values, diff::Var(targets.reshape(values.shape())));
  return diff::mul_scalar(diff::mean_all(diff::square(diff_v)), 0.5f);
}

diff::Var actor_loss(const diff::Var& log_probs, const Tensor& advantages,
                     const diff::Var& entropies, float eta) {
  if (log_probs.numel() != advantages.numel() || log_probs.numel() != entropies.numel())
    throw ContractError("actor_loss: length mismatch");
  diff::Var weighted =
      diff::mul(log_probs, diff::Var(advantages.reshape(log_probs.shape())));
  diff::Var gain = diff::add(weighted, diff::mul_scalar(entropies, eta));
  return diff::neg(diff::mean_all(gain));
}

std::vector<double> combine_advantages(const std::vector<std::vector<double>>& streams,
                                       const std::vector<double>& weights) {
  if (streams.empty() || streams.size() != weights.size())
    throw ContractError("combine_advantages: stream/weight count mismatch");
  const size_t n = streams[0].size();
  for (const auto& s : streams)
    if (s.size() != n) throw ContractError("combine_advantages: length mismatch");
  std::vector<double> out(n, 0.0);
  for (size_t k = 0; k < streams.size(); ++k)
    for (size_t i = 0; i < n; ++i) out[i] += weights[k] * streams[k][i];
  return out;
}

}  // namespace director
