#pragma once

#include <string>

#include <json.hpp>

#include "director/director_agent.hpp"

namespace director {

// Full run configuration. Defaults reproduce the reference hyperparameters
// (training every 16, 4 parallel envs, 4x512 MLPs with LayerNorm+ELU,
// H=16, K=8, gamma=0.99, L=C=8, beta=1.0, lr=1e-4, wd=1e-2, eps=1e-6).
// Parsing rejects unknown keys.
struct RunConfig {
  std::string env = "pinpad:three";
  uint64_t seed = 0;
  int64_t total_steps = 200000;
  int train_every = 16;   // E: one gradient step per E policy steps (global)
  int parallel_envs = 4;
  int64_t train_start = 1024;
  int batch_size = 16;
  int chunk_length = 64;
  int64_t buffer_capacity = 100000;
  int64_t eval_every = 20000;
  int eval_episodes = 1;
  int eval_episode_length = 400;
  int64_t checkpoint_every = 50000;
  std::string logdir = "runs/director";
  bool include_noop = true;

  // world model
  int deter = 512;
  int stoch = 32;
  double min_std = 0.1;
  int conv_depth = 32;
  int mlp_hidden = 512;
  int mlp_layers = 4;
  double wm_beta = 1.0;

  // goal autoencoder
  int goal_latents = 8;   // L
  int goal_classes = 8;   // C
  double goal_beta = 1.0;

  // policies
  int horizon = 16;    // H
  int goal_every = 8;  // K
  double discount = 0.99;
  double return_lambda = 0.95;
  double entropy_eta = 1e-3;
  double w_extr = 1.0;
  double w_expl = 0.1;
  double w_goal = 1.0;
  double w_task = 0.0;  // 0.5 enables the worker-task-reward variant
  std::string goal_reward = "max_cosine";   // inner | inner_normed | l2
  std::string expl_placement = "manager";   // worker | both | neither
  bool continuous_goals = false;
  bool abstract_discount_pow = true;  // discount^K at the abstract level
  double normalizer_decay = 0.999;
  double normalizer_floor = 1e-8;

  // optimizer
  double lr = 1e-4;
  double weight_decay = 1e-2;
  double adam_eps = 1e-6;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double clip_norm = 0.0;  // 0 disables global gradient-norm clipping

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load_file(const std::string& path);
  nlohmann::json to_json() const;
  void validate() const;

  AgentConfig agent_config(const Shape& obs_shape, int action_dim) const;
};

}  // namespace director
