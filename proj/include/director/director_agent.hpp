#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "director/adam.hpp"
#include "director/goal_autoencoder.hpp"
#include "director/policy.hpp"
#include "director/replay_buffer.hpp"
#include "director/world_model.hpp"

namespace director {

enum class GoalRewardKind { max_cosine, inner, inner_normed, l2 };
GoalRewardKind goal_reward_kind_from_string(const std::string& s);
std::string to_string(GoalRewardKind k);

enum class ExplPlacement { manager_only, worker_only, both, neither };
ExplPlacement expl_placement_from_string(const std::string& s);
std::string to_string(ExplPlacement p);

// Max-cosine: both vectors normalized by the larger magnitude, so matching
// the goal requires matching angle and magnitude. Zero vectors give 0.
float max_cosine_reward(const Tensor& goal, const Tensor& next_features);
float goal_reward_value(GoalRewardKind kind, const Tensor& goal,
                        const Tensor& next_features);

struct AgentConfig {
  WorldModelConfig wm;
  GoalAeConfig gae;
  int horizon = 16;    // H
  int goal_every = 8;  // K
  float discount = 0.99f;
  float return_lambda = 0.95f;
  float entropy_eta = 1e-3f;
  float w_extr = 1.0f;
  float w_expl = 0.1f;
  float w_goal = 1.0f;
  float w_task = 0.0f;
  GoalRewardKind goal_reward = GoalRewardKind::max_cosine;
  ExplPlacement expl_placement = ExplPlacement::manager_only;
  bool continuous_goals = false;       // manager emits feature-space goals directly
  bool abstract_discount_pow = true;   // discount^K at the abstract level
  double normalizer_decay = 0.999;
  double normalizer_floor = 1e-8;
  OptimizerConfig optim;
  uint64_t seed = 0;

  void validate() const;
};

// H-step rollout in latent space under the manager and worker. Goals are
// refreshed at indices that are multiples of K and held constant between.
// rewards_* row i holds the reward attributed to transition i, computed
// from the state at index i+1.
struct ImaginedTrajectory {
  int horizon = 0;
  int64_t n = 0;
  std::vector<Tensor> features;       // H+1 entries [N,F]
  std::vector<Tensor> codes;          // H entries [N,L*C] (empty for continuous goals)
  std::vector<Tensor> goals;          // H entries [N,F]
  std::vector<Tensor> actions;        // H entries [N,A] one-hot
  Tensor rewards_extr;                // [H,N]
  Tensor rewards_expl;                // [H,N]
  Tensor rewards_goal;                // [H,N]
};

// Every K-th state, manager actions at the window starts, and window-summed
// rewards per stream.
struct AbstractTrajectory {
  std::vector<Tensor> features;  // H/K+1 entries [N,F]
  std::vector<Tensor> codes;     // H/K entries
  std::vector<Tensor> goals;     // H/K entries
  Tensor rewards_extr;           // [H/K,N]
  Tensor rewards_expl;           // [H/K,N]
};

AbstractTrajectory abstract_trajectory(const ImaginedTrajectory& traj, int k);

// Non-overlapping K-step worker segments with a constant goal each.
struct WorkerSegment {
  std::vector<Tensor> features;  // K+1 entries [N,F]
  Tensor goal;                   // [N,F]
  std::vector<Tensor> actions;   // K entries [N,A]
  Tensor rewards_goal;           // [K,N]
  Tensor rewards_task;           // [K,N]
  Tensor rewards_expl;           // [K,N]
};

std::vector<WorkerSegment> split_worker_trajectory(const ImaginedTrajectory& traj, int k);

struct TrainMetrics {
  bool diverged = false;
  float wm_loss = 0, kl = 0, rec_loss = 0, rew_loss = 0;
  float goal_ae_loss = 0, goal_ae_rec = 0, goal_ae_kl = 0;
  float mgr_actor_loss = 0, mgr_critic_loss = 0;
  float wkr_actor_loss = 0, wkr_critic_loss = 0;
  float extr_reward_mean = 0, expl_reward_mean = 0, goal_reward_mean = 0;
  float manager_return = 0, worker_return = 0;
};

class ManagerPolicy : public Module {
 public:
  ManagerPolicy(const std::string& name, const AgentConfig& cfg, Rng& rng);
  Mlp& actor() { return *actor_; }
  Mlp& critic_extr() { return *critic_extr_; }
  Mlp* critic_expl() { return critic_expl_.get(); }
  EmaNormalizer norm_extr, norm_expl;

 private:
  friend class DirectorAgent;
  std::unique_ptr<Mlp> actor_;
  std::unique_ptr<Mlp> critic_extr_;
  std::unique_ptr<Mlp> critic_expl_;
};

class WorkerPolicy : public Module {
 public:
  WorkerPolicy(const std::string& name, const AgentConfig& cfg, int action_dim, Rng& rng);
  Mlp& actor() { return *actor_; }
  Mlp& critic_goal() { return *critic_goal_; }
  Mlp* critic_task() { return critic_task_.get(); }
  Mlp* critic_expl() { return critic_expl_.get(); }
  EmaNormalizer norm_goal, norm_task, norm_expl;

 private:
  friend class DirectorAgent;
  std::unique_ptr<Mlp> actor_;
  std::unique_ptr<Mlp> critic_goal_;
  std::unique_ptr<Mlp> critic_task_;
  std::unique_ptr<Mlp> critic_expl_;
};

class DirectorAgent {
 public:
  explicit DirectorAgent(AgentConfig cfg);

  const AgentConfig& config() const { return cfg_; }
  WorldModel& world_model() { return *wm_; }
  const WorldModel& world_model() const { return *wm_; }
  GoalAutoencoder& goal_ae() { return *gae_; }
  const GoalAutoencoder& goal_ae() const { return *gae_; }
  ManagerPolicy& manager() { return *mgr_; }
  WorkerPolicy& worker() { return *wkr_; }

  std::vector<Parameter*> parameters();
  std::vector<Parameter*> manager_parameters() { return mgr_->parameters(); }
  std::vector<Parameter*> worker_parameters() { return wkr_->parameters(); }

  // Normalizer states and counters, bundled into checkpoints.
  nlohmann::json extra_state() const;
  void load_extra_state(const nlohmann::json& j);
  // Copies parameter values from another agent with identical layout.
  void copy_values_from(const DirectorAgent& other);

  // ---- acting ----
  struct ActorState {
    ModelState model;
    Tensor prev_action;  // [1,A]
    Tensor code;         // [1,L*C]
    Tensor goal;         // [1,F]
    int64_t step_in_episode = 0;
  };
  ActorState initial_actor_state() const;
  // Advances the model state with the new observation, refreshes the goal
  // every K steps (and at episode start), and samples a worker action.
  // eval_mode switches every distribution to its mode.
  int act(ActorState& state, const Tensor& image, bool is_first, bool eval_mode,
          Rng& rng) const;

  // ---- training ----
  TrainMetrics train_step(const BatchSequences& batch);
  ImaginedTrajectory imagine(const Tensor& start_deter, const Tensor& start_stoch,
                             Rng& rng) const;
  // The two policy updates from a shared rollout; train_step calls both.
  void manager_update(const ImaginedTrajectory& traj, TrainMetrics& m);
  void worker_update(const ImaginedTrajectory& traj, TrainMetrics& m);

  int64_t train_steps_done() const { return train_steps_; }

 private:
  Tensor sample_manager_goals(const Tensor& features, bool eval_mode, Rng& rng,
                              Tensor* codes_out) const;

  AgentConfig cfg_;
  Rng init_rng_;
  Rng train_rng_;
  std::unique_ptr<WorldModel> wm_;
  std::unique_ptr<GoalAutoencoder> gae_;
  std::unique_ptr<ManagerPolicy> mgr_;
  std::unique_ptr<WorkerPolicy> wkr_;
  std::unique_ptr<Adam> wm_opt_, gae_opt_, mgr_opt_, wkr_opt_;
  int64_t train_steps_ = 0;
};

}  // namespace director
