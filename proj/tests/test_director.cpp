#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include <fstream>

#include "director/config.hpp"
#include "director/director_agent.hpp"

using namespace director;

namespace {

RunConfig tiny_run_config() {
  RunConfig cfg;
  cfg.env = "reachcolor";
  cfg.deter = 16;
  cfg.stoch = 4;
  cfg.conv_depth = 4;
  cfg.mlp_hidden = 24;
  cfg.mlp_layers = 1;
  cfg.goal_latents = 4;
  cfg.goal_classes = 4;
  cfg.batch_size = 2;
  cfg.chunk_length = 8;
  cfg.train_start = 32;
  cfg.parallel_envs = 1;
  return cfg;
}

AgentConfig tiny_agent_config(uint64_t seed = 0) {
  AgentConfig a = tiny_run_config().agent_config({16, 16, 3}, 5);
  a.seed = seed;
  return a;
}

BatchSequences tiny_batch(Rng& rng, int batch = 2, int length = 8, int actions = 5) {
  BatchSequences out;
  out.batch = batch;
  out.length = length;
  out.images = Tensor({batch, length, 16, 16, 3});
  for (int64_t i = 0; i < out.images.numel(); ++i) out.images.data_mut()[i] = rng.uniform();
  out.actions = Tensor({batch, length, actions});
  for (int b = 0; b < batch; ++b)
    for (int t = 0; t < length; ++t)
      out.actions.data_mut()[(int64_t(b) * length + t) * actions +
                             rng.uniform_int(actions)] = 1.0f;
  out.rewards = Tensor({batch, length});
  out.is_first = Tensor({batch, length});
  for (int b = 0; b < batch; ++b) out.is_first.data_mut()[int64_t(b) * length] = 1.0f;
  return out;
}

ImaginedTrajectory make_fake_trajectory(int horizon, int n, int f) {
  ImaginedTrajectory traj;
  traj.horizon = horizon;
  traj.n = n;
  Rng rng(5);
  for (int i = 0; i <= horizon; ++i) traj.features.push_back(rng.normal_tensor({n, f}));
  Tensor code({n, 16});
  for (int i = 0; i < horizon; ++i) {
    traj.codes.push_back(code);
    traj.goals.push_back(rng.normal_tensor({n, f}));
    Tensor a({n, 5});
    for (int r = 0; r < n; ++r) a.data_mut()[r * 5] = 1.0f;
    traj.actions.push_back(a);
  }
  traj.rewards_extr = rng.normal_tensor({horizon, n});
  traj.rewards_expl = rng.normal_tensor({horizon, n});
  traj.rewards_goal = rng.normal_tensor({horizon, n});
  return traj;
}

bool params_equal(const std::vector<Tensor>& before, const std::vector<Parameter*>& now) {
  for (size_t i = 0; i < now.size(); ++i)
    if (std::memcmp(before[i].data(), now[i]->value.data(),
                    sizeof(float) * size_t(before[i].numel())) != 0)
      return false;
  return true;
}

std::vector<Tensor> snapshot(const std::vector<Parameter*>& params) {
  std::vector<Tensor> out;
  for (Parameter* p : params) out.push_back(p->value.clone());
  return out;
}

}  // namespace

TEST_CASE("max-cosine reward: worked examples and bounds") {
  Tensor g({2}, {1.0f, 2.0f});
  CHECK(max_cosine_reward(g, g) == doctest::Approx(1.0f));
  CHECK(max_cosine_reward(Tensor({2}, {0, 1}), Tensor({2}, {1, 0})) == doctest::Approx(0.0f));
  CHECK(max_cosine_reward(Tensor({2}, {2, 0}), Tensor({2}, {1, 0})) == doctest::Approx(0.5f));
  CHECK(max_cosine_reward(Tensor({2}), Tensor({2})) == doctest::Approx(0.0f));

  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    Tensor a = rng.normal_tensor({6});
    Tensor b = rng.normal_tensor({6});
    const float r = max_cosine_reward(a, b);
    CHECK(r >= -1.0f - 1e-5f);
    CHECK(r <= 1.0f + 1e-5f);
    // Equal norms: exactly cosine similarity.
    const float na = t_norm(a);
    Tensor b_scaled = t_scale(b, na / t_norm(b));
    const float cosine = t_dot(a, b_scaled) / (na * t_norm(b_scaled));
    CHECK(max_cosine_reward(a, b_scaled) == doctest::Approx(cosine).epsilon(1e-4));
  }
}

TEST_CASE("goal reward variants from the ablation") {
  Tensor g({2}, {2, 0}), s({2}, {1, 0});
  CHECK(goal_reward_value(GoalRewardKind::inner, g, s) == doctest::Approx(2.0f));
  CHECK(goal_reward_value(GoalRewardKind::inner_normed, g, s) == doctest::Approx(0.5f));
  CHECK(goal_reward_value(GoalRewardKind::l2, g, g) == doctest::Approx(0.0f));
  CHECK(goal_reward_value(GoalRewardKind::l2, g, s) == doctest::Approx(-1.0f));
  CHECK(goal_reward_value(GoalRewardKind::max_cosine, g, s) == doctest::Approx(0.5f));
  CHECK_THROWS_AS(goal_reward_kind_from_string("cosine"), ConfigError);
}

TEST_CASE("abstract_trajectory: window sums, identity, and counting") {
  // K=2 with per-step rewards [1,2,3,4] -> [3,7].
  ImaginedTrajectory traj = make_fake_trajectory(4, 1, 3);
  traj.rewards_extr = Tensor({4, 1}, {1, 2, 3, 4});
  traj.rewards_expl = Tensor({4, 1}, {1, 1, 1, 1});
  AbstractTrajectory abs2 = abstract_trajectory(traj, 2);
  CHECK(abs2.rewards_extr.at(0) == doctest::Approx(3.0f));
  CHECK(abs2.rewards_extr.at(1) == doctest::Approx(7.0f));
  CHECK(abs2.rewards_expl.at(0) == doctest::Approx(2.0f));
  CHECK(abs2.features.size() == 3);

  AbstractTrajectory abs1 = abstract_trajectory(traj, 1);
  CHECK(abs1.rewards_extr.at(2) == doctest::Approx(3.0f));
  CHECK(abs1.features.size() == 5);

  ImaginedTrajectory traj16 = make_fake_trajectory(16, 2, 3);
  AbstractTrajectory abs8 = abstract_trajectory(traj16, 8);
  CHECK(abs8.rewards_extr.dim(0) == 2);  // 2 abstract transitions
  CHECK(abs8.features.size() == 3);      // 3 abstract states
  CHECK(abs8.codes.size() == 2);

  CHECK_THROWS_AS(abstract_trajectory(traj16, 5), ConfigError);
}

TEST_CASE("split_worker_trajectory: segment structure and reward partition") {
  ImaginedTrajectory traj = make_fake_trajectory(16, 3, 4);
  auto segments = split_worker_trajectory(traj, 8);
  REQUIRE(segments.size() == 2);
  for (const auto& seg : segments) {
    CHECK(seg.features.size() == 9);
    CHECK(seg.actions.size() == 8);
    CHECK(seg.rewards_goal.dim(0) == 8);
  }
  // Goal within segment j equals the goal at the segment start.
  CHECK(std::memcmp(segments[0].goal.data(), traj.goals[0].data(),
                    sizeof(float) * size_t(traj.goals[0].numel())) == 0);
  CHECK(std::memcmp(segments[1].goal.data(), traj.goals[8].data(),
                    sizeof(float) * size_t(traj.goals[8].numel())) == 0);
  // Concatenated segment rewards reproduce the original sequence.
  for (int t = 0; t < 16; ++t)
    for (int i = 0; i < 3; ++i) {
      const float orig = traj.rewards_goal.at(int64_t(t) * 3 + i);
      const auto& seg = segments[size_t(t / 8)];
      CHECK(seg.rewards_goal.at(int64_t(t % 8) * 3 + i) == orig);
    }
}

TEST_CASE("imagine: goals persist between refresh points") {
  DirectorAgent agent(tiny_agent_config(7));
  Rng rng(8);
  Tensor deter({4, 16}), stoch({4, 4});
  Rng drng(9);
  deter = drng.normal_tensor({4, 16}, 0, 0.3f);
  stoch = drng.normal_tensor({4, 4}, 0, 0.3f);
  ImaginedTrajectory traj = agent.imagine(deter, stoch, rng);
  const int k = agent.config().goal_every;
  CHECK(traj.features.size() == size_t(agent.config().horizon) + 1);
  CHECK(traj.codes.size() == size_t(agent.config().horizon));
  for (int i = 0; i < traj.horizon; ++i) {
    if (i % k == 0) continue;
    CHECK(std::memcmp(traj.codes[size_t(i)].data(), traj.codes[size_t(i - 1)].data(),
                      sizeof(float) * size_t(traj.codes[size_t(i)].numel())) == 0);
    CHECK(std::memcmp(traj.goals[size_t(i)].data(), traj.goals[size_t(i - 1)].data(),
                      sizeof(float) * size_t(traj.goals[size_t(i)].numel())) == 0);
  }
  // Exactly ceil(H/K) distinct goal selections.
  int refreshes = 0;
  for (int i = 0; i < traj.horizon; ++i)
    if (i % k == 0) refreshes += 1;
  CHECK(refreshes == (traj.horizon + k - 1) / k);
  // Manager abstract trajectory length x K == worker trajectory length.
  AbstractTrajectory abs = abstract_trajectory(traj, k);
  CHECK(int(abs.rewards_extr.dim(0)) * k == traj.horizon);
}

TEST_CASE("act: goal refreshes exactly every K steps from episode start") {
  DirectorAgent agent(tiny_agent_config(1));
  Rng rng(2), drng(3);
  DirectorAgent::ActorState state = agent.initial_actor_state();
  const int k = agent.config().goal_every;
  Tensor prev_goal;
  std::vector<int> change_steps;
  for (int t = 0; t < 2 * agent.config().horizon; ++t) {
    Tensor img = drng.normal_tensor({16, 16, 3}, 0.5f, 0.1f);
    const int action = agent.act(state, img, t == 0, false, rng);
    CHECK(action >= 0);
    CHECK(action < 5);
    if (t > 0 && t_mse(state.goal, prev_goal) > 0) change_steps.push_back(t);
    prev_goal = state.goal;
  }
  for (int step : change_steps) CHECK(step % k == 0);

  // Evaluation mode is deterministic: identical rollouts.
  auto run_eval_actions = [&](uint64_t seed) {
    DirectorAgent::ActorState st = agent.initial_actor_state();
    Rng r(seed), dr(17);
    std::vector<int> actions;
    for (int t = 0; t < 12; ++t)
      actions.push_back(agent.act(st, dr.normal_tensor({16, 16, 3}, 0.5f, 0.1f), t == 0,
                                  /*eval_mode=*/true, r));
    return actions;
  };
  CHECK(run_eval_actions(1) == run_eval_actions(2));  // rng unused in eval mode
}

TEST_CASE("manager and worker updates are isolated from each other and the model") {
  AgentConfig cfg = tiny_agent_config(11);
  cfg.optim.weight_decay = 0.0f;  // decay alone would move every parameter
  DirectorAgent agent(cfg);
  ImaginedTrajectory traj =
      make_fake_trajectory(cfg.horizon, 6, cfg.wm.feature_width());
  // Codes must be valid one-hots for the manager log-prob.
  Tensor code({6, cfg.gae.code_width()});
  for (int r = 0; r < 6; ++r)
    for (int l = 0; l < cfg.gae.latents; ++l)
      code.data_mut()[r * cfg.gae.code_width() + l * cfg.gae.classes + (r + l) % cfg.gae.classes] =
          1.0f;
  for (auto& c : traj.codes) c = code;

  auto wm_before = snapshot(agent.world_model().parameters());
  auto gae_before = snapshot(agent.goal_ae().parameters());
  auto wkr_before = snapshot(agent.worker_parameters());
  auto mgr_before = snapshot(agent.manager_parameters());

  TrainMetrics m;
  agent.manager_update(traj, m);
  CHECK(params_equal(wkr_before, agent.worker_parameters()));
  CHECK(params_equal(wm_before, agent.world_model().parameters()));
  CHECK(params_equal(gae_before, agent.goal_ae().parameters()));
  CHECK_FALSE(params_equal(mgr_before, agent.manager_parameters()));

  auto mgr_after = snapshot(agent.manager_parameters());
  agent.worker_update(traj, m);
  CHECK(params_equal(mgr_after, agent.manager_parameters()));
  CHECK(params_equal(wm_before, agent.world_model().parameters()));
  CHECK_FALSE(params_equal(wkr_before, agent.worker_parameters()));
}

TEST_CASE("degenerate streams: zero rewards and zero critics leave the actor still") {
  AgentConfig cfg = tiny_agent_config(13);
  cfg.optim.weight_decay = 0.0f;
  cfg.entropy_eta = 0.0f;
  DirectorAgent agent(cfg);
  ImaginedTrajectory traj =
      make_fake_trajectory(cfg.horizon, 4, cfg.wm.feature_width());
  Tensor code({4, cfg.gae.code_width()});
  for (int r = 0; r < 4; ++r)
    for (int l = 0; l < cfg.gae.latents; ++l)
      code.data_mut()[r * cfg.gae.code_width() + l * cfg.gae.classes] = 1.0f;
  for (auto& c : traj.codes) c = code;
  traj.rewards_extr = Tensor({cfg.horizon, 4});
  traj.rewards_expl = Tensor({cfg.horizon, 4});
  // Zero every manager critic so values and returns are identically zero.
  for (Parameter* p : agent.manager_parameters())
    if (p->name.find("critic") != std::string::npos)
      std::fill(p->value.data_mut(), p->value.data_mut() + p->value.numel(), 0.0f);
  std::vector<Tensor> actor_before;
  for (Parameter* p : agent.manager_parameters())
    if (p->name.find("actor") != std::string::npos) actor_before.push_back(p->value.clone());
  TrainMetrics m;
  agent.manager_update(traj, m);
  size_t idx = 0;
  for (Parameter* p : agent.manager_parameters())
    if (p->name.find("actor") != std::string::npos) {
      CHECK(std::memcmp(actor_before[idx].data(), p->value.data(),
                        sizeof(float) * size_t(p->value.numel())) == 0);
      idx += 1;
    }
}

TEST_CASE("train_step: full cycle on a tiny agent stays finite") {
  AgentConfig cfg = tiny_agent_config(17);
  DirectorAgent agent(cfg);
  Rng data_rng(18);
  BatchSequences batch = tiny_batch(data_rng);
  TrainMetrics m = agent.train_step(batch);
  CHECK_FALSE(m.diverged);
  for (float v : {m.wm_loss, m.kl, m.goal_ae_loss, m.expl_reward_mean, m.goal_reward_mean,
                  m.manager_return, m.worker_return, m.mgr_actor_loss, m.wkr_actor_loss}) {
    CHECK(std::isfinite(v));
  }
  for (Parameter* p : agent.parameters()) CHECK(p->value.all_finite());
  CHECK(agent.train_steps_done() == 1);

  // Exploration placement toggles wire the extra critics.
  AgentConfig both = tiny_agent_config(19);
  both.expl_placement = ExplPlacement::both;
  both.w_task = 0.5f;
  DirectorAgent agent2(both);
  CHECK(agent2.worker().critic_task() != nullptr);
  CHECK(agent2.worker().critic_expl() != nullptr);
  CHECK(agent2.manager().critic_expl() != nullptr);
  TrainMetrics m2 = agent2.train_step(batch);
  CHECK_FALSE(m2.diverged);

  AgentConfig neither = tiny_agent_config(23);
  neither.expl_placement = ExplPlacement::neither;
  DirectorAgent agent3(neither);
  CHECK(agent3.manager().critic_expl() == nullptr);
  CHECK(agent3.worker().critic_expl() == nullptr);
  TrainMetrics m3 = agent3.train_step(batch);
  CHECK_FALSE(m3.diverged);
}

TEST_CASE("continuous-goal ablation bypasses the code space") {
  AgentConfig cfg = tiny_agent_config(29);
  cfg.continuous_goals = true;
  DirectorAgent agent(cfg);
  Rng rng(30), drng(31);
  Tensor deter = drng.normal_tensor({3, 16}, 0, 0.2f);
  Tensor stoch = drng.normal_tensor({3, 4}, 0, 0.2f);
  ImaginedTrajectory traj = agent.imagine(deter, stoch, rng);
  CHECK(traj.codes[0].empty());
  CHECK(traj.goals[0].shape() == Shape{3, cfg.wm.feature_width()});
  Rng data_rng(32);
  BatchSequences batch = tiny_batch(data_rng);
  TrainMetrics m = agent.train_step(batch);
  CHECK_FALSE(m.diverged);
}

TEST_CASE("config: defaults pin the reference hyperparameters") {
  RunConfig cfg;
  CHECK(cfg.parallel_envs == 4);
  CHECK(cfg.train_every == 16);
  CHECK(cfg.mlp_hidden == 512);
  CHECK(cfg.mlp_layers == 4);
  CHECK(cfg.horizon == 16);
  CHECK(cfg.discount == 0.99);
  CHECK(cfg.goal_every == 8);
  CHECK(cfg.goal_latents == 8);
  CHECK(cfg.goal_classes == 8);
  CHECK(cfg.goal_beta == 1.0);
  CHECK(cfg.lr == 1e-4);
  CHECK(cfg.weight_decay == 1e-2);
  CHECK(cfg.adam_eps == 1e-6);
  CHECK(cfg.w_extr == 1.0);
  CHECK(cfg.w_expl == 0.1);
  CHECK(cfg.return_lambda == 0.95);
  CHECK(cfg.batch_size == 16);
  CHECK(cfg.chunk_length == 64);
}

TEST_CASE("config: golden file pins the defaults") {
  // configs/default.json is the serialized default configuration; drift in
  // either direction fails here.
  std::ifstream golden(std::string(DIRECTOR_SOURCE_DIR) + "/configs/default.json");
  REQUIRE(golden);
  nlohmann::json stored;
  golden >> stored;
  CHECK(RunConfig().to_json() == stored);
  CHECK(RunConfig::from_json(stored).to_json() == RunConfig().to_json());
}

TEST_CASE("config: json round trip and unknown-key rejection") {
  RunConfig cfg;
  nlohmann::json j = cfg.to_json();
  RunConfig back = RunConfig::from_json(j);
  CHECK(back.to_json() == j);

  nlohmann::json bad = j;
  bad["learning_rate"] = 1e-3;  // wrong key name
  CHECK_THROWS_AS(RunConfig::from_json(bad), ConfigError);

  nlohmann::json partial = {{"env", "pinpad:four"}, {"seed", 7}};
  RunConfig p = RunConfig::from_json(partial);
  CHECK(p.env == "pinpad:four");
  CHECK(p.seed == 7);
  CHECK(p.train_every == 16);  // untouched defaults
}

TEST_CASE("agent checkpoint: bitwise state restore through extra_state") {
  AgentConfig cfg = tiny_agent_config(37);
  DirectorAgent a(cfg);
  Rng data_rng(38);
  BatchSequences batch = tiny_batch(data_rng);
  a.train_step(batch);

  DirectorAgent b(cfg);
  b.copy_values_from(a);
  b.load_extra_state(a.extra_state());
  auto pa = a.parameters();
  auto pb = b.parameters();
  for (size_t i = 0; i < pa.size(); ++i)
    CHECK(std::memcmp(pa[i]->value.data(), pb[i]->value.data(),
                      sizeof(float) * size_t(pa[i]->value.numel())) == 0);
  CHECK(b.train_steps_done() == a.train_steps_done());
}
