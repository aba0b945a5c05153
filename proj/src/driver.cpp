#include "director/driver.hpp"

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <csignal>
#include <deque>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "director/checkpoint.hpp"
#include "director/image_io.hpp"

namespace director {

namespace fs = std::filesystem;

namespace {

volatile std::sig_atomic_t g_interrupted = 0;
void handle_interrupt(int) { g_interrupted = 1; }

struct Transition {
  int env_id = 0;
  Tensor image;
  int action = 0;
  float reward = 0.0f;
  bool is_first = false;
  bool episode_done = false;
  double episode_return = 0.0;  // valid when episode_done
};

class TransitionQueue {
 public:
  explicit TransitionQueue(size_t capacity) : capacity_(capacity) {}

  bool push(Transition t, const std::atomic<bool>& stop) {
    std::unique_lock lock(m_);
    not_full_.wait(lock, [&] { return q_.size() < capacity_ || stop.load(); });
    if (stop.load()) return false;
    q_.push_back(std::move(t));
    not_empty_.notify_one();
    return true;
  }

  std::optional<Transition> pop(const std::atomic<bool>& stop) {
    std::unique_lock lock(m_);
    not_empty_.wait(lock, [&] { return !q_.empty() || stop.load(); });
    if (q_.empty()) return std::nullopt;
    Transition t = std::move(q_.front());
    q_.pop_front();
    not_full_.notify_one();
    return t;
  }

  void wake_all() {
    std::lock_guard lock(m_);
    not_full_.notify_all();
    not_empty_.notify_all();
  }

 private:
  size_t capacity_;
  std::mutex m_;
  std::deque<Transition> q_;
  std::condition_variable not_full_, not_empty_;
};

// Immutable copy of all parameter values, swapped atomically to actors.
struct ParamSnapshot {
  int64_t version = 0;
  std::vector<Tensor> values;
};

std::shared_ptr<const ParamSnapshot> take_snapshot(DirectorAgent& agent, int64_t version) {
  auto snap = std::make_shared<ParamSnapshot>();
  snap->version = version;
  for (Parameter* p : agent.parameters()) snap->values.push_back(p->value.clone());
  return snap;
}

void load_snapshot(DirectorAgent& agent, const ParamSnapshot& snap) {
  auto params = agent.parameters();
  if (params.size() != snap.values.size())
    throw ContractError("snapshot: parameter count mismatch");
  for (size_t i = 0; i < params.size(); ++i)
    std::memcpy(params[i]->value.data_mut(), snap.values[i].data(),
                sizeof(float) * size_t(params[i]->value.numel()));
}

class MetricsWriter {
 public:
  MetricsWriter(const std::string& path, bool append)
      : os_(path, append ? std::ios::app : std::ios::trunc) {
    if (!os_) throw ConfigError("cannot open metrics file " + path);
  }
  void write(const nlohmann::json& row) {
    os_ << row.dump() << "\n";
    os_.flush();
  }

 private:
  std::ofstream os_;
};

nlohmann::json metrics_row(int64_t env_steps, const TrainMetrics& m,
                           double last_episode_return) {
  return nlohmann::json{
      {"env_steps", env_steps},
      {"wm_loss", m.wm_loss},
      {"kl", m.kl},
      {"rec_loss", m.rec_loss},
      {"rew_loss", m.rew_loss},
      {"goal_ae_loss", m.goal_ae_loss},
      {"goal_ae_rec", m.goal_ae_rec},
      {"goal_ae_kl", m.goal_ae_kl},
      {"mgr_actor_loss", m.mgr_actor_loss},
      {"mgr_critic_loss", m.mgr_critic_loss},
      {"wkr_actor_loss", m.wkr_actor_loss},
      {"wkr_critic_loss", m.wkr_critic_loss},
      {"extr_reward_mean", m.extr_reward_mean},
      {"expl_reward_mean", m.expl_reward_mean},
      {"goal_reward_mean", m.goal_reward_mean},
      {"manager_return", m.manager_return},
      {"worker_return", m.worker_return},
      {"episode_return", last_episode_return},
      {"diverged", m.diverged},
  };
}

double run_eval_episode(DirectorAgent& agent, Env& env, uint64_t seed, int episode_length,
                        Rng& rng) {
  DirectorAgent::ActorState state = agent.initial_actor_state();
  EnvStep cur = env.reset(seed);
  bool is_first = true;
  double ret = 0.0;
  for (int t = 0; t < episode_length; ++t) {
    const int action = agent.act(state, cur.image, is_first, /*eval_mode=*/true, rng);
    is_first = false;
    cur = env.step(action);
    ret += cur.reward;
    if (cur.done) break;
  }
  return ret;
}

}  // namespace

std::unique_ptr<DirectorAgent> make_agent(const RunConfig& cfg) {
  auto env = make_env(cfg.env, cfg.include_noop);
  return std::make_unique<DirectorAgent>(
      cfg.agent_config(env->obs_shape(), env->num_actions()));
}

void save_agent_checkpoint(const std::string& path, DirectorAgent& agent,
                           const RunConfig& cfg, int64_t env_steps,
                           int64_t buffer_total_steps) {
  nlohmann::json meta{
      {"format", "director-checkpoint"},
      {"env_steps", env_steps},
      {"buffer_total_steps", buffer_total_steps},
      {"config", cfg.to_json()},
      {"agent", agent.extra_state()},
  };
  Checkpoint ckpt = Checkpoint::from_params(agent.parameters(), std::move(meta));
  const std::string tmp = path + ".tmp";
  save_checkpoint(tmp, ckpt);
  fs::rename(tmp, path);
}

int64_t load_agent_checkpoint(const std::string& path, DirectorAgent& agent) {
  Checkpoint ckpt = load_checkpoint(path);
  ckpt.load_into(agent.parameters());
  if (ckpt.metadata.contains("agent")) agent.load_extra_state(ckpt.metadata.at("agent"));
  return ckpt.metadata.value("env_steps", int64_t{0});
}

TrainResult run_train(const RunConfig& cfg, const std::string& resume_path,
                      const RunHooks& hooks) {
  cfg.validate();
  fs::create_directories(cfg.logdir);
  const std::string metrics_path = cfg.logdir + "/metrics.jsonl";
  const std::string ckpt_path = cfg.logdir + "/checkpoint.ckpt";

  auto probe_env = make_env(cfg.env, cfg.include_noop);
  const Shape obs_shape = probe_env->obs_shape();
  const int action_dim = probe_env->num_actions();

  DirectorAgent agent(cfg.agent_config(obs_shape, action_dim));
  int64_t env_steps = 0;
  if (!resume_path.empty()) env_steps = load_agent_checkpoint(resume_path, agent);

  ReplayBuffer buffer(cfg.buffer_capacity, obs_shape, action_dim);
  MetricsWriter metrics(metrics_path, /*append=*/!resume_path.empty());

  Rng sample_rng(derive_seed(cfg.seed, 3));
  Rng eval_rng(derive_seed(cfg.seed, 4));
  auto eval_env = make_env(cfg.env, cfg.include_noop);

  std::signal(SIGINT, handle_interrupt);

  TrainResult result;
  result.metrics_path = metrics_path;
  result.checkpoint_path = ckpt_path;
  double last_episode_return = 0.0;
  std::atomic<bool> stop{false};
  int64_t next_eval = cfg.eval_every > 0 ? cfg.eval_every : cfg.total_steps + 1;
  int64_t next_ckpt = cfg.checkpoint_every > 0 ? cfg.checkpoint_every : cfg.total_steps + 1;
  int64_t steps_since_train = 0;

  auto maybe_train = [&]() {
    steps_since_train += 1;
    if (env_steps < cfg.train_start || steps_since_train < cfg.train_every) return;
    if (!buffer.ready(cfg.batch_size, cfg.chunk_length)) return;
    steps_since_train = 0;
    BatchSequences batch = buffer.sample(cfg.batch_size, cfg.chunk_length, sample_rng);
    TrainMetrics m = agent.train_step(batch);
    result.train_steps += 1;
    metrics.write(metrics_row(env_steps, m, last_episode_return));
  };

  auto maybe_periodic = [&]() {
    if (env_steps >= next_eval) {
      next_eval += cfg.eval_every;
      std::vector<double> rets;
      for (int e = 0; e < cfg.eval_episodes; ++e)
        rets.push_back(run_eval_episode(agent, *eval_env,
                                        derive_seed(cfg.seed, 50000 + size_t(e)),
                                        cfg.eval_episode_length, eval_rng));
      double mean = 0;
      for (double r : rets) mean += r;
      mean /= rets.empty() ? 1.0 : double(rets.size());
      metrics.write({{"env_steps", env_steps}, {"eval_return", mean}});
    }
    if (env_steps >= next_ckpt) {
      next_ckpt += cfg.checkpoint_every;
      save_agent_checkpoint(ckpt_path, agent, cfg, env_steps, buffer.total_steps_added());
    }
  };

  auto handle_episode_end = [&](double ep_return) {
    last_episode_return = ep_return;
    result.best_episode_return = std::max(result.best_episode_return, ep_return);
    metrics.write({{"env_steps", env_steps}, {"episode_return", ep_return}});
    if (hooks.on_episode_end && hooks.on_episode_end(env_steps, ep_return))
      stop.store(true);
  };

  if (cfg.parallel_envs == 1) {
    // Synchronous mode: fully deterministic under a fixed seed.
    auto env = make_env(cfg.env, cfg.include_noop);
    Rng act_rng(derive_seed(cfg.seed, 100));
    DirectorAgent::ActorState state = agent.initial_actor_state();
    int64_t episode_idx = 0;
    EnvStep cur = env->reset(derive_seed(cfg.seed, 200));
    bool is_first = true;
    double ep_return = 0.0;
    while (env_steps < cfg.total_steps && !stop.load() && !g_interrupted) {
      const int action = agent.act(state, cur.image, is_first, false, act_rng);
      EnvStep next = env->step(action);
      buffer.add(0, cur.image, action, next.reward, is_first);
      env_steps += 1;
      ep_return += next.reward;
      is_first = false;
      cur = next;
      if (cur.done) {
        handle_episode_end(ep_return);
        episode_idx += 1;
        cur = env->reset(derive_seed(cfg.seed, 200 + uint64_t(episode_idx)));
        is_first = true;
        ep_return = 0.0;
      }
      maybe_train();
      maybe_periodic();
    }
  } else {
    // Actor threads feed the learner through a bounded queue; each actor
    // refreshes its parameter snapshot after every train step.
    TransitionQueue queue(size_t(cfg.train_every) * 2);
    std::shared_ptr<const ParamSnapshot> snapshot = take_snapshot(agent, 0);
    std::mutex snapshot_mutex;
    auto get_snapshot = [&] {
      std::lock_guard lock(snapshot_mutex);
      return snapshot;
    };
    auto publish_snapshot = [&](std::shared_ptr<const ParamSnapshot> s) {
      std::lock_guard lock(snapshot_mutex);
      snapshot = std::move(s);
    };

    std::vector<std::thread> actors;
    for (int a = 0; a < cfg.parallel_envs; ++a) {
      actors.emplace_back([&, a] {
        auto env = make_env(cfg.env, cfg.include_noop);
        DirectorAgent local(cfg.agent_config(obs_shape, action_dim));
        std::shared_ptr<const ParamSnapshot> snap = get_snapshot();
        load_snapshot(local, *snap);
        Rng rng(derive_seed(cfg.seed, 300 + uint64_t(a)));
        DirectorAgent::ActorState state = local.initial_actor_state();
        int64_t episode_idx = 0;
        EnvStep cur = env->reset(derive_seed(cfg.seed, 400 + uint64_t(a)));
        bool is_first = true;
        double ep_return = 0.0;
        while (!stop.load()) {
          auto latest = get_snapshot();
          if (latest->version != snap->version) {
            snap = latest;
            load_snapshot(local, *snap);
          }
          const int action = local.act(state, cur.image, is_first, false, rng);
          EnvStep next = env->step(action);
          Transition t;
          t.env_id = a;
          t.image = cur.image;
          t.action = action;
          t.reward = next.reward;
          t.is_first = is_first;
          ep_return += next.reward;
          is_first = false;
          cur = next;
          if (cur.done) {
            t.episode_done = true;
            t.episode_return = ep_return;
            episode_idx += 1;
            cur = env->reset(
                derive_seed(cfg.seed, 400 + uint64_t(a) + 1000 * uint64_t(episode_idx)));
            is_first = true;
            ep_return = 0.0;
          }
          if (!queue.push(std::move(t), stop)) break;
        }
      });
    }

    int64_t version = 0;
    while (env_steps < cfg.total_steps && !stop.load() && !g_interrupted) {
      auto t = queue.pop(stop);
      if (!t) break;
      buffer.add(t->env_id, t->image, t->action, t->reward, t->is_first);
      env_steps += 1;
      if (t->episode_done) handle_episode_end(t->episode_return);
      const int64_t before = result.train_steps;
      maybe_train();
      if (result.train_steps != before) publish_snapshot(take_snapshot(agent, ++version));
      maybe_periodic();
    }
    stop.store(true);
    queue.wake_all();
    for (auto& th : actors) th.join();
  }

  save_agent_checkpoint(ckpt_path, agent, cfg, env_steps, buffer.total_steps_added());
  result.env_steps = env_steps;
  std::signal(SIGINT, SIG_DFL);
  return result;
}

EvalResult run_eval(const RunConfig& cfg, const std::string& checkpoint_path, int episodes,
                    int episode_length, bool oracle) {
  auto env = make_env(cfg.env, cfg.include_noop);
  EvalResult out;
  Rng rng(derive_seed(cfg.seed, 5));
  std::unique_ptr<DirectorAgent> agent;
  if (!oracle) {
    agent = make_agent(cfg);
    if (!checkpoint_path.empty()) load_agent_checkpoint(checkpoint_path, *agent);
  }
  for (int e = 0; e < episodes; ++e) {
    const uint64_t seed = derive_seed(cfg.seed, 60000 + uint64_t(e));
    if (oracle) {
      auto* pinpad = dynamic_cast<PinPadEnv*>(env.get());
      if (pinpad == nullptr) throw ConfigError("oracle eval requires a pinpad env");
      EnvStep cur = env->reset(seed);
      double ret = 0.0;
      for (int t = 0; t < episode_length; ++t) {
        cur = env->step(pinpad_oracle_action(*pinpad));
        ret += cur.reward;
        if (cur.done) break;
      }
      out.returns.push_back(ret);
    } else {
      out.returns.push_back(run_eval_episode(*agent, *env, seed, episode_length, rng));
    }
  }
  double mean = 0;
  for (double r : out.returns) mean += r;
  mean /= out.returns.empty() ? 1.0 : double(out.returns.size());
  double var = 0;
  for (double r : out.returns) var += (r - mean) * (r - mean);
  out.mean = mean;
  out.stddev = out.returns.empty() ? 0.0 : std::sqrt(var / double(out.returns.size()));
  return out;
}

VizResult visualize_goals(const RunConfig& cfg, const std::string& checkpoint_path,
                          int episode_length, const std::string& out_path) {
  auto env = make_env(cfg.env, cfg.include_noop);
  auto agent = make_agent(cfg);
  if (!checkpoint_path.empty()) load_agent_checkpoint(checkpoint_path, *agent);

  const Shape obs = env->obs_shape();
  const int h = obs[0], w = obs[1];
  Rng rng(derive_seed(cfg.seed, 6));
  DirectorAgent::ActorState state = agent->initial_actor_state();
  EnvStep cur = env->reset(derive_seed(cfg.seed, 7));
  bool is_first = true;

  std::vector<Tensor> frames, goal_frames;
  Tensor prev_goal;
  VizResult out;
  for (int t = 0; t < episode_length; ++t) {
    const int action = agent->act(state, cur.image, is_first, /*eval_mode=*/false, rng);
    is_first = false;
    frames.push_back(cur.image);
    Tensor goal_img = agent->world_model().decode_images(state.goal);
    goal_frames.push_back(goal_img.reshape({h, w, 3}));
    if (t > 0 && t_mse(state.goal, prev_goal) > 0) out.goal_change_steps.push_back(t);
    prev_goal = state.goal;
    cur = env->step(action);
    if (cur.done) break;
  }

  const int cols = static_cast<int>(frames.size());
  Tensor strip({2 * h, cols * w, 3});
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < h; ++r) {
      std::memcpy(strip.data_mut() + (int64_t(r) * cols * w + int64_t(c) * w) * 3,
                  frames[size_t(c)].data() + int64_t(r) * w * 3, sizeof(float) * size_t(w) * 3);
      std::memcpy(strip.data_mut() + (int64_t(h + r) * cols * w + int64_t(c) * w) * 3,
                  goal_frames[size_t(c)].data() + int64_t(r) * w * 3,
                  sizeof(float) * size_t(w) * 3);
    }
  }
  for (int64_t i = 0; i < strip.numel(); ++i)
    strip.data_mut()[i] = std::clamp(strip.data()[i], 0.0f, 1.0f);
  write_ppm(out_path, strip);
  out.path = out_path;
  out.columns = cols;

  // AE round trip in image space over the visited states.
  {
    DirectorAgent::ActorState s2 = agent->initial_actor_state();
    EnvStep c2 = env->reset(derive_seed(cfg.seed, 7));
    bool first2 = true;
    Rng rng2(derive_seed(cfg.seed, 8));
    double mse = 0;
    int count = 0;
    for (int t = 0; t < std::min(episode_length, 16); ++t) {
      agent->act(s2, c2.image, first2, false, rng2);
      first2 = false;
      Tensor feat = s2.model.feature();
      Tensor direct = agent->world_model().decode_images(feat);
      Tensor code = agent->goal_ae().encode_sample(feat, rng2);
      Tensor through = agent->world_model().decode_images(agent->goal_ae().decode(code));
      mse += t_mse(direct, through);
      count += 1;
      c2 = env->step(0);
      if (c2.done) break;
    }
    out.roundtrip_mse = count ? mse / count : 0.0;
  }
  return out;
}

}  // namespace director
