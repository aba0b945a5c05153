#include "director/director_agent.hpp"

#include <cmath>
#include <cstring>

namespace director {

using diff::Graph;
using diff::Var;

GoalRewardKind goal_reward_kind_from_string(const std::string& s) {
  if (s == "max_cosine") return GoalRewardKind::max_cosine;
  if (s == "inner") return GoalRewardKind::inner;
  if (s == "inner_normed") return GoalRewardKind::inner_normed;
  if (s == "l2") return GoalRewardKind::l2;
  throw ConfigError("unknown goal reward kind: " + s);
}

std::string to_string(GoalRewardKind k) {
  switch (k) {
    case GoalRewardKind::max_cosine: return "max_cosine";
    case GoalRewardKind::inner: return "inner";
    case GoalRewardKind::inner_normed: return "inner_normed";
    case GoalRewardKind::l2: return "l2";
  }
  return "?";
}

ExplPlacement expl_placement_from_string(const std::string& s) {
  if (s == "manager") return ExplPlacement::manager_only;
  if (s == "worker") return ExplPlacement::worker_only;
  if (s == "both") return ExplPlacement::both;
  if (s == "neither") return ExplPlacement::neither;
  throw ConfigError("unknown exploration placement: " + s);
}

std::string to_string(ExplPlacement p) {
  switch (p) {
    case ExplPlacement::manager_only: return "manager";
    case ExplPlacement::worker_only: return "worker";
    case ExplPlacement::both: return "both";
    case ExplPlacement::neither: return "neither";
  }
  return "?";
}

namespace {

constexpr float kGoalHeadMinStd = 0.1f;

double row_norm(const float* v, int n) {
  double s = 0;
  for (int i = 0; i < n; ++i) s += double(v[i]) * v[i];
  return std::sqrt(s);
}

double row_dot(const float* a, const float* b, int n) {
  double s = 0;
  for (int i = 0; i < n; ++i) s += double(a[i]) * b[i];
  return s;
}

float goal_reward_row(GoalRewardKind kind, const float* g, const float* s, int n) {
  switch (kind) {
    case GoalRewardKind::max_cosine: {
      const double m = std::max(row_norm(g, n), row_norm(s, n));
      if (m == 0.0) return 0.0f;
      return static_cast<float>(row_dot(g, s, n) / (m * m));
    }
    case GoalRewardKind::inner:
      return static_cast<float>(row_dot(g, s, n));
    case GoalRewardKind::inner_normed: {
      const double gn = row_norm(g, n);
      if (gn == 0.0) return 0.0f;
      return static_cast<float>(row_dot(g, s, n) / (gn * gn));
    }
    case GoalRewardKind::l2: {
      double d = 0;
      for (int i = 0; i < n; ++i) {
        const double x = double(g[i]) - s[i];
        d += x * x;
      }
      return static_cast<float>(-std::sqrt(d));
    }
  }
  return 0.0f;
}

// Per-start lambda returns over a [T,N] reward grid and [T+1,N] values grid,
// both time-major. Output [T*N] time-major.
std::vector<double> grid_lambda_returns(const Tensor& rewards, const Tensor& values,
                                        int t_steps, int64_t n, double discount,
                                        double lambda) {
  std::vector<double> out(size_t(t_steps) * n);
  std::vector<double> rew(static_cast<size_t>(t_steps));
  std::vector<double> val(static_cast<size_t>(t_steps) + 1);
  for (int64_t i = 0; i < n; ++i) {
    for (int t = 0; t < t_steps; ++t) rew[size_t(t)] = rewards.at(int64_t(t) * n + i);
    for (int t = 0; t <= t_steps; ++t) val[size_t(t)] = values.at(int64_t(t) * n + i);
    std::vector<double> r = lambda_returns(rew, val, discount, lambda);
    for (int t = 0; t < t_steps; ++t) out[size_t(t) * n + i] = r[size_t(t)];
  }
  return out;
}

Tensor to_column(const std::vector<double>& v) {
  Tensor t({static_cast<int>(v.size()), 1});
  for (size_t i = 0; i < v.size(); ++i) t.data_mut()[i] = static_cast<float>(v[i]);
  return t;
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / double(v.size());
}

float tensor_mean(const Tensor& t) {
  double s = 0;
  for (int64_t i = 0; i < t.numel(); ++i) s += t.data()[i];
  return t.numel() ? static_cast<float>(s / double(t.numel())) : 0.0f;
}

}  // namespace

float max_cosine_reward(const Tensor& goal, const Tensor& next_features) {
  if (goal.numel() != next_features.numel())
    throw ContractError("max_cosine_reward: width mismatch");
  return goal_reward_row(GoalRewardKind::max_cosine, goal.data(), next_features.data(),
                         static_cast<int>(goal.numel()));
}

float goal_reward_value(GoalRewardKind kind, const Tensor& goal,
                        const Tensor& next_features) {
  if (goal.numel() != next_features.numel())
    throw ContractError("goal_reward_value: width mismatch");
  return goal_reward_row(kind, goal.data(), next_features.data(),
                         static_cast<int>(goal.numel()));
}

void AgentConfig::validate() const {
  if (horizon <= 0 || goal_every <= 0 || horizon % goal_every != 0)
    throw ConfigError("agent: horizon must be a positive multiple of goal_every");
  if (discount < 0 || discount > 1 || return_lambda < 0 || return_lambda > 1)
    throw ConfigError("agent: discount/lambda must lie in [0,1]");
  if (w_extr < 0 || w_expl < 0 || w_goal < 0 || w_task < 0)
    throw ConfigError("agent: stream weights must be non-negative");
  if (gae.feature_width != wm.feature_width())
    throw ConfigError("agent: goal ae feature width must match the world model");
  if (normalizer_decay <= 0 || normalizer_decay >= 1)
    throw ConfigError("agent: normalizer decay must lie in (0,1)");
  optim.validate();
}

AbstractTrajectory abstract_trajectory(const ImaginedTrajectory& traj, int k) {
  const int h = traj.horizon;
  if (k <= 0 || h % k != 0)
    throw ConfigError("abstract_trajectory: horizon must be a multiple of K");
  const int steps = h / k;
  const int64_t n = traj.n;
  AbstractTrajectory out;
  for (int j = 0; j <= steps; ++j) out.features.push_back(traj.features[size_t(j) * k]);
  for (int j = 0; j < steps; ++j) {
    if (!traj.codes.empty()) out.codes.push_back(traj.codes[size_t(j) * k]);
    out.goals.push_back(traj.goals[size_t(j) * k]);
  }
  out.rewards_extr = Tensor({steps, static_cast<int>(n)});
  out.rewards_expl = Tensor({steps, static_cast<int>(n)});
  for (int j = 0; j < steps; ++j)
    for (int64_t i = 0; i < n; ++i) {
      double extr = 0, expl = 0;
      for (int t = j * k; t < (j + 1) * k; ++t) {
        extr += traj.rewards_extr.at(int64_t(t) * n + i);
        expl += traj.rewards_expl.at(int64_t(t) * n + i);
      }
      out.rewards_extr.data_mut()[int64_t(j) * n + i] = static_cast<float>(extr);
      out.rewards_expl.data_mut()[int64_t(j) * n + i] = static_cast<float>(expl);
    }
  return out;
}

std::vector<WorkerSegment> split_worker_trajectory(const ImaginedTrajectory& traj, int k) {
  const int h = traj.horizon;
  if (k <= 0 || h % k != 0)
    throw ConfigError("split_worker_trajectory: horizon must be a multiple of K");
  const int64_t n = traj.n;
  std::vector<WorkerSegment> out;
  for (int j = 0; j < h / k; ++j) {
    WorkerSegment seg;
    for (int t = 0; t <= k; ++t) seg.features.push_back(traj.features[size_t(j) * k + t]);
    seg.goal = traj.goals[size_t(j) * k];
    for (int t = 0; t < k; ++t) seg.actions.push_back(traj.actions[size_t(j) * k + t]);
    seg.rewards_goal = Tensor({k, static_cast<int>(n)});
    seg.rewards_task = Tensor({k, static_cast<int>(n)});
    seg.rewards_expl = Tensor({k, static_cast<int>(n)});
    for (int t = 0; t < k; ++t) {
      const int64_t src = int64_t(j * k + t) * n;
      std::memcpy(seg.rewards_goal.data_mut() + int64_t(t) * n,
                  traj.rewards_goal.data() + src, sizeof(float) * size_t(n));
      std::memcpy(seg.rewards_task.data_mut() + int64_t(t) * n,
                  traj.rewards_extr.data() + src, sizeof(float) * size_t(n));
      std::memcpy(seg.rewards_expl.data_mut() + int64_t(t) * n,
                  traj.rewards_expl.data() + src, sizeof(float) * size_t(n));
    }
    out.push_back(std::move(seg));
  }
  return out;
}

// ---- policies ----------------------------------------------------------------

ManagerPolicy::ManagerPolicy(const std::string& name, const AgentConfig& cfg, Rng& rng) {
  const int f = cfg.wm.feature_width();
  const int out = cfg.continuous_goals ? 2 * f : cfg.gae.code_width();
  actor_ = std::make_unique<Mlp>(name + "/actor", f, cfg.wm.mlp, out, rng);
  critic_extr_ = std::make_unique<Mlp>(name + "/critic_extr", f, cfg.wm.mlp, 1, rng);
  add_child(actor_.get());
  add_child(critic_extr_.get());
  if (cfg.expl_placement == ExplPlacement::manager_only ||
      cfg.expl_placement == ExplPlacement::both) {
    critic_expl_ = std::make_unique<Mlp>(name + "/critic_expl", f, cfg.wm.mlp, 1, rng);
    add_child(critic_expl_.get());
  }
  norm_extr.decay = norm_expl.decay = cfg.normalizer_decay;
  norm_extr.floor = norm_expl.floor = cfg.normalizer_floor;
}

WorkerPolicy::WorkerPolicy(const std::string& name, const AgentConfig& cfg, int action_dim,
                           Rng& rng) {
  const int f = cfg.wm.feature_width();
  actor_ = std::make_unique<Mlp>(name + "/actor", 2 * f, cfg.wm.mlp, action_dim, rng);
  critic_goal_ = std::make_unique<Mlp>(name + "/critic_goal", 2 * f, cfg.wm.mlp, 1, rng);
  add_child(actor_.get());
  add_child(critic_goal_.get());
  if (cfg.w_task > 0) {
    critic_task_ = std::make_unique<Mlp>(name + "/critic_task", 2 * f, cfg.wm.mlp, 1, rng);
    add_child(critic_task_.get());
  }
  if (cfg.expl_placement == ExplPlacement::worker_only ||
      cfg.expl_placement == ExplPlacement::both) {
    critic_expl_ = std::make_unique<Mlp>(name + "/critic_expl", 2 * f, cfg.wm.mlp, 1, rng);
    add_child(critic_expl_.get());
  }
  norm_goal.decay = norm_task.decay = norm_expl.decay = cfg.normalizer_decay;
  norm_goal.floor = norm_task.floor = norm_expl.floor = cfg.normalizer_floor;
}

// ---- agent --------------------------------------------------------------------

DirectorAgent::DirectorAgent(AgentConfig cfg)
    : cfg_(std::move(cfg)),
      init_rng_(derive_seed(cfg_.seed, 1)),
      train_rng_(derive_seed(cfg_.seed, 2)) {
  cfg_.validate();
  wm_ = std::make_unique<WorldModel>("wm", cfg_.wm, init_rng_);
  gae_ = std::make_unique<GoalAutoencoder>("gae", cfg_.gae, init_rng_);
  mgr_ = std::make_unique<ManagerPolicy>("mgr", cfg_, init_rng_);
  wkr_ = std::make_unique<WorkerPolicy>("wkr", cfg_, cfg_.wm.action_dim, init_rng_);
  wm_opt_ = std::make_unique<Adam>(cfg_.optim, wm_->parameters());
  gae_opt_ = std::make_unique<Adam>(cfg_.optim, gae_->parameters());
  mgr_opt_ = std::make_unique<Adam>(cfg_.optim, mgr_->parameters());
  wkr_opt_ = std::make_unique<Adam>(cfg_.optim, wkr_->parameters());
}

std::vector<Parameter*> DirectorAgent::parameters() {
  std::vector<Parameter*> out;
  for (Module* mod :
       std::initializer_list<Module*>{wm_.get(), gae_.get(), mgr_.get(), wkr_.get()}) {
    auto sub = mod->parameters();
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

nlohmann::json DirectorAgent::extra_state() const {
  auto norm = [](const EmaNormalizer& n) {
    return nlohmann::json{{"initialized", n.initialized}, {"running_std", n.running_std}};
  };
  return nlohmann::json{
      {"train_steps", train_steps_},
      {"normalizers",
       {{"mgr_extr", norm(mgr_->norm_extr)},
        {"mgr_expl", norm(mgr_->norm_expl)},
        {"wkr_goal", norm(wkr_->norm_goal)},
        {"wkr_task", norm(wkr_->norm_task)},
        {"wkr_expl", norm(wkr_->norm_expl)}}},
      {"train_rng", train_rng_.state()},
  };
}

void DirectorAgent::load_extra_state(const nlohmann::json& j) {
  auto load = [](EmaNormalizer& n, const nlohmann::json& v) {
    n.initialized = v.at("initialized").get<bool>();
    n.running_std = v.at("running_std").get<double>();
  };
  train_steps_ = j.at("train_steps").get<int64_t>();
  const auto& norms = j.at("normalizers");
  load(mgr_->norm_extr, norms.at("mgr_extr"));
  load(mgr_->norm_expl, norms.at("mgr_expl"));
  load(wkr_->norm_goal, norms.at("wkr_goal"));
  load(wkr_->norm_task, norms.at("wkr_task"));
  load(wkr_->norm_expl, norms.at("wkr_expl"));
  if (j.contains("train_rng")) train_rng_.set_state(j.at("train_rng").get<std::string>());
}

void DirectorAgent::copy_values_from(const DirectorAgent& other) {
  auto mine = parameters();
  auto theirs = const_cast<DirectorAgent&>(other).parameters();
  if (mine.size() != theirs.size())
    throw ContractError("copy_values_from: parameter layout mismatch");
  for (size_t i = 0; i < mine.size(); ++i) {
    if (mine[i]->name != theirs[i]->name ||
        mine[i]->value.shape() != theirs[i]->value.shape())
      throw ContractError("copy_values_from: parameter mismatch at " + mine[i]->name);
    std::memcpy(mine[i]->value.data_mut(), theirs[i]->value.data(),
                sizeof(float) * size_t(mine[i]->value.numel()));
  }
}

// ---- acting --------------------------------------------------------------------

DirectorAgent::ActorState DirectorAgent::initial_actor_state() const {
  ActorState s;
  s.model = wm_->initial_state(1);
  s.prev_action = Tensor({1, cfg_.wm.action_dim});
  s.code = Tensor({1, cfg_.gae.code_width()});
  s.goal = Tensor({1, cfg_.wm.feature_width()});
  return s;
}

Tensor DirectorAgent::sample_manager_goals(const Tensor& features, bool eval_mode,
                                           Rng& rng, Tensor* codes_out) const {
  Graph g(false);
  const int64_t n = features.rows();
  Tensor stats = mgr_->actor_->forward(g, Var(features)).value();
  if (cfg_.continuous_goals) {
    const int f = cfg_.wm.feature_width();
    Tensor goal({static_cast<int>(n), f});
    for (int64_t r = 0; r < n; ++r)
      for (int i = 0; i < f; ++i) {
        const float mean = stats.at(r * 2 * f + i);
        float raw = stats.at(r * 2 * f + f + i);
        const float std = std::log1p(std::exp(raw)) + kGoalHeadMinStd;
        goal.data_mut()[r * f + i] = eval_mode ? mean : mean + std * rng.normal();
      }
    if (codes_out) *codes_out = Tensor();
    return goal;
  }
  Tensor grouped = stats.reshape({static_cast<int>(n * cfg_.gae.latents), cfg_.gae.classes});
  Tensor codes;
  if (eval_mode) {
    codes = argmax_one_hot_rows(grouped);
  } else {
    Tensor probs = diff::softmax_rows(Var(grouped)).value();
    codes = sample_one_hot_rows(probs, rng);
  }
  codes = codes.reshape({static_cast<int>(n), cfg_.gae.code_width()});
  if (codes_out) *codes_out = codes;
  return gae_->decode(codes);
}

int DirectorAgent::act(ActorState& st, const Tensor& image, bool is_first, bool eval_mode,
                       Rng& rng) const {
  const int a_dim = cfg_.wm.action_dim;
  if (is_first || st.model.deter.empty()) {
    st.model = wm_->initial_state(1);
    st.prev_action = Tensor({1, a_dim});
    st.step_in_episode = 0;
  }
  st.model = wm_->obs_step(st.model, st.prev_action, image, rng, /*sample=*/!eval_mode);
  Tensor feat = st.model.feature();
  if (st.step_in_episode % cfg_.goal_every == 0)
    st.goal = sample_manager_goals(feat, eval_mode, rng, &st.code);

  Graph g(false);
  Tensor logits = wkr_->actor_->forward(g, Var(t_concat_cols(feat, st.goal))).value();
  int action = 0;
  if (eval_mode) {
    for (int i = 1; i < a_dim; ++i)
      if (logits.at(i) > logits.at(action)) action = i;
  } else {
    Tensor probs = diff::softmax_rows(Var(logits)).value();
    action = rng.categorical(probs.data(), a_dim);
  }
  st.prev_action = Tensor({1, a_dim});
  st.prev_action.data_mut()[action] = 1.0f;
  st.step_in_episode += 1;
  return action;
}

// ---- imagination -----------------------------------------------------------------

ImaginedTrajectory DirectorAgent::imagine(const Tensor& start_deter,
                                          const Tensor& start_stoch, Rng& rng) const {
  const int h = cfg_.horizon, k = cfg_.goal_every;
  const int64_t n = start_deter.rows();
  const int f = cfg_.wm.feature_width();

  ModelState state;
  state.deter = start_deter;
  state.stoch = start_stoch;
  state.mean = Tensor({static_cast<int>(n), cfg_.wm.stoch});
  state.std = Tensor::full({static_cast<int>(n), cfg_.wm.stoch}, 1.0f);

  ImaginedTrajectory traj;
  traj.horizon = h;
  traj.n = n;
  traj.features.push_back(state.feature());
  traj.rewards_extr = Tensor({h, static_cast<int>(n)});
  traj.rewards_expl = Tensor({h, static_cast<int>(n)});
  traj.rewards_goal = Tensor({h, static_cast<int>(n)});

  Tensor goal, code;
  for (int i = 0; i < h; ++i) {
    if (i % k == 0)
      goal = sample_manager_goals(traj.features[size_t(i)], false, rng, &code);
    traj.codes.push_back(code);
    traj.goals.push_back(goal);

    Graph g(false);
    Tensor win = t_concat_cols(traj.features[size_t(i)], goal);
    Tensor logits = wkr_->actor_->forward(g, Var(win)).value();
    Tensor probs = diff::softmax_rows(Var(logits)).value();
    Tensor onehot = sample_one_hot_rows(probs, rng);
    traj.actions.push_back(onehot);

    state = wm_->img_step(state, onehot, rng, true);
    Tensor feat = state.feature();
    traj.features.push_back(feat);

    Tensor extr = wm_->predict_rewards(feat);
    Tensor expl = gae_->exploration_rewards(feat, rng);
    float* re = traj.rewards_extr.data_mut() + int64_t(i) * n;
    float* rx = traj.rewards_expl.data_mut() + int64_t(i) * n;
    float* rg = traj.rewards_goal.data_mut() + int64_t(i) * n;
    for (int64_t r = 0; r < n; ++r) {
      re[r] = extr.at(r);
      rx[r] = expl.at(r);
      rg[r] = goal_reward_row(cfg_.goal_reward, goal.data() + r * f, feat.data() + r * f, f);
    }
  }
  return traj;
}

// ---- policy updates ----------------------------------------------------------------

namespace {

struct StreamSpec {
  Mlp* critic;
  EmaNormalizer* norm;
  const Tensor* rewards;  // [T,N] time-major
  double weight;
};

// Shared actor-critic update: evaluates every stream's critic over the
// stacked [T+1,N] states, computes lambda returns, normalizes returns and
// baselines by the stream's moving std, and regresses critics on the first
// T*N rows. Returns the combined advantage column and accumulates the
// critic loss into `critic_total`.
Tensor multi_stream_advantages(Graph& g, const Tensor& inputs_all, int t_steps, int64_t n,
                               double discount, double lambda,
                               const std::vector<StreamSpec>& streams, Var& critic_total,
                               double* first_stream_return_mean) {
  const int64_t train_rows = int64_t(t_steps) * n;
  std::vector<double> combined(size_t(train_rows), 0.0);
  bool first = true;
  for (const StreamSpec& s : streams) {
    Var v = s.critic->forward(g, Var(inputs_all));
    std::vector<double> returns =
        grid_lambda_returns(*s.rewards, v.value(), t_steps, n, discount, lambda);
    const double scale = s.norm->update(returns);
    for (int64_t i = 0; i < train_rows; ++i)
      combined[size_t(i)] += s.weight * (returns[size_t(i)] - v.value().at(i)) / scale;
    critic_total = diff::add(
        critic_total, critic_loss(diff::slice_rows(v, 0, train_rows), to_column(returns)));
    if (first && first_stream_return_mean) *first_stream_return_mean = mean_of(returns);
    first = false;
  }
  return to_column(combined);
}

// log prob and entropy of a vector-of-categoricals head for chosen one-hots.
void categorical_logp_entropy(Graph& g, const Var& logits, const Tensor& chosen,
                              int groups, int classes, Var* logp, Var* entropy) {
  const int64_t rows = logits.rows();
  Var grouped = diff::reshape(logits, {static_cast<int>(rows * groups), classes});
  Var lsm = diff::log_softmax_rows(grouped);
  Tensor chosen_grouped =
      chosen.reshape({static_cast<int>(rows * groups), classes});
  Var lp_rows = diff::row_sum(diff::mul(lsm, Var(chosen_grouped)));
  *logp = diff::row_sum(diff::reshape(lp_rows, {static_cast<int>(rows), groups}));
  Var p = diff::softmax_rows(grouped);
  Var ent_rows = diff::neg(diff::row_sum(diff::mul(p, lsm)));
  *entropy = diff::row_sum(diff::reshape(ent_rows, {static_cast<int>(rows), groups}));
}

void gaussian_logp_entropy(Graph& g, const Var& stats, const Tensor& chosen, int width,
                           Var* logp, Var* entropy) {
  const float log_2pi = std::log(2.0f * float(M_PI));
  Var mean = diff::slice_cols(stats, 0, width);
  Var std = diff::add_scalar(diff::softplus(diff::slice_cols(stats, width, 2 * width)),
                             kGoalHeadMinStd);
  Var z = diff::vdiv(diff::sub(Var(chosen), mean), std);
  Var nll = diff::row_sum(diff::add(diff::mul_scalar(diff::square(z), 0.5f),
                                    diff::log_v(std)));
  *logp = diff::neg(diff::add_scalar(nll, 0.5f * width * log_2pi));
  *entropy = diff::add_scalar(diff::row_sum(diff::log_v(std)),
                              0.5f * width * (1.0f + log_2pi));
}

}  // namespace

void DirectorAgent::manager_update(const ImaginedTrajectory& traj, TrainMetrics& m) {
  const int k = cfg_.goal_every;
  AbstractTrajectory abs = abstract_trajectory(traj, k);
  const int steps = traj.horizon / k;
  const int64_t n = traj.n;
  const double gamma = cfg_.abstract_discount_pow
                           ? std::pow(double(cfg_.discount), k)
                           : double(cfg_.discount);

  Graph g;
  Tensor feats_all = t_stack_rows(abs.features);  // [(steps+1)*N, F]

  std::vector<StreamSpec> streams = {
      {&mgr_->critic_extr(), &mgr_->norm_extr, &abs.rewards_extr, double(cfg_.w_extr)}};
  if (mgr_->critic_expl())
    streams.push_back(
        {mgr_->critic_expl(), &mgr_->norm_expl, &abs.rewards_expl, double(cfg_.w_expl)});

  Var critic_total(Tensor::scalar(0.0f));
  double extr_return_mean = 0;
  Tensor advantages =
      multi_stream_advantages(g, feats_all, steps, n, gamma, cfg_.return_lambda, streams,
                              critic_total, &extr_return_mean);
  m.manager_return = static_cast<float>(extr_return_mean);

  const int64_t train_rows = int64_t(steps) * n;
  Tensor act_feats = t_rows(feats_all, 0, train_rows);
  Var stats = mgr_->actor_->forward(g, Var(act_feats));
  Var logp, entropy;
  if (cfg_.continuous_goals) {
    gaussian_logp_entropy(g, stats, t_stack_rows(abs.goals), cfg_.wm.feature_width(),
                          &logp, &entropy);
  } else {
    categorical_logp_entropy(g, stats, t_stack_rows(abs.codes), cfg_.gae.latents,
                             cfg_.gae.classes, &logp, &entropy);
  }
  Var a_loss = actor_loss(logp, advantages, entropy, cfg_.entropy_eta);
  m.mgr_actor_loss = a_loss.value().scalar_value();
  m.mgr_critic_loss = critic_total.value().scalar_value();
  if (!std::isfinite(m.mgr_actor_loss) || !std::isfinite(m.mgr_critic_loss))
    throw DivergenceError("manager loss is not finite");
  g.backward(diff::add(a_loss, critic_total));
  mgr_opt_->step();
}

void DirectorAgent::worker_update(const ImaginedTrajectory& traj, TrainMetrics& m) {
  const int k = cfg_.goal_every;
  std::vector<WorkerSegment> segments = split_worker_trajectory(traj, k);
  const int64_t n = traj.n;
  const int64_t s_count = int64_t(segments.size()) * n;  // total segments

  // Stack worker inputs [feat, goal] time-major over t=0..K, segment-major
  // inside each time slice (segment s = j*N + i).
  std::vector<Tensor> per_time;
  for (int t = 0; t <= k; ++t) {
    std::vector<Tensor> rows;
    for (const WorkerSegment& seg : segments)
      rows.push_back(t_concat_cols(seg.features[size_t(t)], seg.goal));
    per_time.push_back(t_stack_rows(rows));
  }
  Tensor inputs_all = t_stack_rows(per_time);  // [(K+1)*S, 2F]

  auto stack_rewards = [&](const Tensor WorkerSegment::* field) {
    Tensor out({k, static_cast<int>(s_count)});
    for (int t = 0; t < k; ++t) {
      int64_t at = 0;
      for (const WorkerSegment& seg : segments) {
        std::memcpy(out.data_mut() + int64_t(t) * s_count + at,
                    (seg.*field).data() + int64_t(t) * n, sizeof(float) * size_t(n));
        at += n;
      }
    }
    return out;
  };
  Tensor rew_goal = stack_rewards(&WorkerSegment::rewards_goal);
  Tensor rew_task = stack_rewards(&WorkerSegment::rewards_task);
  Tensor rew_expl = stack_rewards(&WorkerSegment::rewards_expl);

  Graph g;
  std::vector<StreamSpec> streams = {
      {&wkr_->critic_goal(), &wkr_->norm_goal, &rew_goal, double(cfg_.w_goal)}};
  if (wkr_->critic_task())
    streams.push_back({wkr_->critic_task(), &wkr_->norm_task, &rew_task, double(cfg_.w_task)});
  if (wkr_->critic_expl())
    streams.push_back({wkr_->critic_expl(), &wkr_->norm_expl, &rew_expl, double(cfg_.w_expl)});

  Var critic_total(Tensor::scalar(0.0f));
  double goal_return_mean = 0;
  Tensor advantages =
      multi_stream_advantages(g, inputs_all, k, s_count, double(cfg_.discount),
                              cfg_.return_lambda, streams, critic_total, &goal_return_mean);
  m.worker_return = static_cast<float>(goal_return_mean);

  const int64_t train_rows = int64_t(k) * s_count;
  Tensor act_inputs = t_rows(inputs_all, 0, train_rows);
  // Chosen actions, matching the row order of act_inputs.
  std::vector<Tensor> action_rows;
  for (int t = 0; t < k; ++t)
    for (const WorkerSegment& seg : segments) action_rows.push_back(seg.actions[size_t(t)]);
  Tensor chosen = t_stack_rows(action_rows);

  Var logits = wkr_->actor_->forward(g, Var(act_inputs));
  Var logp, entropy;
  categorical_logp_entropy(g, logits, chosen, 1, cfg_.wm.action_dim, &logp, &entropy);
  Var a_loss = actor_loss(logp, advantages, entropy, cfg_.entropy_eta);
  m.wkr_actor_loss = a_loss.value().scalar_value();
  m.wkr_critic_loss = critic_total.value().scalar_value();
  if (!std::isfinite(m.wkr_actor_loss) || !std::isfinite(m.wkr_critic_loss))
    throw DivergenceError("worker loss is not finite");
  g.backward(diff::add(a_loss, critic_total));
  wkr_opt_->step();
}

TrainMetrics DirectorAgent::train_step(const BatchSequences& batch) {
  TrainMetrics m;
  try {
    Tensor post_deter, post_stoch, post_features;
    {
      Graph g;
      WmLossOut wm_out = wm_->loss(g, batch, train_rng_);
      m.wm_loss = wm_out.total;
      m.kl = wm_out.kl;
      m.rec_loss = wm_out.rec;
      m.rew_loss = wm_out.rew;
      g.backward(wm_out.loss);
      wm_opt_->step();
      post_deter = wm_out.post_deter;
      post_stoch = wm_out.post_stoch;
      post_features = wm_out.post_features;
    }
    {
      Graph g;
      GoalAeLossOut ae = gae_->loss(g, post_features, train_rng_);
      m.goal_ae_loss = ae.total;
      m.goal_ae_rec = ae.rec;
      m.goal_ae_kl = ae.kl;
      g.backward(ae.loss);
      gae_opt_->step();
    }
    ImaginedTrajectory traj = imagine(post_deter, post_stoch, train_rng_);
    m.extr_reward_mean = tensor_mean(traj.rewards_extr);
    m.expl_reward_mean = tensor_mean(traj.rewards_expl);
    m.goal_reward_mean = tensor_mean(traj.rewards_goal);
    manager_update(traj, m);
    worker_update(traj, m);
  } catch (const DivergenceError&) {
    m.diverged = true;
  }
  train_steps_ += 1;
  return m;
}

}  // namespace director
