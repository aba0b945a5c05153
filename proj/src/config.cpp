#include "director/config.hpp"

#include <fstream>
#include <set>

namespace director {

namespace {

template <class T>
struct FieldRef {
  const char* key;
  T RunConfig::* member;
};

constexpr FieldRef<std::string> kStringFields[] = {
    {"env", &RunConfig::env},
    {"logdir", &RunConfig::logdir},
    {"goal_reward", &RunConfig::goal_reward},
    {"expl_placement", &RunConfig::expl_placement},
};

constexpr FieldRef<int> kIntFields[] = {
    {"train_every", &RunConfig::train_every},
    {"parallel_envs", &RunConfig::parallel_envs},
    {"batch_size", &RunConfig::batch_size},
    {"chunk_length", &RunConfig::chunk_length},
    {"eval_episodes", &RunConfig::eval_episodes},
    {"eval_episode_length", &RunConfig::eval_episode_length},
    {"deter", &RunConfig::deter},
    {"stoch", &RunConfig::stoch},
    {"conv_depth", &RunConfig::conv_depth},
    {"mlp_hidden", &RunConfig::mlp_hidden},
    {"mlp_layers", &RunConfig::mlp_layers},
    {"goal_latents", &RunConfig::goal_latents},
    {"goal_classes", &RunConfig::goal_classes},
    {"horizon", &RunConfig::horizon},
    {"goal_every", &RunConfig::goal_every},
};

constexpr FieldRef<int64_t> kInt64Fields[] = {
    {"total_steps", &RunConfig::total_steps},
    {"train_start", &RunConfig::train_start},
    {"buffer_capacity", &RunConfig::buffer_capacity},
    {"eval_every", &RunConfig::eval_every},
    {"checkpoint_every", &RunConfig::checkpoint_every},
};

constexpr FieldRef<double> kDoubleFields[] = {
    {"min_std", &RunConfig::min_std},
    {"wm_beta", &RunConfig::wm_beta},
    {"goal_beta", &RunConfig::goal_beta},
    {"discount", &RunConfig::discount},
    {"return_lambda", &RunConfig::return_lambda},
    {"entropy_eta", &RunConfig::entropy_eta},
    {"w_extr", &RunConfig::w_extr},
    {"w_expl", &RunConfig::w_expl},
    {"w_goal", &RunConfig::w_goal},
    {"w_task", &RunConfig::w_task},
    {"normalizer_decay", &RunConfig::normalizer_decay},
    {"normalizer_floor", &RunConfig::normalizer_floor},
    {"lr", &RunConfig::lr},
    {"weight_decay", &RunConfig::weight_decay},
    {"adam_eps", &RunConfig::adam_eps},
    {"adam_beta1", &RunConfig::adam_beta1},
    {"adam_beta2", &RunConfig::adam_beta2},
    {"clip_norm", &RunConfig::clip_norm},
};

constexpr FieldRef<bool> kBoolFields[] = {
    {"include_noop", &RunConfig::include_noop},
    {"continuous_goals", &RunConfig::continuous_goals},
    {"abstract_discount_pow", &RunConfig::abstract_discount_pow},
};

constexpr FieldRef<uint64_t> kUint64Fields[] = {
    {"seed", &RunConfig::seed},
};

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig c;
  std::set<std::string> known;
  auto apply = [&](const auto& table) {
    for (const auto& f : table) {
      known.insert(f.key);
      if (j.contains(f.key))
        c.*(f.member) =
            j.at(f.key)
                .template get<std::decay_t<decltype(c.*(f.member))>>();
    }
  };
  apply(kStringFields);
  apply(kIntFields);
  apply(kInt64Fields);
  apply(kDoubleFields);
  apply(kBoolFields);
  apply(kUint64Fields);
  for (const auto& item : j.items())
    if (!known.count(item.key()))
      throw ConfigError("unknown config key: " + item.key());
  c.validate();
  return c;
}

RunConfig RunConfig::load_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  for (const auto& f : kStringFields) j[f.key] = this->*(f.member);
  for (const auto& f : kIntFields) j[f.key] = this->*(f.member);
  for (const auto& f : kInt64Fields) j[f.key] = this->*(f.member);
  for (const auto& f : kDoubleFields) j[f.key] = this->*(f.member);
  for (const auto& f : kBoolFields) j[f.key] = this->*(f.member);
  for (const auto& f : kUint64Fields) j[f.key] = this->*(f.member);
  return j;
}

void RunConfig::validate() const {
  if (total_steps <= 0 || train_every <= 0 || parallel_envs <= 0)
    throw ConfigError("config: step counts must be positive");
  if (batch_size <= 0 || chunk_length <= 1)
    throw ConfigError("config: batch_size and chunk_length must be positive");
  if (buffer_capacity < chunk_length)
    throw ConfigError("config: buffer capacity below one chunk");
  if (deter <= 0 || stoch <= 0 || mlp_hidden <= 0 || mlp_layers < 0)
    throw ConfigError("config: model widths must be positive");
  if (goal_latents <= 0 || goal_classes <= 0)
    throw ConfigError("config: goal code dims must be positive");
  goal_reward_kind_from_string(goal_reward);
  expl_placement_from_string(expl_placement);
}

AgentConfig RunConfig::agent_config(const Shape& obs_shape, int action_dim) const {
  AgentConfig a;
  a.wm.obs_shape = obs_shape;
  a.wm.action_dim = action_dim;
  a.wm.deter = deter;
  a.wm.stoch = stoch;
  a.wm.min_std = static_cast<float>(min_std);
  a.wm.conv_depth = conv_depth;
  a.wm.mlp = {mlp_hidden, mlp_layers};
  a.wm.beta = static_cast<float>(wm_beta);
  a.gae.feature_width = a.wm.feature_width();
  a.gae.latents = goal_latents;
  a.gae.classes = goal_classes;
  a.gae.beta = static_cast<float>(goal_beta);
  a.gae.mlp = a.wm.mlp;
  a.horizon = horizon;
  a.goal_every = goal_every;
  a.discount = static_cast<float>(discount);
  a.return_lambda = static_cast<float>(return_lambda);
  a.entropy_eta = static_cast<float>(entropy_eta);
  a.w_extr = static_cast<float>(w_extr);
  a.w_expl = static_cast<float>(w_expl);
  a.w_goal = static_cast<float>(w_goal);
  a.w_task = static_cast<float>(w_task);
  a.goal_reward = goal_reward_kind_from_string(goal_reward);
  a.expl_placement = expl_placement_from_string(expl_placement);
  a.continuous_goals = continuous_goals;
  a.abstract_discount_pow = abstract_discount_pow;
  a.normalizer_decay = normalizer_decay;
  a.normalizer_floor = normalizer_floor;
  a.optim.lr = static_cast<float>(lr);
  a.optim.weight_decay = static_cast<float>(weight_decay);
  a.optim.eps = static_cast<float>(adam_eps);
  a.optim.beta1 = static_cast<float>(adam_beta1);
  a.optim.beta2 = static_cast<float>(adam_beta2);
  a.optim.clip_norm = static_cast<float>(clip_norm);
  a.seed = seed;
  return a;
}

}  // namespace director
