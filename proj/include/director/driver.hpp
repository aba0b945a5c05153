#pragma once

#include <functional>
#include <optional>
#include <string>

#include "director/config.hpp"
#include "director/envs.hpp"

namespace director {

struct RunHooks {
  // Called after every completed training episode; return true to stop the
  // run early (a final checkpoint is still written).
  std::function<bool(int64_t env_steps, double episode_return)> on_episode_end;
};

struct TrainResult {
  int64_t env_steps = 0;
  int64_t train_steps = 0;
  double best_episode_return = 0.0;
  std::string checkpoint_path;
  std::string metrics_path;
};

// Drives actors and the learner: one gradient step per `train_every` policy
// steps, periodic mode-policy evaluation, periodic checkpoints, JSONL
// metrics. parallel_envs == 1 runs fully synchronous and deterministic;
// more envs run as actor threads feeding the learner through a queue.
TrainResult run_train(const RunConfig& cfg, const std::string& resume_path = "",
                      const RunHooks& hooks = {});

struct EvalResult {
  std::vector<double> returns;
  double mean = 0.0;
  double stddev = 0.0;
};

// Mode-policy episodes from a checkpoint. `oracle` swaps in the scripted
// shortest-path pin pad policy (sanity baseline).
EvalResult run_eval(const RunConfig& cfg, const std::string& checkpoint_path, int episodes,
                    int episode_length, bool oracle = false);

struct VizResult {
  std::string path;
  int columns = 0;
  // Step indices whose decoded goal differs from the previous step's.
  std::vector<int> goal_change_steps;
  double roundtrip_mse = 0.0;  // decode(dec(enc(s))) vs decode(s), render MSE
};

// Two-row strip: environment frames on top, the decoded active goal below.
// Goals refresh only at step indices that are multiples of K. Writes a PPM.
VizResult visualize_goals(const RunConfig& cfg, const std::string& checkpoint_path,
                          int episode_length, const std::string& out_path);

// Builds an agent matching the config and environment.
std::unique_ptr<DirectorAgent> make_agent(const RunConfig& cfg);
void save_agent_checkpoint(const std::string& path, DirectorAgent& agent,
                           const RunConfig& cfg, int64_t env_steps,
                           int64_t buffer_total_steps);
// Returns stored env_steps.
int64_t load_agent_checkpoint(const std::string& path, DirectorAgent& agent);

}  // namespace director
