#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "director/driver.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<std::string> env;
  std::optional<int64_t> steps;
  std::optional<std::string> logdir;
  std::string resume;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON config file (unknown keys rejected)");
  cmd->add_option("--seed", f.seed, "Random seed");
  cmd->add_option("--env", f.env, "Environment id, e.g. pinpad:four");
  cmd->add_option("--steps", f.steps, "Total environment steps");
  cmd->add_option("--logdir", f.logdir, "Output directory for metrics and checkpoints");
  cmd->add_option("--resume", f.resume, "Checkpoint to resume from");
}

director::RunConfig build_config(const CommonFlags& f) {
  director::RunConfig cfg = f.config_path.empty()
                                ? director::RunConfig{}
                                : director::RunConfig::load_file(f.config_path);
  if (f.seed) cfg.seed = *f.seed;
  if (f.env) cfg.env = *f.env;
  if (f.steps) cfg.total_steps = *f.steps;
  if (f.logdir) cfg.logdir = *f.logdir;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical world-model agent with latent goals"};
  app.require_subcommand(1);

  CommonFlags train_flags, eval_flags, viz_flags;

  CLI::App* train = app.add_subcommand("train", "Train an agent");
  add_common(train, train_flags);

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint with mode policies");
  add_common(eval, eval_flags);
  std::string eval_ckpt;
  int eval_episodes = 5;
  int eval_len = 2000;
  bool eval_oracle = false;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file");
  eval->add_option("--episodes", eval_episodes, "Number of evaluation episodes");
  eval->add_option("--episode-length", eval_len, "Step cap per episode");
  eval->add_flag("--oracle", eval_oracle, "Use the scripted pin pad oracle policy");

  CLI::App* viz = app.add_subcommand("viz-goals", "Render env frames above decoded goals");
  add_common(viz, viz_flags);
  std::string viz_ckpt, viz_out = "goals.ppm";
  int viz_len = 64;
  viz->add_option("--checkpoint", viz_ckpt, "Checkpoint file");
  viz->add_option("--out", viz_out, "Output PPM path");
  viz->add_option("--length", viz_len, "Episode steps to render");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      director::RunConfig cfg = build_config(train_flags);
      director::TrainResult res = director::run_train(cfg, train_flags.resume);
      std::printf("done: env_steps=%lld train_steps=%lld best_episode_return=%.2f\n",
                  static_cast<long long>(res.env_steps),
                  static_cast<long long>(res.train_steps), res.best_episode_return);
      std::printf("metrics: %s\ncheckpoint: %s\n", res.metrics_path.c_str(),
                  res.checkpoint_path.c_str());
    } else if (eval->parsed()) {
      director::RunConfig cfg = build_config(eval_flags);
      const std::string ckpt = !eval_ckpt.empty() ? eval_ckpt : eval_flags.resume;
      director::EvalResult res =
          director::run_eval(cfg, ckpt, eval_episodes, eval_len, eval_oracle);
      std::printf("episodes: %d\nreturns:", static_cast<int>(res.returns.size()));
      for (double r : res.returns) std::printf(" %.2f", r);
      std::printf("\nmean: %.3f\nstd: %.3f\n", res.mean, res.stddev);
    } else if (viz->parsed()) {
      director::RunConfig cfg = build_config(viz_flags);
      const std::string ckpt = !viz_ckpt.empty() ? viz_ckpt : viz_flags.resume;
      director::VizResult res = director::visualize_goals(cfg, ckpt, viz_len, viz_out);
      std::printf("wrote %s (%d columns, %zu goal changes, roundtrip mse %.5f)\n",
                  res.path.c_str(), res.columns, res.goal_change_steps.size(),
                  res.roundtrip_mse);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
