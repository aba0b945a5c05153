#pragma once

#include <array>
#include <deque>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "director/rng.hpp"
#include "director/tensor.hpp"

namespace director {

struct EnvStep {
  Tensor image;  // [H,W,3] floats in [0,1]
  float reward = 0.0f;
  bool done = false;
  bool is_first = false;
  std::map<std::string, float> info;
};

class Env {
 public:
  virtual ~Env() = default;
  virtual std::string id() const = 0;
  virtual int num_actions() const = 0;
  virtual Shape obs_shape() const = 0;  // {H,W,3}
  virtual EnvStep reset(uint64_t seed) = 0;
  virtual EnvStep step(int action) = 0;
};

// Visual Pin Pad: a black square moves across a walled arena with colored
// pads. Activating all pads in the hidden target order pays 10 and teleports
// the agent; the recent activation history is rendered as swatches in the
// bottom strip. Episodes run for a fixed number of steps.
class PinPadEnv : public Env {
 public:
  struct Pad {
    int id;
    int r0, c0, r1, c1;  // inclusive cell range
    std::array<uint8_t, 3> color;
    bool contains(int r, int c) const { return r >= r0 && r <= r1 && c >= c0 && c <= c1; }
  };

  PinPadEnv(int num_pads, bool include_noop = true, int episode_length = 2000);

  std::string id() const override;
  int num_actions() const override { return include_noop_ ? 5 : 4; }
  Shape obs_shape() const override { return {64, 64, 3}; }
  EnvStep reset(uint64_t seed) override;
  EnvStep step(int action) override;

  Tensor render() const;

  // Inspection hooks for the scripted oracle and tests.
  const std::vector<Pad>& pads() const { return pads_; }
  const std::vector<int>& target() const { return target_; }
  const std::deque<int>& history() const { return history_; }
  std::pair<int, int> agent() const { return {agent_r_, agent_c_}; }
  int steps_taken() const { return step_count_; }
  int episode_length() const { return episode_length_; }
  bool walkable(int r, int c) const;
  int pad_at(int r, int c) const;  // -1 when not on a pad

 private:
  void place_agent_random();

  int num_pads_;
  bool include_noop_;
  int episode_length_;
  std::vector<Pad> pads_;
  std::vector<int> target_;
  std::deque<int> history_;
  int agent_r_ = 0, agent_c_ = 0;
  int step_count_ = 0;
  int sequences_done_ = 0;
  std::unique_ptr<Rng> rng_;
};

// Small one-room debug task: reward 1 for stepping on the colored cell.
// Renders at 16x16 so the MLP observation path gets exercised.
class ReachColorEnv : public Env {
 public:
  explicit ReachColorEnv(bool include_noop = true, int episode_length = 100);

  std::string id() const override { return "reachcolor"; }
  int num_actions() const override { return include_noop_ ? 5 : 4; }
  Shape obs_shape() const override { return {16, 16, 3}; }
  EnvStep reset(uint64_t seed) override;
  EnvStep step(int action) override;

  Tensor render() const;

 private:
  bool include_noop_;
  int episode_length_;
  int agent_r_ = 1, agent_c_ = 1;
  int goal_r_ = 1, goal_c_ = 1;
  int step_count_ = 0;
  std::unique_ptr<Rng> rng_;
};

// Environment ids: "pinpad:two" ... "pinpad:six", "reachcolor".
std::unique_ptr<Env> make_env(const std::string& name, bool include_noop = true);

// Shortest-path action toward completing the target sequence. Used to check
// that every pad count is solvable inside the episode limit.
int pinpad_oracle_action(const PinPadEnv& env);

}  // namespace director
