#pragma once

#include <cstdint>
#include <deque>
#include <vector>

#include "director/rng.hpp"
#include "director/tensor.hpp"

namespace director {

// Fixed-length chunk batch sampled from the buffer. Layouts:
//   images  [B,T,H,W,C]   actions [B,T,A] one-hot   rewards [B,T]
//   is_first[B,T]
// The action/reward at index t are the ones taken from / received after
// observation t, matching the stored (x_t, a_t, r_t) transitions.
struct BatchSequences {
  Tensor images;
  Tensor actions;
  Tensor rewards;
  Tensor is_first;
  int batch = 0, length = 0;
};

// Episode ring holding uint8 frames. Pixel values are multiples of 1/255,
// so quantization round-trips exactly. Chunks never cross episode ends;
// is_first is set on the first stored step of each episode.
class ReplayBuffer {
 public:
  ReplayBuffer(int64_t capacity_steps, Shape obs_shape, int action_dim);

  void add(int env_id, const Tensor& image, int action, float reward, bool is_first);

  bool ready(int batch, int length) const;
  // Uniform over all valid (episode, offset) chunk positions. Throws
  // ContractError when not ready; check ready() first.
  BatchSequences sample(int batch, int length, Rng& rng) const;

  int64_t total_steps_added() const { return total_added_; }
  int64_t stored_steps() const { return stored_; }
  int64_t num_episodes() const { return episodes_.size(); }

 private:
  struct Episode {
    int64_t id = 0;
    std::vector<uint8_t> frames;  // steps * H*W*C
    std::vector<uint16_t> actions;
    std::vector<float> rewards;
    std::vector<bool> is_first;
    int64_t steps = 0;
  };

  Episode* find_episode(int64_t id);
  int64_t valid_offsets(const Episode& e, int length) const;
  void evict();

  int64_t capacity_;
  Shape obs_shape_;
  int action_dim_;
  int64_t frame_size_;
  std::deque<Episode> episodes_;
  std::vector<int64_t> open_episode_;  // env_id -> episode id, -1 if none
  int64_t next_id_ = 0;
  int64_t total_added_ = 0;
  int64_t stored_ = 0;
};

}  // namespace director
