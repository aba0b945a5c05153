#include "director/replay_buffer.hpp"

#include <cmath>

namespace director {

ReplayBuffer::ReplayBuffer(int64_t capacity_steps, Shape obs_shape, int action_dim)
    : capacity_(capacity_steps),
      obs_shape_(std::move(obs_shape)),
      action_dim_(action_dim),
      frame_size_(shape_numel(obs_shape_)) {
  if (capacity_ <= 0) throw ConfigError("replay: capacity must be positive");
}

void ReplayBuffer::add(int env_id, const Tensor& image, int action, float reward,
                       bool is_first) {
  if (image.numel() != frame_size_)
    throw ContractError("replay: frame shape mismatch");
  if (env_id >= static_cast<int>(open_episode_.size()))
    open_episode_.resize(size_t(env_id) + 1, -1);
  int64_t idx = open_episode_[size_t(env_id)];
  Episode* ep = (is_first || idx < 0) ? nullptr : find_episode(idx);
  if (ep == nullptr) {  // fresh episode (or the open one was evicted)
    episodes_.emplace_back();
    episodes_.back().id = next_id_++;
    open_episode_[size_t(env_id)] = episodes_.back().id;
    ep = &episodes_.back();
  }
  ep->frames.resize(ep->frames.size() + size_t(frame_size_));
  uint8_t* dst = ep->frames.data() + ep->steps * frame_size_;
  for (int64_t i = 0; i < frame_size_; ++i)
    dst[i] = static_cast<uint8_t>(std::lround(image.data()[i] * 255.0f));
  ep->actions.push_back(static_cast<uint16_t>(action));
  ep->rewards.push_back(reward);
  ep->is_first.push_back(is_first);
  ep->steps += 1;
  total_added_ += 1;
  stored_ += 1;
  evict();
}

void ReplayBuffer::evict() {
  while (stored_ > capacity_ && episodes_.size() > 1) {
    stored_ -= episodes_.front().steps;
    for (auto& idx : open_episode_)
      if (idx == episodes_.front().id) idx = -1;
    episodes_.pop_front();
  }
}

ReplayBuffer::Episode* ReplayBuffer::find_episode(int64_t id) {
  for (auto& e : episodes_)
    if (e.id == id) return &e;
  return nullptr;
}

int64_t ReplayBuffer::valid_offsets(const Episode& e, int length) const {
  return std::max<int64_t>(0, e.steps - length + 1);
}

bool ReplayBuffer::ready(int batch, int length) const {
  (void)batch;  // chunks are drawn with replacement
  for (const auto& e : episodes_)
    if (valid_offsets(e, length) > 0) return true;
  return false;
}

BatchSequences ReplayBuffer::sample(int batch, int length, Rng& rng) const {
  if (!ready(batch, length))
    throw ContractError("replay: not ready for batch " + std::to_string(batch) + "x" +
                        std::to_string(length));
  int64_t total = 0;
  for (const auto& e : episodes_) total += valid_offsets(e, length);

  BatchSequences out;
  out.batch = batch;
  out.length = length;
  Shape img_shape = {batch, length};
  for (int d : obs_shape_) img_shape.push_back(d);
  out.images = Tensor(img_shape);
  out.actions = Tensor({batch, length, action_dim_});
  out.rewards = Tensor({batch, length});
  out.is_first = Tensor({batch, length});

  for (int b = 0; b < batch; ++b) {
    int64_t pick = rng.uniform_int(total);
    const Episode* ep = nullptr;
    int64_t offset = 0;
    for (const auto& e : episodes_) {
      const int64_t v = valid_offsets(e, length);
      if (pick < v) {
        ep = &e;
        offset = pick;
        break;
      }
      pick -= v;
    }
    for (int t = 0; t < length; ++t) {
      const int64_t s = offset + t;
      const uint8_t* src = ep->frames.data() + s * frame_size_;
      float* dst = out.images.data_mut() + (int64_t(b) * length + t) * frame_size_;
      for (int64_t i = 0; i < frame_size_; ++i) dst[i] = src[i] / 255.0f;
      const int a = ep->actions[size_t(s)];
      if (a >= 0 && a < action_dim_)
        out.actions.data_mut()[(int64_t(b) * length + t) * action_dim_ + a] = 1.0f;
      out.rewards.data_mut()[int64_t(b) * length + t] = ep->rewards[size_t(s)];
      out.is_first.data_mut()[int64_t(b) * length + t] =
          ep->is_first[size_t(s)] ? 1.0f : 0.0f;
    }
  }
  return out;
}

}  // namespace director
