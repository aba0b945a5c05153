#include "director/envs.hpp"

#include <algorithm>
#include <queue>

namespace director {

namespace {

// 16x16 cell grid at 4 px per cell. Rows 14-15 hold the history strip,
// row 13 is the wall above it; the walkable interior is rows 1..12,
// cols 1..14.
constexpr int kCells = 16;
constexpr int kCellPx = 4;
constexpr int kRowMin = 1, kRowMax = 12, kColMin = 1, kColMax = 14;
constexpr int kStripRow = 14;

constexpr std::array<uint8_t, 3> kBackground = {255, 255, 255};
constexpr std::array<uint8_t, 3> kWall = {64, 64, 64};
constexpr std::array<uint8_t, 3> kAgent = {0, 0, 0};
constexpr std::array<uint8_t, 3> kStripBg = {16, 16, 16};

constexpr std::array<std::array<uint8_t, 3>, 6> kPadColors = {{
    {224, 48, 48},    // red
    {48, 192, 48},    // green
    {64, 96, 255},    // blue
    {232, 200, 48},   // yellow
    {200, 64, 208},   // magenta
    {48, 200, 208},   // cyan
}};

struct CellImage {
  std::vector<uint8_t> px;  // H*W*3
  int h, w;
  CellImage(int h_, int w_) : px(size_t(h_) * w_ * 3), h(h_), w(w_) {}
  void fill(int r0, int c0, int r1, int c1, std::array<uint8_t, 3> color) {
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c)
        for (int k = 0; k < 3; ++k) px[(size_t(r) * w + c) * 3 + k] = color[k];
  }
  void fill_cell(int cr, int cc, std::array<uint8_t, 3> color, int cell_px) {
    fill(cr * cell_px, cc * cell_px, (cr + 1) * cell_px - 1, (cc + 1) * cell_px - 1, color);
  }
  Tensor to_tensor() const {
    Tensor t({h, w, 3});
    for (size_t i = 0; i < px.size(); ++i) t.data_mut()[i] = px[i] / 255.0f;
    return t;
  }
};

std::vector<PinPadEnv::Pad> pad_layout(int num_pads) {
  auto pad = [](int id, int r0, int c0, int r1, int c1) {
    return PinPadEnv::Pad{id, r0, c0, r1, c1, kPadColors[size_t(id)]};
  };
  // Fixed symmetric border placements per pad count. The two-pad debug
  // layout uses taller side pads.
  switch (num_pads) {
    case 2:
      return {pad(0, 3, 1, 10, 3), pad(1, 3, 12, 10, 14)};
    case 3:
      return {pad(0, 10, 1, 12, 3), pad(1, 10, 12, 12, 14), pad(2, 1, 6, 3, 8)};
    case 4:
      return {pad(0, 1, 1, 3, 3), pad(1, 1, 12, 3, 14), pad(2, 10, 1, 12, 3),
              pad(3, 10, 12, 12, 14)};
    case 5:
      return {pad(0, 1, 1, 3, 3), pad(1, 1, 12, 3, 14), pad(2, 10, 1, 12, 3),
              pad(3, 10, 12, 12, 14), pad(4, 1, 6, 3, 8)};
    case 6:
      return {pad(0, 1, 1, 3, 3),   pad(1, 1, 12, 3, 14), pad(2, 10, 1, 12, 3),
              pad(3, 10, 12, 12, 14), pad(4, 5, 1, 7, 3),   pad(5, 5, 12, 7, 14)};
    default:
      throw ConfigError("pinpad: unsupported pad count " + std::to_string(num_pads));
  }
}

const char* pad_count_name(int n) {
  switch (n) {
    case 2: return "two";
    case 3: return "three";
    case 4: return "four";
    case 5: return "five";
    case 6: return "six";
  }
  return "?";
}

}  // namespace

PinPadEnv::PinPadEnv(int num_pads, bool include_noop, int episode_length)
    : num_pads_(num_pads),
      include_noop_(include_noop),
      episode_length_(episode_length),
      pads_(pad_layout(num_pads)) {}

std::string PinPadEnv::id() const {
  return std::string("pinpad:") + pad_count_name(num_pads_);
}

bool PinPadEnv::walkable(int r, int c) const {
  return r >= kRowMin && r <= kRowMax && c >= kColMin && c <= kColMax;
}

int PinPadEnv::pad_at(int r, int c) const {
  for (const Pad& p : pads_)
    if (p.contains(r, c)) return p.id;
  return -1;
}

void PinPadEnv::place_agent_random() {
  while (true) {
    const int r = kRowMin + static_cast<int>(rng_->uniform_int(kRowMax - kRowMin + 1));
    const int c = kColMin + static_cast<int>(rng_->uniform_int(kColMax - kColMin + 1));
    if (pad_at(r, c) < 0) {
      agent_r_ = r;
      agent_c_ = c;
      return;
    }
  }
}

EnvStep PinPadEnv::reset(uint64_t seed) {
  rng_ = std::make_unique<Rng>(derive_seed(seed, 17));
  target_.resize(size_t(num_pads_));
  for (int i = 0; i < num_pads_; ++i) target_[size_t(i)] = i;
  for (int i = num_pads_ - 1; i > 0; --i)
    std::swap(target_[size_t(i)], target_[size_t(rng_->uniform_int(i + 1))]);
  history_.clear();
  step_count_ = 0;
  sequences_done_ = 0;
  place_agent_random();
  EnvStep s;
  s.image = render();
  s.is_first = true;
  return s;
}

EnvStep PinPadEnv::step(int action) {
  if (action < 0 || action >= num_actions())
    throw ContractError("pinpad: invalid action " + std::to_string(action));
  int r = agent_r_, c = agent_c_;
  if (action == 0) r -= 1;
  if (action == 1) r += 1;
  if (action == 2) c -= 1;
  if (action == 3) c += 1;
  if (walkable(r, c)) {
    agent_r_ = r;
    agent_c_ = c;
  }
  EnvStep s;
  const int pad = pad_at(agent_r_, agent_c_);
  if (pad >= 0 && (history_.empty() || history_.back() != pad)) {
    history_.push_back(pad);
    while (static_cast<int>(history_.size()) > num_pads_) history_.pop_front();
    if (static_cast<int>(history_.size()) == num_pads_ &&
        std::equal(history_.begin(), history_.end(), target_.begin())) {
      s.reward = 10.0f;
      sequences_done_ += 1;
      history_.clear();
      place_agent_random();
    }
  }
  step_count_ += 1;
  s.done = step_count_ >= episode_length_;
  s.image = render();
  s.info["sequences"] = static_cast<float>(sequences_done_);
  return s;
}

Tensor PinPadEnv::render() const {
  CellImage img(kCells * kCellPx, kCells * kCellPx);
  img.fill(0, 0, kCells * kCellPx - 1, kCells * kCellPx - 1, kWall);
  for (int r = kRowMin; r <= kRowMax; ++r)
    for (int c = kColMin; c <= kColMax; ++c) img.fill_cell(r, c, kBackground, kCellPx);
  for (const Pad& p : pads_)
    for (int r = p.r0; r <= p.r1; ++r)
      for (int c = p.c0; c <= p.c1; ++c) img.fill_cell(r, c, p.color, kCellPx);
  img.fill_cell(agent_r_, agent_c_, kAgent, kCellPx);
  // History strip: ordered swatches, two cells per activation.
  img.fill(kStripRow * kCellPx, 0, kCells * kCellPx - 1, kCells * kCellPx - 1, kStripBg);
  int slot = 0;
  for (int id : history_) {
    img.fill_cell(kStripRow, slot * 2, kPadColors[size_t(id)], kCellPx);
    img.fill_cell(kStripRow, slot * 2 + 1, kPadColors[size_t(id)], kCellPx);
    img.fill_cell(kStripRow + 1, slot * 2, kPadColors[size_t(id)], kCellPx);
    img.fill_cell(kStripRow + 1, slot * 2 + 1, kPadColors[size_t(id)], kCellPx);
    slot += 1;
  }
  return img.to_tensor();
}

// ---- ReachColor -------------------------------------------------------------

ReachColorEnv::ReachColorEnv(bool include_noop, int episode_length)
    : include_noop_(include_noop), episode_length_(episode_length) {}

EnvStep ReachColorEnv::reset(uint64_t seed) {
  rng_ = std::make_unique<Rng>(derive_seed(seed, 23));
  agent_r_ = 1 + static_cast<int>(rng_->uniform_int(6));
  agent_c_ = 1 + static_cast<int>(rng_->uniform_int(6));
  do {
    goal_r_ = 1 + static_cast<int>(rng_->uniform_int(6));
    goal_c_ = 1 + static_cast<int>(rng_->uniform_int(6));
  } while (goal_r_ == agent_r_ && goal_c_ == agent_c_);
  step_count_ = 0;
  EnvStep s;
  s.image = render();
  s.is_first = true;
  return s;
}

EnvStep ReachColorEnv::step(int action) {
  if (action < 0 || action >= num_actions())
    throw ContractError("reachcolor: invalid action");
  int r = agent_r_, c = agent_c_;
  if (action == 0) r -= 1;
  if (action == 1) r += 1;
  if (action == 2) c -= 1;
  if (action == 3) c += 1;
  if (r >= 1 && r <= 6 && c >= 1 && c <= 6) {
    agent_r_ = r;
    agent_c_ = c;
  }
  step_count_ += 1;
  EnvStep s;
  if (agent_r_ == goal_r_ && agent_c_ == goal_c_) {
    s.reward = 1.0f;
    s.done = true;
  }
  s.done = s.done || step_count_ >= episode_length_;
  s.image = render();
  return s;
}

Tensor ReachColorEnv::render() const {
  CellImage img(16, 16);
  img.fill(0, 0, 15, 15, kWall);
  for (int r = 1; r <= 6; ++r)
    for (int c = 1; c <= 6; ++c) img.fill_cell(r, c, kBackground, 2);
  img.fill_cell(goal_r_, goal_c_, kPadColors[0], 2);
  img.fill_cell(agent_r_, agent_c_, kAgent, 2);
  return img.to_tensor();
}

// ---- factory ----------------------------------------------------------------

std::unique_ptr<Env> make_env(const std::string& name, bool include_noop) {
  if (name == "reachcolor") return std::make_unique<ReachColorEnv>(include_noop);
  if (name.rfind("pinpad:", 0) == 0) {
    const std::string count = name.substr(7);
    static const std::map<std::string, int> counts = {
        {"two", 2}, {"three", 3}, {"four", 4}, {"five", 5}, {"six", 6}};
    auto it = counts.find(count);
    if (it == counts.end()) throw ConfigError("unknown pinpad variant: " + name);
    return std::make_unique<PinPadEnv>(it->second, include_noop);
  }
  throw ConfigError("unknown environment: " + name);
}

// ---- scripted oracle ---------------------------------------------------------

namespace {

// Longest suffix of the bounded history that prefixes the target.
int sequence_progress(const std::deque<int>& history, const std::vector<int>& target) {
  const int max_k = std::min(history.size(), target.size());
  for (int k = max_k; k > 0; --k) {
    bool ok = true;
    for (int i = 0; i < k; ++i)
      if (history[history.size() - size_t(k) + size_t(i)] != target[size_t(i)]) {
        ok = false;
        break;
      }
    if (ok) return k;
  }
  return 0;
}

}  // namespace

int pinpad_oracle_action(const PinPadEnv& env) {
  const auto& target = env.target();
  int progress = sequence_progress(env.history(), target);
  if (progress >= static_cast<int>(target.size())) progress = 0;
  const int want = target[size_t(progress)];

  // BFS to the wanted pad, avoiding every other pad so the history stays
  // clean on the way.
  const auto [ar, ac] = env.agent();
  auto key = [](int r, int c) { return r * 16 + c; };
  std::vector<int> prev_action(16 * 16, -1);
  std::vector<bool> seen(16 * 16, false);
  std::queue<std::pair<int, int>> q;
  q.push({ar, ac});
  seen[size_t(key(ar, ac))] = true;
  int goal_key = -1;
  while (!q.empty() && goal_key < 0) {
    auto [r, c] = q.front();
    q.pop();
    const int dr[4] = {-1, 1, 0, 0};
    const int dc[4] = {0, 0, -1, 1};
    for (int a = 0; a < 4; ++a) {
      const int nr = r + dr[a], nc = c + dc[a];
      if (!env.walkable(nr, nc) || seen[size_t(key(nr, nc))]) continue;
      const int pad = env.pad_at(nr, nc);
      if (pad >= 0 && pad != want) continue;
      seen[size_t(key(nr, nc))] = true;
      prev_action[size_t(key(nr, nc))] = a;
      if (pad == want) {
        goal_key = key(nr, nc);
        break;
      }
      q.push({nr, nc});
    }
  }
  if (goal_key < 0) return 4 % env.num_actions();  // unreachable; stall
  // Walk the parent chain back to the agent to find the first move.
  int r = goal_key / 16, c = goal_key % 16;
  int action = prev_action[size_t(goal_key)];
  while (!(r == ar && c == ac)) {
    const int a = prev_action[size_t(key(r, c))];
    action = a;
    if (a == 0) r += 1;
    if (a == 1) r -= 1;
    if (a == 2) c += 1;
    if (a == 3) c -= 1;
  }
  return action;
}

}  // namespace director
