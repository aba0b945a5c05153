#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "director/nn.hpp"

namespace director {

// Versioned checkpoint: a JSON metadata blob plus a flat map from parameter
// path to value/moment tensors, stored as raw little-endian float32.
// Round trips are bit exact.
struct CheckpointEntry {
  Tensor value;
  Tensor adam_m;
  Tensor adam_v;
  int64_t step = 0;
};

struct Checkpoint {
  nlohmann::json metadata;
  std::map<std::string, CheckpointEntry> entries;

  static Checkpoint from_params(const std::vector<Parameter*>& params,
                                nlohmann::json metadata);
  // Copies stored tensors into matching parameters. Every parameter must be
  // present with an identical shape; anything else is a schema error.
  void load_into(const std::vector<Parameter*>& params) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace director
