#pragma once

#include <memory>

#include "director/nn.hpp"

namespace director {

struct GoalAeConfig {
  int feature_width = 0;
  int latents = 8;  // L
  int classes = 8;  // C
  float beta = 1.0f;
  MlpConfig mlp{512, 4};

  int code_width() const { return latents * classes; }
};

struct GoalAeLossOut {
  diff::Var loss;
  float total = 0, rec = 0, kl = 0;
};

// Compresses model states into a vector of categorical codes and decodes
// codes back to feature-space goals. Codes are L one-hot rows of C classes,
// flattened to an L*C sparse vector with exactly L ones.
class GoalAutoencoder : public Module {
 public:
  GoalAutoencoder(const std::string& name, GoalAeConfig cfg, Rng& rng);

  const GoalAeConfig& config() const { return cfg_; }

  // Encoder logits for a batch of feature rows: [N, L*C].
  diff::Var encode_logits(diff::Graph& g, const diff::Var& features) const;
  // Samples a one-hot code per latent: [N, L*C] with L ones per row.
  Tensor encode_sample(const Tensor& features, Rng& rng) const;
  Tensor encode_mode(const Tensor& features) const;  // argmax per latent
  // Decodes flat one-hot codes to feature space; validates the code layout.
  Tensor decode(const Tensor& codes) const;
  diff::Var decode_var(diff::Graph& g, const diff::Var& codes) const;

  // Reconstruction + beta * KL(enc || uniform); gradients stay inside the
  // autoencoder (features enter as constants).
  GoalAeLossOut loss(diff::Graph& g, const Tensor& features, Rng& rng) const;

  // Squared reconstruction error per state under a single sampled code;
  // evaluated with frozen parameters (no gradients). Returns [N].
  Tensor exploration_rewards(const Tensor& features, Rng& rng) const;

 private:
  void validate_codes(const Tensor& codes) const;

  GoalAeConfig cfg_;
  std::unique_ptr<Mlp> enc_;
  std::unique_ptr<Mlp> dec_;
};

// Samples a one-hot row per row of probabilities: [N,C] -> [N,C].
Tensor sample_one_hot_rows(const Tensor& probs, Rng& rng);
Tensor argmax_one_hot_rows(const Tensor& values);

// KL(p || uniform) per row = ln(C) - entropy(p), from logits: [N,1].
diff::Var kl_to_uniform_rows(const diff::Var& logits);

}  // namespace director
