#pragma once

#include <memory>
#include <vector>

#include "director/nn.hpp"
#include "director/replay_buffer.hpp"

namespace director {

struct WorldModelConfig {
  Shape obs_shape;  // {H,W,3}
  int action_dim = 0;
  int deter = 512;
  int stoch = 32;
  float min_std = 0.1f;
  int conv_depth = 32;
  MlpConfig mlp{512, 4};
  float beta = 1.0f;

  int feature_width() const { return deter + stoch; }
  // Images of 32x32 and up go through the strided conv stack; small debug
  // frames use an MLP on flattened pixels.
  bool use_conv() const { return obs_shape[0] >= 32; }
};

// Latent state of the RSSM: deterministic recurrent part plus a diagonal
// Gaussian stochastic part. All tensors are [N, width] for a batch of N.
struct ModelState {
  Tensor deter;
  Tensor mean, std, stoch;
  Tensor feature() const { return t_concat_cols(deter, stoch); }
  int64_t batch() const { return deter.rows(); }
};

// Graph-mode state used while building the training loss.
struct StateVars {
  diff::Var deter;
  diff::Var mean, std, stoch;
  diff::Var feature() const { return diff::concat_cols({deter, stoch}); }
};

struct WmLossOut {
  diff::Var loss;
  float total = 0, kl = 0, rec = 0, rew = 0;
  // Posterior states flattened time-major: row t*B+b.
  Tensor post_deter, post_stoch, post_features;
};

class WorldModel : public Module {
 public:
  WorldModel(const std::string& name, WorldModelConfig cfg, Rng& rng);

  const WorldModelConfig& config() const { return cfg_; }

  // Training loss over a replay batch (Eq. of the variational objective):
  // beta*KL(post||prior) + image reconstruction + reward regression, with
  // resets applied at is_first.
  WmLossOut loss(diff::Graph& g, const BatchSequences& batch, Rng& rng) const;

  ModelState initial_state(int n) const;
  ModelState obs_step(const ModelState& prev, const Tensor& prev_action,
                      const Tensor& image, Rng& rng, bool sample = true) const;
  ModelState img_step(const ModelState& prev, const Tensor& action, Rng& rng,
                      bool sample = true) const;

  Tensor decode_images(const Tensor& features) const;   // [N,H,W,3]
  Tensor predict_rewards(const Tensor& features) const;  // [N,1]

  // Graph-mode pieces shared by loss() and the inference wrappers.
  diff::Var encode(diff::Graph& g, const diff::Var& images) const;
  diff::Var decode_flat(diff::Graph& g, const diff::Var& features) const;
  diff::Var reward_head(diff::Graph& g, const diff::Var& features) const;
  StateVars initial_vars(int n) const;
  StateVars obs_step_vars(diff::Graph& g, const StateVars& prev, const diff::Var& prev_action,
                          const diff::Var& embed, const Tensor& noise) const;
  StateVars img_step_vars(diff::Graph& g, const StateVars& prev, const diff::Var& action,
                          const Tensor& noise) const;

 private:
  diff::Var stats_to_std(const diff::Var& raw) const;
  StateVars step_core(diff::Graph& g, const StateVars& prev, const diff::Var& action) const;

  WorldModelConfig cfg_;
  // Conv observation path.
  std::vector<std::unique_ptr<Conv2d>> enc_convs_;
  std::vector<std::unique_ptr<ConvTranspose2d>> dec_convs_;
  std::unique_ptr<Linear> dec_in_;
  // MLP observation path (small images).
  std::unique_ptr<Mlp> enc_mlp_;
  std::unique_ptr<Mlp> dec_mlp_;

  std::unique_ptr<GruCell> gru_;
  std::unique_ptr<Mlp> post_;
  std::unique_ptr<Mlp> prior_;
  std::unique_ptr<Mlp> reward_;
  int embed_width_ = 0;
};

// Diagonal Gaussian KL per row, summed over dimensions: [N,1].
diff::Var gaussian_kl_rows(const diff::Var& mean_q, const diff::Var& std_q,
                           const diff::Var& mean_p, const diff::Var& std_p);

}  // namespace director
