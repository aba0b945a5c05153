#include "director/world_model.hpp"

#include <cstring>

namespace director {

using diff::Graph;
using diff::Var;

namespace {

// Reorders [B,T,...] to time-major [T*B, inner].
Tensor time_major(const Tensor& t, int batch, int length) {
  const int64_t inner = t.numel() / (int64_t(batch) * length);
  Tensor out({static_cast<int>(int64_t(length) * batch), static_cast<int>(inner)});
  for (int b = 0; b < batch; ++b)
    for (int s = 0; s < length; ++s)
      std::memcpy(out.data_mut() + (int64_t(s) * batch + b) * inner,
                  t.data() + (int64_t(b) * length + s) * inner, sizeof(float) * inner);
  return out;
}

}  // namespace

Var gaussian_kl_rows(const Var& mean_q, const Var& std_q, const Var& mean_p,
                     const Var& std_p) {
  using namespace diff;
  Var log_ratio = log_v(vdiv(std_p, std_q));
  Var num = add(square(std_q), square(sub(mean_q, mean_p)));
  Var den = mul_scalar(square(std_p), 2.0f);
  Var per_dim = add_scalar(add(log_ratio, vdiv(num, den)), -0.5f);
  return row_sum(per_dim);
}

WorldModel::WorldModel(const std::string& name, WorldModelConfig cfg, Rng& rng)
    : cfg_(std::move(cfg)) {
  const int h = cfg_.obs_shape[0], w = cfg_.obs_shape[1], c = cfg_.obs_shape[2];
  if (cfg_.action_dim <= 0) throw ConfigError("world model: action_dim unset");
  if (cfg_.use_conv()) {
    if (h % 16 != 0 || w % 16 != 0)
      throw ConfigError("world model: conv path needs multiples of 16");
    const int d = cfg_.conv_depth;
    const int chans[5] = {c, d, 2 * d, 4 * d, 8 * d};
    for (int i = 0; i < 4; ++i) {
      enc_convs_.push_back(std::make_unique<Conv2d>(
          name + "/enc/c" + std::to_string(i), 4, 4, chans[i], chans[i + 1], 2, 1, rng));
      add_child(enc_convs_.back().get());
    }
    embed_width_ = (h / 16) * (w / 16) * 8 * d;
    dec_in_ = std::make_unique<Linear>(name + "/dec/in", cfg_.feature_width(),
                                       embed_width_, rng);
    add_child(dec_in_.get());
    for (int i = 3; i >= 0; --i) {
      const int cout = i == 0 ? c : chans[i];
      dec_convs_.push_back(std::make_unique<ConvTranspose2d>(
          name + "/dec/c" + std::to_string(i), 4, 4, chans[i + 1], cout, 2, 1, rng));
      add_child(dec_convs_.back().get());
    }
  } else {
    embed_width_ = cfg_.mlp.hidden;
    enc_mlp_ = std::make_unique<Mlp>(name + "/enc/mlp", h * w * c, cfg_.mlp,
                                     embed_width_, rng);
    dec_mlp_ = std::make_unique<Mlp>(name + "/dec/mlp", cfg_.feature_width(), cfg_.mlp,
                                     h * w * c, rng);
    add_child(enc_mlp_.get());
    add_child(dec_mlp_.get());
  }
  gru_ = std::make_unique<GruCell>(name + "/gru", cfg_.stoch + cfg_.action_dim,
                                   cfg_.deter, rng);
  post_ = std::make_unique<Mlp>(name + "/post", cfg_.deter + embed_width_, cfg_.mlp,
                                2 * cfg_.stoch, rng);
  prior_ = std::make_unique<Mlp>(name + "/prior", cfg_.deter, cfg_.mlp, 2 * cfg_.stoch, rng);
  reward_ = std::make_unique<Mlp>(name + "/reward", cfg_.feature_width(), cfg_.mlp, 1, rng);
  add_child(gru_.get());
  add_child(post_.get());
  add_child(prior_.get());
  add_child(reward_.get());
}

Var WorldModel::encode(Graph& g, const Var& images) const {
  if (cfg_.use_conv()) {
    Var h = images;
    for (const auto& conv : enc_convs_) h = diff::elu(conv->forward(g, h));
    const int n = h.value().dim(0);
    Var flat = diff::reshape(h, {n, embed_width_});
    check_finite(flat.value(), "encoder");
    return flat;
  }
  const int n = images.value().dim(0);
  Var flat = diff::reshape(images, {n, cfg_.obs_shape[0] * cfg_.obs_shape[1] *
                                           cfg_.obs_shape[2]});
  return enc_mlp_->forward(g, flat);
}

Var WorldModel::decode_flat(Graph& g, const Var& features) const {
  const int n = static_cast<int>(features.rows());
  const int h = cfg_.obs_shape[0], w = cfg_.obs_shape[1], c = cfg_.obs_shape[2];
  if (!cfg_.use_conv()) return dec_mlp_->forward(g, features);
  Var x = dec_in_->forward(g, features);
  x = diff::reshape(x, {n, h / 16, w / 16, 8 * cfg_.conv_depth});
  for (size_t i = 0; i < dec_convs_.size(); ++i) {
    x = dec_convs_[i]->forward(g, x);
    if (i + 1 < dec_convs_.size()) x = diff::elu(x);
  }
  check_finite(x.value(), "decoder");
  return diff::reshape(x, {n, h * w * c});
}

Var WorldModel::reward_head(Graph& g, const Var& features) const {
  return reward_->forward(g, features);
}

Var WorldModel::stats_to_std(const Var& raw) const {
  return diff::add_scalar(diff::softplus(raw), cfg_.min_std);
}

StateVars WorldModel::initial_vars(int n) const {
  StateVars s;
  s.deter = Var(Tensor({n, cfg_.deter}));
  s.mean = Var(Tensor({n, cfg_.stoch}));
  s.std = Var(Tensor::full({n, cfg_.stoch}, 1.0f));
  s.stoch = Var(Tensor({n, cfg_.stoch}));
  return s;
}

StateVars WorldModel::step_core(Graph& g, const StateVars& prev, const Var& action) const {
  StateVars next;
  Var gru_in = diff::concat_cols({prev.stoch, action});
  next.deter = gru_->forward(g, prev.deter, gru_in);
  return next;
}

StateVars WorldModel::obs_step_vars(Graph& g, const StateVars& prev, const Var& prev_action,
                                    const Var& embed, const Tensor& noise) const {
  StateVars next = step_core(g, prev, prev_action);
  Var stats = post_->forward(g, diff::concat_cols({next.deter, embed}));
  next.mean = diff::slice_cols(stats, 0, cfg_.stoch);
  next.std = stats_to_std(diff::slice_cols(stats, cfg_.stoch, 2 * cfg_.stoch));
  next.stoch = noise.empty() ? next.mean
                             : diff::add(next.mean, diff::mul(next.std, Var(noise)));
  return next;
}

StateVars WorldModel::img_step_vars(Graph& g, const StateVars& prev, const Var& action,
                                    const Tensor& noise) const {
  StateVars next = step_core(g, prev, action);
  Var stats = prior_->forward(g, next.deter);
  next.mean = diff::slice_cols(stats, 0, cfg_.stoch);
  next.std = stats_to_std(diff::slice_cols(stats, cfg_.stoch, 2 * cfg_.stoch));
  next.stoch = noise.empty() ? next.mean
                             : diff::add(next.mean, diff::mul(next.std, Var(noise)));
  return next;
}

WmLossOut WorldModel::loss(Graph& g, const BatchSequences& batch, Rng& rng) const {
  const int B = batch.batch, T = batch.length;
  const int S = cfg_.stoch, D = cfg_.deter;
  const int64_t n_all = int64_t(T) * B;

  Tensor images_tm = time_major(batch.images, B, T);  // [T*B, HWC]
  Tensor actions_tm = time_major(batch.actions, B, T);
  Tensor first_tm = time_major(batch.is_first, B, T);  // [T*B, 1]

  const int hwc = cfg_.obs_shape[0] * cfg_.obs_shape[1] * cfg_.obs_shape[2];
  Var embed_all = encode(
      g, diff::reshape(Var(images_tm), {static_cast<int>(n_all), cfg_.obs_shape[0],
                                        cfg_.obs_shape[1], cfg_.obs_shape[2]}));

  StateVars state = initial_vars(B);
  std::vector<Var> feats;
  feats.reserve(size_t(T));
  Var kl_sum(Tensor::scalar(0.0f));
  for (int t = 0; t < T; ++t) {
    // Zero previous state and action where this step starts a new episode.
    Tensor keep({B});
    for (int b = 0; b < B; ++b)
      keep.data_mut()[b] = 1.0f - first_tm.data()[int64_t(t) * B + b];
    StateVars prev;
    prev.deter = diff::scale_rows(state.deter, keep);
    prev.stoch = diff::scale_rows(state.stoch, keep);
    prev.mean = state.mean;
    prev.std = state.std;
    Var prev_action(Tensor({B, cfg_.action_dim}));
    if (t > 0)
      prev_action = diff::scale_rows(
          Var(t_rows(actions_tm, int64_t(t - 1) * B, int64_t(t) * B)), keep);

    Var embed_t = diff::slice_rows(embed_all, int64_t(t) * B, int64_t(t + 1) * B);
    Tensor noise = rng.normal_tensor({B, S});
    state = obs_step_vars(g, prev, prev_action, embed_t, noise);

    Var prior_stats = prior_->forward(g, state.deter);
    Var prior_mean = diff::slice_cols(prior_stats, 0, S);
    Var prior_std = stats_to_std(diff::slice_cols(prior_stats, S, 2 * S));
    kl_sum = diff::add(kl_sum,
                       diff::sum_all(gaussian_kl_rows(state.mean, state.std, prior_mean,
                                                      prior_std)));
    feats.push_back(state.feature());
  }

  Var all_feats = diff::concat_rows(feats);  // [T*B, D+S]
  Var dec = decode_flat(g, all_feats);
  Var rec_rows = diff::row_sum(diff::square(diff::sub(dec, Var(images_tm))));
  Var rec_mean = diff::mean_all(rec_rows);

  // Reward r_t is predicted from the state that saw x_{t+1}; the last reward
  // of the chunk has no following state and is dropped. Length-1 chunks have
  // no reward pairs at all.
  Var rew_mse(Tensor::scalar(0.0f));
  if (T > 1) {
    Var next_feats = diff::slice_rows(all_feats, B, n_all);
    Var pred_rew = reward_->forward(g, next_feats);
    Tensor rew_targets({static_cast<int>(n_all - B), 1});
    Tensor rewards_tm = time_major(batch.rewards, B, T);
    std::memcpy(rew_targets.data_mut(), rewards_tm.data(),
                sizeof(float) * size_t(n_all - B));
    rew_mse = diff::mean_all(diff::square(diff::sub(pred_rew, Var(rew_targets))));
  }

  Var kl_mean = diff::mul_scalar(kl_sum, 1.0f / static_cast<float>(n_all));

  WmLossOut out;
  out.loss = diff::add(diff::add(diff::mul_scalar(kl_mean, cfg_.beta), rec_mean), rew_mse);
  out.total = out.loss.value().scalar_value();
  out.kl = kl_mean.value().scalar_value();
  out.rec = rec_mean.value().scalar_value();
  out.rew = rew_mse.value().scalar_value();
  if (!std::isfinite(out.total))
    throw DivergenceError("world model loss is not finite");

  // Detached copies for the goal autoencoder and imagination starts.
  out.post_features = all_feats.value();
  Tensor deters({static_cast<int>(n_all), D}), stochs({static_cast<int>(n_all), S});
  for (int64_t r = 0; r < n_all; ++r) {
    std::memcpy(deters.data_mut() + r * D, all_feats.value().data() + r * (D + S),
                sizeof(float) * D);
    std::memcpy(stochs.data_mut() + r * S, all_feats.value().data() + r * (D + S) + D,
                sizeof(float) * S);
  }
  out.post_deter = deters;
  out.post_stoch = stochs;
  return out;
}

ModelState WorldModel::initial_state(int n) const {
  ModelState s;
  s.deter = Tensor({n, cfg_.deter});
  s.mean = Tensor({n, cfg_.stoch});
  s.std = Tensor::full({n, cfg_.stoch}, 1.0f);
  s.stoch = Tensor({n, cfg_.stoch});
  return s;
}

namespace {
StateVars to_vars(const ModelState& s) {
  StateVars v;
  v.deter = Var(s.deter);
  v.mean = Var(s.mean);
  v.std = Var(s.std);
  v.stoch = Var(s.stoch);
  return v;
}

ModelState from_vars(const StateVars& v) {
  ModelState s;
  s.deter = v.deter.value();
  s.mean = v.mean.value();
  s.std = v.std.value();
  s.stoch = v.stoch.value();
  return s;
}
}  // namespace

ModelState WorldModel::obs_step(const ModelState& prev, const Tensor& prev_action,
                                const Tensor& image, Rng& rng, bool sample) const {
  Graph g(false);
  const int n = static_cast<int>(prev.deter.rows());
  Var images(image.ndim() == 3
                 ? image.reshape({1, cfg_.obs_shape[0], cfg_.obs_shape[1], cfg_.obs_shape[2]})
                 : image);
  Var embed = encode(g, images);
  Tensor noise = sample ? rng.normal_tensor({n, cfg_.stoch}) : Tensor();
  return from_vars(obs_step_vars(g, to_vars(prev), Var(prev_action), embed, noise));
}

ModelState WorldModel::img_step(const ModelState& prev, const Tensor& action, Rng& rng,
                                bool sample) const {
  Graph g(false);
  const int n = static_cast<int>(prev.deter.rows());
  Tensor noise = sample ? rng.normal_tensor({n, cfg_.stoch}) : Tensor();
  return from_vars(img_step_vars(g, to_vars(prev), Var(action), noise));
}

Tensor WorldModel::decode_images(const Tensor& features) const {
  Graph g(false);
  Tensor flat = decode_flat(g, Var(features)).value();
  const int n = static_cast<int>(features.rows());
  return flat.reshape({n, cfg_.obs_shape[0], cfg_.obs_shape[1], cfg_.obs_shape[2]});
}

Tensor WorldModel::predict_rewards(const Tensor& features) const {
  Graph g(false);
  return reward_head(g, Var(features)).value();
}

}  // namespace director
