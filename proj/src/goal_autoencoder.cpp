#include "director/goal_autoencoder.hpp"

#include <cmath>

namespace director {

using diff::Graph;
using diff::Var;

Tensor sample_one_hot_rows(const Tensor& probs, Rng& rng) {
  const int64_t n = probs.rows();
  const int c = probs.cols();
  Tensor out(probs.shape());
  for (int64_t r = 0; r < n; ++r) {
    const int k = rng.categorical(probs.data() + r * c, c);
    out.data_mut()[r * c + k] = 1.0f;
  }
  return out;
}

Tensor argmax_one_hot_rows(const Tensor& values) {
  const int64_t n = values.rows();
  const int c = values.cols();
  Tensor out(values.shape());
  for (int64_t r = 0; r < n; ++r) {
    int best = 0;
    for (int i = 1; i < c; ++i)
      if (values.data()[r * c + i] > values.data()[r * c + best]) best = i;
    out.data_mut()[r * c + best] = 1.0f;
  }
  return out;
}

Var kl_to_uniform_rows(const Var& logits) {
  using namespace diff;
  const float log_c = std::log(static_cast<float>(logits.cols()));
  Var p = softmax_rows(logits);
  Var lp = log_softmax_rows(logits);
  // sum p*log p + log C == log C - H(p)
  return add_scalar(row_sum(mul(p, lp)), log_c);
}

GoalAutoencoder::GoalAutoencoder(const std::string& name, GoalAeConfig cfg, Rng& rng)
    : cfg_(cfg) {
  if (cfg_.feature_width <= 0) throw ConfigError("goal ae: feature width unset");
  enc_ = std::make_unique<Mlp>(name + "/enc", cfg_.feature_width, cfg_.mlp,
                               cfg_.code_width(), rng);
  dec_ = std::make_unique<Mlp>(name + "/dec", cfg_.code_width(), cfg_.mlp,
                               cfg_.feature_width, rng);
  add_child(enc_.get());
  add_child(dec_.get());
}

Var GoalAutoencoder::encode_logits(Graph& g, const Var& features) const {
  if (features.cols() != cfg_.feature_width)
    throw ContractError("goal ae: feature width " + std::to_string(features.cols()) +
                        " != " + std::to_string(cfg_.feature_width));
  return enc_->forward(g, features);
}

Tensor GoalAutoencoder::encode_sample(const Tensor& features, Rng& rng) const {
  Graph g(false);
  Tensor logits = encode_logits(g, Var(features)).value();
  const int64_t n = features.rows();
  Tensor grouped = logits.reshape({static_cast<int>(n * cfg_.latents), cfg_.classes});
  Tensor probs = diff::softmax_rows(Var(grouped)).value();
  Tensor sample = sample_one_hot_rows(probs, rng);
  return sample.reshape({static_cast<int>(n), cfg_.code_width()});
}

Tensor GoalAutoencoder::encode_mode(const Tensor& features) const {
  Graph g(false);
  Tensor logits = encode_logits(g, Var(features)).value();
  const int64_t n = features.rows();
  Tensor grouped = logits.reshape({static_cast<int>(n * cfg_.latents), cfg_.classes});
  return argmax_one_hot_rows(grouped).reshape({static_cast<int>(n), cfg_.code_width()});
}

void GoalAutoencoder::validate_codes(const Tensor& codes) const {
  if (codes.cols() != cfg_.code_width())
    throw ContractError("goal ae: code width mismatch");
  for (int64_t r = 0; r < codes.rows(); ++r) {
    for (int l = 0; l < cfg_.latents; ++l) {
      float sum = 0;
      for (int c = 0; c < cfg_.classes; ++c) {
        const float v = codes.data()[r * cfg_.code_width() + l * cfg_.classes + c];
        if (v != 0.0f && v != 1.0f)
          throw ContractError("goal ae: code entries must be 0/1");
        sum += v;
      }
      if (sum != 1.0f)
        throw ContractError("goal ae: each latent row must have exactly one 1");
    }
  }
}

Tensor GoalAutoencoder::decode(const Tensor& codes) const {
  validate_codes(codes);
  Graph g(false);
  return dec_->forward(g, Var(codes)).value();
}

Var GoalAutoencoder::decode_var(Graph& g, const Var& codes) const {
  return dec_->forward(g, codes);
}

GoalAeLossOut GoalAutoencoder::loss(Graph& g, const Tensor& features, Rng& rng) const {
  using namespace diff;
  const int64_t n = features.rows();
  Var logits = encode_logits(g, Var(features));
  Var grouped = reshape(logits, {static_cast<int>(n * cfg_.latents), cfg_.classes});
  Var probs = softmax_rows(grouped);
  Tensor one_hot = sample_one_hot_rows(probs.value(), rng);
  Var code = reshape(straight_through(probs, one_hot),
                     {static_cast<int>(n), cfg_.code_width()});
  Var recon = dec_->forward(g, code);
  Var rec_mean = mean_all(row_sum(square(sub(recon, Var(features)))));
  // mean over states of the KL summed across the L latent factors
  Var kl_mean = mul_scalar(mean_all(kl_to_uniform_rows(grouped)),
                           static_cast<float>(cfg_.latents));
  GoalAeLossOut out;
  out.loss = add(rec_mean, mul_scalar(kl_mean, cfg_.beta));
  out.total = out.loss.value().scalar_value();
  out.rec = rec_mean.value().scalar_value();
  out.kl = kl_mean.value().scalar_value();
  if (!std::isfinite(out.total)) throw DivergenceError("goal ae loss is not finite");
  return out;
}

Tensor GoalAutoencoder::exploration_rewards(const Tensor& features, Rng& rng) const {
  Tensor codes = encode_sample(features, rng);
  Graph g(false);
  Tensor recon = dec_->forward(g, Var(codes)).value();
  const int64_t n = features.rows();
  Tensor out({static_cast<int>(n)});
  const int w = cfg_.feature_width;
  for (int64_t r = 0; r < n; ++r) {
    double err = 0;
    for (int i = 0; i < w; ++i) {
      const double d = double(recon.data()[r * w + i]) - features.data()[r * w + i];
      err += d * d;
    }
    out.data_mut()[r] = static_cast<float>(err);
  }
  return out;
}

}  // namespace director
