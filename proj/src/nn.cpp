#include "director/nn.hpp"

namespace director {

using diff::Graph;
using diff::Var;

std::vector<Parameter*> Module::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  for (Module* c : children_) {
    auto sub = c->parameters();
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

Parameter* Module::add_parameter(std::string name, Tensor init) {
  params_.push_back(std::make_unique<Parameter>(std::move(name), std::move(init)));
  return params_.back().get();
}

Tensor init_linear_weight(Shape shape, int fan_in, Rng& rng) {
  const float std = 1.0f / std::sqrt(static_cast<float>(fan_in));
  return rng.truncated_normal_tensor(std::move(shape), std);
}

void check_finite(const Tensor& t, const char* what) {
  if (!t.all_finite())
    throw DivergenceError(std::string(what) + ": non-finite values");
}

Linear::Linear(const std::string& name, int in, int out, Rng& rng) : in_(in), out_(out) {
  weight = add_parameter(name + "/w", init_linear_weight({in, out}, in, rng));
  bias = add_parameter(name + "/b", Tensor({out}));
}

Var Linear::forward(Graph& g, const Var& x) const {
  if (x.cols() != in_)
    throw ContractError("Linear " + weight->name + ": input width " +
                        std::to_string(x.cols()) + " != " + std::to_string(in_));
  return diff::linear(x, g.leaf(*weight), g.leaf(*bias));
}

LayerNorm::LayerNorm(const std::string& name, int width) {
  scale = add_parameter(name + "/scale", Tensor::full({width}, 1.0f));
  shift = add_parameter(name + "/shift", Tensor({width}));
}

Var LayerNorm::forward(Graph& g, const Var& x) const {
  return diff::layer_norm(x, g.leaf(*scale), g.leaf(*shift));
}

Mlp::Mlp(const std::string& name, int in, MlpConfig cfg, int out, Rng& rng)
    : in_(in), out_(out) {
  int width = in;
  for (int i = 0; i < cfg.layers; ++i) {
    const std::string ln = name + "/h" + std::to_string(i);
    linears_.push_back(std::make_unique<Linear>(ln, width, cfg.hidden, rng));
    norms_.push_back(std::make_unique<LayerNorm>(ln + "/norm", cfg.hidden));
    add_child(linears_.back().get());
    add_child(norms_.back().get());
    width = cfg.hidden;
  }
  head_ = std::make_unique<Linear>(name + "/out", width, out, rng);
  add_child(head_.get());
}

Var Mlp::forward(Graph& g, const Var& x) const {
  Var h = x;
  for (size_t i = 0; i < linears_.size(); ++i)
    h = diff::elu(norms_[i]->forward(g, linears_[i]->forward(g, h)));
  Var out = head_->forward(g, h);
  check_finite(out.value(), "mlp");
  return out;
}

GruCell::GruCell(const std::string& name, int input, int hidden, Rng& rng)
    : input_(input), hidden_(hidden) {
  wx_ = add_parameter(name + "/wx", init_linear_weight({input, 3 * hidden}, input, rng));
  wh_ = add_parameter(name + "/wh", init_linear_weight({hidden, 3 * hidden}, hidden, rng));
  b_ = add_parameter(name + "/b", Tensor({3 * hidden}));
}

Var GruCell::forward(Graph& g, const Var& hidden, const Var& input) const {
  if (hidden.cols() != hidden_)
    throw ContractError("GruCell " + b_->name + ": hidden width " +
                        std::to_string(hidden.cols()) + " != " + std::to_string(hidden_));
  if (input.cols() != input_)
    throw ContractError("GruCell " + b_->name + ": input width mismatch");
  const int h = hidden_;
  Var xa = diff::linear(input, g.leaf(*wx_), g.leaf(*b_));
  Var ha = diff::matmul(hidden, g.leaf(*wh_));
  Var reset = diff::sigmoid(diff::add(diff::slice_cols(xa, 0, h), diff::slice_cols(ha, 0, h)));
  Var update =
      diff::sigmoid(diff::add(diff::slice_cols(xa, h, 2 * h), diff::slice_cols(ha, h, 2 * h)));
  Var cand = diff::tanh_v(diff::add(diff::slice_cols(xa, 2 * h, 3 * h),
                                    diff::mul(reset, diff::slice_cols(ha, 2 * h, 3 * h))));
  Var keep = diff::mul(update, hidden);
  Var ones(Tensor::full({static_cast<int>(hidden.rows()), h}, 1.0f));
  Var next = diff::add(keep, diff::mul(diff::sub(ones, update), cand));
  check_finite(next.value(), "gru");
  return next;
}

namespace {
Tensor init_conv_kernel(int kh, int kw, int cin, int cout, Rng& rng) {
  return init_linear_weight({kh, kw, cin, cout}, kh * kw * cin, rng);
}
}  // namespace

Conv2d::Conv2d(const std::string& name, int kh, int kw, int cin, int cout, int stride_,
               int pad_, Rng& rng)
    : stride(stride_), pad(pad_) {
  kernel = add_parameter(name + "/k", init_conv_kernel(kh, kw, cin, cout, rng));
  bias = add_parameter(name + "/b", Tensor({cout}));
}

Var Conv2d::forward(Graph& g, const Var& x) const {
  return diff::conv2d(x, g.leaf(*kernel), g.leaf(*bias), stride, pad);
}

ConvTranspose2d::ConvTranspose2d(const std::string& name, int kh, int kw, int cin, int cout,
                                 int stride_, int pad_, Rng& rng)
    : stride(stride_), pad(pad_) {
  kernel = add_parameter(name + "/k",
                         init_linear_weight({kh, kw, cout, cin}, kh * kw * cin, rng));
  bias = add_parameter(name + "/b", Tensor({cout}));
}

Var ConvTranspose2d::forward(Graph& g, const Var& x) const {
  return diff::conv2d_transpose(x, g.leaf(*kernel), g.leaf(*bias), stride, pad);
}

}  // namespace director
