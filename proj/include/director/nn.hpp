#pragma once

#include <memory>
#include <string>
#include <vector>

#include "director/autodiff.hpp"
#include "director/rng.hpp"
#include "director/tensor.hpp"

namespace director {

// Trainable tensor with its gradient accumulator and Adam state.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;  // empty until first backward
  Tensor adam_m, adam_v;
  int64_t step = 0;

  Parameter(std::string n, Tensor init)
      : name(std::move(n)),
        value(std::move(init)),
        adam_m(value.shape()),
        adam_v(value.shape()) {}

  void zero_grad() { grad = Tensor(); }
};

// Base for anything that owns Parameters. Collection is recursive so a whole
// agent can be checkpointed or optimized as one list.
class Module {
 public:
  virtual ~Module() = default;
  std::vector<Parameter*> parameters();

 protected:
  Parameter* add_parameter(std::string name, Tensor init);
  void add_child(Module* child) { children_.push_back(child); }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::vector<Module*> children_;
};

struct MlpConfig {
  int hidden = 512;
  int layers = 4;
};

class Linear : public Module {
 public:
  Linear(const std::string& name, int in, int out, Rng& rng);
  diff::Var forward(diff::Graph& g, const diff::Var& x) const;
  int in_width() const { return in_; }
  int out_width() const { return out_; }

  Parameter* weight;
  Parameter* bias;

 private:
  int in_, out_;
};

class LayerNorm : public Module {
 public:
  LayerNorm(const std::string& name, int width);
  diff::Var forward(diff::Graph& g, const diff::Var& x) const;

  Parameter* scale;
  Parameter* shift;
};

// Hidden layers apply linear -> layer norm -> ELU; the head is a plain
// linear readout.
class Mlp : public Module {
 public:
  Mlp(const std::string& name, int in, MlpConfig cfg, int out, Rng& rng);
  diff::Var forward(diff::Graph& g, const diff::Var& x) const;
  int in_width() const { return in_; }
  int out_width() const { return out_; }

 private:
  int in_, out_;
  std::vector<std::unique_ptr<Linear>> linears_;
  std::vector<std::unique_ptr<LayerNorm>> norms_;
  std::unique_ptr<Linear> head_;
};

// Gated recurrent cell with reset/update gates and tanh candidate:
//   r = sig(Wr x + Ur h + br)        u = sig(Wu x + Uu h + bu)
//   c = tanh(Wc x + Uc (r*h) + bc)   h' = u*h + (1-u)*c
class GruCell : public Module {
 public:
  GruCell(const std::string& name, int input, int hidden, Rng& rng);
  diff::Var forward(diff::Graph& g, const diff::Var& hidden, const diff::Var& input) const;
  int hidden_width() const { return hidden_; }
  int input_width() const { return input_; }

 private:
  int input_, hidden_;
  Parameter* wx_;  // [input, 3*hidden]
  Parameter* wh_;  // [hidden, 3*hidden]
  Parameter* b_;   // [3*hidden]
};

class Conv2d : public Module {
 public:
  Conv2d(const std::string& name, int kh, int kw, int cin, int cout, int stride, int pad,
         Rng& rng);
  diff::Var forward(diff::Graph& g, const diff::Var& x) const;

  int stride, pad;
  Parameter* kernel;  // [kh,kw,cin,cout]
  Parameter* bias;
};

class ConvTranspose2d : public Module {
 public:
  ConvTranspose2d(const std::string& name, int kh, int kw, int cin, int cout, int stride,
                  int pad, Rng& rng);
  diff::Var forward(diff::Graph& g, const diff::Var& x) const;

  int stride, pad;
  Parameter* kernel;  // [kh,kw,cout,cin]
  Parameter* bias;
};

// Truncated normal scaled by fan-in.
Tensor init_linear_weight(Shape shape, int fan_in, Rng& rng);

// Throws DivergenceError when a forward pass produced non-finite values.
void check_finite(const Tensor& t, const char* what);

}  // namespace director
