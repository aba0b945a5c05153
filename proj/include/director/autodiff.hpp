#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "director/tensor.hpp"

namespace director {

struct Parameter;

namespace diff {

// One recorded operation. Nodes form a DAG rooted at the loss; backward()
// walks it in reverse topological order and lets each closure scatter the
// upstream gradient into its parents.
struct Node {
  std::vector<std::shared_ptr<Node>> parents;
  FloatBuffer grad;  // allocated on first touch, numel entries
  int64_t numel = 0;
  std::function<void(const FloatBuffer&)> backprop;

  float* grad_buf() {
    if (grad.empty()) grad.assign(static_cast<size_t>(numel), 0.0f);
    return grad.data();
  }
};

using NodePtr = std::shared_ptr<Node>;

// Value plus (optionally) its position in the gradient graph. A Var without
// a node is a constant: ops treat it as requiring no gradient. Inference
// passes therefore run through the same code with zero graph overhead.
class Var {
 public:
  Var() = default;
  /*implicit*/ Var(Tensor value) : value_(std::move(value)) {}
  Var(Tensor value, NodePtr node) : value_(std::move(value)), node_(std::move(node)) {}

  const Tensor& value() const { return value_; }
  const Shape& shape() const { return value_.shape(); }
  int cols() const { return value_.cols(); }
  int64_t rows() const { return value_.rows(); }
  int64_t numel() const { return value_.numel(); }
  bool tracked() const { return node_ != nullptr; }
  const NodePtr& node() const { return node_; }

 private:
  Tensor value_;
  NodePtr node_;
};

// Per-loss gradient context. Leaves for Parameters are memoized so that a
// parameter used twice accumulates one gradient, which backward() flushes
// into Parameter::grad.
class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : enabled_(grad_enabled) {}

  bool enabled() const { return enabled_; }
  Var leaf(Parameter& p);
  Var leaf_tensor(const Tensor& t);  // tracked non-parameter leaf (for tests)
  Tensor leaf_grad(const Var& leaf) const;

  // Seeds the (scalar) loss with gradient 1, runs reverse-mode, then adds
  // parameter gradients into their Parameter::grad accumulators.
  void backward(const Var& loss);

 private:
  bool enabled_;
  std::unordered_map<Parameter*, Var> param_leaves_;
};

// ---- op library ----------------------------------------------------------
// Shapes follow the matrix view of Tensor: [rows, cols] with the last
// dimension as columns. Elementwise ops require identical shapes.

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var vdiv(const Var& a, const Var& b);
Var add_scalar(const Var& a, float s);
Var mul_scalar(const Var& a, float s);
Var neg(const Var& a);

Var elu(const Var& a);
Var tanh_v(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var exp_v(const Var& a);
Var log_v(const Var& a);
Var square(const Var& a);
Var sqrt_v(const Var& a);

// y[r,c] = x[r,c] * s[r] with a constant per-row scale.
Var scale_rows(const Var& x, const Tensor& s);

Var matmul(const Var& x, const Var& w);            // [N,K]x[K,M]
Var linear(const Var& x, const Var& w, const Var& b);
Var layer_norm(const Var& x, const Var& scale, const Var& shift, float eps = 1e-3f);

Var sum_all(const Var& a);       // -> [1]
Var mean_all(const Var& a);      // -> [1]
Var row_sum(const Var& a);       // [N,C] -> [N,1]

Var softmax_rows(const Var& a);
Var log_softmax_rows(const Var& a);

Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& a, int c0, int c1);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& a, int64_t r0, int64_t r1);
Var reshape(const Var& a, Shape shape);
Var stop_grad(const Var& a);

// Forward value is the sampled one-hot; the backward pass hands the one-hot
// gradient to the probabilities unchanged (one_hot + probs - sg(probs)).
Var straight_through(const Var& probs, const Tensor& one_hot);

// NHWC convolution, weight [kh,kw,cin,cout], zero padding.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
// Transposed NHWC convolution, weight [kh,kw,cout,cin].
// out = (in-1)*stride + kh - 2*pad.
Var conv2d_transpose(const Var& x, const Var& w, const Var& b, int stride, int pad);

}  // namespace diff
}  // namespace director
