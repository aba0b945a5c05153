#include "director/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "director/nn.hpp"

namespace director::diff {

namespace {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;
using ArrMap = Eigen::Map<Eigen::ArrayXf>;
using CArrMap = Eigen::Map<const Eigen::ArrayXf>;

NodePtr make_node(int64_t numel, std::vector<NodePtr> parents,
                  std::function<void(const FloatBuffer&)> backprop) {
  auto n = std::make_shared<Node>();
  n->numel = numel;
  n->parents = std::move(parents);
  n->backprop = std::move(backprop);
  return n;
}

void axpy(float* dst, const float* src, int64_t n, float alpha = 1.0f) {
  ArrMap(dst, n) += alpha * CArrMap(src, n);
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw ContractError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                        " vs " + shape_str(b.shape()));
}

// Vectorized unary op: Fwd fills y from x, Bwd accumulates g*df into gx.
// Both receive Eigen array maps so the math stays on SIMD paths.
template <class Fwd, class Bwd>
Var unary_vec(const Var& a, Fwd fwd, Bwd bwd) {
  Tensor out(a.shape());
  const int64_t n = a.numel();
  fwd(CArrMap(a.value().data(), n), ArrMap(out.data_mut(), n));
  if (!a.tracked()) return out;
  Tensor xv = a.value(), yv = out;
  NodePtr pa = a.node();
  auto node = make_node(n, {pa}, [pa, xv, yv, bwd, n](const FloatBuffer& g) {
    bwd(CArrMap(g.data(), n), CArrMap(xv.data(), n), CArrMap(yv.data(), n),
        ArrMap(pa->grad_buf(), n));
  });
  return Var(out, node);
}

}  // namespace

// ---- Graph ---------------------------------------------------------------

Var Graph::leaf(Parameter& p) {
  if (!enabled_) return Var(p.value);
  auto it = param_leaves_.find(&p);
  if (it != param_leaves_.end()) return it->second;
  Var v(p.value, make_node(p.value.numel(), {}, nullptr));
  param_leaves_.emplace(&p, v);
  return v;
}

Var Graph::leaf_tensor(const Tensor& t) {
  if (!enabled_) return Var(t);
  return Var(t, make_node(t.numel(), {}, nullptr));
}

Tensor Graph::leaf_grad(const Var& leaf) const {
  Tensor g(leaf.shape());
  if (leaf.tracked() && !leaf.node()->grad.empty())
    std::memcpy(g.data_mut(), leaf.node()->grad.data(), sizeof(float) * g.numel());
  return g;
}

void Graph::backward(const Var& loss) {
  if (loss.numel() != 1) throw ContractError("backward: loss must be scalar");
  if (!loss.tracked()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.push_back({loss.node().get(), 0});
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->parents.size()) {
      Node* p = top.first->parents[top.second++].get();
      if (p && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(top.first);
      stack.pop_back();
    }
  }

  loss.node()->grad_buf()[0] = 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backprop) continue;
    n->grad_buf();
    n->backprop(n->grad);
    n->grad.clear();
    n->grad.shrink_to_fit();
  }

  for (auto& [param, var] : param_leaves_) {
    Node* n = var.node().get();
    if (n->grad.empty()) continue;
    if (param->grad.empty()) param->grad = Tensor(param->value.shape());
    axpy(param->grad.data_mut(), n->grad.data(), n->numel);
  }
}

// ---- elementwise ----------------------------------------------------------

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out(a.shape());
  const int64_t n = a.numel();
  ArrMap(out.data_mut(), n) = CArrMap(a.value().data(), n) + CArrMap(b.value().data(), n);
  if (!a.tracked() && !b.tracked()) return out;
  NodePtr pa = a.node(), pb = b.node();
  std::vector<NodePtr> parents;
  if (pa) parents.push_back(pa);
  if (pb) parents.push_back(pb);
  auto node = make_node(n, parents, [pa, pb, n](const FloatBuffer& g) {
    if (pa) axpy(pa->grad_buf(), g.data(), n);
    if (pb) axpy(pb->grad_buf(), g.data(), n);
  });
  return Var(out, node);
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out(a.shape());
  const int64_t n = a.numel();
  ArrMap(out.data_mut(), n) = CArrMap(a.value().data(), n) - CArrMap(b.value().data(), n);
  if (!a.tracked() && !b.tracked()) return out;
  NodePtr pa = a.node(), pb = b.node();
  std::vector<NodePtr> parents;
  if (pa) parents.push_back(pa);
  if (pb) parents.push_back(pb);
  auto node = make_node(n, parents, [pa, pb, n](const FloatBuffer& g) {
    if (pa) axpy(pa->grad_buf(), g.data(), n);
    if (pb) axpy(pb->grad_buf(), g.data(), n, -1.0f);
  });
  return Var(out, node);
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a.shape());
  const int64_t n = a.numel();
  ArrMap(out.data_mut(), n) = CArrMap(a.value().data(), n) * CArrMap(b.value().data(), n);
  if (!a.tracked() && !b.tracked()) return out;
  NodePtr pa = a.node(), pb = b.node();
  Tensor av = a.value(), bv = b.value();
  std::vector<NodePtr> parents;
  if (pa) parents.push_back(pa);
  if (pb) parents.push_back(pb);
  auto node = make_node(n, parents, [pa, pb, av, bv, n](const FloatBuffer& g) {
    if (pa)
      ArrMap(pa->grad_buf(), n) += CArrMap(g.data(), n) * CArrMap(bv.data(), n);
    if (pb)
      ArrMap(pb->grad_buf(), n) += CArrMap(g.data(), n) * CArrMap(av.data(), n);
  });
  return Var(out, node);
}

Var vdiv(const Var& a, const Var& b) {
  check_same_shape(a, b, "vdiv");
  Tensor out(a.shape());
  const int64_t n = a.numel();
  ArrMap(out.data_mut(), n) = CArrMap(a.value().data(), n) / CArrMap(b.value().data(), n);
  if (!a.tracked() && !b.tracked()) return out;
  NodePtr pa = a.node(), pb = b.node();
  Tensor av = a.value(), bv = b.value();
  std::vector<NodePtr> parents;
  if (pa) parents.push_back(pa);
  if (pb) parents.push_back(pb);
  auto node = make_node(n, parents, [pa, pb, av, bv, n](const FloatBuffer& g) {
    CArrMap gm(g.data(), n), bm(bv.data(), n);
    if (pa) ArrMap(pa->grad_buf(), n) += gm / bm;
    if (pb) ArrMap(pb->grad_buf(), n) -= gm * CArrMap(av.data(), n) / bm.square();
  });
  return Var(out, node);
}

Var add_scalar(const Var& a, float s) {
  Tensor out(a.shape());
  const int64_t n = a.numel();
  ArrMap(out.data_mut(), n) = CArrMap(a.value().data(), n) + s;
  if (!a.tracked()) return out;
  NodePtr pa = a.node();
  auto node = make_node(n, {pa}, [pa, n](const FloatBuffer& g) {
    axpy(pa->grad_buf(), g.data(), n);
  });
  return Var(out, node);
}

Var mul_scalar(const Var& a, float s) {
  Tensor out(a.shape());
  const int64_t n = a.numel();
  ArrMap(out.data_mut(), n) = CArrMap(a.value().data(), n) * s;
  if (!a.tracked()) return out;
  NodePtr pa = a.node();
  auto node = make_node(n, {pa}, [pa, n, s](const FloatBuffer& g) {
    axpy(pa->grad_buf(), g.data(), n, s);
  });
  return Var(out, node);
}

Var neg(const Var& a) { return mul_scalar(a, -1.0f); }

Var elu(const Var& a) {
  return unary_vec(
      a, [](auto x, auto y) { y = (x > 0.0f).select(x, x.exp() - 1.0f); },
      [](auto g, auto x, auto y, auto gx) {
        gx += g * (x > 0.0f).select(Eigen::ArrayXf::Ones(x.size()), y + 1.0f);
      });
}

Var tanh_v(const Var& a) {
  return unary_vec(
      a, [](auto x, auto y) { y = x.tanh(); },
      [](auto g, auto, auto y, auto gx) { gx += g * (1.0f - y.square()); });
}

Var sigmoid(const Var& a) {
  return unary_vec(
      a, [](auto x, auto y) { y = 0.5f + 0.5f * (0.5f * x).tanh(); },
      [](auto g, auto, auto y, auto gx) { gx += g * y * (1.0f - y); });
}

Var softplus(const Var& a) {
  return unary_vec(
      a,
      [](auto x, auto y) { y = x.max(0.0f) + (-x.abs()).exp().log1p(); },
      [](auto g, auto x, auto, auto gx) {
        gx += g * (0.5f + 0.5f * (0.5f * x).tanh());
      });
}

Var exp_v(const Var& a) {
  return unary_vec(
      a, [](auto x, auto y) { y = x.exp(); },
      [](auto g, auto, auto y, auto gx) { gx += g * y; });
}

Var log_v(const Var& a) {
  return unary_vec(
      a, [](auto x, auto y) { y = x.log(); },
      [](auto g, auto x, auto, auto gx) { gx += g / x; });
}

Var square(const Var& a) {
  return unary_vec(
      a, [](auto x, auto y) { y = x.square(); },
      [](auto g, auto x, auto, auto gx) { gx += 2.0f * g * x; });
}

Var sqrt_v(const Var& a) {
  return unary_vec(
      a, [](auto x, auto y) { y = x.sqrt(); },
      [](auto g, auto, auto y, auto gx) { gx += 0.5f * g / y; });
}

Var scale_rows(const Var& x, const Tensor& s) {
  const int64_t rows = x.rows();
  const int c = x.cols();
  if (s.numel() != rows) throw ContractError("scale_rows: scale length mismatch");
  Tensor out(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const float sr = s.data()[r];
    for (int i = 0; i < c; ++i) out.data_mut()[r * c + i] = x.value().data()[r * c + i] * sr;
  }
  if (!x.tracked()) return out;
  NodePtr px = x.node();
  auto node = make_node(x.numel(), {px}, [px, s, rows, c](const FloatBuffer& g) {
    float* gx = px->grad_buf();
    for (int64_t r = 0; r < rows; ++r) {
      const float sr = s.data()[r];
      for (int i = 0; i < c; ++i) gx[r * c + i] += g[r * c + i] * sr;
    }
  });
  return Var(out, node);
}

// ---- matrix ops ------------------------------------------------------------

Var matmul(const Var& x, const Var& w) {
  const int64_t n = x.rows();
  const int k = x.cols();
  if (w.rows() != k)
    throw ContractError("matmul: inner dims " + shape_str(x.shape()) + " x " +
                        shape_str(w.shape()));
  const int m = w.cols();
  Tensor out({static_cast<int>(n), m});
  MapRM(out.data_mut(), n, m).noalias() =
      CMapRM(x.value().data(), n, k) * CMapRM(w.value().data(), k, m);
  if (!x.tracked() && !w.tracked()) return out;
  NodePtr px = x.node(), pw = w.node();
  Tensor xv = x.value(), wv = w.value();
  std::vector<NodePtr> parents;
  if (px) parents.push_back(px);
  if (pw) parents.push_back(pw);
  auto node = make_node(n * m, parents, [px, pw, xv, wv, n, k, m](const FloatBuffer& g) {
    CMapRM gm(g.data(), n, m);
    if (px)
      MapRM(px->grad_buf(), n, k).noalias() += gm * CMapRM(wv.data(), k, m).transpose();
    if (pw)
      MapRM(pw->grad_buf(), k, m).noalias() += CMapRM(xv.data(), n, k).transpose() * gm;
  });
  return Var(out, node);
}

Var linear(const Var& x, const Var& w, const Var& b) {
  const int64_t n = x.rows();
  const int k = x.cols();
  if (w.rows() != k || b.numel() != w.cols())
    throw ContractError("linear: shape mismatch x" + shape_str(x.shape()) + " w" +
                        shape_str(w.shape()) + " b" + shape_str(b.shape()));
  const int m = w.cols();
  Tensor out({static_cast<int>(n), m});
  MapRM om(out.data_mut(), n, m);
  om.noalias() = CMapRM(x.value().data(), n, k) * CMapRM(w.value().data(), k, m);
  om.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(b.value().data(), m);
  if (!x.tracked() && !w.tracked() && !b.tracked()) return out;
  NodePtr px = x.node(), pw = w.node(), pb = b.node();
  Tensor xv = x.value(), wv = w.value();
  std::vector<NodePtr> parents;
  for (const NodePtr& p : {px, pw, pb})
    if (p) parents.push_back(p);
  auto node =
      make_node(n * m, parents, [px, pw, pb, xv, wv, n, k, m](const FloatBuffer& g) {
        CMapRM gm(g.data(), n, m);
        if (px)
          MapRM(px->grad_buf(), n, k).noalias() += gm * CMapRM(wv.data(), k, m).transpose();
        if (pw)
          MapRM(pw->grad_buf(), k, m).noalias() += CMapRM(xv.data(), n, k).transpose() * gm;
        if (pb)
          Eigen::Map<Eigen::RowVectorXf>(pb->grad_buf(), m) += gm.colwise().sum();
      });
  return Var(out, node);
}

Var layer_norm(const Var& x, const Var& scale, const Var& shift, float eps) {
  const int64_t n = x.rows();
  const int c = x.cols();
  if (scale.numel() != c || shift.numel() != c)
    throw ContractError("layer_norm: scale/shift width mismatch");
  Tensor out(x.shape());
  Tensor xhat({static_cast<int>(n), c});
  Tensor inv_std({static_cast<int>(n)});
  const float* xd = x.value().data();
  const float* sc = scale.value().data();
  const float* sh = shift.value().data();
  {
    CArrMap scale_m(sc, c), shift_m(sh, c);
    for (int64_t r = 0; r < n; ++r) {
      CArrMap row(xd + r * c, c);
      const float mean = row.mean();
      const float var = (row - mean).square().mean();
      const float is = 1.0f / std::sqrt(var + eps);
      inv_std.data_mut()[r] = is;
      ArrMap xh(xhat.data_mut() + r * c, c);
      xh = (row - mean) * is;
      ArrMap(out.data_mut() + r * c, c) = xh * scale_m + shift_m;
    }
  }
  if (!x.tracked() && !scale.tracked() && !shift.tracked()) return out;
  NodePtr px = x.node(), ps = scale.node(), pf = shift.node();
  Tensor scv = scale.value();
  std::vector<NodePtr> parents;
  for (const NodePtr& p : {px, ps, pf})
    if (p) parents.push_back(p);
  auto node = make_node(
      n * c, parents, [px, ps, pf, xhat, inv_std, scv, n, c](const FloatBuffer& g) {
        CArrMap scale_m(scv.data(), c);
        for (int64_t r = 0; r < n; ++r) {
          CArrMap gr(g.data() + r * c, c);
          CArrMap xh(xhat.data() + r * c, c);
          if (ps) ArrMap(ps->grad_buf(), c) += gr * xh;
          if (pf) ArrMap(pf->grad_buf(), c) += gr;
          if (px) {
            Eigen::ArrayXf gy = gr * scale_m;
            const float m1 = gy.mean();
            const float m2 = (gy * xh).mean();
            ArrMap(px->grad_buf() + r * c, c) += (gy - m1 - xh * m2) * inv_std.data()[r];
          }
        }
      });
  return Var(out, node);
}

// ---- reductions ------------------------------------------------------------

Var sum_all(const Var& a) {
  double s = 0;
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) s += a.value().data()[i];
  Tensor out({1}, {static_cast<float>(s)});
  if (!a.tracked()) return out;
  NodePtr pa = a.node();
  auto node = make_node(1, {pa}, [pa, n](const FloatBuffer& g) {
    float* gx = pa->grad_buf();
    for (int64_t i = 0; i < n; ++i) gx[i] += g[0];
  });
  return Var(out, node);
}

Var mean_all(const Var& a) { return mul_scalar(sum_all(a), 1.0f / a.numel()); }

Var row_sum(const Var& a) {
  const int64_t n = a.rows();
  const int c = a.cols();
  Tensor out({static_cast<int>(n), 1});
  for (int64_t r = 0; r < n; ++r) {
    float s = 0;
    for (int i = 0; i < c; ++i) s += a.value().data()[r * c + i];
    out.data_mut()[r] = s;
  }
  if (!a.tracked()) return out;
  NodePtr pa = a.node();
  auto node = make_node(n, {pa}, [pa, n, c](const FloatBuffer& g) {
    float* gx = pa->grad_buf();
    for (int64_t r = 0; r < n; ++r)
      for (int i = 0; i < c; ++i) gx[r * c + i] += g[r];
  });
  return Var(out, node);
}

// ---- softmax family --------------------------------------------------------

Var softmax_rows(const Var& a) {
  const int64_t n = a.rows();
  const int c = a.cols();
  Tensor out(a.shape());
  {
    CMapRM x(a.value().data(), n, c);
    MapRM p(out.data_mut(), n, c);
    Eigen::VectorXf mx = x.rowwise().maxCoeff();
    p = (x.colwise() - mx).array().exp().matrix();
    Eigen::VectorXf z = p.rowwise().sum();
    p.array().colwise() /= z.array();
  }
  if (!a.tracked()) return out;
  NodePtr pa = a.node();
  Tensor p = out;
  auto node = make_node(n * c, {pa}, [pa, p, n, c](const FloatBuffer& g) {
    float* gx = pa->grad_buf();
    for (int64_t r = 0; r < n; ++r) {
      const float* pr = p.data() + r * c;
      const float* gr = g.data() + r * c;
      float dot = 0;
      for (int i = 0; i < c; ++i) dot += gr[i] * pr[i];
      for (int i = 0; i < c; ++i) gx[r * c + i] += pr[i] * (gr[i] - dot);
    }
  });
  return Var(out, node);
}

Var log_softmax_rows(const Var& a) {
  const int64_t n = a.rows();
  const int c = a.cols();
  Tensor out(a.shape());
  {
    CMapRM x(a.value().data(), n, c);
    MapRM l(out.data_mut(), n, c);
    Eigen::VectorXf mx = x.rowwise().maxCoeff();
    l = x.colwise() - mx;
    Eigen::VectorXf lz = l.array().exp().rowwise().sum().log();
    l.colwise() -= lz;
  }
  if (!a.tracked()) return out;
  NodePtr pa = a.node();
  Tensor lp = out;
  auto node = make_node(n * c, {pa}, [pa, lp, n, c](const FloatBuffer& g) {
    float* gx = pa->grad_buf();
    for (int64_t r = 0; r < n; ++r) {
      const float* lr = lp.data() + r * c;
      const float* gr = g.data() + r * c;
      float gsum = 0;
      for (int i = 0; i < c; ++i) gsum += gr[i];
      for (int i = 0; i < c; ++i) gx[r * c + i] += gr[i] - std::exp(lr[i]) * gsum;
    }
  });
  return Var(out, node);
}

// ---- structure -------------------------------------------------------------

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: empty");
  const int64_t n = parts[0].rows();
  int total = 0;
  bool tracked = false;
  for (const Var& p : parts) {
    if (p.rows() != n) throw ContractError("concat_cols: row mismatch");
    total += p.cols();
    tracked = tracked || p.tracked();
  }
  Tensor out({static_cast<int>(n), total});
  int at = 0;
  for (const Var& p : parts) {
    const int c = p.cols();
    for (int64_t r = 0; r < n; ++r)
      std::memcpy(out.data_mut() + r * total + at, p.value().data() + r * c,
                  sizeof(float) * c);
    at += c;
  }
  if (!tracked) return out;
  std::vector<NodePtr> nodes;
  std::vector<int> widths;
  std::vector<NodePtr> parents;
  for (const Var& p : parts) {
    nodes.push_back(p.node());
    widths.push_back(p.cols());
    if (p.node()) parents.push_back(p.node());
  }
  auto node =
      make_node(n * total, parents, [nodes, widths, n, total](const FloatBuffer& g) {
        int at = 0;
        for (size_t j = 0; j < nodes.size(); ++j) {
          const int c = widths[j];
          if (nodes[j]) {
            float* gx = nodes[j]->grad_buf();
            for (int64_t r = 0; r < n; ++r)
              for (int i = 0; i < c; ++i) gx[r * c + i] += g[r * total + at + i];
          }
          at += c;
        }
      });
  return Var(out, node);
}

Var slice_cols(const Var& a, int c0, int c1) {
  const int64_t n = a.rows();
  const int c = a.cols();
  if (c0 < 0 || c1 > c || c0 >= c1) throw ContractError("slice_cols: bad range");
  const int w = c1 - c0;
  Tensor out({static_cast<int>(n), w});
  for (int64_t r = 0; r < n; ++r)
    std::memcpy(out.data_mut() + r * w, a.value().data() + r * c + c0, sizeof(float) * w);
  if (!a.tracked()) return out;
  NodePtr pa = a.node();
  auto node = make_node(n * w, {pa}, [pa, n, c, c0, w](const FloatBuffer& g) {
    float* gx = pa->grad_buf();
    for (int64_t r = 0; r < n; ++r)
      for (int i = 0; i < w; ++i) gx[r * c + c0 + i] += g[r * w + i];
  });
  return Var(out, node);
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: empty");
  const int c = parts[0].cols();
  int64_t n = 0;
  bool tracked = false;
  for (const Var& p : parts) {
    if (p.cols() != c) throw ContractError("concat_rows: column mismatch");
    n += p.rows();
    tracked = tracked || p.tracked();
  }
  Tensor out({static_cast<int>(n), c});
  int64_t at = 0;
  for (const Var& p : parts) {
    std::memcpy(out.data_mut() + at * c, p.value().data(), sizeof(float) * p.numel());
    at += p.rows();
  }
  if (!tracked) return out;
  std::vector<NodePtr> nodes;
  std::vector<int64_t> counts;
  std::vector<NodePtr> parents;
  for (const Var& p : parts) {
    nodes.push_back(p.node());
    counts.push_back(p.numel());
    if (p.node()) parents.push_back(p.node());
  }
  auto node = make_node(n * c, parents, [nodes, counts](const FloatBuffer& g) {
    int64_t at = 0;
    for (size_t j = 0; j < nodes.size(); ++j) {
      if (nodes[j]) axpy(nodes[j]->grad_buf(), g.data() + at, counts[j]);
      at += counts[j];
    }
  });
  return Var(out, node);
}

Var slice_rows(const Var& a, int64_t r0, int64_t r1) {
  const int c = a.cols();
  if (r0 < 0 || r1 > a.rows() || r0 >= r1) throw ContractError("slice_rows: bad range");
  Tensor out({static_cast<int>(r1 - r0), c});
  std::memcpy(out.data_mut(), a.value().data() + r0 * c, sizeof(float) * out.numel());
  if (!a.tracked()) return out;
  NodePtr pa = a.node();
  const int64_t count = out.numel();
  auto node = make_node(count, {pa}, [pa, r0, c, count](const FloatBuffer& g) {
    axpy(pa->grad_buf() + r0 * c, g.data(), count);
  });
  return Var(out, node);
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshape(std::move(shape));
  if (!a.tracked()) return out;
  NodePtr pa = a.node();
  const int64_t n = a.numel();
  auto node = make_node(n, {pa}, [pa, n](const FloatBuffer& g) {
    axpy(pa->grad_buf(), g.data(), n);
  });
  return Var(out, node);
}

Var stop_grad(const Var& a) { return Var(a.value()); }

Var straight_through(const Var& probs, const Tensor& one_hot) {
  if (probs.shape() != one_hot.shape())
    throw ContractError("straight_through: shape mismatch");
  if (!probs.tracked()) return Var(one_hot);
  NodePtr pp = probs.node();
  const int64_t n = probs.numel();
  auto node = make_node(n, {pp}, [pp, n](const FloatBuffer& g) {
    axpy(pp->grad_buf(), g.data(), n);
  });
  return Var(one_hot, node);
}

// ---- convolution ------------------------------------------------------------

namespace {

struct ConvGeom {
  int xh, xw, xc;  // image dims
  int kh, kw;
  int stride, pad;
  int yh, yw;  // column-grid dims

  static ConvGeom forward(int xh, int xw, int xc, int kh, int kw, int stride, int pad) {
    ConvGeom g{xh, xw, xc, kh, kw, stride, pad, 0, 0};
    g.yh = (xh + 2 * pad - kh) / stride + 1;
    g.yw = (xw + 2 * pad - kw) / stride + 1;
    if (g.yh <= 0 || g.yw <= 0) throw ConfigError("conv: kernel larger than padded input");
    return g;
  }
  int64_t patch() const { return int64_t(kh) * kw * xc; }
  int64_t positions() const { return int64_t(yh) * yw; }
  int64_t img_numel() const { return int64_t(xh) * xw * xc; }
};

void im2col(const float* img, const ConvGeom& g, float* cols) {
  const int64_t k = g.patch();
  for (int oy = 0; oy < g.yh; ++oy) {
    for (int ox = 0; ox < g.yw; ++ox) {
      float* dst = cols + (int64_t(oy) * g.yw + ox) * k;
      for (int ky = 0; ky < g.kh; ++ky) {
        const int iy = oy * g.stride + ky - g.pad;
        for (int kx = 0; kx < g.kw; ++kx) {
          const int ix = ox * g.stride + kx - g.pad;
          float* d = dst + (int64_t(ky) * g.kw + kx) * g.xc;
          if (iy < 0 || iy >= g.xh || ix < 0 || ix >= g.xw) {
            std::memset(d, 0, sizeof(float) * g.xc);
          } else {
            std::memcpy(d, img + (int64_t(iy) * g.xw + ix) * g.xc, sizeof(float) * g.xc);
          }
        }
      }
    }
  }
}

void col2im(const float* cols, const ConvGeom& g, float* img) {
  const int64_t k = g.patch();
  for (int oy = 0; oy < g.yh; ++oy) {
    for (int ox = 0; ox < g.yw; ++ox) {
      const float* src = cols + (int64_t(oy) * g.yw + ox) * k;
      for (int ky = 0; ky < g.kh; ++ky) {
        const int iy = oy * g.stride + ky - g.pad;
        if (iy < 0 || iy >= g.xh) continue;
        for (int kx = 0; kx < g.kw; ++kx) {
          const int ix = ox * g.stride + kx - g.pad;
          if (ix < 0 || ix >= g.xw) continue;
          const float* s = src + (int64_t(ky) * g.kw + kx) * g.xc;
          float* d = img + (int64_t(iy) * g.xw + ix) * g.xc;
          for (int i = 0; i < g.xc; ++i) d[i] += s[i];
        }
      }
    }
  }
}

int group_size(const ConvGeom& g, int batch) {
  const int64_t per_sample = g.positions() * g.patch();
  int64_t group = (int64_t(8) << 20) / std::max<int64_t>(per_sample, 1);
  return static_cast<int>(std::clamp<int64_t>(group, 1, batch));
}

void check_image(const Var& x, const char* op) {
  if (x.value().ndim() != 4)
    throw ContractError(std::string(op) + ": expected NHWC tensor, got " +
                        shape_str(x.shape()));
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  check_image(x, "conv2d");
  const int batch = x.value().dim(0);
  const int xh = x.value().dim(1), xw = x.value().dim(2), xc = x.value().dim(3);
  const int kh = w.value().dim(0), kw = w.value().dim(1);
  if (w.value().dim(2) != xc)
    throw ContractError("conv2d: weight in-channels mismatch");
  const int oc = w.value().dim(3);
  if (b.numel() != oc) throw ContractError("conv2d: bias mismatch");
  ConvGeom g = ConvGeom::forward(xh, xw, xc, kh, kw, stride, pad);
  const int64_t p = g.positions(), k = g.patch();
  Tensor out({batch, g.yh, g.yw, oc});

  const int grp = group_size(g, batch);
  std::vector<float> cols(size_t(grp) * p * k);
  for (int n0 = 0; n0 < batch; n0 += grp) {
    const int gs = std::min(grp, batch - n0);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < gs; ++i)
      im2col(x.value().data() + int64_t(n0 + i) * g.img_numel(), g,
             cols.data() + int64_t(i) * p * k);
    MapRM om(out.data_mut() + int64_t(n0) * p * oc, int64_t(gs) * p, oc);
    om.noalias() = CMapRM(cols.data(), int64_t(gs) * p, k) * CMapRM(w.value().data(), k, oc);
    om.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(b.value().data(), oc);
  }

  if (!x.tracked() && !w.tracked() && !b.tracked()) return out;
  NodePtr px = x.node(), pw = w.node(), pb = b.node();
  Tensor xv = x.value(), wv = w.value();
  std::vector<NodePtr> parents;
  for (const NodePtr& q : {px, pw, pb})
    if (q) parents.push_back(q);
  auto node = make_node(
      out.numel(), parents,
      [px, pw, pb, xv, wv, g, batch, oc, p, k](const FloatBuffer& gr) {
        const int grp = group_size(g, batch);
        std::vector<float> cols(size_t(grp) * p * k);
        std::vector<float> dcols;
        if (px) dcols.resize(size_t(grp) * p * k);
        for (int n0 = 0; n0 < batch; n0 += grp) {
          const int gs = std::min(grp, batch - n0);
          CMapRM gm(gr.data() + int64_t(n0) * p * oc, int64_t(gs) * p, oc);
          if (pw || pb) {
#pragma omp parallel for schedule(static)
            for (int i = 0; i < gs; ++i)
              im2col(xv.data() + int64_t(n0 + i) * g.img_numel(), g,
                     cols.data() + int64_t(i) * p * k);
            if (pw)
              MapRM(pw->grad_buf(), k, oc).noalias() +=
                  CMapRM(cols.data(), int64_t(gs) * p, k).transpose() * gm;
            if (pb)
              Eigen::Map<Eigen::RowVectorXf>(pb->grad_buf(), oc) += gm.colwise().sum();
          }
          if (px) {
            MapRM(dcols.data(), int64_t(gs) * p, k).noalias() =
                gm * CMapRM(wv.data(), k, oc).transpose();
            float* gx = px->grad_buf();
#pragma omp parallel for schedule(static)
            for (int i = 0; i < gs; ++i)
              col2im(dcols.data() + int64_t(i) * p * k, g,
                     gx + int64_t(n0 + i) * g.img_numel());
          }
        }
      });
  return Var(out, node);
}

Var conv2d_transpose(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  check_image(x, "conv2d_transpose");
  const int batch = x.value().dim(0);
  const int ih = x.value().dim(1), iw = x.value().dim(2), ic = x.value().dim(3);
  const int kh = w.value().dim(0), kw = w.value().dim(1);
  const int oc = w.value().dim(2);
  if (w.value().dim(3) != ic)
    throw ContractError("conv2d_transpose: weight in-channels mismatch");
  if (b.numel() != oc) throw ContractError("conv2d_transpose: bias mismatch");
  const int oh = (ih - 1) * stride + kh - 2 * pad;
  const int ow = (iw - 1) * stride + kw - 2 * pad;
  // Under this geometry the output plays the image role and the input the
  // column role of a regular convolution.
  ConvGeom g = ConvGeom::forward(oh, ow, oc, kh, kw, stride, pad);
  if (g.yh != ih || g.yw != iw)
    throw ConfigError("conv2d_transpose: inconsistent geometry");
  const int64_t p = g.positions(), k = g.patch();
  Tensor out({batch, oh, ow, oc});

  const int grp = group_size(g, batch);
  std::vector<float> cols(size_t(grp) * p * k);
  for (int n0 = 0; n0 < batch; n0 += grp) {
    const int gs = std::min(grp, batch - n0);
    MapRM(cols.data(), int64_t(gs) * p, k).noalias() =
        CMapRM(x.value().data() + int64_t(n0) * p * ic, int64_t(gs) * p, ic) *
        CMapRM(w.value().data(), k, ic).transpose();
    float* od = out.data_mut();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < gs; ++i) {
      float* img = od + int64_t(n0 + i) * g.img_numel();
      col2im(cols.data() + int64_t(i) * p * k, g, img);
      const float* bias = b.value().data();
      for (int64_t pos = 0; pos < int64_t(oh) * ow; ++pos)
        for (int ci = 0; ci < oc; ++ci) img[pos * oc + ci] += bias[ci];
    }
  }

  if (!x.tracked() && !w.tracked() && !b.tracked()) return out;
  NodePtr px = x.node(), pw = w.node(), pb = b.node();
  Tensor xv = x.value(), wv = w.value();
  std::vector<NodePtr> parents;
  for (const NodePtr& q : {px, pw, pb})
    if (q) parents.push_back(q);
  auto node = make_node(
      out.numel(), parents,
      [px, pw, pb, xv, wv, g, batch, ic, oc, oh, ow, p, k](const FloatBuffer& gr) {
        const int grp = group_size(g, batch);
        std::vector<float> gcols(size_t(grp) * p * k);
        for (int n0 = 0; n0 < batch; n0 += grp) {
          const int gs = std::min(grp, batch - n0);
#pragma omp parallel for schedule(static)
          for (int i = 0; i < gs; ++i)
            im2col(gr.data() + int64_t(n0 + i) * g.img_numel(), g,
                   gcols.data() + int64_t(i) * p * k);
          CMapRM gcm(gcols.data(), int64_t(gs) * p, k);
          if (px)
            MapRM(px->grad_buf() + int64_t(n0) * p * ic, int64_t(gs) * p, ic).noalias() +=
                gcm * CMapRM(wv.data(), k, ic);
          if (pw)
            MapRM(pw->grad_buf(), k, ic).noalias() +=
                gcm.transpose() *
                CMapRM(xv.data() + int64_t(n0) * p * ic, int64_t(gs) * p, ic);
          if (pb) {
            float* gb = pb->grad_buf();
            for (int i = 0; i < gs; ++i) {
              const float* gi = gr.data() + int64_t(n0 + i) * g.img_numel();
              for (int64_t pos = 0; pos < int64_t(oh) * ow; ++pos)
                for (int ci = 0; ci < oc; ++ci) gb[ci] += gi[pos * oc + ci];
            }
          }
        }
      });
  return Var(out, node);
}

}  // namespace director::diff
