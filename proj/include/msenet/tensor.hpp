#pragma once

// Dense tensors with reverse-mode differentiation. Graphs are built
// define-by-run: every op returns a fresh node holding its inputs and a
// backward rule, and backward(loss) replays the recorded nodes in reverse
// creation order (creation order is a topological order by construction).
//
// Two numeric modes share one implementation: Tensor<float> for training and
// benchmarks, Tensor<double> for gradient checks and oracle tests.
//
// Rules the engine enforces:
//   - no general broadcasting; ops that broadcast do so only over the leading
//     batch dimension and say so in their name,
//   - graph nodes are write-once: a tensor consumed by an op cannot be
//     mutated until every consuming node has been destroyed,
//   - gradient accumulation is plain summation in graph-reverse order, so a
//     fixed graph yields bit-identical gradients run after run.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "msenet/common.hpp"
#include "msenet/kernels.hpp"

namespace msenet {

template <class Real>
struct TensorNode {
  std::vector<int> shape;
  std::vector<Real> values;
  std::vector<Real> grad;  // allocated lazily during backward
  bool requires_grad = false;
  bool leaf = true;
  bool backward_consumed = false;
  uint64_t seq = 0;
  int uses = 0;  // live graph nodes consuming this tensor as an input
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;
  const char* op_name = "leaf";

  ~TensorNode() {
    for (auto& p : parents) p->uses--;
  }
};

namespace detail {
inline uint64_t next_seq() {
  static std::atomic<uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

inline int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    MSENET_REQUIRE(d > 0, "tensor shape must have positive dims, got ",
                   shape_str(shape));
    n *= d;
  }
  return n;
}
}  // namespace detail

template <class Real>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
    return from_values(std::move(shape), {}, requires_grad, Real(0));
  }

  static Tensor full(std::vector<int> shape, Real v, bool requires_grad = false) {
    return from_values(std::move(shape), {}, requires_grad, v);
  }

  static Tensor scalar(Real v, bool requires_grad = false) {
    return from_values({1}, {v}, requires_grad);
  }

  static Tensor from_values(std::vector<int> shape, std::vector<Real> values,
                            bool requires_grad = false, Real fill = Real(0)) {
    auto node = std::make_shared<TensorNode<Real>>();
    const int64_t n = detail::shape_numel(shape);
    if (values.empty()) {
      values.assign((size_t)n, fill);
    } else {
      MSENET_REQUIRE((int64_t)values.size() == n, "value count ", values.size(),
                     " does not match shape ", shape_str(shape));
    }
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->requires_grad = requires_grad;
    node->seq = detail::next_seq();
    return Tensor(std::move(node));
  }

  static Tensor randn(std::vector<int> shape, std::mt19937_64& rng, Real stddev,
                      bool requires_grad = false) {
    const int64_t n = detail::shape_numel(shape);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<Real> v((size_t)n);
    for (auto& x : v) x = Real(dist(rng) * (double)stddev);
    return from_values(std::move(shape), std::move(v), requires_grad);
  }

  bool valid() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[(size_t)i]; }
  int ndim() const { return (int)node_->shape.size(); }
  int64_t numel() const { return (int64_t)node_->values.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->leaf; }

  const std::vector<Real>& values() const { return node_->values; }
  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<Real>& grad() const {
    MSENET_REQUIRE(has_grad(), "tensor has no gradient (op ", node_->op_name,
                   "); run backward first");
    return node_->grad;
  }

  Real item() const {
    MSENET_REQUIRE(numel() == 1, "item() on non-scalar tensor ",
                   shape_str(shape()));
    return node_->values[0];
  }

  // Leaf mutation, used by optimizers between steps. Graph nodes are
  // write-once: mutating a tensor still referenced by a live graph is an
  // error, as is mutating any op output.
  std::vector<Real>& mutable_values() {
    MSENET_REQUIRE(node_->leaf, "cannot mutate op output (", node_->op_name, ")");
    MSENET_REQUIRE(node_->uses == 0,
                   "cannot mutate a tensor still consumed by a live graph");
    return node_->values;
  }

  void zero_grad() { node_->grad.clear(); }

  std::shared_ptr<TensorNode<Real>> node() const { return node_; }

  explicit Tensor(std::shared_ptr<TensorNode<Real>> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<TensorNode<Real>> node_;
};

namespace detail {

template <class Real>
Real* ensure_grad(TensorNode<Real>& node) {
  if (node.grad.empty()) node.grad.assign(node.values.size(), Real(0));
  return node.grad.data();
}

template <class Real>
Tensor<Real> make_op(const char* name, std::vector<int> shape,
                     std::vector<Real> values,
                     std::vector<Tensor<Real>> inputs,
                     std::function<void(TensorNode<Real>&)> backward_fn) {
  auto node = std::make_shared<TensorNode<Real>>();
  MSENET_REQUIRE((int64_t)values.size() == shape_numel(shape), "op ", name,
                 ": produced ", values.size(), " values for shape ",
                 shape_str(shape));
  node->shape = std::move(shape);
  node->values = std::move(values);
  node->leaf = false;
  node->op_name = name;
  node->seq = next_seq();
  bool rg = false;
  node->parents.reserve(inputs.size());
  for (auto& t : inputs) {
    MSENET_REQUIRE(t.valid(), "op ", name, ": empty input tensor");
    rg = rg || t.requires_grad();
    t.node()->uses++;
    node->parents.push_back(t.node());
  }
  node->requires_grad = rg;
  if (rg) node->backward_fn = std::move(backward_fn);
  return Tensor<Real>(std::move(node));
}

}  // namespace detail

// Reverse pass over every node reachable from `loss`, in reverse creation
// order. Populates grad on each reachable requires_grad tensor; gradients of
// fan-out nodes accumulate additively. Running it twice on the same loss
// without rebuilding the graph is an error.
template <class Real>
void backward(const Tensor<Real>& loss) {
  MSENET_REQUIRE(loss.valid() && loss.numel() == 1,
                 "backward requires a scalar loss");
  auto root = loss.node();
  MSENET_REQUIRE(root->requires_grad,
                 "backward on a tensor that does not require gradients");
  MSENET_REQUIRE(!root->backward_consumed,
                 "backward already ran on this loss; rebuild the graph first");
  root->backward_consumed = true;

  // Reachable requires_grad subgraph. Creation order is topological, so a
  // descending sort by seq is a valid reverse schedule.
  std::vector<TensorNode<Real>*> order;
  std::vector<TensorNode<Real>*> stack{root.get()};
  std::vector<const TensorNode<Real>*> seen;
  auto mark = [&seen](const TensorNode<Real>* n) {
    for (auto* s : seen) {
      if (s == n) return false;
    }
    seen.push_back(n);
    return true;
  };
  mark(root.get());
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& p : n->parents) {
      if (p->requires_grad && mark(p.get())) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const TensorNode<Real>* a, const TensorNode<Real>* b) {
              return a->seq > b->seq;
            });

  root->grad.assign(1, Real(1));
  for (auto* n : order) {
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise machinery
// ---------------------------------------------------------------------------

namespace detail {

template <class Real, class F, class DF>
Tensor<Real> unary_op(const char* name, const Tensor<Real>& x, F f, DF dfdx) {
  const auto& xv = x.values();
  std::vector<Real> out(xv.size());
  for (size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  auto xn = x.node();
  return make_op<Real>(
      name, x.shape(), std::move(out), {x},
      [xn, dfdx](TensorNode<Real>& self) {
        Real* gx = ensure_grad(*xn);
        const auto& g = self.grad;
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(xn->values[i]);
      });
}

template <class Real, class F, class DA, class DB>
Tensor<Real> binary_op(const char* name, const Tensor<Real>& a,
                       const Tensor<Real>& b, F f, DA dfda, DB dfdb) {
  MSENET_REQUIRE(a.shape() == b.shape(), "op ", name, ": shape mismatch ",
                 shape_str(a.shape()), " vs ", shape_str(b.shape()));
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<Real> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[i]);
  auto an = a.node();
  auto bn = b.node();
  return make_op<Real>(
      name, a.shape(), std::move(out), {a, b},
      [an, bn, dfda, dfdb](TensorNode<Real>& self) {
        const auto& g = self.grad;
        if (an->requires_grad) {
          Real* ga = ensure_grad(*an);
          for (size_t i = 0; i < g.size(); ++i)
            ga[i] += g[i] * dfda(an->values[i], bn->values[i]);
        }
        if (bn->requires_grad) {
          Real* gb = ensure_grad(*bn);
          for (size_t i = 0; i < g.size(); ++i)
            gb[i] += g[i] * dfdb(an->values[i], bn->values[i]);
        }
      });
}

}  // namespace detail

template <class Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  return detail::binary_op(
      "add", a, b, [](Real x, Real y) { return x + y; },
      [](Real, Real) { return Real(1); }, [](Real, Real) { return Real(1); });
}

template <class Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  return detail::binary_op(
      "sub", a, b, [](Real x, Real y) { return x - y; },
      [](Real, Real) { return Real(1); }, [](Real, Real) { return Real(-1); });
}

template <class Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  return detail::binary_op(
      "mul", a, b, [](Real x, Real y) { return x * y; },
      [](Real, Real y) { return y; }, [](Real x, Real) { return x; });
}

template <class Real>
Tensor<Real> div(const Tensor<Real>& a, const Tensor<Real>& b) {
  return detail::binary_op(
      "div", a, b, [](Real x, Real y) { return x / y; },
      [](Real, Real y) { return Real(1) / y; },
      [](Real x, Real y) { return -x / (y * y); });
}

// Subgradient at ties goes to the first argument.
template <class Real>
Tensor<Real> minimum(const Tensor<Real>& a, const Tensor<Real>& b) {
  return detail::binary_op(
      "minimum", a, b, [](Real x, Real y) { return x < y ? x : y; },
      [](Real x, Real y) { return x <= y ? Real(1) : Real(0); },
      [](Real x, Real y) { return x <= y ? Real(0) : Real(1); });
}

template <class Real>
Tensor<Real> maximum(const Tensor<Real>& a, const Tensor<Real>& b) {
  return detail::binary_op(
      "maximum", a, b, [](Real x, Real y) { return x > y ? x : y; },
      [](Real x, Real y) { return x >= y ? Real(1) : Real(0); },
      [](Real x, Real y) { return x >= y ? Real(0) : Real(1); });
}

template <class Real>
Tensor<Real> neg(const Tensor<Real>& x) {
  return detail::unary_op(
      "neg", x, [](Real v) { return -v; }, [](Real) { return Real(-1); });
}

template <class Real>
Tensor<Real> add_scalar(const Tensor<Real>& x, Real c) {
  return detail::unary_op(
      "add_scalar", x, [c](Real v) { return v + c; },
      [](Real) { return Real(1); });
}

template <class Real>
Tensor<Real> mul_scalar(const Tensor<Real>& x, Real c) {
  return detail::unary_op(
      "mul_scalar", x, [c](Real v) { return v * c; },
      [c](Real) { return c; });
}

template <class Real>
Tensor<Real> clamp_min(const Tensor<Real>& x, Real c) {
  return detail::unary_op(
      "clamp_min", x, [c](Real v) { return v > c ? v : c; },
      [c](Real v) { return v > c ? Real(1) : Real(0); });
}

template <class Real>
Tensor<Real> square(const Tensor<Real>& x) {
  return detail::unary_op(
      "square", x, [](Real v) { return v * v; },
      [](Real v) { return Real(2) * v; });
}

template <class Real>
Tensor<Real> arctan(const Tensor<Real>& x) {
  return detail::unary_op(
      "arctan", x, [](Real v) { return std::atan(v); },
      [](Real v) { return Real(1) / (Real(1) + v * v); });
}

template <class Real>
Tensor<Real> sigmoid(const Tensor<Real>& x) {
  auto sg = [](Real v) {
    return v >= 0 ? Real(1) / (Real(1) + std::exp(-v))
                  : std::exp(v) / (Real(1) + std::exp(v));
  };
  return detail::unary_op(
      "sigmoid", x, sg, [sg](Real v) {
        const Real s = sg(v);
        return s * (Real(1) - s);
      });
}

template <class Real>
Tensor<Real> silu(const Tensor<Real>& x) {
  auto sg = [](Real v) {
    return v >= 0 ? Real(1) / (Real(1) + std::exp(-v))
                  : std::exp(v) / (Real(1) + std::exp(v));
  };
  return detail::unary_op(
      "silu", x, [sg](Real v) { return v * sg(v); },
      [sg](Real v) {
        const Real s = sg(v);
        return s + v * s * (Real(1) - s);
      });
}

// Stops gradient flow: returns a leaf copy of the values.
template <class Real>
Tensor<Real> detach(const Tensor<Real>& x) {
  return Tensor<Real>::from_values(x.shape(), x.values(), false);
}

// ---------------------------------------------------------------------------
// Shape and structure ops
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> reshape(const Tensor<Real>& x, std::vector<int> new_shape) {
  MSENET_REQUIRE(detail::shape_numel(new_shape) == x.numel(),
                 "reshape: cannot view ", shape_str(x.shape()), " as ",
                 shape_str(new_shape));
  auto xn = x.node();
  return detail::make_op<Real>(
      "reshape", std::move(new_shape), x.values(), {x},
      [xn](TensorNode<Real>& self) {
        Real* gx = detail::ensure_grad(*xn);
        for (size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
      });
}

template <class Real>
Tensor<Real> concat_channels(const Tensor<Real>& a, const Tensor<Real>& b) {
  MSENET_REQUIRE(a.ndim() == 4 && b.ndim() == 4, "concat_channels: need NCHW");
  MSENET_REQUIRE(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) &&
                     a.dim(3) == b.dim(3),
                 "concat_channels: shape mismatch ", shape_str(a.shape()),
                 " vs ", shape_str(b.shape()));
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const int hw = a.dim(2) * a.dim(3);
  std::vector<Real> out((size_t)n * (ca + cb) * hw);
  for (int ni = 0; ni < n; ++ni) {
    std::copy_n(a.values().data() + (int64_t)ni * ca * hw, (int64_t)ca * hw,
                out.data() + (int64_t)ni * (ca + cb) * hw);
    std::copy_n(b.values().data() + (int64_t)ni * cb * hw, (int64_t)cb * hw,
                out.data() + ((int64_t)ni * (ca + cb) + ca) * hw);
  }
  auto an = a.node();
  auto bn = b.node();
  return detail::make_op<Real>(
      "concat_channels", {n, ca + cb, a.dim(2), a.dim(3)}, std::move(out),
      {a, b}, [an, bn, n, ca, cb, hw](TensorNode<Real>& self) {
        if (an->requires_grad) {
          Real* ga = detail::ensure_grad(*an);
          for (int ni = 0; ni < n; ++ni) {
            const Real* g = self.grad.data() + (int64_t)ni * (ca + cb) * hw;
            for (int64_t i = 0; i < (int64_t)ca * hw; ++i)
              ga[(int64_t)ni * ca * hw + i] += g[i];
          }
        }
        if (bn->requires_grad) {
          Real* gb = detail::ensure_grad(*bn);
          for (int ni = 0; ni < n; ++ni) {
            const Real* g =
                self.grad.data() + ((int64_t)ni * (ca + cb) + ca) * hw;
            for (int64_t i = 0; i < (int64_t)cb * hw; ++i)
              gb[(int64_t)ni * cb * hw + i] += g[i];
          }
        }
      });
}

template <class Real>
Tensor<Real> slice_channels(const Tensor<Real>& x, int c0, int c1) {
  MSENET_REQUIRE(x.ndim() == 4, "slice_channels: need NCHW");
  MSENET_REQUIRE(0 <= c0 && c0 < c1 && c1 <= x.dim(1),
                 "slice_channels: bad range [", c0, ", ", c1, ") for ",
                 shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1), cs = c1 - c0;
  const int hw = x.dim(2) * x.dim(3);
  std::vector<Real> out((size_t)n * cs * hw);
  for (int ni = 0; ni < n; ++ni) {
    std::copy_n(x.values().data() + ((int64_t)ni * c + c0) * hw,
                (int64_t)cs * hw, out.data() + (int64_t)ni * cs * hw);
  }
  auto xn = x.node();
  return detail::make_op<Real>(
      "slice_channels", {n, cs, x.dim(2), x.dim(3)}, std::move(out), {x},
      [xn, n, c, c0, cs, hw](TensorNode<Real>& self) {
        Real* gx = detail::ensure_grad(*xn);
        for (int ni = 0; ni < n; ++ni) {
          const Real* g = self.grad.data() + (int64_t)ni * cs * hw;
          for (int64_t i = 0; i < (int64_t)cs * hw; ++i)
            gx[((int64_t)ni * c + c0) * hw + i] += g[i];
        }
      });
}

// [N,C,H,W] -> [N,C] mean over the spatial grid.
template <class Real>
Tensor<Real> global_avg_pool(const Tensor<Real>& x) {
  MSENET_REQUIRE(x.ndim() == 4, "global_avg_pool: need NCHW, got ",
                 shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<Real> out((size_t)n * c);
  for (int i = 0; i < n * c; ++i) {
    const Real* src = x.values().data() + (int64_t)i * hw;
    Real acc = 0;
    for (int j = 0; j < hw; ++j) acc += src[j];
    out[(size_t)i] = acc / Real(hw);
  }
  auto xn = x.node();
  return detail::make_op<Real>(
      "global_avg_pool", {n, c}, std::move(out), {x},
      [xn, n, c, hw](TensorNode<Real>& self) {
        Real* gx = detail::ensure_grad(*xn);
        for (int i = 0; i < n * c; ++i) {
          const Real g = self.grad[(size_t)i] / Real(hw);
          for (int j = 0; j < hw; ++j) gx[(int64_t)i * hw + j] += g;
        }
      });
}

// x viewed as [rows, M] plus row vector b of length M (leading-dim broadcast).
template <class Real>
Tensor<Real> add_rowvec(const Tensor<Real>& x, const Tensor<Real>& b) {
  const int64_t m = b.numel();
  MSENET_REQUIRE(b.ndim() == 1, "add_rowvec: bias must be 1-D");
  MSENET_REQUIRE(x.numel() % m == 0 && x.dim(x.ndim() - 1) == (int)m,
                 "add_rowvec: last dim of ", shape_str(x.shape()),
                 " must equal bias length ", m);
  const int64_t rows = x.numel() / m;
  std::vector<Real> out(x.values());
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < m; ++j) out[(size_t)(r * m + j)] += b.values()[(size_t)j];
  auto xn = x.node();
  auto bn = b.node();
  return detail::make_op<Real>(
      "add_rowvec", x.shape(), std::move(out), {x, b},
      [xn, bn, rows, m](TensorNode<Real>& self) {
        if (xn->requires_grad) {
          Real* gx = detail::ensure_grad(*xn);
          for (size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
        }
        if (bn->requires_grad) {
          Real* gb = detail::ensure_grad(*bn);
          for (int64_t j = 0; j < m; ++j) {
            Real acc = 0;
            for (int64_t r = 0; r < rows; ++r) acc += self.grad[(size_t)(r * m + j)];
            gb[j] += acc;
          }
        }
      });
}

// out[n, ...] = x[n, ...] * s[n]  (leading-dim broadcast of a per-batch scalar)
template <class Real>
Tensor<Real> scale_rows(const Tensor<Real>& x, const Tensor<Real>& s) {
  MSENET_REQUIRE(s.ndim() == 1 && s.dim(0) == x.dim(0),
                 "scale_rows: scale must be [N] matching ",
                 shape_str(x.shape()), ", got ", shape_str(s.shape()));
  const int n = x.dim(0);
  const int64_t stride = x.numel() / n;
  std::vector<Real> out(x.values());
  for (int ni = 0; ni < n; ++ni) {
    const Real sv = s.values()[(size_t)ni];
    for (int64_t i = 0; i < stride; ++i) out[(size_t)(ni * stride + i)] *= sv;
  }
  auto xn = x.node();
  auto sn = s.node();
  return detail::make_op<Real>(
      "scale_rows", x.shape(), std::move(out), {x, s},
      [xn, sn, n, stride](TensorNode<Real>& self) {
        if (xn->requires_grad) {
          Real* gx = detail::ensure_grad(*xn);
          for (int ni = 0; ni < n; ++ni) {
            const Real sv = sn->values[(size_t)ni];
            for (int64_t i = 0; i < stride; ++i)
              gx[ni * stride + i] += self.grad[(size_t)(ni * stride + i)] * sv;
          }
        }
        if (sn->requires_grad) {
          Real* gs = detail::ensure_grad(*sn);
          for (int ni = 0; ni < n; ++ni) {
            Real acc = 0;
            for (int64_t i = 0; i < stride; ++i)
              acc += self.grad[(size_t)(ni * stride + i)] *
                     xn->values[(size_t)(ni * stride + i)];
            gs[ni] += acc;
          }
        }
      });
}

// Stacks E vectors of length N into [N, E]; the inverse view of select_column.
template <class Real>
Tensor<Real> stack_columns(const std::vector<Tensor<Real>>& cols) {
  MSENET_REQUIRE(!cols.empty(), "stack_columns: empty column list");
  const int n = cols[0].dim(0);
  const int e = (int)cols.size();
  for (const auto& c : cols) {
    MSENET_REQUIRE(c.ndim() == 1 && c.dim(0) == n,
                   "stack_columns: every column must be [", n, "], got ",
                   shape_str(c.shape()));
  }
  std::vector<Real> out((size_t)n * e);
  for (int j = 0; j < e; ++j)
    for (int i = 0; i < n; ++i) out[(size_t)(i * e + j)] = cols[(size_t)j].values()[(size_t)i];
  std::vector<std::shared_ptr<TensorNode<Real>>> nodes;
  for (const auto& c : cols) nodes.push_back(c.node());
  return detail::make_op<Real>(
      "stack_columns", {n, e}, std::move(out), cols,
      [nodes, n, e](TensorNode<Real>& self) {
        for (int j = 0; j < e; ++j) {
          auto& col = *nodes[(size_t)j];
          if (!col.requires_grad) continue;
          Real* gc = detail::ensure_grad(col);
          for (int i = 0; i < n; ++i) gc[i] += self.grad[(size_t)(i * e + j)];
        }
      });
}

// [N, M] -> [N], picking column j.
template <class Real>
Tensor<Real> select_column(const Tensor<Real>& x, int j) {
  MSENET_REQUIRE(x.ndim() == 2, "select_column: need [N, M], got ",
                 shape_str(x.shape()));
  MSENET_REQUIRE(0 <= j && j < x.dim(1), "select_column: column ", j,
                 " out of range for ", shape_str(x.shape()));
  const int n = x.dim(0), m = x.dim(1);
  std::vector<Real> out((size_t)n);
  for (int i = 0; i < n; ++i) out[(size_t)i] = x.values()[(size_t)(i * m + j)];
  auto xn = x.node();
  return detail::make_op<Real>(
      "select_column", {n}, std::move(out), {x},
      [xn, n, m, j](TensorNode<Real>& self) {
        Real* gx = detail::ensure_grad(*xn);
        for (int i = 0; i < n; ++i) gx[(int64_t)i * m + j] += self.grad[(size_t)i];
      });
}

// Picks one spatial cell per row: out[p][c] = x[batch[p], c, cell[p]].
template <class Real>
Tensor<Real> gather_cells(const Tensor<Real>& x, const std::vector<int>& batch,
                          const std::vector<int>& cell) {
  MSENET_REQUIRE(x.ndim() == 4, "gather_cells: need NCHW");
  MSENET_REQUIRE(batch.size() == cell.size() && !batch.empty(),
                 "gather_cells: index lists must be equal-sized and non-empty");
  const int n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  const int p = (int)batch.size();
  for (int i = 0; i < p; ++i) {
    MSENET_REQUIRE(batch[(size_t)i] >= 0 && batch[(size_t)i] < n &&
                       cell[(size_t)i] >= 0 && cell[(size_t)i] < hw,
                   "gather_cells: index out of range at row ", i);
  }
  std::vector<Real> out((size_t)p * c);
  for (int i = 0; i < p; ++i) {
    for (int ci = 0; ci < c; ++ci) {
      out[(size_t)(i * c + ci)] =
          x.values()[(size_t)(((int64_t)batch[(size_t)i] * c + ci) * hw +
                              cell[(size_t)i])];
    }
  }
  auto xn = x.node();
  return detail::make_op<Real>(
      "gather_cells", {p, c}, std::move(out), {x},
      [xn, batch, cell, c, hw, p](TensorNode<Real>& self) {
        Real* gx = detail::ensure_grad(*xn);
        for (int i = 0; i < p; ++i) {
          for (int ci = 0; ci < c; ++ci) {
            gx[((int64_t)batch[(size_t)i] * c + ci) * hw + cell[(size_t)i]] +=
                self.grad[(size_t)(i * c + ci)];
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Reductions and softmax
// ---------------------------------------------------------------------------

template <class Real>
Tensor<Real> sum(const Tensor<Real>& x) {
  Real acc = 0;
  for (Real v : x.values()) acc += v;
  auto xn = x.node();
  return detail::make_op<Real>(
      "sum", {1}, {acc}, {x}, [xn](TensorNode<Real>& self) {
        Real* gx = detail::ensure_grad(*xn);
        const Real g = self.grad[0];
        for (size_t i = 0; i < xn->values.size(); ++i) gx[i] += g;
      });
}

template <class Real>
Tensor<Real> mean(const Tensor<Real>& x) {
  Real acc = 0;
  for (Real v : x.values()) acc += v;
  const Real inv = Real(1) / Real(x.numel());
  auto xn = x.node();
  return detail::make_op<Real>(
      "mean", {1}, {acc * inv}, {x}, [xn, inv](TensorNode<Real>& self) {
        Real* gx = detail::ensure_grad(*xn);
        const Real g = self.grad[0] * inv;
        for (size_t i = 0; i < xn->values.size(); ++i) gx[i] += g;
      });
}

// Softmax over the last dimension. Rows are shifted by their max, so adding a
// constant to a whole row leaves its outputs unchanged.
template <class Real>
Tensor<Real> softmax_lastdim(const Tensor<Real>& x) {
  MSENET_REQUIRE(x.ndim() >= 1, "softmax_lastdim: need at least 1-D");
  const int m = x.dim(x.ndim() - 1);
  const int64_t rows = x.numel() / m;
  std::vector<Real> out(x.values().size());
  for (int64_t r = 0; r < rows; ++r) {
    const Real* src = x.values().data() + r * m;
    Real* dst = out.data() + r * m;
    Real mx = src[0];
    for (int j = 1; j < m; ++j) mx = std::max(mx, src[j]);
    Real s = 0;
    for (int j = 0; j < m; ++j) {
      dst[j] = std::exp(src[j] - mx);
      s += dst[j];
    }
    const Real inv = Real(1) / s;
    for (int j = 0; j < m; ++j) dst[j] *= inv;
  }
  auto xn = x.node();
  return detail::make_op<Real>(
      "softmax", x.shape(), std::move(out), {x},
      [xn, rows, m](TensorNode<Real>& self) {
        Real* gx = detail::ensure_grad(*xn);
        for (int64_t r = 0; r < rows; ++r) {
          const Real* s = self.values.data() + r * m;
          const Real* g = self.grad.data() + r * m;
          Real dot = 0;
          for (int j = 0; j < m; ++j) dot += s[j] * g[j];
          for (int j = 0; j < m; ++j) gx[r * m + j] += s[j] * (g[j] - dot);
        }
      });
}

// Plain [M,K] x [K,N] matrix product.
template <class Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  MSENET_REQUIRE(a.ndim() == 2 && b.ndim() == 2 && a.dim(1) == b.dim(0),
                 "matmul: incompatible shapes ", shape_str(a.shape()), " x ",
                 shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), q = b.dim(1);
  std::vector<Real> out((size_t)m * q);
  kernels::matmul_nn(a.values().data(), b.values().data(), out.data(), m, k, q,
                     false);
  auto an = a.node();
  auto bn = b.node();
  return detail::make_op<Real>(
      "matmul", {m, q}, std::move(out), {a, b},
      [an, bn, m, k, q](TensorNode<Real>& self) {
        if (an->requires_grad) {
          kernels::matmul_nt(self.grad.data(), bn->values.data(),
                             detail::ensure_grad(*an), m, q, k, true);
        }
        if (bn->requires_grad) {
          kernels::matmul_tn(an->values.data(), self.grad.data(),
                             detail::ensure_grad(*bn), k, m, q, true);
        }
      });
}

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

}  // namespace msenet
