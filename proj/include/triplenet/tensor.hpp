#pragma once

// Dense row-major tensor with reverse-mode automatic differentiation.
// Ops record a graph of nodes; backward() replays them in reverse
// execution order exactly once. Scalar type is a template parameter:
// the runtime model uses float, gradient checking re-runs in double.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace triplenet {

using Shape = std::vector<size_t>;
using MaskVec = std::vector<uint8_t>;  // 1 = valid, 0 = padded

inline size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

[[noreturn]] inline void tensor_error(const std::string& op, const std::string& what) {
  throw std::invalid_argument(op + ": " + what);
}

inline void check(bool ok, const std::string& op, const std::string& what) {
  if (!ok) tensor_error(op, what);
}

template <class T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // sized lazily during backward
  bool requires_grad = false;
  uint64_t seq = 0;  // creation order; parents always have smaller seq
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;  // accumulates into parents' grads

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

inline uint64_t next_seq() {
  static std::atomic<uint64_t> counter{1};
  return counter.fetch_add(1);
}

template <class T>
class TensorT {
 public:
  using Node = TensorNode<T>;

  TensorT() = default;

  TensorT(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (shape_numel(shape) != data.size())
      tensor_error("Tensor", "shape " + shape_str(shape) + " does not match data length " +
                                 std::to_string(data.size()));
    n_ = std::make_shared<Node>();
    n_->shape = std::move(shape);
    n_->value = std::move(data);
    n_->requires_grad = requires_grad;
    n_->seq = next_seq();
  }

  static TensorT zeros(Shape shape) {
    size_t n = shape_numel(shape);
    return TensorT(std::move(shape), std::vector<T>(n, T(0)));
  }
  static TensorT full(Shape shape, T v) {
    size_t n = shape_numel(shape);
    return TensorT(std::move(shape), std::vector<T>(n, v));
  }
  static TensorT scalar(T v) { return TensorT(Shape{}, {v}); }
  static TensorT param(Shape shape, std::vector<T> data) {
    return TensorT(std::move(shape), std::move(data), true);
  }

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  size_t size() const { return n_->value.size(); }
  size_t dim(size_t i) const { return n_->shape.at(i); }
  size_t rank() const { return n_->shape.size(); }
  bool requires_grad() const { return n_->requires_grad; }

  std::vector<T>& values() { return n_->value; }
  const std::vector<T>& values() const { return n_->value; }
  const std::vector<T>& grad() const { return n_->grad; }
  std::vector<T>& mutable_grad() {
    n_->ensure_grad();
    return n_->grad;
  }

  T item() const {
    check(size() == 1, "item", "tensor has " + std::to_string(size()) + " elements");
    return n_->value[0];
  }

  T operator()(size_t i) const { return n_->value[i]; }
  T operator()(size_t i, size_t j) const { return n_->value[i * n_->shape[1] + j]; }

  std::shared_ptr<Node> node() const { return n_; }

  void zero_grad() { n_->grad.assign(n_->value.size(), T(0)); }

  // Reverse-mode pass from a scalar. Builds the tape (reachable nodes in
  // reverse creation order) and replays each recorded op exactly once.
  void backward() const {
    check(size() == 1, "backward", "loss must be scalar, got shape " + shape_str(shape()));
    std::vector<std::shared_ptr<Node>> tape;
    // collect reachable grad-requiring nodes
    std::unordered_set<Node*> seen;
    auto mark = [&](Node* p) { return seen.insert(p).second; };
    mark(n_.get());
    tape.push_back(n_);
    size_t head = 0;
    while (head < tape.size()) {
      auto cur = tape[head++];
      for (auto& p : cur->parents)
        if ((p->requires_grad || p->backprop) && mark(p.get())) tape.push_back(p);
    }
    std::sort(tape.begin(), tape.end(),
              [](const auto& a, const auto& b) { return a->seq > b->seq; });
    n_->ensure_grad();
    n_->grad[0] += T(1);
    for (auto& node : tape)
      if (node->backprop) node->backprop(*node);
  }

 private:
  std::shared_ptr<Node> n_;
};

namespace detail {

// Records an op node; the backprop closure is attached only when some
// input participates in differentiation.
template <class T>
TensorT<T> make_op(Shape shape, std::vector<T> value, std::vector<TensorT<T>> inputs,
                   std::function<void(TensorNode<T>&)> backprop) {
  TensorT<T> out(std::move(shape), std::move(value));
  bool track = false;
  for (auto& in : inputs)
    if (in.node() && (in.node()->requires_grad || in.node()->backprop)) track = true;
  if (track) {
    auto n = out.node();
    n->requires_grad = true;
    for (auto& in : inputs) n->parents.push_back(in.node());
    n->backprop = std::move(backprop);
  }
  return out;
}

template <class T>
void accumulate(TensorNode<T>& parent, const std::vector<T>& g) {
  if (!parent.requires_grad && !parent.backprop) return;
  parent.ensure_grad();
  for (size_t i = 0; i < g.size(); ++i) parent.grad[i] += g[i];
}

}  // namespace detail

// ---------- elementwise ----------

template <class T>
void check_same_shape(const char* op, const TensorT<T>& a, const TensorT<T>& b) {
  if (a.shape() != b.shape())
    tensor_error(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  check_same_shape("add", a, b);
  std::vector<T> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] + b.values()[i];
  return detail::make_op<T>(a.shape(), std::move(v), {a, b}, [](TensorNode<T>& n) {
    detail::accumulate(*n.parents[0], n.grad);
    detail::accumulate(*n.parents[1], n.grad);
  });
}

template <class T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  check_same_shape("sub", a, b);
  std::vector<T> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] - b.values()[i];
  return detail::make_op<T>(a.shape(), std::move(v), {a, b}, [](TensorNode<T>& n) {
    detail::accumulate(*n.parents[0], n.grad);
    auto& p = *n.parents[1];
    if (p.requires_grad || p.backprop) {
      p.ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] -= n.grad[i];
    }
  });
}

template <class T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  check_same_shape("mul", a, b);
  std::vector<T> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * b.values()[i];
  return detail::make_op<T>(a.shape(), std::move(v), {a, b}, [](TensorNode<T>& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad || pa.backprop) {
      pa.ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] * pb.value[i];
    }
    if (pb.requires_grad || pb.backprop) {
      pb.ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] += n.grad[i] * pa.value[i];
    }
  });
}

template <class T>
TensorT<T> scale(const TensorT<T>& a, T c) {
  std::vector<T> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * c;
  return detail::make_op<T>(a.shape(), std::move(v), {a}, [c](TensorNode<T>& n) {
    auto& p = *n.parents[0];
    if (!p.requires_grad && !p.backprop) return;
    p.ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] * c;
  });
}

template <class T, class F, class DF>
TensorT<T> unary_op(const char* /*name*/, const TensorT<T>& a, F f, DF df) {
  std::vector<T> v(a.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = f(a.values()[i]);
  return detail::make_op<T>(a.shape(), std::move(v), {a}, [df](TensorNode<T>& n) {
    auto& p = *n.parents[0];
    if (!p.requires_grad && !p.backprop) return;
    p.ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i)
      p.grad[i] += n.grad[i] * df(p.value[i], n.value[i]);
  });
}

template <class T>
TensorT<T> tanh_t(const TensorT<T>& a) {
  return unary_op(
      "tanh", a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
TensorT<T> sigmoid(const TensorT<T>& a) {
  return unary_op(
      "sigmoid", a, [](T x) { return T(1) / (T(1) + std::exp(-x)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <class T>
TensorT<T> exp_t(const TensorT<T>& a) {
  return unary_op(
      "exp", a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

// ---------- structure ----------

template <class T>
TensorT<T> reshape(const TensorT<T>& a, Shape shape) {
  check(shape_numel(shape) == a.size(), "reshape",
        "cannot reshape " + shape_str(a.shape()) + " to " + shape_str(shape));
  return detail::make_op<T>(std::move(shape), a.values(), {a}, [](TensorNode<T>& n) {
    detail::accumulate(*n.parents[0], n.grad);
  });
}

template <class T>
TensorT<T> transpose(const TensorT<T>& a) {
  check(a.rank() == 2, "transpose", "expects rank-2 tensor, got " + shape_str(a.shape()));
  size_t r = a.dim(0), c = a.dim(1);
  std::vector<T> v(a.size());
  for (size_t i = 0; i < r; ++i)
    for (size_t j = 0; j < c; ++j) v[j * r + i] = a.values()[i * c + j];
  return detail::make_op<T>({c, r}, std::move(v), {a}, [r, c](TensorNode<T>& n) {
    auto& p = *n.parents[0];
    if (!p.requires_grad && !p.backprop) return;
    p.ensure_grad();
    for (size_t i = 0; i < r; ++i)
      for (size_t j = 0; j < c; ++j) p.grad[i * c + j] += n.grad[j * r + i];
  });
}

template <class T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  check(a.rank() == 2 && b.rank() == 2, "matmul",
        "expects rank-2 tensors, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  check(a.dim(1) == b.dim(0), "matmul",
        "inner dims differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  size_t p = a.dim(0), q = a.dim(1), r = b.dim(1);
  std::vector<T> v(p * r, T(0));
  const auto& av = a.values();
  const auto& bv = b.values();
  for (size_t i = 0; i < p; ++i)
    for (size_t k = 0; k < q; ++k) {
      T aik = av[i * q + k];
      if (aik == T(0)) continue;
      const T* brow = bv.data() + k * r;
      T* orow = v.data() + i * r;
      for (size_t j = 0; j < r; ++j) orow[j] += aik * brow[j];
    }
  return detail::make_op<T>({p, r}, std::move(v), {a, b}, [p, q, r](TensorNode<T>& n) {
    auto& pa = *n.parents[0];
    auto& pb = *n.parents[1];
    if (pa.requires_grad || pa.backprop) {
      pa.ensure_grad();
      for (size_t i = 0; i < p; ++i)
        for (size_t j = 0; j < r; ++j) {
          T g = n.grad[i * r + j];
          if (g == T(0)) continue;
          for (size_t k = 0; k < q; ++k) pa.grad[i * q + k] += g * pb.value[k * r + j];
        }
    }
    if (pb.requires_grad || pb.backprop) {
      pb.ensure_grad();
      for (size_t i = 0; i < p; ++i)
        for (size_t k = 0; k < q; ++k) {
          T av = pa.value[i * q + k];
          if (av == T(0)) continue;
          for (size_t j = 0; j < r; ++j) pb.grad[k * r + j] += av * n.grad[i * r + j];
        }
    }
  });
}

template <class T>
TensorT<T> concat(size_t axis, const std::vector<TensorT<T>>& parts) {
  check(!parts.empty(), "concat", "no inputs");
  const Shape& s0 = parts[0].shape();
  check(axis < s0.size(), "concat", "axis out of range");
  Shape out = s0;
  size_t total = s0[axis];
  for (size_t i = 1; i < parts.size(); ++i) {
    const Shape& si = parts[i].shape();
    check(si.size() == s0.size(), "concat", "rank mismatch");
    for (size_t d = 0; d < si.size(); ++d)
      if (d != axis)
        check(si[d] == s0[d], "concat",
              "non-joined dims differ: " + shape_str(s0) + " vs " + shape_str(si));
    total += si[axis];
  }
  out[axis] = total;
  size_t outer = 1, inner = 1;
  for (size_t d = 0; d < axis; ++d) outer *= s0[d];
  for (size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];
  std::vector<T> v(shape_numel(out));
  size_t off = 0;
  std::vector<size_t> extents;
  for (auto& part : parts) {
    size_t e = part.dim(axis);
    extents.push_back(e);
    for (size_t o = 0; o < outer; ++o)
      std::copy_n(part.values().data() + o * e * inner, e * inner,
                  v.data() + (o * total + off) * inner);
    off += e;
  }
  return detail::make_op<T>(out, std::move(v), parts,
                            [outer, inner, total, extents](TensorNode<T>& n) {
                              size_t off = 0;
                              for (size_t pi = 0; pi < n.parents.size(); ++pi) {
                                auto& p = *n.parents[pi];
                                size_t e = extents[pi];
                                if (p.requires_grad || p.backprop) {
                                  p.ensure_grad();
                                  for (size_t o = 0; o < outer; ++o)
                                    for (size_t x = 0; x < e * inner; ++x)
                                      p.grad[o * e * inner + x] +=
                                          n.grad[(o * total + off) * inner + x];
                                }
                                off += e;
                              }
                            });
}

template <class T>
TensorT<T> concat(size_t axis, std::initializer_list<TensorT<T>> parts) {
  return concat(axis, std::vector<TensorT<T>>(parts));
}

template <class T>
TensorT<T> slice(const TensorT<T>& a, size_t axis, size_t start, size_t len) {
  check(axis < a.rank(), "slice", "axis out of range");
  check(start + len <= a.dim(axis), "slice",
        "range [" + std::to_string(start) + "," + std::to_string(start + len) +
            ") exceeds extent " + std::to_string(a.dim(axis)));
  Shape out = a.shape();
  out[axis] = len;
  size_t outer = 1, inner = 1;
  for (size_t d = 0; d < axis; ++d) outer *= a.dim(d);
  for (size_t d = axis + 1; d < a.rank(); ++d) inner *= a.dim(d);
  size_t ext = a.dim(axis);
  std::vector<T> v(outer * len * inner);
  for (size_t o = 0; o < outer; ++o)
    std::copy_n(a.values().data() + (o * ext + start) * inner, len * inner,
                v.data() + o * len * inner);
  return detail::make_op<T>(out, std::move(v), {a},
                            [outer, inner, ext, start, len](TensorNode<T>& n) {
                              auto& p = *n.parents[0];
                              if (!p.requires_grad && !p.backprop) return;
                              p.ensure_grad();
                              for (size_t o = 0; o < outer; ++o)
                                for (size_t x = 0; x < len * inner; ++x)
                                  p.grad[(o * ext + start) * inner + x] +=
                                      n.grad[o * len * inner + x];
                            });
}

// Explicit broadcast: the input rank may be lower (axes are prepended) and
// size-1 axes expand. No other implicit broadcasting exists anywhere.
template <class T>
TensorT<T> broadcast_to(const TensorT<T>& a, Shape shape) {
  Shape in = a.shape();
  check(in.size() <= shape.size(), "broadcast",
        "cannot broadcast " + shape_str(in) + " to " + shape_str(shape));
  Shape padded(shape.size(), 1);
  std::copy(in.begin(), in.end(), padded.begin() + (shape.size() - in.size()));
  for (size_t d = 0; d < shape.size(); ++d)
    check(padded[d] == shape[d] || padded[d] == 1, "broadcast",
          "cannot broadcast " + shape_str(in) + " to " + shape_str(shape));
  size_t n_out = shape_numel(shape);
  std::vector<size_t> in_strides(shape.size(), 0);
  {
    size_t stride = 1;
    for (size_t d = shape.size(); d-- > 0;) {
      if (padded[d] != 1) {
        in_strides[d] = stride;
        stride *= padded[d];
      }
    }
  }
  std::vector<T> v(n_out);
  std::vector<size_t> idx(shape.size(), 0);
  for (size_t o = 0; o < n_out; ++o) {
    size_t src = 0;
    for (size_t d = 0; d < shape.size(); ++d) src += idx[d] * in_strides[d];
    v[o] = a.values()[src];
    for (size_t d = shape.size(); d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  return detail::make_op<T>(shape, std::move(v), {a}, [shape, in_strides](TensorNode<T>& n) {
    auto& p = *n.parents[0];
    if (!p.requires_grad && !p.backprop) return;
    p.ensure_grad();
    std::vector<size_t> idx(shape.size(), 0);
    for (size_t o = 0; o < n.grad.size(); ++o) {
      size_t src = 0;
      for (size_t d = 0; d < shape.size(); ++d) src += idx[d] * in_strides[d];
      p.grad[src] += n.grad[o];
      for (size_t d = shape.size(); d-- > 0;) {
        if (++idx[d] < shape[d]) break;
        idx[d] = 0;
      }
    }
  });
}

// mat (p x q) + row vector (q), applied to every row
template <class T>
TensorT<T> add_rowwise(const TensorT<T>& mat, const TensorT<T>& vec) {
  check(mat.rank() == 2 && vec.rank() == 1, "add_rowwise",
        "expects matrix + vector, got " + shape_str(mat.shape()) + " and " +
            shape_str(vec.shape()));
  check(mat.dim(1) == vec.dim(0), "add_rowwise",
        "width mismatch: " + shape_str(mat.shape()) + " vs " + shape_str(vec.shape()));
  size_t p = mat.dim(0), q = mat.dim(1);
  std::vector<T> v(mat.size());
  for (size_t i = 0; i < p; ++i)
    for (size_t j = 0; j < q; ++j) v[i * q + j] = mat.values()[i * q + j] + vec.values()[j];
  return detail::make_op<T>(mat.shape(), std::move(v), {mat, vec}, [p, q](TensorNode<T>& n) {
    detail::accumulate(*n.parents[0], n.grad);
    auto& pv = *n.parents[1];
    if (pv.requires_grad || pv.backprop) {
      pv.ensure_grad();
      for (size_t i = 0; i < p; ++i)
        for (size_t j = 0; j < q; ++j) pv.grad[j] += n.grad[i * q + j];
    }
  });
}

template <class T>
TensorT<T> sum(const TensorT<T>& a) {
  T s = std::accumulate(a.values().begin(), a.values().end(), T(0));
  return detail::make_op<T>(Shape{}, {s}, {a}, [](TensorNode<T>& n) {
    auto& p = *n.parents[0];
    if (!p.requires_grad && !p.backprop) return;
    p.ensure_grad();
    for (auto& g : p.grad) g += n.grad[0];
  });
}

// ---------- slicing helpers over an axis ----------

namespace detail {
struct AxisView {
  size_t outer, extent, inner;
};
template <class T>
AxisView axis_view(const TensorT<T>& t, size_t axis) {
  AxisView v{1, t.dim(axis), 1};
  for (size_t d = 0; d < axis; ++d) v.outer *= t.dim(d);
  for (size_t d = axis + 1; d < t.rank(); ++d) v.inner *= t.dim(d);
  return v;
}
// mask may be empty (all valid), a 1-D vector of length extent, or the
// full flattened shape of t.
inline bool mask_at(const MaskVec& mask, size_t full_index, size_t axis_index, size_t full_size,
                    size_t extent) {
  if (mask.empty()) return true;
  if (mask.size() == extent) return mask[axis_index] != 0;
  if (mask.size() == full_size) return mask[full_index] != 0;
  throw std::invalid_argument("mask: size " + std::to_string(mask.size()) +
                              " matches neither axis extent " + std::to_string(extent) +
                              " nor tensor size " + std::to_string(full_size));
}
}  // namespace detail

template <class T>
TensorT<T> masked_softmax(const TensorT<T>& logits, size_t axis, const MaskVec& mask = {}) {
  check(axis < logits.rank(), "masked_softmax", "axis out of range");
  auto av = detail::axis_view(logits, axis);
  std::vector<T> y(logits.size(), T(0));
  const auto& x = logits.values();
  for (size_t o = 0; o < av.outer; ++o)
    for (size_t i = 0; i < av.inner; ++i) {
      T mx = -std::numeric_limits<T>::infinity();
      size_t valid = 0;
      for (size_t e = 0; e < av.extent; ++e) {
        size_t idx = (o * av.extent + e) * av.inner + i;
        if (!detail::mask_at(mask, idx, e, x.size(), av.extent)) continue;
        ++valid;
        mx = std::max(mx, x[idx]);
      }
      if (valid == 0) tensor_error("masked_softmax", "fully-masked slice");
      T z = T(0);
      for (size_t e = 0; e < av.extent; ++e) {
        size_t idx = (o * av.extent + e) * av.inner + i;
        if (!detail::mask_at(mask, idx, e, x.size(), av.extent)) continue;
        y[idx] = std::exp(x[idx] - mx);
        z += y[idx];
      }
      for (size_t e = 0; e < av.extent; ++e) {
        size_t idx = (o * av.extent + e) * av.inner + i;
        if (detail::mask_at(mask, idx, e, x.size(), av.extent)) y[idx] /= z;
      }
    }
  return detail::make_op<T>(logits.shape(), std::move(y), {logits}, [av](TensorNode<T>& n) {
    auto& p = *n.parents[0];
    if (!p.requires_grad && !p.backprop) return;
    p.ensure_grad();
    for (size_t o = 0; o < av.outer; ++o)
      for (size_t i = 0; i < av.inner; ++i) {
        T dot = T(0);
        for (size_t e = 0; e < av.extent; ++e) {
          size_t idx = (o * av.extent + e) * av.inner + i;
          dot += n.grad[idx] * n.value[idx];
        }
        for (size_t e = 0; e < av.extent; ++e) {
          size_t idx = (o * av.extent + e) * av.inner + i;
          p.grad[idx] += n.value[idx] * (n.grad[idx] - dot);
        }
      }
  });
}

// Max over one axis (the axis is dropped). Masked positions are excluded;
// gradient routes to the first argmax only.
template <class T>
TensorT<T> maxpool(const TensorT<T>& t, size_t axis, const MaskVec& mask = {}) {
  check(axis < t.rank(), "maxpool", "axis out of range");
  auto av = detail::axis_view(t, axis);
  Shape out;
  for (size_t d = 0; d < t.rank(); ++d)
    if (d != axis) out.push_back(t.dim(d));
  std::vector<T> y(av.outer * av.inner);
  std::vector<size_t> argmax(av.outer * av.inner);
  const auto& x = t.values();
  for (size_t o = 0; o < av.outer; ++o)
    for (size_t i = 0; i < av.inner; ++i) {
      bool found = false;
      T best = T(0);
      size_t bi = 0;
      for (size_t e = 0; e < av.extent; ++e) {
        size_t idx = (o * av.extent + e) * av.inner + i;
        if (!detail::mask_at(mask, idx, e, x.size(), av.extent)) continue;
        if (!found || x[idx] > best) {
          best = x[idx];
          bi = idx;
          found = true;
        }
      }
      if (!found) tensor_error("maxpool", "empty valid set in slice");
      y[o * av.inner + i] = best;
      argmax[o * av.inner + i] = bi;
    }
  return detail::make_op<T>(out, std::move(y), {t}, [argmax](TensorNode<T>& n) {
    auto& p = *n.parents[0];
    if (!p.requires_grad && !p.backprop) return;
    p.ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) p.grad[argmax[i]] += n.grad[i];
  });
}

// ---------- cosine ----------

inline constexpr double kCosineNormFloor = 1e-8;

// cosine of two vectors; defined as 0 when either norm is below the floor
// (padded positions then produce neutral matches, with no gradient).
template <class T>
TensorT<T> cosine(const TensorT<T>& u, const TensorT<T>& v) {
  check(u.rank() == 1 && v.rank() == 1, "cosine",
        "expects vectors, got " + shape_str(u.shape()) + " and " + shape_str(v.shape()));
  check(u.dim(0) == v.dim(0), "cosine",
        "length mismatch: " + shape_str(u.shape()) + " vs " + shape_str(v.shape()));
  size_t d = u.dim(0);
  T uu = 0, vv = 0, uv = 0;
  for (size_t i = 0; i < d; ++i) {
    uu += u.values()[i] * u.values()[i];
    vv += v.values()[i] * v.values()[i];
    uv += u.values()[i] * v.values()[i];
  }
  T nu = std::sqrt(uu), nv = std::sqrt(vv);
  bool dead = nu < T(kCosineNormFloor) || nv < T(kCosineNormFloor);
  T c = dead ? T(0) : uv / (nu * nv);
  return detail::make_op<T>(Shape{}, {c}, {u, v}, [d, nu, nv, c, dead](TensorNode<T>& n) {
    if (dead) return;
    T g = n.grad[0];
    auto& pu = *n.parents[0];
    auto& pv = *n.parents[1];
    if (pu.requires_grad || pu.backprop) {
      pu.ensure_grad();
      for (size_t i = 0; i < d; ++i)
        pu.grad[i] += g * (pv.value[i] / (nu * nv) - c * pu.value[i] / (nu * nu));
    }
    if (pv.requires_grad || pv.backprop) {
      pv.ensure_grad();
      for (size_t i = 0; i < d; ++i)
        pv.grad[i] += g * (pu.value[i] / (nu * nv) - c * pv.value[i] / (nv * nv));
    }
  });
}

// Pairwise cosines between rows of A (p x d) and rows of B (q x d).
// Rows with near-zero norm yield 0 entries and receive no gradient.
template <class T>
TensorT<T> cosine_matrix(const TensorT<T>& a, const TensorT<T>& b) {
  check(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(1), "cosine_matrix",
        "expects (p,d) and (q,d), got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  size_t p = a.dim(0), q = b.dim(0), d = a.dim(1);
  std::vector<T> na(p), nb(q);
  for (size_t i = 0; i < p; ++i) {
    T s = 0;
    for (size_t k = 0; k < d; ++k) s += a(i, k) * a(i, k);
    na[i] = std::sqrt(s);
  }
  for (size_t j = 0; j < q; ++j) {
    T s = 0;
    for (size_t k = 0; k < d; ++k) s += b(j, k) * b(j, k);
    nb[j] = std::sqrt(s);
  }
  std::vector<T> v(p * q, T(0));
  for (size_t i = 0; i < p; ++i) {
    if (na[i] < T(kCosineNormFloor)) continue;
    for (size_t j = 0; j < q; ++j) {
      if (nb[j] < T(kCosineNormFloor)) continue;
      T dot = 0;
      for (size_t k = 0; k < d; ++k) dot += a(i, k) * b(j, k);
      v[i * q + j] = dot / (na[i] * nb[j]);
    }
  }
  return detail::make_op<T>({p, q}, std::move(v), {a, b},
                            [p, q, d, na, nb](TensorNode<T>& n) {
                              auto& pa = *n.parents[0];
                              auto& pb = *n.parents[1];
                              bool ga = pa.requires_grad || pa.backprop;
                              bool gb = pb.requires_grad || pb.backprop;
                              if (ga) pa.ensure_grad();
                              if (gb) pb.ensure_grad();
                              for (size_t i = 0; i < p; ++i) {
                                if (na[i] < T(kCosineNormFloor)) continue;
                                for (size_t j = 0; j < q; ++j) {
                                  if (nb[j] < T(kCosineNormFloor)) continue;
                                  T g = n.grad[i * q + j];
                                  if (g == T(0)) continue;
                                  T c = n.value[i * q + j];
                                  for (size_t k = 0; k < d; ++k) {
                                    T ai = pa.value[i * d + k], bj = pb.value[j * d + k];
                                    if (ga)
                                      pa.grad[i * d + k] +=
                                          g * (bj / (na[i] * nb[j]) - c * ai / (na[i] * na[i]));
                                    if (gb)
                                      pb.grad[j * d + k] +=
                                          g * (ai / (na[i] * nb[j]) - c * bj / (nb[j] * nb[j]));
                                  }
                                }
                              }
                            });
}

// ---------- binary cross entropy ----------

// -[y ln s + (1-y) ln(1-s)], s clamped to [1e-7, 1 - 1e-7].
template <class T>
TensorT<T> bce(const TensorT<T>& score, T label) {
  check(score.size() == 1, "bce", "score must be scalar");
  const T lo = T(1e-7);
  T s = std::clamp(score.values()[0], lo, T(1) - lo);
  T loss = -(label * std::log(s) + (T(1) - label) * std::log(T(1) - s));
  return detail::make_op<T>(Shape{}, {loss}, {score}, [s, label](TensorNode<T>& n) {
    auto& p = *n.parents[0];
    if (!p.requires_grad && !p.backprop) return;
    p.ensure_grad();
    p.grad[0] += n.grad[0] * ((s - label) / (s * (T(1) - s)));
  });
}

// Clamps values into [margin, 1 - margin] so saturated sigmoids stay
// strictly inside the open unit interval; gradient passes straight through.
template <class T>
TensorT<T> clamp_open_unit(const TensorT<T>& a, T margin = T(1e-7)) {
  std::vector<T> v(a.size());
  for (size_t i = 0; i < v.size(); ++i)
    v[i] = std::clamp(a.values()[i], margin, T(1) - margin);
  return detail::make_op<T>(a.shape(), std::move(v), {a}, [](TensorNode<T>& n) {
    detail::accumulate(*n.parents[0], n.grad);
  });
}

// ---------- finite checks ----------

template <class T>
bool all_finite(const TensorT<T>& t) {
  for (T v : t.values())
    if (!std::isfinite(v)) return false;
  return true;
}

using Tensor = TensorT<float>;

}  // namespace triplenet
