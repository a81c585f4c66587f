#pragma once

// Parameterized layers built on the tensor core: 1-D char convolution
// with tanh + max-pooling, LSTM / bidirectional LSTM, batch
// normalization, and the dense sigmoid output head.

#include <random>
#include <string>
#include <unordered_map>

#include "triplenet/tensor.hpp"

namespace triplenet {

// Deterministic RNG for initialization, shuffling and synthetic data.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(eng_);
  }
  size_t index(size_t n) { return std::uniform_int_distribution<size_t>(0, n - 1)(eng_); }
  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

template <class T>
std::vector<T> glorot_uniform(size_t count, size_t fan_in, size_t fan_out, Rng& rng) {
  double limit = std::sqrt(6.0 / double(fan_in + fan_out));
  std::vector<T> v(count);
  for (auto& x : v) x = T(rng.uniform(-limit, limit));
  return v;
}

// Named parameter collection; insertion order is the checkpoint order.
template <class T>
class ParamSet {
 public:
  TensorT<T>& add(const std::string& name, TensorT<T> t) {
    check(index_.find(name) == index_.end(), "ParamSet", "duplicate parameter " + name);
    index_[name] = items_.size();
    items_.emplace_back(name, std::move(t));
    return items_.back().second;
  }
  TensorT<T>& get(const std::string& name) {
    auto it = index_.find(name);
    check(it != index_.end(), "ParamSet", "unknown parameter " + name);
    return items_[it->second].second;
  }
  bool has(const std::string& name) const { return index_.count(name) != 0; }
  std::vector<std::pair<std::string, TensorT<T>>>& items() { return items_; }
  const std::vector<std::pair<std::string, TensorT<T>>>& items() const { return items_; }
  size_t total_size() const {
    size_t n = 0;
    for (auto& [name, t] : items_) n += t.size();
    return n;
  }
  void zero_grads() {
    for (auto& [name, t] : items_) t.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, TensorT<T>>> items_;
  std::unordered_map<std::string, size_t> index_;
};

// ---------- 1-D convolution over characters ----------

// Fused conv + tanh + masked max over window positions. The input is the
// word's char-embedding matrix (rows beyond valid_len are zero padding);
// windows may run past the matrix and read implicit zeros.
template <class T>
TensorT<T> conv_tanh_maxpool(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                             size_t window, size_t valid_len) {
  check(x.rank() == 2, "conv_tanh_maxpool", "input must be (len, emb)");
  size_t len = x.dim(0), c = x.dim(1);
  size_t filters = b.dim(0);
  check(w.shape() == Shape{filters, window * c}, "conv_tanh_maxpool",
        "filter shape " + shape_str(w.shape()) + " does not match window " +
            std::to_string(window) + " x emb " + std::to_string(c));
  check(valid_len >= 1, "conv_tanh_maxpool", "word has no valid chars");
  check(valid_len <= len, "conv_tanh_maxpool", "valid_len exceeds input length");
  std::vector<T> y(filters);
  std::vector<size_t> arg(filters);
  for (size_t f = 0; f < filters; ++f) {
    T best = 0;
    size_t bt = 0;
    for (size_t t = 0; t < valid_len; ++t) {
      T z = b.values()[f];
      for (size_t dt = 0; dt < window; ++dt) {
        size_t r = t + dt;
        if (r >= len) break;  // implicit zero padding
        for (size_t k = 0; k < c; ++k)
          z += w.values()[f * window * c + dt * c + k] * x.values()[r * c + k];
      }
      T a = std::tanh(z);
      if (t == 0 || a > best) {
        best = a;
        bt = t;
      }
    }
    y[f] = best;
    arg[f] = bt;
  }
  return detail::make_op<T>(
      {filters}, std::move(y), {x, w, b},
      [len, c, filters, window, arg](TensorNode<T>& n) {
        auto& px = *n.parents[0];
        auto& pw = *n.parents[1];
        auto& pb = *n.parents[2];
        bool gx = px.requires_grad || px.backprop;
        bool gw = pw.requires_grad || pw.backprop;
        bool gb = pb.requires_grad || pb.backprop;
        if (gx) px.ensure_grad();
        if (gw) pw.ensure_grad();
        if (gb) pb.ensure_grad();
        for (size_t f = 0; f < filters; ++f) {
          T dz = n.grad[f] * (T(1) - n.value[f] * n.value[f]);
          if (dz == T(0)) continue;
          size_t t = arg[f];
          if (gb) pb.grad[f] += dz;
          for (size_t dt = 0; dt < window; ++dt) {
            size_t r = t + dt;
            if (r >= len) break;
            for (size_t k = 0; k < c; ++k) {
              if (gw) pw.grad[f * window * c + dt * c + k] += dz * px.value[r * c + k];
              if (gx) px.grad[r * c + k] += dz * pw.value[f * window * c + dt * c + k];
            }
          }
        }
      });
}

template <class T>
struct Conv1dLayer {
  TensorT<T> w;  // (filters, window * in_dim)
  TensorT<T> b;  // (filters)
  size_t window = 0;
  size_t in_dim = 0;

  static Conv1dLayer init(ParamSet<T>& ps, const std::string& prefix, size_t filters,
                          size_t window, size_t in_dim, Rng& rng) {
    Conv1dLayer l;
    l.window = window;
    l.in_dim = in_dim;
    l.w = ps.add(prefix + ".w",
                 TensorT<T>::param({filters, window * in_dim},
                                   glorot_uniform<T>(filters * window * in_dim,
                                                     window * in_dim, filters, rng)));
    l.b = ps.add(prefix + ".b",
                 TensorT<T>::param({filters}, std::vector<T>(filters, T(0))));
    return l;
  }

  TensorT<T> apply(const TensorT<T>& chars, size_t valid_len) const {
    return conv_tanh_maxpool(chars, w, b, window, valid_len);
  }
};

// ---------- LSTM ----------

// Gate layout along the 4H axis: [input, forget, cell, output].
// Forget-gate bias is initialized to 1 for training stability.
template <class T>
struct LstmCell {
  TensorT<T> wx;  // (in, 4H)
  TensorT<T> wh;  // (H, 4H)
  TensorT<T> b;   // (4H)
  size_t hidden = 0;
  size_t in_dim = 0;

  static LstmCell init(ParamSet<T>& ps, const std::string& prefix, size_t in_dim, size_t hidden,
                       Rng& rng) {
    LstmCell c;
    c.hidden = hidden;
    c.in_dim = in_dim;
    c.wx = ps.add(prefix + ".wx", TensorT<T>::param({in_dim, 4 * hidden},
                                                    glorot_uniform<T>(in_dim * 4 * hidden,
                                                                      in_dim, hidden, rng)));
    c.wh = ps.add(prefix + ".wh", TensorT<T>::param({hidden, 4 * hidden},
                                                    glorot_uniform<T>(hidden * 4 * hidden,
                                                                      hidden, hidden, rng)));
    std::vector<T> bias(4 * hidden, T(0));
    for (size_t i = hidden; i < 2 * hidden; ++i) bias[i] = T(1);
    c.b = ps.add(prefix + ".b", TensorT<T>::param({4 * hidden}, std::move(bias)));
    return c;
  }

  // x: (1, in), h/c: (1, H) -> {h', c'}
  std::pair<TensorT<T>, TensorT<T>> step(const TensorT<T>& x, const TensorT<T>& h,
                                         const TensorT<T>& c) const {
    check(x.dim(1) == in_dim, "lstm",
          "input dim " + std::to_string(x.dim(1)) + " does not match layer in_dim " +
              std::to_string(in_dim));
    TensorT<T> gates = add_rowwise(add(matmul(x, wx), matmul(h, wh)), b);
    size_t H = hidden;
    TensorT<T> i = sigmoid(slice(gates, 1, 0, H));
    TensorT<T> f = sigmoid(slice(gates, 1, H, H));
    TensorT<T> g = tanh_t(slice(gates, 1, 2 * H, H));
    TensorT<T> o = sigmoid(slice(gates, 1, 3 * H, H));
    TensorT<T> c2 = add(mul(f, c), mul(i, g));
    TensorT<T> h2 = mul(o, tanh_t(c2));
    return {h2, c2};
  }
};

// Bidirectional LSTM over a (len, in) sequence. Masked (padded) steps
// propagate the previous state unchanged and output zero rows. Per-step
// output is [h_backward; h_forward], feature dim 2H.
template <class T>
struct BiLstmLayer {
  LstmCell<T> fwd, bwd;

  static BiLstmLayer init(ParamSet<T>& ps, const std::string& prefix, size_t in_dim,
                          size_t hidden, Rng& rng) {
    BiLstmLayer l;
    l.fwd = LstmCell<T>::init(ps, prefix + ".fwd", in_dim, hidden, rng);
    l.bwd = LstmCell<T>::init(ps, prefix + ".bwd", in_dim, hidden, rng);
    return l;
  }

  size_t out_dim() const { return 2 * fwd.hidden; }

  TensorT<T> run(const TensorT<T>& seq, const MaskVec& mask = {}) const {
    check(seq.rank() == 2, "bilstm", "expects (len, in) sequence");
    size_t len = seq.dim(0);
    check(mask.empty() || mask.size() == len, "bilstm", "mask length mismatch");
    size_t H = fwd.hidden;
    auto valid = [&](size_t t) { return mask.empty() || mask[t]; };
    std::vector<TensorT<T>> fwd_out(len), bwd_out(len);
    TensorT<T> zero_row = TensorT<T>::zeros({1, H});
    {
      TensorT<T> h = zero_row, c = zero_row;
      for (size_t t = 0; t < len; ++t) {
        if (valid(t)) {
          auto [h2, c2] = fwd.step(slice(seq, 0, t, 1), h, c);
          h = h2;
          c = c2;
          fwd_out[t] = h;
        } else {
          fwd_out[t] = zero_row;
        }
      }
    }
    {
      TensorT<T> h = zero_row, c = zero_row;
      for (size_t t = len; t-- > 0;) {
        if (valid(t)) {
          auto [h2, c2] = bwd.step(slice(seq, 0, t, 1), h, c);
          h = h2;
          c = c2;
          bwd_out[t] = h;
        } else {
          bwd_out[t] = zero_row;
        }
      }
    }
    std::vector<TensorT<T>> rows;
    rows.reserve(len);
    for (size_t t = 0; t < len; ++t)
      rows.push_back(concat(1, std::vector<TensorT<T>>{bwd_out[t], fwd_out[t]}));
    return concat(0, rows);
  }
};

// ---------- batch normalization ----------

namespace detail {

template <class T>
size_t bn_count_valid(size_t rows, const MaskVec& row_mask) {
  if (row_mask.empty()) return rows;
  size_t c = 0;
  for (auto m : row_mask) c += (m != 0);
  return c;
}

}  // namespace detail

// Train-mode BN over (rows, features): per-feature statistics across the
// valid rows. Masked rows output zero. batch_mean/batch_var receive the
// statistics used (biased variance).
template <class T>
TensorT<T> batchnorm_train(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                           const MaskVec& row_mask, T eps, std::vector<T>* batch_mean = nullptr,
                           std::vector<T>* batch_var = nullptr) {
  check(x.rank() == 2, "batchnorm", "expects (rows, features)");
  size_t rows = x.dim(0), feats = x.dim(1);
  check(gamma.shape() == Shape{feats} && beta.shape() == Shape{feats}, "batchnorm",
        "gamma/beta must have shape (features)");
  check(row_mask.empty() || row_mask.size() == rows, "batchnorm", "row mask length mismatch");
  size_t cnt = detail::bn_count_valid<T>(rows, row_mask);
  check(cnt >= 2, "batchnorm", "training mode requires >= 2 effective samples, got " +
                                   std::to_string(cnt));
  auto valid = [&](size_t r) { return row_mask.empty() || row_mask[r]; };
  std::vector<T> mu(feats, T(0)), var(feats, T(0)), inv_std(feats);
  for (size_t r = 0; r < rows; ++r) {
    if (!valid(r)) continue;
    for (size_t f = 0; f < feats; ++f) mu[f] += x(r, f);
  }
  for (auto& m : mu) m /= T(cnt);
  for (size_t r = 0; r < rows; ++r) {
    if (!valid(r)) continue;
    for (size_t f = 0; f < feats; ++f) {
      T d = x(r, f) - mu[f];
      var[f] += d * d;
    }
  }
  for (size_t f = 0; f < feats; ++f) {
    var[f] /= T(cnt);
    inv_std[f] = T(1) / std::sqrt(var[f] + eps);
  }
  if (batch_mean) *batch_mean = mu;
  if (batch_var) *batch_var = var;
  std::vector<T> y(rows * feats, T(0));
  for (size_t r = 0; r < rows; ++r) {
    if (!valid(r)) continue;
    for (size_t f = 0; f < feats; ++f)
      y[r * feats + f] =
          (x(r, f) - mu[f]) * inv_std[f] * gamma.values()[f] + beta.values()[f];
  }
  MaskVec mask_copy = row_mask;
  return detail::make_op<T>(
      x.shape(), std::move(y), {x, gamma, beta},
      [rows, feats, cnt, mu, inv_std, mask_copy](TensorNode<T>& n) {
        auto& px = *n.parents[0];
        auto& pg = *n.parents[1];
        auto& pb = *n.parents[2];
        auto valid = [&](size_t r) { return mask_copy.empty() || mask_copy[r]; };
        bool gx = px.requires_grad || px.backprop;
        bool gg = pg.requires_grad || pg.backprop;
        bool gb = pb.requires_grad || pb.backprop;
        if (gx) px.ensure_grad();
        if (gg) pg.ensure_grad();
        if (gb) pb.ensure_grad();
        for (size_t f = 0; f < feats; ++f) {
          // accumulate per-feature sums over valid rows
          T sum_g = 0, sum_gx = 0;
          for (size_t r = 0; r < rows; ++r) {
            if (!valid(r)) continue;
            T xhat = (px.value[r * feats + f] - mu[f]) * inv_std[f];
            T g = n.grad[r * feats + f];
            sum_g += g;
            sum_gx += g * xhat;
          }
          if (gb) pb.grad[f] += sum_g;
          if (gg) pg.grad[f] += sum_gx;
          if (gx) {
            T gamma_f = pg.value[f];
            for (size_t r = 0; r < rows; ++r) {
              if (!valid(r)) continue;
              T xhat = (px.value[r * feats + f] - mu[f]) * inv_std[f];
              T g = n.grad[r * feats + f];
              px.grad[r * feats + f] +=
                  gamma_f * inv_std[f] * (g - sum_g / T(cnt) - xhat * sum_gx / T(cnt));
            }
          }
        }
      });
}

template <class T>
TensorT<T> batchnorm_eval(const TensorT<T>& x, const TensorT<T>& gamma, const TensorT<T>& beta,
                          const std::vector<T>& mean, const std::vector<T>& var,
                          const MaskVec& row_mask, T eps) {
  check(x.rank() == 2, "batchnorm", "expects (rows, features)");
  size_t rows = x.dim(0), feats = x.dim(1);
  check(mean.size() == feats && var.size() == feats, "batchnorm",
        "running stats length mismatch");
  auto valid = [&](size_t r) { return row_mask.empty() || row_mask[r]; };
  std::vector<T> inv_std(feats);
  for (size_t f = 0; f < feats; ++f) inv_std[f] = T(1) / std::sqrt(var[f] + eps);
  std::vector<T> y(rows * feats, T(0));
  for (size_t r = 0; r < rows; ++r) {
    if (!valid(r)) continue;
    for (size_t f = 0; f < feats; ++f)
      y[r * feats + f] =
          (x(r, f) - mean[f]) * inv_std[f] * gamma.values()[f] + beta.values()[f];
  }
  MaskVec mask_copy = row_mask;
  std::vector<T> mean_copy = mean;
  return detail::make_op<T>(
      x.shape(), std::move(y), {x, gamma, beta},
      [rows, feats, inv_std, mean_copy, mask_copy](TensorNode<T>& n) {
        auto& px = *n.parents[0];
        auto& pg = *n.parents[1];
        auto& pb = *n.parents[2];
        auto valid = [&](size_t r) { return mask_copy.empty() || mask_copy[r]; };
        bool gx = px.requires_grad || px.backprop;
        bool gg = pg.requires_grad || pg.backprop;
        bool gb = pb.requires_grad || pb.backprop;
        if (gx) px.ensure_grad();
        if (gg) pg.ensure_grad();
        if (gb) pb.ensure_grad();
        for (size_t r = 0; r < rows; ++r) {
          if (!valid(r)) continue;
          for (size_t f = 0; f < feats; ++f) {
            T g = n.grad[r * feats + f];
            if (gx) px.grad[r * feats + f] += g * pg.value[f] * inv_std[f];
            if (gg)
              pg.grad[f] += g * (px.value[r * feats + f] - mean_copy[f]) * inv_std[f];
            if (gb) pb.grad[f] += g;
          }
        }
      });
}

template <class T>
struct BatchNormLayer {
  TensorT<T> gamma, beta;
  std::vector<T> running_mean, running_var;
  T momentum = T(0.99);
  T eps = T(1e-3);

  static BatchNormLayer init(ParamSet<T>& ps, const std::string& prefix, size_t feats) {
    BatchNormLayer l;
    l.gamma = ps.add(prefix + ".gamma",
                     TensorT<T>::param({feats}, std::vector<T>(feats, T(1))));
    l.beta = ps.add(prefix + ".beta",
                    TensorT<T>::param({feats}, std::vector<T>(feats, T(0))));
    l.running_mean.assign(feats, T(0));
    l.running_var.assign(feats, T(1));
    return l;
  }

  TensorT<T> apply(const TensorT<T>& x, const MaskVec& row_mask, bool training) {
    if (training) {
      std::vector<T> bm, bv;
      TensorT<T> y = batchnorm_train(x, gamma, beta, row_mask, eps, &bm, &bv);
      for (size_t f = 0; f < bm.size(); ++f) {
        running_mean[f] = momentum * running_mean[f] + (T(1) - momentum) * bm[f];
        running_var[f] = momentum * running_var[f] + (T(1) - momentum) * bv[f];
      }
      return y;
    }
    return batchnorm_eval(x, gamma, beta, running_mean, running_var, row_mask, eps);
  }
};

// ---------- dense sigmoid head ----------

template <class T>
struct DenseSigmoidHead {
  TensorT<T> w;  // (features)
  TensorT<T> b;  // scalar

  static DenseSigmoidHead init(ParamSet<T>& ps, const std::string& prefix, size_t feats,
                               Rng& rng) {
    DenseSigmoidHead h;
    h.w = ps.add(prefix + ".w",
                 TensorT<T>::param({feats}, glorot_uniform<T>(feats, feats, 1, rng)));
    h.b = ps.add(prefix + ".b", TensorT<T>::param({}, {T(0)}));
    return h;
  }

  // v: (features) or (1, features) -> scalar in (0, 1)
  TensorT<T> apply(const TensorT<T>& v) const {
    size_t feats = w.dim(0);
    check(v.size() == feats, "dense_sigmoid",
          "feature dim " + std::to_string(v.size()) + " does not match head width " +
              std::to_string(feats));
    TensorT<T> row = reshape(v, {1, feats});
    TensorT<T> z = matmul(row, reshape(w, {feats, 1}));
    return clamp_open_unit(sigmoid(add(reshape(z, {}), b)));
  }
};

}  // namespace triplenet
