#pragma once

// Response-centered matching. For each level a matrix with one row per
// response token and one column per context slot (plus, optionally, one
// per query token), entries in [-1, 1]:
//   token levels (char/word): column k = max over utterance k's valid
//     tokens of cos(R(i), C_k(j)); query columns are direct cosines.
//   sequence levels (utterance/context): columns are cosines against the
//     n utterance/context vectors; query columns against the query's
//     word states.
// The level matrices are stacked into a cube and fused by a BiLSTM over
// columns (maxpooled per response row) followed by a BiLSTM over rows.

#include "triplenet/layers.hpp"
#include "triplenet/tensor.hpp"

namespace triplenet {

// R (m, d) against flattened context C (n*m, d). Result (m, n): column k
// is the max cosine over utterance k's unmasked tokens; fully padded
// utterances give a zero column.
template <class T>
TensorT<T> match_pooled(const TensorT<T>& r, const TensorT<T>& ctx, const MaskVec& ctx_tok_mask,
                        size_t n, size_t m) {
  check(ctx.dim(0) == n * m, "match_pooled",
        "context rows " + std::to_string(ctx.dim(0)) + " != n*m = " + std::to_string(n * m));
  check(ctx_tok_mask.size() == n * m, "match_pooled", "token mask length mismatch");
  TensorT<T> full = cosine_matrix(r, ctx);  // (m, n*m)
  std::vector<TensorT<T>> cols;
  cols.reserve(n);
  for (size_t k = 0; k < n; ++k) {
    MaskVec um(ctx_tok_mask.begin() + k * m, ctx_tok_mask.begin() + (k + 1) * m);
    bool any = false;
    for (uint8_t b : um) any |= (b != 0);
    if (!any) {
      cols.push_back(TensorT<T>::zeros({r.dim(0), 1}));
      continue;
    }
    cols.push_back(reshape(maxpool(slice(full, 1, k * m, m), 1, um), {r.dim(0), 1}));
  }
  return concat(1, cols);
}

// R (m, d) against a sequence of vectors (rows of s). Padded rows of
// either side yield zero entries through the cosine norm floor.
template <class T>
TensorT<T> match_flat(const TensorT<T>& r, const TensorT<T>& s) {
  return cosine_matrix(r, s);
}

template <class T>
struct FusionLayers {
  BiLstmLayer<T> row;  // over matching columns, input = cube depth
  BiLstmLayer<T> agg;  // over response tokens

  static FusionLayers init(ParamSet<T>& ps, size_t depth, size_t hidden, Rng& rng) {
    FusionLayers f;
    f.row = BiLstmLayer<T>::init(ps, "fusion.row", depth, hidden, rng);
    f.agg = BiLstmLayer<T>::init(ps, "fusion.agg", 2 * hidden, hidden, rng);
    return f;
  }
};

// channels: per-level (m, cols) matrices, identical shapes. col_mask marks
// valid columns (context utterances / query tokens), r_mask valid response
// rows. Returns the (2*hidden) fused match vector.
template <class T>
TensorT<T> fuse(const FusionLayers<T>& layers, const std::vector<TensorT<T>>& channels,
                const MaskVec& col_mask, const MaskVec& r_mask) {
  check(!channels.empty(), "fuse", "no matching channels");
  size_t m = channels[0].dim(0), cols = channels[0].dim(1);
  for (auto& ch : channels) check_same_shape("fuse", channels[0], ch);
  check(col_mask.size() == cols, "fuse", "column mask length mismatch");
  check(r_mask.size() == m, "fuse", "response mask length mismatch");
  size_t rh = layers.row.out_dim();
  std::vector<TensorT<T>> pooled;
  pooled.reserve(m);
  for (size_t i = 0; i < m; ++i) {
    if (!r_mask[i]) {
      pooled.push_back(TensorT<T>::zeros({1, rh}));
      continue;
    }
    std::vector<TensorT<T>> depth_cols;
    depth_cols.reserve(channels.size());
    for (auto& ch : channels) depth_cols.push_back(transpose(slice(ch, 0, i, 1)));
    TensorT<T> row_seq = concat(1, depth_cols);  // (cols, depth)
    TensorT<T> states = layers.row.run(row_seq, col_mask);
    pooled.push_back(reshape(maxpool(states, 0, col_mask), {1, rh}));
  }
  TensorT<T> agg_in = concat(0, pooled);  // (m, 2*hidden)
  TensorT<T> states = layers.agg.run(agg_in, r_mask);
  return maxpool(states, 0, r_mask);
}

}  // namespace triplenet
