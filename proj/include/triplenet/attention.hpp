#pragma once

// Bilinear attention flow between two sequences. For P (Lp x d) and
// Q (Lq x d) with a shared bilinear map W (d x d):
//   M(i,j)   = P(i) . tanh(W Q(j))
//   att_pq   = softmax over j of M      (each P row attends over Q)
//   att_qp   = softmax over i of M^T    (each Q row attends over P)
//   P'       = P - att_pq Q,   Q' = Q - att_qp P
// Padded positions never receive attention mass; padded rows of the
// outputs are zeroed so downstream cosines treat them as neutral.

#include "triplenet/tensor.hpp"

namespace triplenet {

// Multiplies each row by its mask bit (constant; blocks gradient at
// padded rows).
template <class T>
TensorT<T> mask_rows(const TensorT<T>& t, const MaskVec& mask) {
  if (mask.empty()) return t;
  check(t.rank() == 2 && t.dim(0) == mask.size(), "mask_rows",
        "mask length " + std::to_string(mask.size()) + " does not match rows of " +
            shape_str(t.shape()));
  std::vector<T> m(t.size());
  size_t cols = t.dim(1);
  for (size_t i = 0; i < mask.size(); ++i)
    std::fill_n(m.begin() + i * cols, cols, T(mask[i]));
  return mul(t, TensorT<T>(t.shape(), std::move(m)));
}

template <class T>
struct BafOutput {
  TensorT<T> p_new, q_new;    // residual-attended sequences, padded rows zero
  TensorT<T> att_pq, att_qp;  // (Lp x Lq) and (Lq x Lp) attention weights
};

template <class T>
BafOutput<T> baf(const TensorT<T>& p, const TensorT<T>& q, const TensorT<T>& w,
                 const MaskVec& p_mask, const MaskVec& q_mask) {
  check(p.rank() == 2 && q.rank() == 2, "baf", "expects (L, d) sequences");
  check(p.dim(1) == q.dim(1) && w.rank() == 2 && w.dim(0) == p.dim(1) &&
            w.dim(1) == p.dim(1),
        "baf",
        "dims disagree: P " + shape_str(p.shape()) + ", Q " + shape_str(q.shape()) + ", W " +
            shape_str(w.shape()));
  auto any = [](const MaskVec& m) {
    if (m.empty()) return true;
    for (uint8_t b : m)
      if (b) return true;
    return false;
  };
  check(any(p_mask) && any(q_mask), "baf", "fully-masked sequence");

  TensorT<T> sim = matmul(p, transpose(tanh_t(matmul(q, transpose(w)))));  // (Lp, Lq)
  BafOutput<T> out;
  out.att_pq = masked_softmax(sim, 1, q_mask);
  out.att_qp = masked_softmax(transpose(sim), 1, p_mask);
  out.p_new = mask_rows(sub(p, matmul(out.att_pq, q)), p_mask);
  out.q_new = mask_rows(sub(q, matmul(out.att_qp, p)), q_mask);
  return out;
}

}  // namespace triplenet
