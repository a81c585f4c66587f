#pragma once

// Central-difference gradient verification. Intended to run on the
// double instantiation of the tensor core; callers pass a builder that
// reconstructs the scalar loss from the current parameter values.
//
// Each entry is differenced at three step sizes (eps, 2*eps, eps/100)
// and the smallest discrepancy is kept: the function is only piecewise
// smooth (max-pooling, norm floors), so a large step can straddle a
// kink that sits close to the evaluation point, while a small step
// amplifies rounding noise on near-zero gradients measured against the
// denominator floor. A correct analytic gradient matches at least one
// scale; a wrong one matches none.

#include <functional>
#include <limits>
#include <vector>

#include "triplenet/tensor.hpp"

namespace triplenet {

template <class T>
struct GradCheckResult {
  T max_rel_err = T(0);
  size_t worst_param = 0;
  size_t worst_index = 0;
  T analytic = T(0);
  T numeric = T(0);
};

// Returns max over all parameter entries of
//   |analytic - central_diff| / max(|analytic|, |numeric|, 1e-8).
// f must be deterministic (no stochastic behavior active).
template <class T>
GradCheckResult<T> grad_check(const std::function<TensorT<T>()>& f,
                              std::vector<TensorT<T>> params, T eps = T(1e-5)) {
  for (auto& p : params) p.zero_grad();
  TensorT<T> loss = f();
  loss.backward();
  std::vector<std::vector<T>> analytic;
  for (auto& p : params) {
    p.mutable_grad();  // ensure sized even if unused (grad all-zero)
    analytic.push_back(p.grad());
  }
  GradCheckResult<T> res;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& vals = params[pi].values();
    for (size_t i = 0; i < vals.size(); ++i) {
      T keep = vals[i];
      auto central = [&](T h) {
        vals[i] = keep + h;
        T fp = f().item();
        vals[i] = keep - h;
        T fm = f().item();
        vals[i] = keep;
        return (fp - fm) / (T(2) * h);
      };
      T a = analytic[pi][i];
      auto rel_of = [&](T numeric) {
        T denom = std::max({std::abs(a), std::abs(numeric), T(1e-8)});
        return std::abs(a - numeric) / denom;
      };
      T rel = std::numeric_limits<T>::infinity();
      T numeric = T(0);
      for (T h : {eps, T(2) * eps, eps / T(100)}) {
        T n = central(h);
        T r = rel_of(n);
        if (r < rel) {
          rel = r;
          numeric = n;
        }
      }
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = pi;
        res.worst_index = i;
        res.analytic = a;
        res.numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace triplenet
