#pragma once

// Adamax: Adam with an infinity-norm second moment.
//   m <- b1*m + (1-b1)*g
//   u <- max(b2*u, |g|)
//   theta <- theta - (lr / (1 - b1^t)) * m / (u + eps)

#include <cmath>

#include "triplenet/layers.hpp"

namespace triplenet {

template <class T>
class Adamax {
 public:
  Adamax(ParamSet<T>& params, T lr = T(0.002), T beta1 = T(0.9), T beta2 = T(0.999),
         T eps = T(1e-8))
      : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto& [name, t] : params_.items()) {
      m_.emplace_back(t.size(), T(0));
      u_.emplace_back(t.size(), T(0));
    }
  }

  // Applies one update from the accumulated gradients. The step is aborted
  // (no parameter touched) if any gradient is not finite.
  void step() {
    auto& items = params_.items();
    for (size_t pi = 0; pi < items.size(); ++pi) {
      const auto& g = items[pi].second.grad();
      for (T x : g)
        if (!std::isfinite(x))
          tensor_error("adamax", "non-finite gradient in " + items[pi].first + " at step " +
                                     std::to_string(t_ + 1));
    }
    ++t_;
    T correction = lr_ / (T(1) - std::pow(beta1_, T(t_)));
    for (size_t pi = 0; pi < items.size(); ++pi) {
      auto& vals = items[pi].second.values();
      const auto& g = items[pi].second.grad();
      if (g.empty()) continue;  // parameter unused in this graph
      auto& m = m_[pi];
      auto& u = u_[pi];
      for (size_t i = 0; i < vals.size(); ++i) {
        m[i] = beta1_ * m[i] + (T(1) - beta1_) * g[i];
        u[i] = std::max(beta2_ * u[i], std::abs(g[i]));
        vals[i] -= correction * m[i] / (u[i] + eps_);
      }
    }
  }

  uint64_t step_count() const { return t_; }
  void set_step_count(uint64_t t) { t_ = t; }

  std::vector<std::pair<std::string, std::vector<T>*>> state_buffers() {
    std::vector<std::pair<std::string, std::vector<T>*>> out;
    auto& items = params_.items();
    for (size_t pi = 0; pi < items.size(); ++pi) {
      out.push_back({"opt.m." + items[pi].first, &m_[pi]});
      out.push_back({"opt.u." + items[pi].first, &u_[pi]});
    }
    return out;
  }

 private:
  ParamSet<T>& params_;
  T lr_, beta1_, beta2_, eps_;
  uint64_t t_ = 0;
  std::vector<std::vector<T>> m_, u_;
};

}  // namespace triplenet
