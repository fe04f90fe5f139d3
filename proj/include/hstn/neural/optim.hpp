#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hstn/neural/tensor.hpp"

namespace hstn::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction. Moment buffers are bound to the parameter list
// passed at construction; the list must keep its order and shapes.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Param<T>*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    require(cfg_.lr > 0, "adam: learning rate must be positive");
    for (auto* p : params_) {
      m_.emplace_back(p->tensor.size(), 0.0);
      v_.emplace_back(p->tensor.size(), 0.0);
    }
  }

  double lr() const { return cfg_.lr; }
  void set_lr(double lr) {
    require(lr > 0, "adam: learning rate must be positive");
    cfg_.lr = lr;
  }
  long step_count() const { return step_; }
  const std::vector<Param<T>*>& params() const { return params_; }

  void zero_grad() {
    for (auto* p : params_) p->tensor.zero_grad();
  }

  // Applies one update from the accumulated gradients. The whole update is
  // rejected if any gradient is non-finite.
  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& t = params_[i]->tensor;
      require(m_[i].size() == t.size(), "adam: parameter '" + params_[i]->name + "' changed shape");
      if (!t.has_grad()) continue;
      for (T g : t.grad())
        if (!std::isfinite(g))
          throw Divergence("adam: non-finite gradient in parameter '" + params_[i]->name + "'");
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& t = params_[i]->tensor;
      if (!t.has_grad()) continue;
      const auto& g = t.grad();
      auto& vals = t.values();
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t j = 0; j < vals.size(); ++j) {
        const double gj = static_cast<double>(g[j]);
        m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
        v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
        const double mhat = m[j] / bc1, vhat = v[j] / bc2;
        vals[j] = static_cast<T>(static_cast<double>(vals[j]) -
                                 cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.epsilon));
      }
    }
  }

 private:
  std::vector<Param<T>*> params_;
  AdamConfig cfg_;
  long step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace hstn::nn
