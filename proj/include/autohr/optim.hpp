#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "autohr/cell.hpp"
#include "autohr/errors.hpp"

namespace autohr {

// Adam with L2 regularization folded into the gradient (not decoupled decay).
// A zero learning rate leaves every parameter bit-for-bit unchanged.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<ParamView> params, double lr, double weight_decay)
      : params_(std::move(params)), lr_(lr), wd_(weight_decay) {
    if (lr_ < 0.0 || wd_ < 0.0) throw ValueError("adam: negative hyperparameter");
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].grad == nullptr) throw ValueError("adam: parameter without gradient");
      m_[i].assign(params_[i].count, 0.0);
      v_[i].assign(params_[i].count, 0.0);
    }
  }

  void step() {
    step_ += 1.0;
    const double bc1 = 1.0 - std::pow(kBeta1, step_);
    const double bc2 = 1.0 - std::pow(kBeta2, step_);
    for (size_t i = 0; i < params_.size(); ++i) {
      double* w = params_[i].value;
      const double* g = params_[i].grad;
      double* m = m_[i].data();
      double* v = v_[i].data();
      for (size_t k = 0; k < params_[i].count; ++k) {
        const double grad = g[k] + wd_ * w[k];
        m[k] = kBeta1 * m[k] + (1.0 - kBeta1) * grad;
        v[k] = kBeta2 * v[k] + (1.0 - kBeta2) * grad * grad;
        const double mhat = m[k] / bc1;
        const double vhat = v[k] / bc2;
        w[k] -= lr_ * mhat / (std::sqrt(vhat) + kEps);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) std::fill(p.grad, p.grad + p.count, 0.0);
  }

  double lr() const { return lr_; }
  double step_count() const { return step_; }

  // Moment buffers and the step counter, named for checkpointing.
  void collect_state(const std::string& prefix, std::vector<ParamView>* out) {
    for (size_t i = 0; i < params_.size(); ++i) {
      out->push_back({prefix + ".m." + params_[i].name, m_[i].data(), nullptr, m_[i].size()});
      out->push_back({prefix + ".v." + params_[i].name, v_[i].data(), nullptr, v_[i].size()});
    }
    out->push_back({prefix + ".step", &step_, nullptr, 1});
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  std::vector<ParamView> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_ = 0.0, wd_ = 0.0;
  double step_ = 0.0;
};

}  // namespace autohr
