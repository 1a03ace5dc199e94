// idevc/optim.hpp
//
// First-order update rules over a list of parameter matrices. Plain gradient
// descent is the default everywhere; Adam is available as an opt-in.

#ifndef IDEVC_OPTIM_HPP
#define IDEVC_OPTIM_HPP

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "idevc/errors.hpp"
#include "idevc/matrix.hpp"

namespace idevc {

enum class OptimizerKind { GradientDescent, Adam };

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "gd" || s == "sgd") return OptimizerKind::GradientDescent;
  if (s == "adam") return OptimizerKind::Adam;
  throw ValidationError("unknown optimizer '" + s + "' (expected gd or adam)");
}

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "gd"; }

/// Stateful optimizer for a fixed list of parameters. `direction` is +1 to
/// ascend and -1 to descend; gradients passed in are raw dL/dθ.
class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(OptimizerKind kind, double lr) : kind_(kind), lr_(lr) {}

  OptimizerKind kind() const noexcept { return kind_; }
  double learning_rate() const noexcept { return lr_; }

  void step(std::span<Matrix* const> params, std::span<const Matrix> grads, double direction) {
    if (params.size() != grads.size()) throw ContractError("optimizer: params/grads length mismatch");
    if (kind_ == OptimizerKind::GradientDescent) {
      for (std::size_t k = 0; k < params.size(); ++k) {
        if (grads[k].empty()) continue;
        auto p = params[k]->data();
        auto g = grads[k].data();
        for (std::size_t e = 0; e < p.size(); ++e) p[e] += direction * lr_ * g[e];
      }
      return;
    }
    if (m_.empty()) {
      for (auto* p : params) {
        m_.emplace_back(p->rows(), p->cols());
        v_.emplace_back(p->rows(), p->cols());
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (grads[k].empty()) continue;
      auto p = params[k]->data();
      auto g = grads[k].data();
      auto m = m_[k].data();
      auto v = v_[k].data();
      for (std::size_t e = 0; e < p.size(); ++e) {
        m[e] = beta1_ * m[e] + (1.0 - beta1_) * g[e];
        v[e] = beta2_ * v[e] + (1.0 - beta2_) * g[e] * g[e];
        p[e] += direction * lr_ * (m[e] / c1) / (std::sqrt(v[e] / c2) + eps_);
      }
    }
  }

 private:
  OptimizerKind kind_ = OptimizerKind::GradientDescent;
  double lr_ = 1e-3;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long long t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace idevc

#endif  // IDEVC_OPTIM_HPP
