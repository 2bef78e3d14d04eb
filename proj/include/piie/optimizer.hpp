#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>

#include "piie/errors.hpp"
#include "piie/log.hpp"
#include "piie/parameter.hpp"

namespace piie {

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Global gradient-norm clip over updatable parameters; 0 disables.
  double clip_norm = 0.0;
};

// Optimizer plus its state (step counter, Adam moments). Moments are created
// lazily the first time a parameter is actually updated, so frozen
// parameters never get any.
class Optimizer {
 public:
  struct Moments {
    Tensor first;
    Tensor second;
    std::size_t steps = 0;  // per parameter, for bias correction
  };

  explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg) {
    if (!(cfg_.learning_rate > 0.0)) throw ContractError("learning rate must be positive");
  }

  const OptimizerConfig& config() const { return cfg_; }
  std::size_t step_count() const { return steps_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }

  // Applies one update to every updatable parameter that has a gradient, then
  // clears all gradients. Returns the number of scalar entries updated.
  std::size_t step(ParameterStore& params) {
    ++steps_;
    double clip_scale = 1.0;
    if (cfg_.clip_norm > 0.0) {
      double sq = 0.0;
      for (const auto& p : params)
        if (p.updatable() && p.value.has_grad()) sq += p.value.grad().mat().squaredNorm();
      const double norm = std::sqrt(sq);
      if (norm > cfg_.clip_norm) clip_scale = cfg_.clip_norm / norm;
    }

    std::size_t updated = 0;
    for (auto& p : params) {
      if (!p.updatable()) continue;
      if (!p.value.has_grad()) {
        log::debug("optimizer: parameter '" + p.name + "' has no gradient, skipped");
        continue;
      }
      Tensor& data = p.value.mutable_data();
      const Tensor& grad = p.value.grad();
      if (cfg_.kind == OptimizerKind::sgd) {
        data.mat() -= (cfg_.learning_rate * clip_scale) * grad.mat();
      } else {
        adam_update(p.name, data, grad, clip_scale);
      }
      updated += data.size();
    }
    params.zero_grad();
    return updated;
  }

 private:
  void adam_update(const std::string& name, Tensor& data, const Tensor& grad, double clip_scale) {
    auto it = moments_.find(name);
    if (it == moments_.end())
      it = moments_.emplace(name, Moments{Tensor(data.shape()), Tensor(data.shape()), 0}).first;
    const double t = static_cast<double>(++it->second.steps);
    Tensor& m = it->second.first;
    Tensor& v = it->second.second;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad[i] * clip_scale;
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      data[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }

  OptimizerConfig cfg_;
  std::size_t steps_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace piie
