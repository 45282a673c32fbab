#include "vidseg/optim.h"

#include <cmath>
#include <stdexcept>

namespace vidseg {

std::string OptimizerKindName(OptimizerKind kind) {
  return kind == OptimizerKind::kSgd ? "sgd" : "adam";
}

OptimizerKind ParseOptimizerKind(const std::string& name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw std::invalid_argument("unknown optimizer: " + name);
}

void OptimizerConfig::Validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw std::invalid_argument("adam betas must lie in [0, 1)");
  }
  if (decay_fraction < 0.0 || decay_fraction > 1.0) {
    throw std::invalid_argument("decay fraction must lie in [0, 1]");
  }
  if (!(decay_factor > 0.0) || weight_decay < 0.0 || max_grad_norm < 0.0 || !(epsilon > 0.0)) {
    throw std::invalid_argument("invalid optimizer constants");
  }
}

double ScheduledLearningRate(const OptimizerConfig& config, std::size_t iteration,
                             std::size_t total) {
  const double boundary = config.decay_fraction * static_cast<double>(total);
  return static_cast<double>(iteration) >= boundary ? config.learning_rate * config.decay_factor
                                                    : config.learning_rate;
}

Optimizer::Optimizer(ParameterSet params, OptimizerConfig config, std::size_t total_iterations)
    : params_(std::move(params)), config_(config), total_(total_iterations) {
  config_.Validate();
  for (const auto& [name, t] : params_.items()) {
    first_[name].assign(t.numel(), 0.0);
    if (config_.kind == OptimizerKind::kAdam) second_[name].assign(t.numel(), 0.0);
  }
}

double Optimizer::Step(std::size_t iteration) {
  double sq = 0.0;
  for (const auto& [name, t] : params_.items()) {
    if (!t.has_grad()) continue;
    Tensor handle = t;
    for (double g : handle.mutable_grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  const double clip = (config_.max_grad_norm > 0.0 && norm > config_.max_grad_norm)
                          ? config_.max_grad_norm / norm
                          : 1.0;
  const double lr = ScheduledLearningRate(config_, iteration, total_);
  ++steps_;
  const double bias1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bias2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (const auto& [name, t] : params_.items()) {
    Tensor handle = t;
    auto value = handle.mutable_data();
    std::vector<double> grad = handle.grad();
    auto& m = first_[name];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i] * clip;
      if (config_.weight_decay > 0.0) value[i] -= lr * config_.weight_decay * value[i];
      if (config_.kind == OptimizerKind::kSgd) {
        m[i] = config_.momentum * m[i] + g;
        value[i] -= lr * m[i];
      } else {
        auto& v = second_[name];
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
        value[i] -= lr * (m[i] / bias1) / (std::sqrt(v[i] / bias2) + config_.epsilon);
      }
    }
  }
  params_.ZeroGrad();
  return norm;
}

}  // namespace vidseg
