// First-order optimizers with a single step-decay learning-rate schedule.

#ifndef VIDSEG_OPTIM_H_
#define VIDSEG_OPTIM_H_

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "vidseg/nn.h"

namespace vidseg {

enum class OptimizerKind { kSgd, kAdam };

std::string OptimizerKindName(OptimizerKind kind);
OptimizerKind ParseOptimizerKind(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgd;
  double learning_rate = 0.01;
  double momentum = 0.9;  // sgd
  double beta1 = 0.9;     // adam
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled
  double decay_fraction = 0.7;  // the rate drops once this fraction of iterations is done
  double decay_factor = 0.1;
  double max_grad_norm = 0.0;  // 0 disables clipping

  void Validate() const;
};

// Learning rate in effect at `iteration` of `total`.
double ScheduledLearningRate(const OptimizerConfig& config, std::size_t iteration,
                             std::size_t total);

class Optimizer {
 public:
  Optimizer(ParameterSet params, OptimizerConfig config, std::size_t total_iterations);

  // Applies one update from the accumulated gradients, then clears them.
  // Returns the gradient norm before clipping.
  double Step(std::size_t iteration);

 private:
  ParameterSet params_;
  OptimizerConfig config_;
  std::size_t total_;
  std::size_t steps_ = 0;
  std::map<std::string, std::vector<double>> first_;
  std::map<std::string, std::vector<double>> second_;
};

}  // namespace vidseg

#endif  // VIDSEG_OPTIM_H_
