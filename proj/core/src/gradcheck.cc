#include "vidseg/gradcheck.h"

#include <algorithm>
#include <cmath>

namespace vidseg {
namespace {

// Mismatches below this are central-difference noise, never a kink.
constexpr double kNonsmoothFloor = 1e-6;

}  // namespace

GradCheckResult CheckGradients(const std::function<Tensor()>& fn,
                               std::vector<Tensor> inputs, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("gradcheck: step must be > 0");
  for (auto& x : inputs) {
    if (!x.requires_grad()) {
      throw std::invalid_argument("gradcheck: inputs must require gradients");
    }
    x.ZeroGrad();
  }

  const Tensor first = fn();
  const Tensor second = fn();
  if (first.numel() != 1 || second.numel() != 1) {
    throw std::invalid_argument("gradcheck: function must return a scalar");
  }
  if (first.item() != second.item()) {
    throw NonDeterministicFunctionError(
        "gradcheck: two evaluations at the same point differ");
  }
  first.Backward();
  const double center = first.item();

  GradCheckResult result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const std::vector<double> analytic = inputs[k].grad();
    auto data = inputs[k].mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      double plus, minus;
      {
        NoGradGuard guard;
        data[i] = saved + step;
        plus = fn().item();
        data[i] = saved - step;
        minus = fn().item();
      }
      data[i] = saved;
      const double numeric = (plus - minus) / (2.0 * step);
      const double gap = std::abs(analytic[i] - numeric);
      const double err = gap / std::max(1.0, std::abs(analytic[i]));
      const double curvature = std::abs(plus - 2.0 * center + minus) / (2.0 * step);
      if (err > kNonsmoothFloor && curvature >= 0.5 * gap) {
        ++result.nonsmooth;
        continue;
      }
      if (err > result.max_rel_error || std::isnan(err)) {
        result.max_rel_error = std::isnan(err) ? INFINITY : err;
        result.worst_input = k;
        result.worst_index = i;
      }
    }
    inputs[k].ZeroGrad();
  }
  return result;
}

double FiniteDifferenceCheck(const std::function<Tensor(const Tensor&)>& fn,
                             const Tensor& point, double step) {
  Tensor x = point.Clone(/*requires_grad=*/true);
  return CheckGradients([&] { return fn(x); }, {x}, step).max_rel_error;
}

}  // namespace vidseg
