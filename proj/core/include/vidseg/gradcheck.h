// Central finite-difference oracle for analytic gradients.

#ifndef VIDSEG_GRADCHECK_H_
#define VIDSEG_GRADCHECK_H_

#include <functional>
#include <stdexcept>
#include <vector>

#include "vidseg/tensor.h"

namespace vidseg {

class NonDeterministicFunctionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GradCheckResult {
  // max over coordinates of |analytic - numeric| / max(1, |analytic|)
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  // Coordinates whose mismatch is explained by a jump in the one-sided
  // slopes (a kink inside [x - step, x + step]); they are excluded from
  // max_rel_error.
  std::size_t nonsmooth = 0;
};

// Checks d fn() / d inputs. `fn` must rebuild its graph from `inputs` on every
// call and return a scalar; the inputs are leaves that are perturbed in place
// and restored afterwards.
GradCheckResult CheckGradients(const std::function<Tensor()>& fn,
                               std::vector<Tensor> inputs, double step = 1e-5);

// Single-input form: returns the max relative error of d fn(x) / dx at
// `point`.
double FiniteDifferenceCheck(const std::function<Tensor(const Tensor&)>& fn,
                             const Tensor& point, double step = 1e-5);

}  // namespace vidseg

#endif  // VIDSEG_GRADCHECK_H_
