// Finite-difference suite over the primitive ops, the attention blocks, and
// the losses. Each case draws fresh random inputs (and parameters, for
// blocks) and compares every coordinate's analytic gradient with a central
// difference.

#ifndef VIDSEG_GRADSUITE_H_
#define VIDSEG_GRADSUITE_H_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vidseg/gradcheck.h"
#include "vidseg/nn.h"

namespace vidseg {

inline constexpr double kGradCheckTolerance = 1e-4;
inline constexpr double kGradCheckStep = 1e-5;
inline constexpr std::size_t kGradCheckDraws = 100;

inline const std::vector<std::string> kGradScopes = {"ops", "blocks", "losses", "all"};

struct GradCase {
  std::string scope;  // ops, blocks, or losses
  std::string name;
  // One random draw, checked at `step`.
  std::function<GradCheckResult(Rng& rng, double step)> run;
};

std::vector<GradCase> StandardGradCases();

struct GradCaseReport {
  std::string scope;
  std::string name;
  std::size_t draws = 0;
  double max_error = 0.0;
  std::size_t redraws = 0;
  bool passed = false;
};

// Runs the cases in `scope` ("all" for every case). Each case gets its own
// RNG stream derived from `seed` and its name. A draw whose stencil straddles
// a kink is replaced by a fresh draw (counted in `redraws`).
std::vector<GradCaseReport> RunGradCases(const std::vector<GradCase>& cases,
                                         const std::string& scope,
                                         std::size_t draws = kGradCheckDraws,
                                         double tolerance = kGradCheckTolerance,
                                         std::uint64_t seed = 0,
                                         double step = kGradCheckStep);

}  // namespace vidseg

#endif  // VIDSEG_GRADSUITE_H_
