#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "test_util.h"
#include "vidseg/gradcheck.h"
#include "vidseg/gradsuite.h"
#include "vidseg/losses.h"
#include "vidseg/ops.h"
#include "vidseg/tracker.h"

namespace vidseg {
namespace {

using testing::RandomTensor;

TEST(GradSuite, CoversEveryScopeAndNamedCase) {
  std::set<std::string> names;
  std::set<std::string> scopes;
  for (const auto& c : StandardGradCases()) {
    names.insert(c.name);
    scopes.insert(c.scope);
  }
  EXPECT_EQ(scopes, (std::set<std::string>{"ops", "blocks", "losses"}));
  for (const char* n : {"add", "mul", "scale", "matmul", "transpose", "concat", "slice", "relu",
                        "softmax", "layer_norm", "linear", "conv1d", "mean", "sum", "sigmoid",
                        "log", "exp", "rca", "td_block", "temporal_block", "dice",
                        "mask_cross_entropy", "classification", "contrastive"}) {
    EXPECT_TRUE(names.count(n)) << n;
  }
}

TEST(GradSuite, ScopeFilterSelectsCases) {
  const auto reports = RunGradCases(StandardGradCases(), "losses", 2);
  ASSERT_EQ(reports.size(), 4u);
  for (const auto& r : reports) {
    EXPECT_EQ(r.scope, "losses");
    EXPECT_EQ(r.draws, 2u);
    EXPECT_TRUE(r.passed) << r.name << " " << r.max_error;
  }
  EXPECT_THROW(RunGradCases(StandardGradCases(), "nope", 1), std::invalid_argument);
}

TEST(GradSuite, OpsPassAtTolerance) {
  for (const auto& r : RunGradCases(StandardGradCases(), "ops", 5)) {
    EXPECT_TRUE(r.passed) << r.name << " " << r.max_error;
    EXPECT_LT(r.max_error, kGradCheckTolerance) << r.name;
  }
}

TEST(GradSuite, TamperedGradientReportedAsFailure) {
  GradCase bad{"ops", "tampered_sigmoid", [](Rng& rng, double step) {
                 Tensor x = RandomTensor({6}, rng, 1.0, true);
                 auto fn = [&] {
                   const Tensor s = Sigmoid(x);
                   // Correct forward, backward scaled by 1.05.
                   const Tensor t = Tensor::MakeResult(
                       s.shape(), {s.data().begin(), s.data().end()}, "tampered", {x},
                       [](internal::Node& n) {
                         auto& g = n.parents[0]->EnsureGrad();
                         for (std::size_t i = 0; i < g.size(); ++i)
                           g[i] += 1.05 * n.grad[i] * n.value[i] * (1.0 - n.value[i]);
                       });
                   return Sum(Mul(t, t));
                 };
                 return CheckGradients(fn, {x}, step);
               }};
  auto cases = StandardGradCases();
  cases.push_back(bad);
  const auto reports = RunGradCases(cases, "ops", 3);
  const auto it = std::find_if(reports.begin(), reports.end(),
                               [](const auto& r) { return r.name == "tampered_sigmoid"; });
  ASSERT_NE(it, reports.end());
  EXPECT_FALSE(it->passed);
  EXPECT_GT(it->max_error, kGradCheckTolerance);
}

TEST(GradSuite, SameSeedSameReport) {
  const auto a = RunGradCases(StandardGradCases(), "losses", 2, kGradCheckTolerance, 42);
  const auto b = RunGradCases(StandardGradCases(), "losses", 2, kGradCheckTolerance, 42);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].max_error, b[i].max_error);
}

TEST(GradCheck, DiceOnRandomEightByEight) {
  Rng rng(12);
  const Tensor logits = RandomTensor({1, 64}, rng, 2.0);
  std::vector<double> g(64);
  std::bernoulli_distribution bit(0.4);
  for (double& v : g) v = bit(rng);
  const Tensor target = Tensor::FromData({1, 64}, g);
  EXPECT_LT(FiniteDifferenceCheck([&](const Tensor& x) { return DiceLoss(x, target); }, logits),
            1e-4);
}

TEST(GradCheck, RcaScalarReadout) {
  Rng rng(13);
  ParameterSet params;
  const auto mha = MultiHeadAttention::Create(params, "rca", 8, 2, rng);
  testing::Randomize(params, rng);
  Tensor id = RandomTensor({3, 8}, rng, 1.0, true);
  Tensor q = RandomTensor({3, 8}, rng, 1.0, true);
  Tensor k = RandomTensor({4, 8}, rng, 1.0, true);
  Tensor v = RandomTensor({4, 8}, rng, 1.0, true);
  const Tensor readout = RandomTensor({3, 8}, rng);
  std::vector<Tensor> inputs{id, q, k, v};
  for (const auto& [name, p] : params.items()) inputs.push_back(p);
  const auto r = CheckGradients([&] { return Sum(Mul(Rca(id, q, k, v, mha), readout)); }, inputs);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

}  // namespace
}  // namespace vidseg
