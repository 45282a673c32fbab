#include "vidseg/gradsuite.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vidseg/contrastive.h"
#include "vidseg/losses.h"
#include "vidseg/ops.h"
#include "vidseg/refiner.h"
#include "vidseg/tracker.h"

namespace vidseg {
namespace {

constexpr std::size_t kN = 3;
constexpr std::size_t kT = 4;
constexpr std::size_t kC = 8;
constexpr std::size_t kHeads = 2;

Tensor Uniform(Shape shape, Rng& rng, double lo, double hi, bool grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(NumElements(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::FromData(std::move(shape), std::move(v), grad);
}

Tensor Normal(Shape shape, Rng& rng, bool grad = true) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(NumElements(shape));
  for (auto& x : v) x = n(rng);
  return Tensor::FromData(std::move(shape), std::move(v), grad);
}

// Values bounded away from zero, for ops with a kink there.
Tensor AwayFromZero(Shape shape, Rng& rng) {
  std::uniform_real_distribution<double> mag(0.05, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(NumElements(shape));
  for (auto& x : v) x = sign(rng) ? mag(rng) : -mag(rng);
  return Tensor::FromData(std::move(shape), std::move(v), true);
}

BinaryMask RandomMask(std::size_t n, Rng& rng) {
  std::bernoulli_distribution b(0.4);
  BinaryMask m(n);
  for (auto& x : m) x = b(rng);
  return m;
}

Tensor MaskTensor(const BinaryMask& m, Shape shape) {
  return Tensor::FromData(std::move(shape), std::vector<double>(m.begin(), m.end()));
}

// Random linear functional of a tensor-valued op, so every output element
// contributes a distinct weight.
GradCheckResult CheckOp(Rng& rng, double step, std::vector<Tensor> inputs,
                        const std::function<Tensor(const std::vector<Tensor>&)>& op) {
  Tensor probe;
  {
    NoGradGuard guard;
    probe = Normal(op(inputs).shape(), rng, false);
  }
  return CheckGradients([&] { return Sum(Mul(op(inputs), probe)); }, inputs, step);
}

void Randomize(ParameterSet& params, Rng& rng) {
  std::normal_distribution<double> n(0.0, 0.5);
  for (const auto& [name, t] : params.items()) {
    for (auto& v : Tensor(t).mutable_data()) v = n(rng);
  }
}

std::vector<Tensor> Leaves(std::vector<Tensor> inputs, const ParameterSet& params) {
  for (const auto& [name, t] : params.items()) inputs.push_back(t);
  return inputs;
}

using OpFn = std::function<Tensor(const std::vector<Tensor>&)>;
using DrawFn = std::function<std::vector<Tensor>(Rng&)>;

GradCase OpCase(const std::string& name, DrawFn draw, OpFn op) {
  return {"ops", name, [draw, op](Rng& rng, double step) { return CheckOp(rng, step, draw(rng), op); }};
}

DrawFn Normals(std::vector<Shape> shapes) {
  return [shapes](Rng& rng) {
    std::vector<Tensor> out;
    for (const auto& s : shapes) out.push_back(Normal(s, rng));
    return out;
  };
}

void AddOpCases(std::vector<GradCase>& cases) {
  const Shape m{3, 4};
  cases.push_back(OpCase("add", Normals({m, m}), [](auto& x) { return Add(x[0], x[1]); }));
  cases.push_back(OpCase("sub", Normals({m, m}), [](auto& x) { return Sub(x[0], x[1]); }));
  cases.push_back(OpCase("mul", Normals({m, m}), [](auto& x) { return Mul(x[0], x[1]); }));
  cases.push_back(OpCase(
      "div",
      [m](Rng& rng) {
        Tensor d = AwayFromZero(m, rng);
        for (auto& v : d.mutable_data()) v += v > 0 ? 0.5 : -0.5;
        return std::vector<Tensor>{Normal(m, rng), d};
      },
      [](auto& x) { return Div(x[0], x[1]); }));
  cases.push_back(OpCase("scale", Normals({m}), [](auto& x) { return Scale(x[0], -1.7); }));
  cases.push_back(OpCase("add_scalar", Normals({m}), [](auto& x) { return AddScalar(x[0], 0.3); }));
  cases.push_back(OpCase("matmul", Normals({{3, 4}, {4, 2}}), [](auto& x) { return MatMul(x[0], x[1]); }));
  cases.push_back(OpCase("matmul_batched", Normals({{2, 3, 4}, {2, 4, 2}}),
                         [](auto& x) { return MatMul(x[0], x[1]); }));
  cases.push_back(OpCase("transpose", Normals({{2, 3, 4}}), [](auto& x) { return Transpose(x[0], 0, 2); }));
  cases.push_back(OpCase("permute", Normals({{2, 3, 4}}), [](auto& x) { return Permute(x[0], {1, 2, 0}); }));
  cases.push_back(OpCase("reshape", Normals({{2, 3, 4}}), [](auto& x) { return Reshape(x[0], {4, 6}); }));
  cases.push_back(OpCase("concat", Normals({{2, 3}, {2, 2}}), [](auto& x) { return Concat({x[0], x[1]}, 1); }));
  cases.push_back(OpCase("slice", Normals({{3, 5}}), [](auto& x) { return Slice(x[0], 1, 1, 4); }));
  cases.push_back(OpCase("index_select", Normals({{4, 3}}),
                         [](auto& x) { return IndexSelect(x[0], 0, {2, 0, 2, 3}); }));
  cases.push_back(OpCase("relu", [m](Rng& rng) { return std::vector<Tensor>{AwayFromZero(m, rng)}; },
                         [](auto& x) { return Relu(x[0]); }));
  cases.push_back(OpCase("sigmoid", Normals({m}), [](auto& x) { return Sigmoid(x[0]); }));
  cases.push_back(OpCase("exp", Normals({m}), [](auto& x) { return Exp(x[0]); }));
  cases.push_back(OpCase("log", [m](Rng& rng) { return std::vector<Tensor>{Uniform(m, rng, 0.5, 2.0)}; },
                         [](auto& x) { return Log(x[0]); }));
  cases.push_back(OpCase("softmax", Normals({m}), [](auto& x) { return Softmax(x[0], 1); }));
  cases.push_back(OpCase("softmax_axis0", Normals({m}), [](auto& x) { return Softmax(x[0], 0); }));
  cases.push_back(OpCase("log_softmax", Normals({m}), [](auto& x) { return LogSoftmax(x[0], 1); }));
  cases.push_back(OpCase("layer_norm", Normals({{3, 6}, {6}, {6}}),
                         [](auto& x) { return LayerNorm(x[0], x[1], x[2], 1e-5); }));
  cases.push_back(OpCase("linear", Normals({{2, 3, 4}, {5, 4}, {5}}),
                         [](auto& x) { return Linear(x[0], x[1], x[2]); }));
  cases.push_back(OpCase("conv1d", Normals({{2, 5, 3}, {4, 3, 3}, {4}}),
                         [](auto& x) { return Conv1d(x[0], x[1], x[2]); }));
  cases.push_back(OpCase("l2_normalize", Normals({m}), [](auto& x) { return L2Normalize(x[0]); }));
  cases.push_back(OpCase("sum", Normals({m}), [](auto& x) { return Sum(x[0]); }));
  cases.push_back(OpCase("sum_axis", Normals({{2, 3, 4}}), [](auto& x) { return Sum(x[0], 1); }));
  cases.push_back(OpCase("mean", Normals({m}), [](auto& x) { return Mean(x[0]); }));
  cases.push_back(OpCase("mean_axis", Normals({{2, 3, 4}}), [](auto& x) { return Mean(x[0], 2); }));
  cases.push_back(OpCase("log_sum_exp", Normals({m}), [](auto& x) { return LogSumExp(x[0]); }));
  cases.push_back({"ops", "bce_with_logits", [m](Rng& rng, double step) {
                     const Tensor target = MaskTensor(RandomMask(12, rng), m);
                     return CheckOp(rng, step, {Normal(m, rng)}, [&](auto& x) {
                       return BinaryCrossEntropyWithLogits(x[0], target);
                     });
                   }});
}

void AddBlockCases(std::vector<GradCase>& cases) {
  cases.push_back({"blocks", "mha", [](Rng& rng, double step) {
                     ParameterSet p;
                     const auto mha = MultiHeadAttention::Create(p, "mha", kC, kHeads, rng);
                     Randomize(p, rng);
                     const std::vector<Tensor> in = {Normal({1, kN, kC}, rng), Normal({1, kN + 1, kC}, rng),
                                                     Normal({1, kN + 1, kC}, rng)};
                     return CheckOp(rng, step, Leaves(in, p),
                                    [&](auto& x) { return mha(x[0], x[1], x[2]); });
                   }});
  cases.push_back({"blocks", "rca", [](Rng& rng, double step) {
                     ParameterSet p;
                     const auto mha = MultiHeadAttention::Create(p, "rca", kC, kHeads, rng);
                     Randomize(p, rng);
                     const std::vector<Tensor> in = {Normal({kN, kC}, rng), Normal({kN, kC}, rng),
                                                     Normal({kN, kC}, rng), Normal({kN, kC}, rng)};
                     return CheckOp(rng, step, Leaves(in, p),
                                    [&](auto& x) { return Rca(x[0], x[1], x[2], x[3], mha); });
                   }});
  cases.push_back({"blocks", "td_block", [](Rng& rng, double step) {
                     TrackerConfig config;
                     config.channels = kC;
                     config.heads = kHeads;
                     ParameterSet p;
                     const TdBlock block = TdBlock::Create(p, "td", config, rng);
                     Randomize(p, rng);
                     const std::vector<Tensor> in = {Normal({kN, kC}, rng), Normal({kN, kC}, rng),
                                                     Normal({kN, kC}, rng)};
                     return CheckOp(rng, step, Leaves(in, p),
                                    [&](auto& x) { return block(x[0], x[1], x[2]); });
                   }});
  cases.push_back({"blocks", "temporal_block", [](Rng& rng, double step) {
                     RefinerConfig config;
                     config.channels = kC;
                     config.heads = kHeads;
                     ParameterSet p;
                     const TemporalBlock block = TemporalBlock::Create(p, "tb", config, rng);
                     Randomize(p, rng);
                     const Tensor positions = SinusoidalPositions(kT, kC);
                     const std::vector<Tensor> in = {Normal({kN, kT, kC}, rng), Normal({kT, kN, kC}, rng)};
                     return CheckOp(rng, step, Leaves(in, p),
                                    [&](auto& x) { return block(x[0], x[1], positions); });
                   }});
  cases.push_back({"blocks", "temporal_weighting", [](Rng& rng, double step) {
                     ParameterSet p;
                     const auto scorer = LinearLayer::Create(p, "w", kC, 1, rng);
                     Randomize(p, rng);
                     return CheckOp(rng, step, Leaves({Normal({kN, kT, kC}, rng)}, p), [&](auto& x) {
                       return ApplyTemporalWeighting(x[0], scorer).video_repr;
                     });
                   }});
}

void AddLossCases(std::vector<GradCase>& cases) {
  constexpr std::size_t kPixels = 10;
  cases.push_back({"losses", "dice", [](Rng& rng, double step) {
                     const Tensor target = MaskTensor(RandomMask(kN * kPixels, rng), {kN, kPixels});
                     Tensor logits = Normal({kN, kPixels}, rng);
                     return CheckGradients([&] { return DiceLoss(logits, target); }, {logits}, step);
                   }});
  cases.push_back({"losses", "mask_cross_entropy", [](Rng& rng, double step) {
                     const Tensor target = MaskTensor(RandomMask(kN * kPixels, rng), {kN, kPixels});
                     Tensor logits = Scale(Normal({kN, kPixels}, rng, false), 3.0).Clone(true);
                     return CheckGradients([&] { return MaskCrossEntropy(logits, target); }, {logits},
                                           step);
                   }});
  cases.push_back({"losses", "classification", [](Rng& rng, double step) {
                     constexpr std::size_t k1 = 5;
                     std::uniform_int_distribution<int> label(0, k1 - 1);
                     std::vector<int> targets(kN + 2);
                     for (auto& t : targets) t = label(rng);
                     targets.back() = k1 - 1;
                     Tensor logits = Normal({kN + 2, k1}, rng);
                     return CheckGradients([&] { return ClassificationLoss(logits, targets); },
                                           {logits}, step);
                   }});
  cases.push_back({"losses", "contrastive", [](Rng& rng, double step) {
                     std::vector<Tensor> leaves;
                     auto vec = [&] {
                       leaves.push_back(Normal({kC}, rng));
                       return leaves.back();
                     };
                     std::vector<ContrastiveItem> items;
                     for (int i = 0; i < 2; ++i) {
                       ContrastiveItem item;
                       item.anchor = vec();
                       item.positives = {vec(), vec()};
                       item.negatives = {vec(), vec(), vec()};
                       items.push_back(item);
                     }
                     // Normalized embeddings, as the models feed them.
                     auto build = [&] {
                       std::vector<ContrastiveItem> unit;
                       for (const auto& it : items) {
                         ContrastiveItem u;
                         u.anchor = L2Normalize(it.anchor);
                         for (const auto& v : it.positives) u.positives.push_back(L2Normalize(v));
                         for (const auto& v : it.negatives) u.negatives.push_back(L2Normalize(v));
                         unit.push_back(u);
                       }
                       return ContrastiveLoss(unit);
                     };
                     return CheckGradients(build, leaves, step);
                   }});
}

constexpr std::size_t kMaxRedraws = 10;

std::uint64_t NameSeed(std::uint64_t seed, const std::string& name) {
  std::uint64_t h = 1469598103934665603ULL ^ seed;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

std::vector<GradCase> StandardGradCases() {
  std::vector<GradCase> cases;
  AddOpCases(cases);
  AddBlockCases(cases);
  AddLossCases(cases);
  return cases;
}

std::vector<GradCaseReport> RunGradCases(const std::vector<GradCase>& cases,
                                         const std::string& scope, std::size_t draws,
                                         double tolerance, std::uint64_t seed, double step) {
  if (std::find(kGradScopes.begin(), kGradScopes.end(), scope) == kGradScopes.end()) {
    throw std::invalid_argument("unknown gradcheck scope: " + scope);
  }
  std::vector<GradCaseReport> reports;
  for (const auto& c : cases) {
    if (scope != "all" && c.scope != scope) continue;
    Rng rng(NameSeed(seed, c.scope + "/" + c.name));
    GradCaseReport r{c.scope, c.name, draws, 0.0, 0, true};
    for (std::size_t d = 0; d < draws; ++d) {
      GradCheckResult res = c.run(rng, step);
      for (std::size_t retry = 0; res.nonsmooth > 0 && retry < kMaxRedraws; ++retry) {
        ++r.redraws;
        res = c.run(rng, step);
      }
      const double err = res.nonsmooth > 0 ? INFINITY : res.max_rel_error;
      if (!(err <= r.max_error)) r.max_error = std::isnan(err) ? INFINITY : err;
    }
    r.passed = r.max_error <= tolerance;
    reports.push_back(r);
  }
  return reports;
}

}  // namespace vidseg
