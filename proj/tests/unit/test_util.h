#ifndef VIDSEG_TESTS_TEST_UTIL_H_
#define VIDSEG_TESTS_TEST_UTIL_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "vidseg/config.h"
#include "vidseg/nn.h"
#include "vidseg/scene.h"
#include "vidseg/tensor.h"

namespace vidseg::testing {

inline Tensor RandomTensor(Shape shape, Rng& rng, double scale = 1.0, bool grad = false) {
  std::normal_distribution<double> dist(0.0, scale);
  std::vector<double> v(NumElements(shape));
  for (double& x : v) x = dist(rng);
  return Tensor::FromData(std::move(shape), std::move(v), grad);
}

inline std::vector<double> ToVector(const Tensor& t) {
  return {t.data().begin(), t.data().end()};
}

inline void Randomize(ParameterSet& params, Rng& rng, double scale = 0.5) {
  std::normal_distribution<double> dist(0.0, scale);
  for (auto& [name, t] : params.items()) {
    Tensor handle = t;
    for (double& x : handle.mutable_data()) x = dist(rng);
  }
}

// Small scene that keeps model tests fast.
inline SceneConfig TinyScene(std::uint64_t seed = 1) {
  SceneConfig s;
  s.frames = 6;
  s.height = 16;
  s.width = 16;
  s.object_count = 2;
  s.query_budget = 4;
  s.channels = 8;
  s.class_count = 3;
  s.seed = seed;
  return s;
}

inline TrainConfig SmallTrainConfig(std::uint64_t seed = 1) {
  TrainConfig c;
  c.scene = TinyScene(seed);
  c.video_count = 4;
  c.seed = seed;
  for (auto* m : {&c.tracker.channels, &c.refiner.channels}) *m = c.scene.channels;
  for (auto* m : {&c.tracker.class_count, &c.refiner.class_count}) *m = c.scene.class_count;
  c.tracker.heads = c.refiner.heads = 2;
  c.tracker_stage = {3, 4, {}};
  c.refiner_stage = {6, 4, {}};
  c.memory_bank_capacity = 16;
  return c;
}

inline BinaryMask RandomMask(std::size_t size, Rng& rng, double p = 0.5) {
  std::bernoulli_distribution bit(p);
  BinaryMask m(size);
  for (auto& b : m) b = bit(rng) ? 1 : 0;
  return m;
}

// Plain-loop residual cross-attention, id + MHA(q, k, v) on [N, C] operands.
// Accumulation order follows the library kernels so results compare bitwise.
inline std::vector<double> ReferenceRca(const Tensor& id, const Tensor& q, const Tensor& k,
                                        const Tensor& v, const MultiHeadAttention& mha) {
  const std::size_t n = q.dim(0), m = k.dim(0), c = q.dim(1);
  const std::size_t heads = mha.heads, hd = c / heads;
  auto linear = [c](const Tensor& x, const LinearLayer& layer) {
    const std::size_t rows = x.dim(0);
    std::vector<double> out(rows * c);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) {
        double acc = 0.0;
        for (std::size_t p = 0; p < c; ++p) acc += x.data()[r * c + p] * layer.weight.data()[j * c + p];
        out[r * c + j] = layer.bias.data()[j] + acc;
      }
    return out;
  };
  const auto qp = linear(q, mha.query), kp = linear(k, mha.key), vp = linear(v, mha.value);
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<double> ctx(n * c, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> w(m, 0.0);
      for (std::size_t d = 0; d < hd; ++d) {
        const double a = qp[i * c + h * hd + d];
        if (a == 0.0) continue;
        for (std::size_t j = 0; j < m; ++j) w[j] += a * kp[j * c + h * hd + d];
      }
      for (double& s : w) s *= scale;
      double mx = w[0];
      for (double s : w) mx = std::max(mx, s);
      double total = 0.0;
      for (double& s : w) {
        s = std::exp(s - mx);
        total += s;
      }
      for (double& s : w) s /= total;
      for (std::size_t j = 0; j < m; ++j) {
        if (w[j] == 0.0) continue;
        for (std::size_t d = 0; d < hd; ++d) ctx[i * c + h * hd + d] += w[j] * vp[j * c + h * hd + d];
      }
    }
  }
  std::vector<double> out(n * c);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < c; ++p) acc += ctx[i * c + p] * mha.output.weight.data()[j * c + p];
      out[i * c + j] = id.data()[i * c + j] + (mha.output.bias.data()[j] + acc);
    }
  return out;
}

}  // namespace vidseg::testing

#endif  // VIDSEG_TESTS_TEST_UTIL_H_
