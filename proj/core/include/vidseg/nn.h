// Parameter bookkeeping and the transformer layers shared by the tracker and
// the refiner.

#ifndef VIDSEG_NN_H_
#define VIDSEG_NN_H_

#include <cstdint>
#include <map>
#include <random>
#include <string>

#include "vidseg/tensor.h"

namespace vidseg {

using Rng = std::mt19937_64;

// Named, ordered collection of trainable leaves. Copies share storage; use
// DeepCopy for an independent set.
class ParameterSet {
 public:
  Tensor Add(const std::string& name, Tensor value);
  Tensor Get(const std::string& name) const;
  bool Contains(const std::string& name) const { return items_.count(name) != 0; }
  const std::map<std::string, Tensor>& items() const { return items_; }
  std::size_t TotalElements() const;

  void ZeroGrad();
  // Overwrites values by name; both sets must have identical names and shapes.
  void AssignFrom(const ParameterSet& other);
  // Sets every value to zero.
  void ZeroValues();
  // FNV-1a over names, shapes, and raw value bits.
  std::uint64_t Hash() const;

 private:
  std::map<std::string, Tensor> items_;
};

Tensor XavierUniform(Shape shape, std::size_t fan_in, std::size_t fan_out,
                     Rng& rng);

struct LinearLayer {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out]

  static LinearLayer Create(ParameterSet& params, const std::string& name,
                            std::size_t in, std::size_t out, Rng& rng,
                            bool zero_init = false);
  Tensor operator()(const Tensor& x) const;
};

struct LayerNormLayer {
  Tensor gamma;
  Tensor beta;
  double eps = 1e-5;

  static LayerNormLayer Create(ParameterSet& params, const std::string& name,
                               std::size_t channels);
  Tensor operator()(const Tensor& x) const;
};

// Scaled dot-product attention with `heads` heads. Inputs are [B, L, C].
struct MultiHeadAttention {
  LinearLayer query;
  LinearLayer key;
  LinearLayer value;
  LinearLayer output;
  std::size_t heads = 1;

  static MultiHeadAttention Create(ParameterSet& params, const std::string& name,
                                   std::size_t channels, std::size_t heads,
                                   Rng& rng, bool zero_output = false);
  Tensor operator()(const Tensor& q, const Tensor& k, const Tensor& v) const;
};

// Linear -> ReLU -> Linear.
struct FeedForward {
  LinearLayer hidden;
  LinearLayer output;

  static FeedForward Create(ParameterSet& params, const std::string& name,
                            std::size_t channels, std::size_t hidden_width,
                            Rng& rng, bool zero_output = false);
  Tensor operator()(const Tensor& x) const;
};

// [T, C] sinusoidal encodings.
Tensor SinusoidalPositions(std::size_t length, std::size_t channels);

}  // namespace vidseg

#endif  // VIDSEG_NN_H_
