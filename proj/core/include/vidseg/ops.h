// Differentiable operations over Tensor.
//
// There is no implicit broadcasting: elementwise operands must have identical
// shapes, and bias-style additions go through Linear or an explicit Reshape.
// Every function throws ShapeError naming the op when operands do not conform.

#ifndef VIDSEG_OPS_H_
#define VIDSEG_OPS_H_

#include <cstddef>
#include <vector>

#include "vidseg/tensor.h"

namespace vidseg {

Tensor Add(const Tensor& a, const Tensor& b);
Tensor Sub(const Tensor& a, const Tensor& b);
Tensor Mul(const Tensor& a, const Tensor& b);
Tensor Div(const Tensor& a, const Tensor& b);
Tensor Scale(const Tensor& a, double factor);
Tensor AddScalar(const Tensor& a, double offset);

// [M,K]x[K,N] -> [M,N], or batched [B,M,K]x[B,K,N] -> [B,M,N].
Tensor MatMul(const Tensor& a, const Tensor& b);
// Swaps two axes.
Tensor Transpose(const Tensor& a, std::size_t axis0, std::size_t axis1);
// Swaps the two trailing axes.
Tensor Transpose(const Tensor& a);
Tensor Permute(const Tensor& a, const std::vector<std::size_t>& order);
Tensor Reshape(const Tensor& a, Shape shape);

Tensor Concat(const std::vector<Tensor>& parts, std::size_t axis);
// Half-open range [begin, end) along `axis`.
Tensor Slice(const Tensor& a, std::size_t axis, std::size_t begin,
             std::size_t end);
// Gathers entries along `axis`; indices may repeat.
Tensor IndexSelect(const Tensor& a, std::size_t axis,
                   const std::vector<std::size_t>& indices);

Tensor Relu(const Tensor& a);
Tensor Sigmoid(const Tensor& a);
Tensor Exp(const Tensor& a);
Tensor Log(const Tensor& a);
Tensor Softmax(const Tensor& a, std::size_t axis);
Tensor LogSoftmax(const Tensor& a, std::size_t axis);

// Normalizes over the last axis, then applies gamma * x + beta.
Tensor LayerNorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 double eps = 1e-12);
// x: [..., in], weight: [out, in], bias: [out] or undefined.
Tensor Linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
// x: [B, T, Cin], weight: [Cout, Cin, K] with odd K, bias: [Cout] or
// undefined. Convolves along T with zero padding so T is preserved.
Tensor Conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias);
// Scales each vector along the last axis to unit L2 norm.
Tensor L2Normalize(const Tensor& x, double eps = 1e-12);

Tensor Sum(const Tensor& a);
Tensor Sum(const Tensor& a, std::size_t axis);
// log(sum(exp(a))) over all elements, computed stably.
Tensor LogSumExp(const Tensor& a);
Tensor Mean(const Tensor& a);
Tensor Mean(const Tensor& a, std::size_t axis);

// Elementwise log(1 + exp(-|x|)) + max(x, 0) - x * target, stable for large
// |x|. `target` is treated as a constant.
Tensor BinaryCrossEntropyWithLogits(const Tensor& logits, const Tensor& target);

}  // namespace vidseg

#endif  // VIDSEG_OPS_H_
