// Dense float64 tensors with define-by-run reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a graph node. Operations on tensors that
// require gradients record their parents and a backward closure; calling
// backward() on a scalar result walks the recorded graph in reverse
// topological order and accumulates gradients into every leaf that asked for
// them. Graphs are never shared between threads.

#ifndef VIDSEG_TENSOR_H_
#define VIDSEG_TENSOR_H_

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vidseg {

using Shape = std::vector<std::size_t>;

std::string ShapeToString(const Shape& shape);
std::size_t NumElements(const Shape& shape);

// Raised by operations whose operands do not conform.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& op, const Shape& lhs, const Shape& rhs);
  ShapeError(const std::string& op, const std::string& what);
};

namespace internal {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  std::vector<double>& EnsureGrad();
};

}  // namespace internal

class Tensor {
 public:
  Tensor() = default;

  static Tensor Zeros(Shape shape, bool requires_grad = false);
  static Tensor Full(Shape shape, double value, bool requires_grad = false);
  static Tensor FromData(Shape shape, std::vector<double> data,
                         bool requires_grad = false);
  static Tensor Scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Direct write access. Only meaningful on leaves (parameters, inputs).
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  bool has_grad() const;
  // Gradient buffer; zeros when nothing has been accumulated yet.
  std::vector<double> grad() const;
  std::span<double> mutable_grad();
  void ZeroGrad();

  // Accumulates d(this)/d(leaf) into every reachable leaf that requires
  // gradients. This tensor must hold exactly one element.
  void Backward() const;

  // Same values, cut from the graph.
  Tensor Detach() const;
  // Deep copy as a fresh leaf.
  Tensor Clone(bool requires_grad) const;

  const char* op_name() const;

  // Used by op implementations.
  static Tensor MakeResult(Shape shape, std::vector<double> value,
                           const char* op,
                           std::vector<Tensor> parents,
                           std::function<void(internal::Node&)> backward);
  internal::Node& node() const { return *node_; }

 private:
  explicit Tensor(std::shared_ptr<internal::Node> node)
      : node_(std::move(node)) {}

  std::shared_ptr<internal::Node> node_;
};

// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool GradEnabled();

}  // namespace vidseg

#endif  // VIDSEG_TENSOR_H_
