#include "vidseg/tensor.h"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace vidseg {
namespace {

thread_local bool grad_enabled = true;

}  // namespace

std::string ShapeToString(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t NumElements(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

ShapeError::ShapeError(const std::string& op, const Shape& lhs,
                       const Shape& rhs)
    : std::invalid_argument(op + ": shape mismatch " + ShapeToString(lhs) +
                            " vs " + ShapeToString(rhs)) {}

ShapeError::ShapeError(const std::string& op, const std::string& what)
    : std::invalid_argument(op + ": " + what) {}

namespace internal {

std::vector<double>& Node::EnsureGrad() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

}  // namespace internal

Tensor Tensor::Zeros(Shape shape, bool requires_grad) {
  return Full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::Full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = NumElements(shape);
  return FromData(std::move(shape), std::vector<double>(n, value),
                  requires_grad);
}

Tensor Tensor::FromData(Shape shape, std::vector<double> data,
                        bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor", "zero extent in " + ShapeToString(shape));
  }
  if (NumElements(shape) != data.size()) {
    throw ShapeError("tensor", "shape " + ShapeToString(shape) + " holds " +
                                   std::to_string(NumElements(shape)) +
                                   " values, got " +
                                   std::to_string(data.size()));
  }
  auto node = std::make_shared<internal::Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::Scalar(double value, bool requires_grad) {
  return FromData({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape().size()) {
    throw ShapeError("dim", "axis " + std::to_string(axis) +
                                " out of range for " + ShapeToString(shape()));
  }
  return shape()[axis];
}

std::size_t Tensor::numel() const { return node_->value.size(); }

std::span<const double> Tensor::data() const { return node_->value; }

std::span<double> Tensor::mutable_data() { return node_->value; }

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item", "expected one element, shape " +
                                 ShapeToString(shape()));
  }
  return node_->value[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) {
    throw ShapeError("at", "index rank does not match " +
                               ShapeToString(shape()));
  }
  std::size_t offset = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= shape()[axis]) throw ShapeError("at", "index out of range");
    offset = offset * shape()[axis] + i;
    ++axis;
  }
  return node_->value[offset];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(numel(), 0.0);
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() { return node_->EnsureGrad(); }

void Tensor::ZeroGrad() { node_->grad.clear(); }

const char* Tensor::op_name() const { return node_->op; }

void Tensor::Backward() const {
  if (numel() != 1) {
    throw ShapeError("backward", "loss must be scalar, got " +
                                     ShapeToString(shape()));
  }
  if (!requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<internal::Node*> order;
  std::unordered_set<internal::Node*> seen;
  std::vector<std::pair<internal::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      internal::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Interior gradients are per-call; leaves accumulate across calls.
  for (auto* node : order) {
    if (node->backward) node->grad.assign(node->value.size(), 0.0);
  }
  node_->EnsureGrad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
  for (auto* node : order) {
    if (node->backward) {
      node->grad.clear();
      node->grad.shrink_to_fit();
    }
  }
}

Tensor Tensor::Detach() const {
  return FromData(shape(), node_->value, false);
}

Tensor Tensor::Clone(bool requires_grad) const {
  return FromData(shape(), node_->value, requires_grad);
}

Tensor Tensor::MakeResult(Shape shape, std::vector<double> value,
                          const char* op, std::vector<Tensor> parents,
                          std::function<void(internal::Node&)> backward) {
  auto node = std::make_shared<internal::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  if (grad_enabled) {
    const bool any = std::any_of(parents.begin(), parents.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (auto& p : parents) node->parents.push_back(p.node_);
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

NoGradGuard::NoGradGuard() : previous_(grad_enabled) { grad_enabled = false; }

NoGradGuard::~NoGradGuard() { grad_enabled = previous_; }

bool GradEnabled() { return grad_enabled; }

}  // namespace vidseg
