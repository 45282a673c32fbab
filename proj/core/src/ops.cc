#include "vidseg/ops.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace vidseg {
namespace {

using internal::Node;

// Parent `i` of `n` when it wants a gradient, else nullptr.
Node* Target(Node& n, std::size_t i) {
  Node* p = n.parents[i].get();
  return p->requires_grad ? p : nullptr;
}

void RequireSameShape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError(op, a.shape(), b.shape());
}

void RequireAxis(const char* op, const Tensor& a, std::size_t axis) {
  if (axis >= a.rank()) {
    throw ShapeError(op, "axis " + std::to_string(axis) + " out of range for " +
                             ShapeToString(a.shape()));
  }
}

struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit SplitAt(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// C[M,N] += A[M,K] * B[K,N]
void GemmNN(std::size_t m, std::size_t k, std::size_t n, const double* a,
            const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M,N] += A[M,K] * B[N,K]^T
void GemmNT(std::size_t m, std::size_t k, std::size_t n, const double* a,
            const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// C[K,N] += A[M,K]^T * B[M,N]
void GemmTN(std::size_t m, std::size_t k, std::size_t n, const double* a,
            const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename Fwd, typename Deriv>
Tensor Unary(const char* op, const Tensor& a, Fwd fwd, Deriv deriv) {
  std::vector<double> out(a.numel());
  auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = fwd(in[i]);
    if (!std::isfinite(out[i])) {
      throw std::domain_error(std::string(op) + ": non-finite result for input " +
                              std::to_string(in[i]));
    }
  }
  return Tensor::MakeResult(a.shape(), std::move(out), op, {a},
                            [deriv](Node& n) {
                              Node* pa = Target(n, 0);
                              if (!pa) return;
                              auto& g = pa->EnsureGrad();
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                g[i] += n.grad[i] * deriv(pa->value[i], n.value[i]);
                              }
                            });
}

}  // namespace

Tensor Add(const Tensor& a, const Tensor& b) {
  RequireSameShape("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return Tensor::MakeResult(a.shape(), std::move(out), "add", {a, b}, [](Node& n) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (Node* p = Target(n, k)) {
        auto& g = p->EnsureGrad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
      }
    }
  });
}

Tensor Sub(const Tensor& a, const Tensor& b) {
  RequireSameShape("sub", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return Tensor::MakeResult(a.shape(), std::move(out), "sub", {a, b}, [](Node& n) {
    if (Node* p = Target(n, 0)) {
      auto& g = p->EnsureGrad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
    if (Node* p = Target(n, 1)) {
      auto& g = p->EnsureGrad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

Tensor Mul(const Tensor& a, const Tensor& b) {
  RequireSameShape("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return Tensor::MakeResult(a.shape(), std::move(out), "mul", {a, b}, [](Node& n) {
    Node* pa = n.parents[0].get();
    Node* pb = n.parents[1].get();
    if (pa->requires_grad) {
      auto& g = pa->EnsureGrad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      auto& g = pb->EnsureGrad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pa->value[i];
    }
  });
}

Tensor Div(const Tensor& a, const Tensor& b) {
  RequireSameShape("div", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (b.data()[i] == 0.0) throw std::domain_error("div: zero denominator");
    out[i] = a.data()[i] / b.data()[i];
  }
  return Tensor::MakeResult(a.shape(), std::move(out), "div", {a, b}, [](Node& n) {
    Node* pa = n.parents[0].get();
    Node* pb = n.parents[1].get();
    if (pa->requires_grad) {
      auto& g = pa->EnsureGrad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] / pb->value[i];
    }
    if (pb->requires_grad) {
      auto& g = pb->EnsureGrad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] -= n.grad[i] * n.value[i] / pb->value[i];
      }
    }
  });
}

Tensor Scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  return Tensor::MakeResult(a.shape(), std::move(out), "scale", {a},
                            [factor](Node& n) {
                              if (Node* p = Target(n, 0)) {
                                auto& g = p->EnsureGrad();
                                for (std::size_t i = 0; i < g.size(); ++i)
                                  g[i] += n.grad[i] * factor;
                              }
                            });
}

Tensor AddScalar(const Tensor& a, double offset) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + offset;
  return Tensor::MakeResult(a.shape(), std::move(out), "add_scalar", {a},
                            [](Node& n) {
                              if (Node* p = Target(n, 0)) {
                                auto& g = p->EnsureGrad();
                                for (std::size_t i = 0; i < g.size(); ++i)
                                  g[i] += n.grad[i];
                              }
                            });
}

Tensor MatMul(const Tensor& a, const Tensor& b) {
  std::size_t batch, m, k, n;
  Shape out_shape;
  if (a.rank() == 2 && b.rank() == 2) {
    batch = 1;
    m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) throw ShapeError("matmul", a.shape(), b.shape());
    out_shape = {m, n};
  } else if (a.rank() == 3 && b.rank() == 3) {
    batch = a.dim(0);
    m = a.dim(1), k = a.dim(2), n = b.dim(2);
    if (b.dim(0) != batch || b.dim(1) != k) {
      throw ShapeError("matmul", a.shape(), b.shape());
    }
    out_shape = {batch, m, n};
  } else {
    throw ShapeError("matmul", a.shape(), b.shape());
  }
  std::vector<double> out(batch * m * n, 0.0);
  for (std::size_t s = 0; s < batch; ++s) {
    GemmNN(m, k, n, a.data().data() + s * m * k, b.data().data() + s * k * n,
           out.data() + s * m * n);
  }
  return Tensor::MakeResult(
      std::move(out_shape), std::move(out), "matmul", {a, b},
      [batch, m, k, n](Node& node) {
        Node* pa = node.parents[0].get();
        Node* pb = node.parents[1].get();
        for (std::size_t s = 0; s < batch; ++s) {
          const double* dy = node.grad.data() + s * m * n;
          if (pa->requires_grad) {
            GemmNT(m, n, k, dy, pb->value.data() + s * k * n,
                   pa->EnsureGrad().data() + s * m * k);
          }
          if (pb->requires_grad) {
            GemmTN(m, k, n, pa->value.data() + s * m * k, dy,
                   pb->EnsureGrad().data() + s * k * n);
          }
        }
      });
}

Tensor Permute(const Tensor& a, const std::vector<std::size_t>& order) {
  const std::size_t r = a.rank();
  if (order.size() != r) throw ShapeError("permute", "order rank mismatch");
  std::vector<bool> used(r, false);
  for (auto o : order) {
    if (o >= r || used[o]) throw ShapeError("permute", "invalid axis order");
    used[o] = true;
  }
  const Shape& in_shape = a.shape();
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = in_shape[order[i]];
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  // Source offset for each output element, shared by forward and backward.
  auto gather = std::make_shared<std::vector<std::size_t>>(a.numel());
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t lin = 0; lin < a.numel(); ++lin) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < r; ++i) off += idx[i] * in_strides[order[i]];
    (*gather)[lin] = off;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[(*gather)[i]];
  return Tensor::MakeResult(std::move(out_shape), std::move(out), "permute", {a},
                            [gather](Node& n) {
                              if (Node* p = Target(n, 0)) {
                                auto& g = p->EnsureGrad();
                                for (std::size_t i = 0; i < n.grad.size(); ++i)
                                  g[(*gather)[i]] += n.grad[i];
                              }
                            });
}

Tensor Transpose(const Tensor& a, std::size_t axis0, std::size_t axis1) {
  RequireAxis("transpose", a, axis0);
  RequireAxis("transpose", a, axis1);
  std::vector<std::size_t> order(a.rank());
  std::iota(order.begin(), order.end(), 0);
  std::swap(order[axis0], order[axis1]);
  return Permute(a, order);
}

Tensor Transpose(const Tensor& a) {
  if (a.rank() < 2) throw ShapeError("transpose", "rank < 2: " + ShapeToString(a.shape()));
  return Transpose(a, a.rank() - 2, a.rank() - 1);
}

Tensor Reshape(const Tensor& a, Shape shape) {
  if (NumElements(shape) != a.numel()) throw ShapeError("reshape", a.shape(), shape);
  std::vector<double> out(a.data().begin(), a.data().end());
  return Tensor::MakeResult(std::move(shape), std::move(out), "reshape", {a},
                            [](Node& n) {
                              if (Node* p = Target(n, 0)) {
                                auto& g = p->EnsureGrad();
                                for (std::size_t i = 0; i < g.size(); ++i)
                                  g[i] += n.grad[i];
                              }
                            });
}

Tensor Concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat", "no inputs");
  RequireAxis("concat", parts[0], axis);
  Shape out_shape = parts[0].shape();
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != parts[0].rank()) throw ShapeError("concat", parts[0].shape(), p.shape());
    for (std::size_t i = 0; i < p.rank(); ++i) {
      if (i != axis && p.dim(i) != parts[0].dim(i)) {
        throw ShapeError("concat", parts[0].shape(), p.shape());
      }
    }
    out_shape[axis] += p.dim(axis);
  }
  const AxisSplit s = SplitAt(out_shape, axis);
  std::vector<std::size_t> lens;
  for (const auto& p : parts) lens.push_back(p.dim(axis));
  std::vector<double> out(NumElements(out_shape));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto src = parts[k].data();
    const std::size_t block = lens[k] * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(src.data() + o * block, block,
                  out.data() + o * s.len * s.inner + offset * s.inner);
    }
    offset += lens[k];
  }
  return Tensor::MakeResult(std::move(out_shape), std::move(out), "concat", parts,
                            [s, lens](Node& n) {
                              std::size_t offset = 0;
                              for (std::size_t k = 0; k < lens.size(); ++k) {
                                const std::size_t block = lens[k] * s.inner;
                                if (Node* p = Target(n, k)) {
                                  auto& g = p->EnsureGrad();
                                  for (std::size_t o = 0; o < s.outer; ++o) {
                                    const double* src = n.grad.data() + o * s.len * s.inner +
                                                        offset * s.inner;
                                    double* dst = g.data() + o * block;
                                    for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
                                  }
                                }
                                offset += lens[k];
                              }
                            });
}

Tensor Slice(const Tensor& a, std::size_t axis, std::size_t begin,
             std::size_t end) {
  RequireAxis("slice", a, axis);
  if (begin >= end || end > a.dim(axis)) {
    throw ShapeError("slice", "range [" + std::to_string(begin) + "," +
                                  std::to_string(end) + ") invalid for " +
                                  ShapeToString(a.shape()));
  }
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  return IndexSelect(a, axis, idx);
}

Tensor IndexSelect(const Tensor& a, std::size_t axis,
                   const std::vector<std::size_t>& indices) {
  RequireAxis("index_select", a, axis);
  if (indices.empty()) throw ShapeError("index_select", "empty index list");
  for (auto i : indices) {
    if (i >= a.dim(axis)) throw ShapeError("index_select", "index out of range");
  }
  const AxisSplit s = SplitAt(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape[axis] = indices.size();
  std::vector<double> out(NumElements(out_shape));
  const std::size_t m = indices.size();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t j = 0; j < m; ++j) {
      std::copy_n(a.data().data() + (o * s.len + indices[j]) * s.inner, s.inner,
                  out.data() + (o * m + j) * s.inner);
    }
  }
  return Tensor::MakeResult(std::move(out_shape), std::move(out), "index_select", {a},
                            [s, indices](Node& n) {
                              Node* p = Target(n, 0);
                              if (!p) return;
                              auto& g = p->EnsureGrad();
                              const std::size_t m = indices.size();
                              for (std::size_t o = 0; o < s.outer; ++o) {
                                for (std::size_t j = 0; j < m; ++j) {
                                  const double* src = n.grad.data() + (o * m + j) * s.inner;
                                  double* dst = g.data() + (o * s.len + indices[j]) * s.inner;
                                  for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
                                }
                              }
                            });
}

Tensor Relu(const Tensor& a) {
  return Unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor Sigmoid(const Tensor& a) {
  return Unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor Exp(const Tensor& a) {
  return Unary(
      "exp", a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor Log(const Tensor& a) {
  for (double v : a.data()) {
    if (!(v > 0.0)) throw std::domain_error("log: non-positive input " + std::to_string(v));
  }
  return Unary(
      "log", a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor Softmax(const Tensor& a, std::size_t axis) {
  RequireAxis("softmax", a, axis);
  const AxisSplit s = SplitAt(a.shape(), axis);
  std::vector<double> out(a.numel());
  auto in = a.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      double mx = in[base];
      for (std::size_t l = 1; l < s.len; ++l) mx = std::max(mx, in[base + l * s.inner]);
      double total = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) {
        const double e = std::exp(in[base + l * s.inner] - mx);
        out[base + l * s.inner] = e;
        total += e;
      }
      for (std::size_t l = 0; l < s.len; ++l) out[base + l * s.inner] /= total;
    }
  }
  return Tensor::MakeResult(a.shape(), std::move(out), "softmax", {a}, [s](Node& n) {
    Node* p = Target(n, 0);
    if (!p) return;
    auto& g = p->EnsureGrad();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.len * s.inner + i;
        double dot = 0.0;
        for (std::size_t l = 0; l < s.len; ++l) {
          dot += n.grad[base + l * s.inner] * n.value[base + l * s.inner];
        }
        for (std::size_t l = 0; l < s.len; ++l) {
          const std::size_t k = base + l * s.inner;
          g[k] += n.value[k] * (n.grad[k] - dot);
        }
      }
    }
  });
}

Tensor LogSoftmax(const Tensor& a, std::size_t axis) {
  RequireAxis("log_softmax", a, axis);
  const AxisSplit s = SplitAt(a.shape(), axis);
  std::vector<double> out(a.numel());
  auto in = a.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      double mx = in[base];
      for (std::size_t l = 1; l < s.len; ++l) mx = std::max(mx, in[base + l * s.inner]);
      double total = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) total += std::exp(in[base + l * s.inner] - mx);
      const double lse = mx + std::log(total);
      for (std::size_t l = 0; l < s.len; ++l) {
        out[base + l * s.inner] = in[base + l * s.inner] - lse;
      }
    }
  }
  return Tensor::MakeResult(a.shape(), std::move(out), "log_softmax", {a}, [s](Node& n) {
    Node* p = Target(n, 0);
    if (!p) return;
    auto& g = p->EnsureGrad();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.len * s.inner + i;
        double total = 0.0;
        for (std::size_t l = 0; l < s.len; ++l) total += n.grad[base + l * s.inner];
        for (std::size_t l = 0; l < s.len; ++l) {
          const std::size_t k = base + l * s.inner;
          g[k] += n.grad[k] - std::exp(n.value[k]) * total;
        }
      }
    }
  });
}

Tensor LayerNorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 double eps) {
  if (x.rank() < 1) throw ShapeError("layer_norm", "scalar input");
  const std::size_t c = x.shape().back();
  if (gamma.shape() != Shape{c}) throw ShapeError("layer_norm", x.shape(), gamma.shape());
  if (beta.shape() != Shape{c}) throw ShapeError("layer_norm", x.shape(), beta.shape());
  const std::size_t rows = x.numel() / c;
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  auto in = x.data();
  auto gm = gamma.data();
  auto bt = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.data() + r * c;
    double mean = 0.0;
    for (std::size_t j = 0; j < c; ++j) mean += row[j];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (row[j] - mean) * is;
      (*xhat)[r * c + j] = h;
      out[r * c + j] = gm[j] * h + bt[j];
    }
  }
  return Tensor::MakeResult(
      x.shape(), std::move(out), "layer_norm", {x, gamma, beta},
      [c, rows, xhat, inv_std](Node& n) {
        Node* px = Target(n, 0);
        Node* pg = Target(n, 1);
        Node* pb = Target(n, 2);
        const auto& gm = n.parents[1]->value;
        std::vector<double> dh(c);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* dy = n.grad.data() + r * c;
          const double* h = xhat->data() + r * c;
          if (pg) {
            auto& g = pg->EnsureGrad();
            for (std::size_t j = 0; j < c; ++j) g[j] += dy[j] * h[j];
          }
          if (pb) {
            auto& g = pb->EnsureGrad();
            for (std::size_t j = 0; j < c; ++j) g[j] += dy[j];
          }
          if (px) {
            double mean_dh = 0.0, mean_dh_h = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              dh[j] = dy[j] * gm[j];
              mean_dh += dh[j];
              mean_dh_h += dh[j] * h[j];
            }
            mean_dh /= static_cast<double>(c);
            mean_dh_h /= static_cast<double>(c);
            auto& g = px->EnsureGrad();
            const double is = (*inv_std)[r];
            for (std::size_t j = 0; j < c; ++j) {
              g[r * c + j] += is * (dh[j] - mean_dh - h[j] * mean_dh_h);
            }
          }
        }
      });
}

Tensor Linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || x.rank() < 1 || x.shape().back() != weight.dim(1)) {
    throw ShapeError("linear", x.shape(), weight.shape());
  }
  const std::size_t in = weight.dim(1);
  const std::size_t outc = weight.dim(0);
  const bool has_bias = bias.defined();
  if (has_bias && bias.shape() != Shape{outc}) {
    throw ShapeError("linear", weight.shape(), bias.shape());
  }
  const std::size_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = outc;
  std::vector<double> out(rows * outc, 0.0);
  if (has_bias) {
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(bias.data().data(), outc, out.data() + r * outc);
    }
  }
  GemmNT(rows, in, outc, x.data().data(), weight.data().data(), out.data());
  std::vector<Tensor> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return Tensor::MakeResult(
      std::move(out_shape), std::move(out), "linear", std::move(parents),
      [rows, in, outc, has_bias](Node& n) {
        Node* px = Target(n, 0);
        Node* pw = Target(n, 1);
        if (px) GemmNN(rows, outc, in, n.grad.data(), n.parents[1]->value.data(),
                       px->EnsureGrad().data());
        if (pw) GemmTN(rows, outc, in, n.grad.data(), n.parents[0]->value.data(),
                       pw->EnsureGrad().data());
        if (has_bias) {
          if (Node* pb = Target(n, 2)) {
            auto& g = pb->EnsureGrad();
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t o = 0; o < outc; ++o) g[o] += n.grad[r * outc + o];
            }
          }
        }
      });
}

Tensor Conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 3 || weight.rank() != 3 || weight.dim(1) != x.dim(2)) {
    throw ShapeError("conv1d", x.shape(), weight.shape());
  }
  const std::size_t b = x.dim(0), t = x.dim(1), cin = x.dim(2);
  const std::size_t cout = weight.dim(0), k = weight.dim(2);
  if (k % 2 == 0) throw ShapeError("conv1d", "kernel width must be odd, got " + std::to_string(k));
  const bool has_bias = bias.defined();
  if (has_bias && bias.shape() != Shape{cout}) {
    throw ShapeError("conv1d", weight.shape(), bias.shape());
  }
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
  // Tap-major copy of the kernel: taps[j] is a [Cout, Cin] matrix.
  auto taps = std::make_shared<std::vector<double>>(k * cout * cin);
  auto w = weight.data();
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t c = 0; c < cin; ++c)
      for (std::size_t j = 0; j < k; ++j)
        (*taps)[(j * cout + o) * cin + c] = w[(o * cin + c) * k + j];

  std::vector<double> out(b * t * cout, 0.0);
  auto in = x.data();
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t ti = 0; ti < t; ++ti) {
      double* y = out.data() + (s * t + ti) * cout;
      if (has_bias) std::copy_n(bias.data().data(), cout, y);
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(ti) + static_cast<std::ptrdiff_t>(j) - pad;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(t)) continue;
        GemmNT(1, cin, cout, in.data() + (s * t + src) * cin,
               taps->data() + j * cout * cin, y);
      }
    }
  }
  std::vector<Tensor> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return Tensor::MakeResult(
      {b, t, cout}, std::move(out), "conv1d", std::move(parents),
      [b, t, cin, cout, k, pad, has_bias, taps](Node& n) {
        Node* px = Target(n, 0);
        Node* pw = Target(n, 1);
        const auto& xv = n.parents[0]->value;
        std::vector<double> dtaps(pw ? k * cout * cin : 0, 0.0);
        for (std::size_t s = 0; s < b; ++s) {
          for (std::size_t ti = 0; ti < t; ++ti) {
            const double* dy = n.grad.data() + (s * t + ti) * cout;
            for (std::size_t j = 0; j < k; ++j) {
              const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(ti) + static_cast<std::ptrdiff_t>(j) - pad;
              if (src < 0 || src >= static_cast<std::ptrdiff_t>(t)) continue;
              if (px) GemmNN(1, cout, cin, dy, taps->data() + j * cout * cin,
                             px->EnsureGrad().data() + (s * t + src) * cin);
              if (pw) GemmTN(1, cout, cin, dy, xv.data() + (s * t + src) * cin,
                             dtaps.data() + j * cout * cin);
            }
          }
        }
        if (pw) {
          auto& g = pw->EnsureGrad();
          for (std::size_t o = 0; o < cout; ++o)
            for (std::size_t c = 0; c < cin; ++c)
              for (std::size_t j = 0; j < k; ++j)
                g[(o * cin + c) * k + j] += dtaps[(j * cout + o) * cin + c];
        }
        if (has_bias) {
          if (Node* pb = Target(n, 2)) {
            auto& g = pb->EnsureGrad();
            for (std::size_t r = 0; r < b * t; ++r)
              for (std::size_t o = 0; o < cout; ++o) g[o] += n.grad[r * cout + o];
          }
        }
      });
}

Tensor L2Normalize(const Tensor& x, double eps) {
  if (x.rank() < 1) throw ShapeError("l2_normalize", "scalar input");
  const std::size_t c = x.shape().back();
  const std::size_t rows = x.numel() / c;
  auto norms = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    for (std::size_t j = 0; j < c; ++j) ss += in[r * c + j] * in[r * c + j];
    const double nrm = std::sqrt(ss + eps);
    (*norms)[r] = nrm;
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = in[r * c + j] / nrm;
  }
  return Tensor::MakeResult(x.shape(), std::move(out), "l2_normalize", {x},
                            [c, rows, norms](Node& n) {
                              Node* p = Target(n, 0);
                              if (!p) return;
                              auto& g = p->EnsureGrad();
                              for (std::size_t r = 0; r < rows; ++r) {
                                const double* y = n.value.data() + r * c;
                                const double* dy = n.grad.data() + r * c;
                                double dot = 0.0;
                                for (std::size_t j = 0; j < c; ++j) dot += y[j] * dy[j];
                                for (std::size_t j = 0; j < c; ++j) {
                                  g[r * c + j] += (dy[j] - y[j] * dot) / (*norms)[r];
                                }
                              }
                            });
}

Tensor Sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return Tensor::MakeResult({1}, {total}, "sum", {a}, [](Node& n) {
    if (Node* p = Target(n, 0)) {
      auto& g = p->EnsureGrad();
      for (auto& v : g) v += n.grad[0];
    }
  });
}

Tensor Sum(const Tensor& a, std::size_t axis) {
  RequireAxis("sum", a, axis);
  const AxisSplit s = SplitAt(a.shape(), axis);
  Shape out_shape;
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (i != axis) out_shape.push_back(a.dim(i));
  }
  if (out_shape.empty()) out_shape.push_back(1);
  std::vector<double> out(s.outer * s.inner, 0.0);
  auto in = a.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t l = 0; l < s.len; ++l)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[o * s.inner + i] += in[(o * s.len + l) * s.inner + i];
  return Tensor::MakeResult(std::move(out_shape), std::move(out), "sum_axis", {a},
                            [s](Node& n) {
                              Node* p = Target(n, 0);
                              if (!p) return;
                              auto& g = p->EnsureGrad();
                              for (std::size_t o = 0; o < s.outer; ++o)
                                for (std::size_t l = 0; l < s.len; ++l)
                                  for (std::size_t i = 0; i < s.inner; ++i)
                                    g[(o * s.len + l) * s.inner + i] += n.grad[o * s.inner + i];
                            });
}

Tensor LogSumExp(const Tensor& a) {
  auto in = a.data();
  const double peak = *std::max_element(in.begin(), in.end());
  double total = 0.0;
  for (double v : in) total += std::exp(v - peak);
  const double lse = peak + std::log(total);
  return Tensor::MakeResult({1}, {lse}, "logsumexp", {a}, [](Node& n) {
    Node* p = Target(n, 0);
    if (!p) return;
    auto& g = p->EnsureGrad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += n.grad[0] * std::exp(p->value[i] - n.value[0]);
    }
  });
}

Tensor Mean(const Tensor& a) {
  return Scale(Sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor Mean(const Tensor& a, std::size_t axis) {
  RequireAxis("mean", a, axis);
  return Scale(Sum(a, axis), 1.0 / static_cast<double>(a.dim(axis)));
}

Tensor BinaryCrossEntropyWithLogits(const Tensor& logits, const Tensor& target) {
  RequireSameShape("bce_with_logits", logits, target);
  std::vector<double> out(logits.numel());
  auto x = logits.data();
  auto t = target.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::max(x[i], 0.0) - x[i] * t[i] + std::log1p(std::exp(-std::abs(x[i])));
  }
  // The target is a constant and is not recorded as a parent.
  auto tv = std::make_shared<std::vector<double>>(t.begin(), t.end());
  return Tensor::MakeResult(logits.shape(), std::move(out), "bce_with_logits", {logits},
                            [tv](Node& n) {
                              Node* p = Target(n, 0);
                              if (!p) return;
                              auto& g = p->EnsureGrad();
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                const double xv = p->value[i];
                                const double sig = xv >= 0.0 ? 1.0 / (1.0 + std::exp(-xv))
                                                             : std::exp(xv) / (1.0 + std::exp(xv));
                                g[i] += n.grad[i] * (sig - (*tv)[i]);
                              }
                            });
}

}  // namespace vidseg
