#include "vidseg/nn.h"

#include <bit>
#include <cmath>
#include <stdexcept>

#include "vidseg/ops.h"

namespace vidseg {

Tensor ParameterSet::Add(const std::string& name, Tensor value) {
  if (!items_.emplace(name, value).second) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  return value;
}

Tensor ParameterSet::Get(const std::string& name) const {
  auto it = items_.find(name);
  if (it == items_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

std::size_t ParameterSet::TotalElements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items_) n += t.numel();
  return n;
}

void ParameterSet::ZeroGrad() {
  for (auto& [name, t] : items_) {
    Tensor handle = t;
    handle.ZeroGrad();
  }
}

void ParameterSet::AssignFrom(const ParameterSet& other) {
  if (other.items_.size() != items_.size()) {
    throw std::invalid_argument("parameter sets differ in size");
  }
  for (auto& [name, t] : items_) {
    const Tensor src = other.Get(name);
    if (src.shape() != t.shape()) {
      throw ShapeError("assign " + name, t.shape(), src.shape());
    }
    Tensor dst = t;
    std::copy(src.data().begin(), src.data().end(), dst.mutable_data().begin());
  }
}

void ParameterSet::ZeroValues() {
  for (auto& [name, t] : items_) {
    Tensor handle = t;
    for (auto& v : handle.mutable_data()) v = 0.0;
  }
}

std::uint64_t ParameterSet::Hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [name, t] : items_) {
    for (char c : name) mix(static_cast<unsigned char>(c));
    for (auto d : t.shape()) mix(d);
    for (double v : t.data()) mix(std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

Tensor XavierUniform(Shape shape, std::size_t fan_in, std::size_t fan_out,
                     Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(NumElements(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor::FromData(std::move(shape), std::move(values), true);
}

LinearLayer LinearLayer::Create(ParameterSet& params, const std::string& name,
                                std::size_t in, std::size_t out, Rng& rng,
                                bool zero_init) {
  LinearLayer layer;
  layer.weight = params.Add(name + ".weight",
                            zero_init ? Tensor::Zeros({out, in}, true)
                                      : XavierUniform({out, in}, in, out, rng));
  layer.bias = params.Add(name + ".bias", Tensor::Zeros({out}, true));
  return layer;
}

Tensor LinearLayer::operator()(const Tensor& x) const {
  return Linear(x, weight, bias);
}

LayerNormLayer LayerNormLayer::Create(ParameterSet& params,
                                      const std::string& name,
                                      std::size_t channels) {
  LayerNormLayer layer;
  layer.gamma = params.Add(name + ".gamma", Tensor::Full({channels}, 1.0, true));
  layer.beta = params.Add(name + ".beta", Tensor::Zeros({channels}, true));
  return layer;
}

Tensor LayerNormLayer::operator()(const Tensor& x) const {
  return LayerNorm(x, gamma, beta, eps);
}

MultiHeadAttention MultiHeadAttention::Create(ParameterSet& params,
                                              const std::string& name,
                                              std::size_t channels,
                                              std::size_t heads, Rng& rng,
                                              bool zero_output) {
  if (heads == 0 || channels % heads != 0) {
    throw std::invalid_argument(name + ": channels must be divisible by heads");
  }
  MultiHeadAttention attn;
  attn.heads = heads;
  attn.query = LinearLayer::Create(params, name + ".query", channels, channels, rng);
  attn.key = LinearLayer::Create(params, name + ".key", channels, channels, rng);
  attn.value = LinearLayer::Create(params, name + ".value", channels, channels, rng);
  attn.output = LinearLayer::Create(params, name + ".output", channels, channels,
                                    rng, zero_output);
  return attn;
}

namespace {

// [B, L, C] -> [B*H, L, C/H]
Tensor SplitHeads(const Tensor& x, std::size_t heads) {
  const std::size_t b = x.dim(0), l = x.dim(1), c = x.dim(2), d = c / heads;
  if (heads == 1) return x;
  Tensor t = Permute(Reshape(x, {b, l, heads, d}), {0, 2, 1, 3});
  return Reshape(t, {b * heads, l, d});
}

// [B*H, L, D] -> [B, L, H*D]
Tensor MergeHeads(const Tensor& x, std::size_t batch, std::size_t heads) {
  if (heads == 1) return x;
  const std::size_t l = x.dim(1), d = x.dim(2);
  Tensor t = Permute(Reshape(x, {batch, heads, l, d}), {0, 2, 1, 3});
  return Reshape(t, {batch, l, heads * d});
}

}  // namespace

Tensor MultiHeadAttention::operator()(const Tensor& q, const Tensor& k,
                                      const Tensor& v) const {
  if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3) {
    throw ShapeError("attention", "expected [B, L, C] inputs, got " +
                                      ShapeToString(q.shape()));
  }
  if (k.shape() != v.shape()) throw ShapeError("attention", k.shape(), v.shape());
  if (q.dim(0) != k.dim(0) || q.dim(2) != k.dim(2)) {
    throw ShapeError("attention", q.shape(), k.shape());
  }
  const std::size_t batch = q.dim(0);
  const std::size_t head_dim = q.dim(2) / heads;
  Tensor qh = SplitHeads(query(q), heads);
  Tensor kh = SplitHeads(key(k), heads);
  Tensor vh = SplitHeads(value(v), heads);
  Tensor scores = Scale(MatMul(qh, Transpose(kh)),
                        1.0 / std::sqrt(static_cast<double>(head_dim)));
  Tensor weights = Softmax(scores, 2);
  return output(MergeHeads(MatMul(weights, vh), batch, heads));
}

FeedForward FeedForward::Create(ParameterSet& params, const std::string& name,
                                std::size_t channels, std::size_t hidden_width,
                                Rng& rng, bool zero_output) {
  FeedForward ffn;
  ffn.hidden = LinearLayer::Create(params, name + ".hidden", channels, hidden_width, rng);
  ffn.output = LinearLayer::Create(params, name + ".output", hidden_width, channels,
                                   rng, zero_output);
  return ffn;
}

Tensor FeedForward::operator()(const Tensor& x) const {
  return output(Relu(hidden(x)));
}

Tensor SinusoidalPositions(std::size_t length, std::size_t channels) {
  std::vector<double> values(length * channels);
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t i = 0; i < channels; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) /
                                                static_cast<double>(channels));
      values[t * channels + i] = (i % 2 == 0) ? std::sin(t * freq) : std::cos(t * freq);
    }
  }
  return Tensor::FromData({length, channels}, std::move(values));
}

}  // namespace vidseg
