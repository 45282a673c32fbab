#include "vidseg/contrastive.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vidseg/ops.h"

namespace vidseg {
namespace {

Tensor Row(const Tensor& m, std::size_t i) {
  const std::size_t c = m.dim(1);
  return Reshape(Slice(m, 0, i, i + 1), {c});
}

Tensor Stack(const std::vector<Tensor>& vectors) {
  std::vector<Tensor> rows;
  rows.reserve(vectors.size());
  for (const auto& v : vectors) rows.push_back(Reshape(v, {1, v.numel()}));
  return rows.size() == 1 ? rows[0] : Concat(rows, 0);
}

void RequireMatrix(const Tensor& m, const char* what) {
  if (!m.defined() || m.rank() != 2) throw ShapeError(what, "expected an N x C matrix");
}

}  // namespace

Tensor ContrastiveLoss(const std::vector<ContrastiveItem>& items) {
  std::vector<Tensor> losses;
  for (const auto& item : items) {
    if (item.degenerate()) continue;
    const std::size_t c = item.anchor.numel();
    const Tensor v = Reshape(item.anchor, {c, 1});
    const Tensor pos = MatMul(Stack(item.positives), v);
    const Tensor neg = MatMul(Stack(item.negatives), v);
    losses.push_back(Sub(LogSumExp(Concat({pos, neg}, 0)), LogSumExp(pos)));
  }
  if (losses.empty()) {
    throw std::invalid_argument("contrastive loss: every item lacks a positive or a negative");
  }
  return Mean(losses.size() == 1 ? losses[0] : Concat(losses, 0));
}

MomentumAverage::MomentumAverage(const Tensor& first) {
  RequireMatrix(first, "momentum_average");
  average_ = first.Detach();
  const std::size_t n = first.dim(0), c = first.dim(1);
  beta_.assign(n, 0.0);
  direction_sum_.assign(n * c, 0.0);
  frames_ = 0;
  Update(first);
}

void MomentumAverage::Update(const Tensor& q) {
  RequireMatrix(q, "momentum_average");
  if (q.shape() != average_.shape()) throw ShapeError("momentum_average", q.shape(), average_.shape());
  const std::size_t n = q.dim(0), c = q.dim(1);
  const auto x = q.data();
  std::vector<double> avg(average_.data().begin(), average_.data().end());
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0.0;
    for (std::size_t k = 0; k < c; ++k) norm += x[i * c + k] * x[i * c + k];
    norm = std::sqrt(norm);
    if (frames_ > 0) {
      double dot = 0.0;
      if (norm > 0.0) {
        for (std::size_t k = 0; k < c; ++k) dot += x[i * c + k] * direction_sum_[i * c + k];
        dot /= norm;
      }
      const double beta = std::clamp(dot / static_cast<double>(frames_), 0.0, 1.0);
      beta_[i] = beta;
      for (std::size_t k = 0; k < c; ++k) {
        avg[i * c + k] = (1.0 - beta) * avg[i * c + k] + beta * x[i * c + k];
      }
    }
    if (norm > 0.0) {
      for (std::size_t k = 0; k < c; ++k) direction_sum_[i * c + k] += x[i * c + k] / norm;
    }
  }
  average_ = Tensor::FromData(q.shape(), std::move(avg));
  ++frames_;
}

MemoryBank::MemoryBank(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("memory bank capacity must be >= 1");
}

void MemoryBank::Push(std::vector<double> embedding, int label) {
  entries_.push_back({std::move(embedding), label});
  while (entries_.size() > capacity_) entries_.pop_front();
}

std::vector<ContrastiveItem> BuildCiSegmenter(const Tensor& prev, const Tensor& cur,
                                              const Tensor& momentum,
                                              const std::vector<bool>& matched,
                                              const std::vector<bool>& in_prev) {
  RequireMatrix(cur, "build_ci_segmenter");
  const std::size_t n = cur.dim(0);
  if (matched.size() != n || (prev.defined() && in_prev.size() != n)) {
    throw std::invalid_argument("build_ci_segmenter: flag vectors must have N entries");
  }
  std::vector<ContrastiveItem> items;
  if (n < 2) return items;
  for (std::size_t i = 0; i < n; ++i) {
    if (!matched[i]) continue;
    ContrastiveItem item;
    item.anchor = Row(cur, i);
    if (prev.defined() && in_prev[i]) item.positives.push_back(Row(prev, i));
    item.positives.push_back(Row(momentum, i));
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) item.negatives.push_back(Row(cur, j));
    }
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<ContrastiveItem> BuildCiTracker(const Tensor& prev, const Tensor& cur,
                                            const Tensor& next,
                                            const std::vector<bool>& active) {
  RequireMatrix(cur, "build_ci_tracker");
  const std::size_t n = cur.dim(0);
  std::vector<ContrastiveItem> items;
  if (n < 2) return items;
  for (std::size_t i = 0; i < n; ++i) {
    if (!active.empty() && !active.at(i)) continue;
    ContrastiveItem item;
    item.anchor = Row(cur, i);
    if (prev.defined()) item.positives.push_back(Row(prev, i));
    if (next.defined()) item.positives.push_back(Row(next, i));
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) item.negatives.push_back(Row(cur, j));
    }
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<ContrastiveItem> BuildCiRefiner(const Tensor& q_tr,
                                            const std::vector<int>& labels,
                                            MemoryBank& bank) {
  if (!q_tr.defined() || q_tr.rank() != 3) {
    throw ShapeError("build_ci_refiner", "expected [N, T, C]");
  }
  const std::size_t n = q_tr.dim(0), t = q_tr.dim(1), c = q_tr.dim(2);
  if (labels.size() != n) throw std::invalid_argument("build_ci_refiner: one label per row");
  auto at = [&](std::size_t i, std::size_t f) {
    return Reshape(Slice(Slice(q_tr, 0, i, i + 1), 1, f, f + 1), {c});
  };
  std::vector<Tensor> anchors(n);
  for (std::size_t i = 0; i < n; ++i) anchors[i] = at(i, t - 1);

  std::vector<ContrastiveItem> items;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0) continue;
    ContrastiveItem item;
    item.anchor = anchors[i];
    for (std::size_t f = 0; f + 1 < t; ++f) item.positives.push_back(at(i, f));
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) item.negatives.push_back(anchors[j]);
    }
    for (const auto& entry : bank.entries()) {
      if (entry.label == labels[i]) {
        item.negatives.push_back(Tensor::FromData({c}, entry.embedding));
      }
    }
    items.push_back(std::move(item));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0) continue;
    const auto d = anchors[i].data();
    bank.Push(std::vector<double>(d.begin(), d.end()), labels[i]);
  }
  return items;
}

}  // namespace vidseg
