// Contrastive items for the segmenter, tracker and refiner stages, the
// similarity-gated momentum average, and the refiner's negative memory bank.

#ifndef VIDSEG_CONTRASTIVE_H_
#define VIDSEG_CONTRASTIVE_H_

#include <cstddef>
#include <deque>
#include <vector>

#include "vidseg/tensor.h"

namespace vidseg {

// Every embedding is a rank-1 tensor of length C.
struct ContrastiveItem {
  Tensor anchor;
  std::vector<Tensor> positives;
  std::vector<Tensor> negatives;

  bool degenerate() const { return positives.empty() || negatives.empty(); }
};

// Mean over non-degenerate items of
//   -log( sum_+ exp(v.k+) / (sum_+ exp(v.k+) + sum_- exp(v.k-)) ).
// Throws std::invalid_argument when no usable item remains.
Tensor ContrastiveLoss(const std::vector<ContrastiveItem>& items);

// Running Q_MA over the frames of one video. Row order is the identity order.
class MomentumAverage {
 public:
  // Q_MA at the first frame is the first frame itself.
  explicit MomentumAverage(const Tensor& first);

  // beta_i = max(0, mean over earlier frames of cos(q_i, q_i^t)),
  // Q_MA_i <- (1 - beta_i) Q_MA_i + beta_i q_i.
  void Update(const Tensor& q);

  const Tensor& average() const { return average_; }
  const std::vector<double>& beta() const { return beta_; }
  std::size_t frames_seen() const { return frames_; }

 private:
  Tensor average_;
  std::vector<double> beta_;
  std::vector<double> direction_sum_;  // sum of unit-normalized history rows
  std::size_t frames_ = 0;
};

struct BankEntry {
  std::vector<double> embedding;
  int label;
};

class MemoryBank {
 public:
  explicit MemoryBank(std::size_t capacity = 256);

  void Push(std::vector<double> embedding, int label);
  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<BankEntry>& entries() const { return entries_; }

 private:
  std::size_t capacity_;
  std::deque<BankEntry> entries_;
};

// Row i of each matrix belongs to the same identity. `matched[i]` marks rows
// carrying a ground-truth object; `in_prev[i]` says whether that object was
// present in the previous frame. `prev` may be undefined on the first frame.
std::vector<ContrastiveItem> BuildCiSegmenter(const Tensor& prev, const Tensor& cur,
                                              const Tensor& momentum,
                                              const std::vector<bool>& matched,
                                              const std::vector<bool>& in_prev);

// References of three consecutive frames; `prev` or `next` may be undefined at
// clip boundaries. Anchors are restricted to `active` rows when non-empty.
std::vector<ContrastiveItem> BuildCiTracker(const Tensor& prev, const Tensor& cur,
                                            const Tensor& next,
                                            const std::vector<bool>& active = {});

// q_tr: [N, T, C]. Rows with label < 0 serve only as negatives. Anchors are
// taken at the last frame; afterwards those anchors are pushed to the bank.
std::vector<ContrastiveItem> BuildCiRefiner(const Tensor& q_tr,
                                            const std::vector<int>& labels,
                                            MemoryBank& bank);

}  // namespace vidseg

#endif  // VIDSEG_CONTRASTIVE_H_
