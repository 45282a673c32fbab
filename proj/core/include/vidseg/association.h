// Identity-association accuracy of slot-based tracking output against a
// synthetic video's ground truth.

#ifndef VIDSEG_ASSOCIATION_H_
#define VIDSEG_ASSOCIATION_H_

#include <cstddef>
#include <vector>

#include "vidseg/scene.h"
#include "vidseg/tensor.h"

namespace vidseg {

inline constexpr double kClaimIou = 0.5;

struct AssociationCount {
  std::size_t correct = 0;
  std::size_t total = 0;

  double accuracy() const {
    return total == 0 ? 1.0 : static_cast<double>(correct) / static_cast<double>(total);
  }
  AssociationCount& operator+=(const AssociationCount& o) {
    correct += o.correct;
    total += o.total;
    return *this;
  }
};

// slot_masks[t][slot] is the binary mask a slot claims on frame t. Each frame
// slots and objects are paired by maximum IoU; a pair with IoU >= kClaimIou
// is a claim. An object's identity slot is the one claiming it on its first
// detectable frame. Every later detectable frame scores 1 when the identity
// slot claims the object again.
AssociationCount AssociationAccuracy(const SyntheticVideo& video,
                                     const std::vector<std::vector<BinaryMask>>& slot_masks);

// Thresholds [N, P] mask logits at zero.
std::vector<BinaryMask> MasksFromLogits(const Tensor& mask_logits);

double MaskIou(const BinaryMask& a, const BinaryMask& b);

}  // namespace vidseg

#endif  // VIDSEG_ASSOCIATION_H_
