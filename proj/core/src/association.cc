#include "vidseg/association.h"

#include <stdexcept>

#include "vidseg/hungarian.h"

namespace vidseg {

double MaskIou(const BinaryMask& a, const BinaryMask& b) {
  if (a.size() != b.size()) throw std::invalid_argument("mask_iou: size mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += a[i] & b[i];
    uni += a[i] | b[i];
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<BinaryMask> MasksFromLogits(const Tensor& mask_logits) {
  const std::size_t n = mask_logits.dim(0), p = mask_logits.dim(1);
  std::vector<BinaryMask> out(n, BinaryMask(p, 0));
  const auto v = mask_logits.data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < p; ++k) out[i][k] = v[i * p + k] > 0.0;
  return out;
}

AssociationCount AssociationAccuracy(const SyntheticVideo& video,
                                     const std::vector<std::vector<BinaryMask>>& slot_masks) {
  const std::size_t frames = video.frame_count(), objects = video.object_count();
  if (slot_masks.size() != frames) {
    throw std::invalid_argument("association: one slot mask set per frame required");
  }
  constexpr int kNone = -1;
  std::vector<int> identity(objects, kNone);
  std::vector<bool> started(objects, false);
  AssociationCount count;
  for (std::size_t t = 0; t < frames; ++t) {
    const auto& slots = slot_masks[t];
    CostMatrix cost(slots.size(), objects);
    for (std::size_t s = 0; s < slots.size(); ++s)
      for (std::size_t o = 0; o < objects; ++o) cost(s, o) = -MaskIou(slots[s], video.masks[t][o]);
    const std::vector<int> claim = Hungarian(cost).ColumnToRow(objects);
    for (std::size_t o = 0; o < objects; ++o) {
      if (!video.IsDetectable(t, o)) continue;
      const int s = claim[o];
      const bool claimed = s != Assignment::kUnassigned && -cost(s, o) >= kClaimIou;
      if (!started[o]) {
        started[o] = true;
        identity[o] = claimed ? s : kNone;
        continue;
      }
      ++count.total;
      if (claimed && s == identity[o]) ++count.correct;
    }
  }
  return count;
}

}  // namespace vidseg
