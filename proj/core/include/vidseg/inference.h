// Online (tracker only) and offline (tracker + refiner) video prediction.

#ifndef VIDSEG_INFERENCE_H_
#define VIDSEG_INFERENCE_H_

#include <vector>

#include "vidseg/metrics.h"
#include "vidseg/refiner.h"
#include "vidseg/scene.h"
#include "vidseg/tracker.h"

namespace vidseg {

struct VideoResult {
  // Per-frame, per-slot binary masks. Slots classified as background are
  // empty and every pixel belongs to at most one slot.
  std::vector<std::vector<BinaryMask>> slot_masks;
  // Tubes whose class is not background.
  std::vector<TubePrediction> tubes;
};

// Per-frame [N, P] mask logits and per-slot class probabilities to a
// VideoResult: background slots are dropped, and each pixel goes to the kept
// slot with the highest positive logit.
VideoResult AssembleVideo(const std::vector<Tensor>& mask_logits,
                          const std::vector<std::vector<double>>& probs);

// Stacks per-frame [N, C] tensors into [N, T, C].
Tensor StackOverTime(const std::vector<Tensor>& frames);
// Stacks per-frame [N, C] tensors into [T, N, C].
Tensor StackFrames(const std::vector<Tensor>& frames);

VideoResult PredictOnline(const ReferringTracker& tracker,
                          const std::vector<ObjectQuerySet>& frames);
VideoResult PredictOffline(const ReferringTracker& tracker, const TemporalRefiner& refiner,
                           const std::vector<ObjectQuerySet>& frames);

// Frames of the prematched segmenter alone, as the heuristic baseline sees
// them.
VideoResult PredictHeuristic(const std::vector<ObjectQuerySet>& frames);

}  // namespace vidseg

#endif  // VIDSEG_INFERENCE_H_
