#include "vidseg/inference.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vidseg/association.h"
#include "vidseg/ops.h"

namespace vidseg {
namespace {

std::vector<double> SoftmaxRow(std::span<const double> logits) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(logits[i] - peak));
  for (auto& v : p) v /= z;
  return p;
}

}  // namespace

VideoResult AssembleVideo(const std::vector<Tensor>& mask_logits,
                          const std::vector<std::vector<double>>& probs) {
  if (mask_logits.empty()) throw std::invalid_argument("assemble_video: no frames");
  const std::size_t n = probs.size();
  std::vector<int> labels(n, -1);
  for (std::size_t s = 0; s < n; ++s) {
    const auto& p = probs[s];
    const int best = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    if (best != static_cast<int>(p.size()) - 1) labels[s] = best;
  }
  VideoResult out;
  for (const auto& frame : mask_logits) {
    if (frame.rank() != 2 || frame.dim(0) != n) {
      throw ShapeError("assemble_video", "mask logits must be [N, P] per frame");
    }
    const std::size_t pixels = frame.dim(1);
    const auto v = frame.data();
    std::vector<BinaryMask> slots(n, BinaryMask(pixels, 0));
    for (std::size_t k = 0; k < pixels; ++k) {
      int winner = -1;
      double top = 0.0;
      for (std::size_t s = 0; s < n; ++s) {
        if (labels[s] < 0 || v[s * pixels + k] <= top) continue;
        top = v[s * pixels + k];
        winner = static_cast<int>(s);
      }
      if (winner >= 0) slots[winner][k] = 1;
    }
    out.slot_masks.push_back(std::move(slots));
  }
  for (std::size_t s = 0; s < n; ++s) {
    if (labels[s] < 0) continue;
    TubePrediction tube;
    tube.label = labels[s];
    tube.score = probs[s][labels[s]];
    tube.identity = static_cast<int>(s);
    bool any = false;
    for (const auto& frame : out.slot_masks) {
      tube.masks.push_back(frame[s]);
      any = any || std::find(frame[s].begin(), frame[s].end(), 1) != frame[s].end();
    }
    if (any) out.tubes.push_back(std::move(tube));
  }
  return out;
}

Tensor StackOverTime(const std::vector<Tensor>& frames) {
  std::vector<Tensor> parts;
  for (const auto& f : frames) parts.push_back(Reshape(f, {f.dim(0), 1, f.dim(1)}));
  return parts.size() == 1 ? parts[0] : Concat(parts, 1);
}

Tensor StackFrames(const std::vector<Tensor>& frames) {
  std::vector<Tensor> parts;
  for (const auto& f : frames) parts.push_back(Reshape(f, {1, f.dim(0), f.dim(1)}));
  return parts.size() == 1 ? parts[0] : Concat(parts, 0);
}

VideoResult PredictOnline(const ReferringTracker& tracker,
                          const std::vector<ObjectQuerySet>& frames) {
  NoGradGuard no_grad;
  const TrackedVideo tracked = TrackVideo(tracker, frames);
  const std::size_t n = tracked.predictions.front().class_logits.dim(0);
  const std::size_t k1 = tracked.predictions.front().class_logits.dim(1);
  std::vector<std::vector<double>> probs(n, std::vector<double>(k1, 0.0));
  std::vector<Tensor> masks;
  for (const auto& pred : tracked.predictions) {
    masks.push_back(pred.mask_logits);
    const auto logits = pred.class_logits.data();
    for (std::size_t s = 0; s < n; ++s) {
      const auto p = SoftmaxRow(logits.subspan(s * k1, k1));
      for (std::size_t c = 0; c < k1; ++c) probs[s][c] += p[c] / static_cast<double>(frames.size());
    }
  }
  return AssembleVideo(masks, probs);
}

VideoResult PredictOffline(const ReferringTracker& tracker, const TemporalRefiner& refiner,
                           const std::vector<ObjectQuerySet>& frames) {
  NoGradGuard no_grad;
  const TrackedVideo tracked = TrackVideo(tracker, frames);
  std::vector<Tensor> seg, features;
  for (const auto& f : tracked.prematched) {
    seg.push_back(f.queries);
    features.push_back(f.pixel_features);
  }
  const TubeRepresentation tube = refiner.Refine(StackOverTime(tracked.q_rt), StackFrames(seg));
  const VideoLogits logits = refiner.Decode(tube, features);
  const std::size_t n = logits.class_logits.dim(0), k1 = logits.class_logits.dim(1);
  const std::size_t p = features.front().dim(1);
  std::vector<Tensor> masks;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    masks.push_back(Slice(logits.mask_logits, 1, t * p, (t + 1) * p));
  }
  std::vector<std::vector<double>> probs;
  for (std::size_t s = 0; s < n; ++s) {
    probs.push_back(SoftmaxRow(logits.class_logits.data().subspan(s * k1, k1)));
  }
  return AssembleVideo(masks, probs);
}

VideoResult PredictHeuristic(const std::vector<ObjectQuerySet>& frames) {
  const auto matched = PrematchVideo(frames);
  const std::size_t n = matched.front().class_logits.dim(0);
  const std::size_t k1 = matched.front().class_logits.dim(1);
  std::vector<std::vector<double>> probs(n, std::vector<double>(k1, 0.0));
  std::vector<Tensor> masks;
  for (const auto& f : matched) {
    masks.push_back(f.mask_logits);
    for (std::size_t s = 0; s < n; ++s) {
      const auto p = SoftmaxRow(f.class_logits.data().subspan(s * k1, k1));
      for (std::size_t c = 0; c < k1; ++c) probs[s][c] += p[c] / static_cast<double>(frames.size());
    }
  }
  return AssembleVideo(masks, probs);
}

}  // namespace vidseg
