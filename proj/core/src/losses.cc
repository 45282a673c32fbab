#include "vidseg/losses.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vidseg/ops.h"

namespace vidseg {
namespace {

double StableSigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

Tensor MaskTensor(const std::vector<const BinaryMask*>& masks, std::size_t pixels) {
  std::vector<double> values;
  values.reserve(masks.size() * pixels);
  for (const BinaryMask* m : masks) {
    if (m->size() != pixels) {
      throw ShapeError("mask target", Shape{m->size()}, Shape{pixels});
    }
    for (auto v : *m) values.push_back(v ? 1.0 : 0.0);
  }
  return Tensor::FromData({masks.size(), pixels}, std::move(values));
}

// Per-row dice over [M, P] logits and targets, averaged over rows.
Tensor RowDice(const Tensor& logits, const Tensor& target) {
  const std::size_t rows = logits.dim(0);
  const Tensor p = Sigmoid(logits);
  const Tensor inter = Sum(Mul(p, target), 1);
  const Tensor p_sum = Sum(p, 1);
  std::vector<double> g_sum(rows, 0.0);
  const std::size_t cols = target.dim(1);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) g_sum[r] += target.data()[r * cols + c];
  for (auto& v : g_sum) v += kDiceSmoothing;
  const Tensor num = AddScalar(Scale(inter, 2.0), kDiceSmoothing);
  const Tensor den = Add(p_sum, Tensor::FromData({rows}, std::move(g_sum)));
  return AddScalar(Scale(Mean(Div(num, den)), -1.0), 1.0);
}

}  // namespace

void LossWeights::Validate() const {
  if (contrastive < 0 || classification < 0 || dice < 0 || mask_ce < 0) {
    throw std::invalid_argument("loss weights must be nonnegative");
  }
}

Tensor DiceLoss(const Tensor& logits, const Tensor& target) {
  if (logits.shape() != target.shape()) throw ShapeError("dice_loss", logits.shape(), target.shape());
  return RowDice(Reshape(logits, {1, logits.numel()}), Reshape(target, {1, target.numel()}));
}

Tensor MaskCrossEntropy(const Tensor& logits, const Tensor& target) {
  return Mean(BinaryCrossEntropyWithLogits(logits, target));
}

Tensor ClassificationLoss(const Tensor& class_logits, const std::vector<int>& targets,
                          double background_weight) {
  if (class_logits.rank() != 2 || class_logits.dim(0) != targets.size()) {
    throw ShapeError("classification_loss", "expected one target per logit row, got " +
                                                ShapeToString(class_logits.shape()));
  }
  const std::size_t n = class_logits.dim(0), k1 = class_logits.dim(1);
  const int background = static_cast<int>(k1) - 1;
  std::vector<std::size_t> picks(n);
  std::vector<double> w(n);
  double total_weight = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] < 0 || targets[i] > background) {
      throw std::out_of_range("classification_loss: class index out of range");
    }
    picks[i] = i * k1 + static_cast<std::size_t>(targets[i]);
    w[i] = targets[i] == background ? background_weight : 1.0;
    total_weight += w[i];
  }
  const Tensor log_probs = Reshape(LogSoftmax(class_logits, 1), {n * k1});
  const Tensor picked = IndexSelect(log_probs, 0, picks);
  return Scale(Sum(Mul(picked, Tensor::FromData({n}, std::move(w)))), -1.0 / total_weight);
}

double DiceCost(std::span<const double> mask_logits, const BinaryMask& gt_mask) {
  if (mask_logits.size() != gt_mask.size()) {
    throw ShapeError("dice_cost", Shape{mask_logits.size()}, Shape{gt_mask.size()});
  }
  double inter = 0.0, p_sum = 0.0, g_sum = 0.0;
  for (std::size_t i = 0; i < gt_mask.size(); ++i) {
    const double p = StableSigmoid(mask_logits[i]);
    inter += p * gt_mask[i];
    p_sum += p;
    g_sum += gt_mask[i];
  }
  return 1.0 - (2.0 * inter + kDiceSmoothing) / (p_sum + g_sum + kDiceSmoothing);
}

double MaskCrossEntropyCost(std::span<const double> mask_logits, const BinaryMask& gt_mask) {
  if (mask_logits.size() != gt_mask.size()) {
    throw ShapeError("mask_ce_cost", Shape{mask_logits.size()}, Shape{gt_mask.size()});
  }
  double total = 0.0;
  for (std::size_t i = 0; i < gt_mask.size(); ++i) {
    const double x = mask_logits[i];
    total += std::max(x, 0.0) - x * gt_mask[i] + std::log1p(std::exp(-std::abs(x)));
  }
  return total / static_cast<double>(gt_mask.size());
}

double MatchCost(std::span<const double> class_logits, std::span<const double> mask_logits,
                 int gt_class, const BinaryMask& gt_mask, const LossWeights& weights) {
  if (gt_class < 0 || static_cast<std::size_t>(gt_class) >= class_logits.size()) {
    throw std::out_of_range("match_cost: class index out of range");
  }
  const double peak = *std::max_element(class_logits.begin(), class_logits.end());
  double z = 0.0;
  for (double v : class_logits) z += std::exp(v - peak);
  const double prob = std::exp(class_logits[gt_class] - peak) / z;
  return -weights.classification * prob +
         weights.mask_ce * MaskCrossEntropyCost(mask_logits, gt_mask) +
         weights.dice * DiceCost(mask_logits, gt_mask);
}

CostMatrix MatchCostMatrix(const FramePrediction& pred, const FrameTarget& target,
                           const LossWeights& weights) {
  const std::size_t n = pred.class_logits.dim(0), k1 = pred.class_logits.dim(1);
  const std::size_t p = pred.mask_logits.dim(1);
  const std::size_t m = target.classes.size();
  CostMatrix cost(n, m);
  const auto cls = pred.class_logits.data();
  const auto masks = pred.mask_logits.data();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t g = 0; g < m; ++g) {
      cost(r, g) = MatchCost(cls.subspan(r * k1, k1), masks.subspan(r * p, p),
                             target.classes[g], target.masks[g], weights);
    }
  }
  return cost;
}

Tensor SegmenterLoss(const FramePrediction& pred, const FrameTarget& target,
                     const Assignment& assignment,
                     const std::vector<ContrastiveItem>& contrastive_items,
                     const LossWeights& weights, LossBreakdown* breakdown) {
  const std::size_t n = pred.class_logits.dim(0);
  const int background = static_cast<int>(pred.class_logits.dim(1)) - 1;
  if (assignment.row_to_col.size() != n || pred.mask_logits.dim(0) != n) {
    throw std::invalid_argument("segmenter_loss: assignment must cover every prediction row");
  }
  std::vector<int> class_targets(n, background);
  std::vector<std::size_t> rows;
  std::vector<const BinaryMask*> masks;
  for (std::size_t r = 0; r < n; ++r) {
    const int g = assignment.row_to_col[r];
    if (g == Assignment::kUnassigned) continue;
    class_targets[r] = target.classes.at(g);
    rows.push_back(r);
    masks.push_back(&target.masks.at(g));
  }

  const Tensor cls = ClassificationLoss(pred.class_logits, class_targets);
  Tensor total = Scale(cls, weights.classification);
  LossBreakdown parts;
  parts.classification = cls.item();
  if (!rows.empty()) {
    const Tensor logits = IndexSelect(pred.mask_logits, 0, rows);
    const Tensor goal = MaskTensor(masks, pred.mask_logits.dim(1));
    const Tensor dice = RowDice(logits, goal);
    const Tensor ce = MaskCrossEntropy(logits, goal);
    total = Add(total, Add(Scale(dice, weights.dice), Scale(ce, weights.mask_ce)));
    parts.dice = dice.item();
    parts.mask_ce = ce.item();
  }
  bool any_item = false;
  for (const auto& item : contrastive_items) any_item = any_item || !item.degenerate();
  if (any_item) {
    const Tensor cl = ContrastiveLoss(contrastive_items);
    total = Add(total, Scale(cl, weights.contrastive));
    parts.contrastive = cl.item();
  }
  parts.total = total.item();
  if (breakdown) *breakdown = parts;
  return total;
}

std::size_t ClipTarget::FirstAppearance(std::size_t object) const {
  for (std::size_t t = 0; t < masks.size(); ++t) {
    const auto& m = masks[t].at(object);
    if (std::find(m.begin(), m.end(), 1) != m.end()) return t;
  }
  return masks.size();
}

ClipTarget MakeClipTarget(const SyntheticVideo& video, std::size_t begin, std::size_t end) {
  if (begin >= end || end > video.frame_count()) {
    throw std::out_of_range("clip [" + std::to_string(begin) + ", " + std::to_string(end) +
                            ") outside video of " + std::to_string(video.frame_count()) +
                            " frames");
  }
  ClipTarget clip;
  clip.classes = video.classes;
  clip.masks.assign(video.masks.begin() + begin, video.masks.begin() + end);
  return clip;
}

Assignment TrackerMatching(const std::vector<FramePrediction>& tracker_preds,
                           const ClipTarget& target, std::size_t iteration,
                           std::size_t max_iteration,
                           const std::vector<FramePrediction>& segmenter_preds,
                           const LossWeights& weights, TrackerMatchingTrace* trace) {
  const bool use_tracker = 2 * iteration >= max_iteration;
  const auto& source = use_tracker ? tracker_preds : segmenter_preds;
  const std::size_t frames = target.frame_count();
  if (source.size() != frames) {
    throw std::invalid_argument("tracker_matching: one prediction per frame required");
  }
  const std::size_t n = source.front().class_logits.dim(0);
  const std::size_t objects = target.object_count();
  Assignment result;
  result.row_to_col.assign(n, Assignment::kUnassigned);
  TrackerMatchingTrace local;
  local.used_segmenter = !use_tracker;
  local.match_frame.assign(objects, frames);

  std::vector<std::size_t> first(objects);
  for (std::size_t g = 0; g < objects; ++g) first[g] = target.FirstAppearance(g);
  for (std::size_t t = 0; t < frames; ++t) {
    std::vector<std::size_t> cols;
    for (std::size_t g = 0; g < objects; ++g) {
      if (first[g] == t) cols.push_back(g);
    }
    if (cols.empty()) continue;
    std::vector<std::size_t> free_rows;
    for (std::size_t r = 0; r < n; ++r) {
      if (result.row_to_col[r] == Assignment::kUnassigned) free_rows.push_back(r);
    }
    FrameTarget frame_target;
    for (std::size_t g : cols) {
      frame_target.classes.push_back(target.classes[g]);
      frame_target.masks.push_back(target.masks[t][g]);
    }
    const CostMatrix full = MatchCostMatrix(source[t], frame_target, weights);
    CostMatrix cost(free_rows.size(), cols.size());
    for (std::size_t i = 0; i < free_rows.size(); ++i)
      for (std::size_t j = 0; j < cols.size(); ++j) cost(i, j) = full(free_rows[i], j);
    const Assignment a = Hungarian(cost);
    for (std::size_t i = 0; i < free_rows.size(); ++i) {
      if (a.row_to_col[i] == Assignment::kUnassigned) continue;
      const std::size_t g = cols[a.row_to_col[i]];
      result.row_to_col[free_rows[i]] = static_cast<int>(g);
      result.total_cost += cost(i, a.row_to_col[i]);
    }
    for (std::size_t g : cols) local.match_frame[g] = t;
  }
  if (trace) *trace = std::move(local);
  return result;
}

std::vector<FrameTarget> TrackerFrameTargets(const ClipTarget& target,
                                             const Assignment& assignment,
                                             std::vector<Assignment>* frame_assignments) {
  const std::size_t frames = target.frame_count();
  std::vector<std::size_t> first(target.object_count());
  for (std::size_t g = 0; g < first.size(); ++g) first[g] = target.FirstAppearance(g);
  std::vector<FrameTarget> out(frames);
  if (frame_assignments) frame_assignments->assign(frames, {});
  for (std::size_t t = 0; t < frames; ++t) {
    Assignment a;
    a.row_to_col.assign(assignment.row_to_col.size(), Assignment::kUnassigned);
    for (std::size_t r = 0; r < assignment.row_to_col.size(); ++r) {
      const int g = assignment.row_to_col[r];
      if (g == Assignment::kUnassigned || t < first.at(g)) continue;
      a.row_to_col[r] = static_cast<int>(out[t].classes.size());
      out[t].classes.push_back(target.classes[g]);
      out[t].masks.push_back(target.masks[t][g]);
    }
    if (frame_assignments) (*frame_assignments)[t] = std::move(a);
  }
  return out;
}

Tensor TrackerLoss(const std::vector<FramePrediction>& preds, const ClipTarget& target,
                   const Assignment& assignment, const LossWeights& weights,
                   LossBreakdown* breakdown) {
  if (preds.size() != target.frame_count() || preds.empty()) {
    throw std::invalid_argument("tracker_loss: one prediction per frame required");
  }
  std::vector<Assignment> per_frame;
  const auto targets = TrackerFrameTargets(target, assignment, &per_frame);
  Tensor total;
  LossBreakdown sum;
  for (std::size_t t = 0; t < preds.size(); ++t) {
    LossBreakdown part;
    Tensor frame = SegmenterLoss(preds[t], targets[t], per_frame[t], {}, weights, &part);
    total = total.defined() ? Add(total, frame) : frame;
    sum.classification += part.classification;
    sum.dice += part.dice;
    sum.mask_ce += part.mask_ce;
  }
  sum.total = total.item();
  if (breakdown) *breakdown = sum;
  return total;
}

FrameTarget StackClipTarget(const ClipTarget& target) {
  FrameTarget stacked;
  for (std::size_t g = 0; g < target.object_count(); ++g) {
    if (target.FirstAppearance(g) == target.frame_count()) continue;
    BinaryMask mask;
    for (const auto& frame : target.masks) {
      mask.insert(mask.end(), frame[g].begin(), frame[g].end());
    }
    stacked.classes.push_back(target.classes[g]);
    stacked.masks.push_back(std::move(mask));
  }
  return stacked;
}

Tensor RefinerLoss(const VideoLogits& pred, const ClipTarget& target,
                   const std::vector<ContrastiveItem>& contrastive_items,
                   const LossWeights& weights, Assignment* assignment,
                   LossBreakdown* breakdown) {
  const FrameTarget stacked = StackClipTarget(target);
  const FramePrediction frame{pred.class_logits, pred.mask_logits};
  const Assignment match = Hungarian(MatchCostMatrix(frame, stacked, weights));
  if (assignment) *assignment = match;
  return SegmenterLoss(frame, stacked, match, contrastive_items, weights, breakdown);
}

}  // namespace vidseg
