// Video segmentation metrics: tube IoU, tube AP/AR, video panoptic quality,
// video consistency, and mean IoU.

#ifndef VIDSEG_METRICS_H_
#define VIDSEG_METRICS_H_

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vidseg/scene.h"

namespace vidseg {

using MaskSequence = std::vector<BinaryMask>;  // one mask per frame

struct TubePrediction {
  MaskSequence masks;
  int label = 0;
  double score = 1.0;
  int identity = -1;
};

// Frame-pooled IoU; two entirely empty tubes have IoU 1.
double TubeIou(const MaskSequence& a, const MaskSequence& b);

// Class-agnostic one-to-one matching of predicted to ground-truth tubes that
// maximizes total tube IoU; the mean matched IoU over ground-truth tubes, with
// unmatched ground truth scoring 0. No ground truth gives 1.
double TubeMiou(const std::vector<TubePrediction>& predictions,
                const std::vector<TubePrediction>& ground_truth);

struct MetricReport {
  std::string metric;
  double value = 0.0;
  // Components whose mean is `value`.
  std::map<std::string, double> breakdown;
  std::map<std::string, double> extras;

  nlohmann::json ToJson() const;
};

// Serializes reports keyed by metric name with sorted keys.
std::string ReportsToJson(const std::vector<MetricReport>& reports);

struct VideoTubes {
  std::vector<TubePrediction> predictions;
  std::vector<TubePrediction> ground_truth;
};

// COCO-style tube AP over IoU thresholds 0.50:0.05:0.95 with 101-point
// interpolation, averaged over classes present in the ground truth.
// Extras: ap50, ap75, ar1, ar10.
MetricReport VideoAp(const std::vector<VideoTubes>& videos);

inline const std::vector<std::size_t> kVpqWindows = {1, 2, 4, 6};

// Tubes must be disjoint within each frame. For each window size the video
// is cut into every run of that many consecutive frames; each run is scored
// with panoptic quality over tube segments (match at IoU > 0.5, averaged over
// classes present in the run) and runs are averaged. VPQ is the mean over
// window sizes. Extras: vpq_th and, when stuff classes are given, vpq_st.
MetricReport Vpq(const std::vector<TubePrediction>& predictions,
                 const std::vector<TubePrediction>& ground_truth,
                 const std::vector<std::size_t>& windows = kVpqWindows,
                 const std::set<int>& stuff_classes = {});

// Panoptic quality of a single frame (frame index into the tubes).
double FramePq(const std::vector<TubePrediction>& predictions,
               const std::vector<TubePrediction>& ground_truth, std::size_t frame,
               bool* defined = nullptr);

using SemanticVideo = std::vector<std::vector<int>>;  // [frame][pixel] class id

// Per-frame class maps; pixels outside every tube get `background`.
SemanticVideo SemanticMaps(const std::vector<TubePrediction>& tubes, std::size_t frames,
                           std::size_t pixels, int background);

// Mean over classes of the mean over k-frame windows of
// |(and_t GT_t) and (and_t Pred_t)| / |and_t GT_t|, counting only windows
// where the class's ground-truth intersection is nonempty.
MetricReport Mvc(const SemanticVideo& predictions, const SemanticVideo& ground_truth,
                 std::size_t k);

// Mean over ground-truth classes of video-pooled IoU.
MetricReport Miou(const SemanticVideo& predictions, const SemanticVideo& ground_truth);

std::vector<TubePrediction> GroundTruthTubes(const SyntheticVideo& video);

}  // namespace vidseg

#endif  // VIDSEG_METRICS_H_
