#ifndef VIDSEG_TESTS_METRIC_ORACLES_H_
#define VIDSEG_TESTS_METRIC_ORACLES_H_

#include <algorithm>
#include <set>
#include <utility>
#include <vector>

#include "vidseg/metrics.h"

namespace vidseg::testing {

// Independent tube AP: per class and threshold, detections ranked by score,
// each claiming the best still-free ground truth in its own video, and the
// precision envelope sampled at 101 recall points.
inline double OracleAp(const std::vector<VideoTubes>& videos) {
  std::set<int> classes;
  for (const auto& v : videos)
    for (const auto& g : v.ground_truth) classes.insert(g.label);
  if (classes.empty()) return 0.0;
  double total = 0;
  for (int c : classes) {
    for (int ti = 0; ti < 10; ++ti) {
      const double thr = (50.0 + 5.0 * ti) / 100.0;
      std::vector<std::pair<double, bool>> hits;
      std::size_t positives = 0;
      for (const auto& v : videos) {
        std::vector<std::size_t> preds;
        for (std::size_t i = 0; i < v.predictions.size(); ++i)
          if (v.predictions[i].label == c) preds.push_back(i);
        std::stable_sort(preds.begin(), preds.end(), [&](auto a, auto b) {
          return v.predictions[a].score > v.predictions[b].score;
        });
        std::vector<bool> used(v.ground_truth.size(), false);
        for (const auto& g : v.ground_truth) positives += g.label == c;
        for (std::size_t i : preds) {
          int best = -1;
          double best_iou = -1;
          for (std::size_t g = 0; g < v.ground_truth.size(); ++g) {
            if (used[g] || v.ground_truth[g].label != c) continue;
            const double iou = TubeIou(v.predictions[i].masks, v.ground_truth[g].masks);
            if (iou >= thr && iou > best_iou) {
              best_iou = iou;
              best = static_cast<int>(g);
            }
          }
          if (best >= 0) used[best] = true;
          hits.push_back({v.predictions[i].score, best >= 0});
        }
      }
      std::stable_sort(hits.begin(), hits.end(),
                       [](const auto& a, const auto& b) { return a.first > b.first; });
      std::vector<double> prec, rec;
      std::size_t tp = 0;
      for (std::size_t i = 0; i < hits.size(); ++i) {
        tp += hits[i].second;
        prec.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
        rec.push_back(static_cast<double>(tp) / static_cast<double>(positives));
      }
      double ap = 0;
      for (int r = 0; r <= 100; ++r) {
        double best = 0;
        for (std::size_t i = 0; i < prec.size(); ++i)
          if (rec[i] >= r / 100.0) best = std::max(best, prec[i]);
        ap += best;
      }
      total += ap / 101.0;
    }
  }
  return total / (10.0 * static_cast<double>(classes.size()));
}

}  // namespace vidseg::testing

#endif  // VIDSEG_TESTS_METRIC_ORACLES_H_
