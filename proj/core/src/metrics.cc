#include "vidseg/metrics.h"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <numeric>
#include <stdexcept>

#include "vidseg/hungarian.h"

namespace vidseg {
namespace {

constexpr std::size_t kMaxDetections = 100;
constexpr int kThresholdCount = 10;
constexpr int kRecallPoints = 101;

double Threshold(int i) { return (50.0 + 5.0 * i) / 100.0; }

std::string ThresholdKey(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "iou_%.2f", Threshold(i));
  return buf;
}

std::size_t FrameCount(const std::vector<TubePrediction>& tubes) {
  return tubes.empty() ? 0 : tubes.front().masks.size();
}

bool Empty(const BinaryMask& m) { return std::find(m.begin(), m.end(), 1) == m.end(); }

void RequireDisjoint(const std::vector<TubePrediction>& tubes, const char* what) {
  const std::size_t frames = FrameCount(tubes);
  for (std::size_t t = 0; t < frames; ++t) {
    std::vector<std::uint8_t> used;
    for (const auto& tube : tubes) {
      if (tube.masks.size() != frames) {
        throw std::invalid_argument(std::string(what) + ": tubes differ in frame count");
      }
      const auto& m = tube.masks[t];
      if (used.empty()) used.assign(m.size(), 0);
      if (m.size() != used.size()) {
        throw std::invalid_argument(std::string(what) + ": masks differ in size");
      }
      for (std::size_t p = 0; p < m.size(); ++p) {
        if (m[p] && used[p]) {
          throw std::invalid_argument(std::string(what) + ": overlapping segments in frame " +
                                      std::to_string(t));
        }
        used[p] |= m[p];
      }
    }
  }
}

struct Segment {
  int label;
  std::vector<const BinaryMask*> frames;
};

// Tubes restricted to [begin, begin + length); tubes without a pixel in the
// window are dropped.
std::vector<Segment> WindowSegments(const std::vector<TubePrediction>& tubes, std::size_t begin,
                                    std::size_t length) {
  std::vector<Segment> out;
  for (const auto& tube : tubes) {
    Segment s{tube.label, {}};
    bool any = false;
    for (std::size_t t = begin; t < begin + length; ++t) {
      s.frames.push_back(&tube.masks[t]);
      any = any || !Empty(tube.masks[t]);
    }
    if (any) out.push_back(std::move(s));
  }
  return out;
}

double SegmentIou(const Segment& a, const Segment& b) {
  std::size_t inter = 0, uni = 0;
  for (std::size_t t = 0; t < a.frames.size(); ++t) {
    const auto& x = *a.frames[t];
    const auto& y = *b.frames[t];
    for (std::size_t p = 0; p < x.size(); ++p) {
      inter += x[p] & y[p];
      uni += x[p] | y[p];
    }
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Panoptic quality of one window averaged over the classes that occur in it
// (restricted to `keep`). Returns false when no class occurs.
bool WindowPq(const std::vector<Segment>& preds, const std::vector<Segment>& gts,
              const std::function<bool(int)>& keep, double* pq) {
  std::set<int> classes;
  for (const auto& s : preds) if (keep(s.label)) classes.insert(s.label);
  for (const auto& s : gts) if (keep(s.label)) classes.insert(s.label);
  if (classes.empty()) return false;
  double total = 0.0;
  for (int c : classes) {
    double iou_sum = 0.0;
    std::size_t tp = 0, pred_count = 0, gt_count = 0;
    for (const auto& g : gts) gt_count += g.label == c;
    for (const auto& p : preds) {
      if (p.label != c) continue;
      ++pred_count;
      for (const auto& g : gts) {
        if (g.label != c) continue;
        const double iou = SegmentIou(p, g);
        // Disjoint segments admit at most one partner above one half.
        if (iou > 0.5) {
          iou_sum += iou;
          ++tp;
          break;
        }
      }
    }
    const double fp = static_cast<double>(pred_count - tp);
    const double fn = static_cast<double>(gt_count - tp);
    total += iou_sum / (static_cast<double>(tp) + 0.5 * fp + 0.5 * fn);
  }
  *pq = total / static_cast<double>(classes.size());
  return true;
}

double VpqOver(const std::vector<TubePrediction>& predictions,
               const std::vector<TubePrediction>& ground_truth,
               const std::vector<std::size_t>& windows, const std::function<bool(int)>& keep,
               std::map<std::string, double>* breakdown) {
  const std::size_t frames = std::max(FrameCount(predictions), FrameCount(ground_truth));
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t w : windows) {
    if (w == 0) throw std::invalid_argument("vpq: window sizes must be >= 1");
    if (w > frames) continue;
    double window_sum = 0.0;
    std::size_t runs = 0;
    for (std::size_t s = 0; s + w <= frames; ++s) {
      double pq;
      if (WindowPq(WindowSegments(predictions, s, w), WindowSegments(ground_truth, s, w), keep,
                   &pq)) {
        window_sum += pq;
        ++runs;
      }
    }
    const double value = runs == 0 ? 1.0 : window_sum / static_cast<double>(runs);
    if (breakdown) (*breakdown)["window_" + std::to_string(w)] = value;
    sum += value;
    ++used;
  }
  return used == 0 ? 0.0 : sum / static_cast<double>(used);
}

}  // namespace

double TubeIou(const MaskSequence& a, const MaskSequence& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("tube_iou: frame counts differ (" + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()) + ")");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    if (a[t].size() != b[t].size()) throw std::invalid_argument("tube_iou: resolution mismatch");
    for (std::size_t p = 0; p < a[t].size(); ++p) {
      inter += a[t][p] & b[t][p];
      uni += a[t][p] | b[t][p];
    }
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double TubeMiou(const std::vector<TubePrediction>& predictions,
                const std::vector<TubePrediction>& ground_truth) {
  if (ground_truth.empty()) return 1.0;
  if (predictions.empty()) return 0.0;
  CostMatrix cost(predictions.size(), ground_truth.size());
  for (std::size_t i = 0; i < predictions.size(); ++i)
    for (std::size_t g = 0; g < ground_truth.size(); ++g)
      cost(i, g) = -TubeIou(predictions[i].masks, ground_truth[g].masks);
  const Assignment match = Hungarian(cost);
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (match.row_to_col[i] != Assignment::kUnassigned) total -= cost(i, match.row_to_col[i]);
  }
  return total / static_cast<double>(ground_truth.size());
}

nlohmann::json MetricReport::ToJson() const {
  return {{"metric", metric}, {"value", value}, {"breakdown", breakdown}, {"extras", extras}};
}

std::string ReportsToJson(const std::vector<MetricReport>& reports) {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& r : reports) doc[r.metric] = r.ToJson();
  return doc.dump(2) + "\n";
}

MetricReport VideoAp(const std::vector<VideoTubes>& videos) {
  MetricReport report;
  report.metric = "video_ap";
  std::set<int> classes;
  for (const auto& v : videos)
    for (const auto& g : v.ground_truth) classes.insert(g.label);

  struct Detection {
    double score;
    std::size_t video;
    std::size_t index;
  };
  std::vector<double> ap_sum(kThresholdCount, 0.0);
  double ar1 = 0.0, ar10 = 0.0;
  for (int c : classes) {
    // Per-video candidate lists sorted by score, and IoUs against the GTs.
    std::size_t gt_total = 0;
    std::vector<std::vector<std::size_t>> order(videos.size());
    std::vector<std::vector<std::size_t>> gts(videos.size());
    std::vector<std::vector<std::vector<double>>> ious(videos.size());
    for (std::size_t v = 0; v < videos.size(); ++v) {
      const auto& preds = videos[v].predictions;
      for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].label == c) order[v].push_back(i);
      }
      std::stable_sort(order[v].begin(), order[v].end(), [&](std::size_t a, std::size_t b) {
        return preds[a].score > preds[b].score;
      });
      if (order[v].size() > kMaxDetections) order[v].resize(kMaxDetections);
      for (std::size_t g = 0; g < videos[v].ground_truth.size(); ++g) {
        if (videos[v].ground_truth[g].label == c) gts[v].push_back(g);
      }
      gt_total += gts[v].size();
      for (std::size_t i : order[v]) {
        std::vector<double> row;
        for (std::size_t g : gts[v]) row.push_back(TubeIou(preds[i].masks, videos[v].ground_truth[g].masks));
        ious[v].push_back(std::move(row));
      }
    }
    for (int ti = 0; ti < kThresholdCount; ++ti) {
      const double thr = Threshold(ti);
      std::vector<Detection> dets;
      std::vector<bool> tp_flags;
      std::size_t tp_at1 = 0, tp_at10 = 0;
      for (std::size_t v = 0; v < videos.size(); ++v) {
        std::vector<bool> taken(gts[v].size(), false);
        for (std::size_t k = 0; k < order[v].size(); ++k) {
          int best = -1;
          double best_iou = thr;
          for (std::size_t g = 0; g < gts[v].size(); ++g) {
            if (taken[g] || ious[v][k][g] < best_iou) continue;
            best_iou = ious[v][k][g];
            best = static_cast<int>(g);
          }
          if (best >= 0) {
            taken[best] = true;
            if (k < 1) ++tp_at1;
            if (k < 10) ++tp_at10;
          }
          dets.push_back({videos[v].predictions[order[v][k]].score, v, k});
          tp_flags.push_back(best >= 0);
        }
      }
      std::vector<std::size_t> rank(dets.size());
      std::iota(rank.begin(), rank.end(), 0);
      std::stable_sort(rank.begin(), rank.end(),
                       [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
      std::vector<double> precision, recall;
      std::size_t tp = 0, fp = 0;
      for (std::size_t r : rank) {
        tp_flags[r] ? ++tp : ++fp;
        precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
        recall.push_back(static_cast<double>(tp) / static_cast<double>(gt_total));
      }
      for (std::size_t i = precision.size(); i-- > 1;) {
        precision[i - 1] = std::max(precision[i - 1], precision[i]);
      }
      double ap = 0.0;
      for (int ri = 0; ri < kRecallPoints; ++ri) {
        const double target = ri / 100.0;
        const auto it = std::lower_bound(recall.begin(), recall.end(), target);
        if (it != recall.end()) ap += precision[it - recall.begin()];
      }
      ap_sum[ti] += ap / kRecallPoints;
      ar1 += static_cast<double>(tp_at1) / static_cast<double>(gt_total);
      ar10 += static_cast<double>(tp_at10) / static_cast<double>(gt_total);
    }
  }
  if (classes.empty()) {
    report.value = 0.0;
    report.extras = {{"ap50", 0.0}, {"ap75", 0.0}, {"ar1", 0.0}, {"ar10", 0.0}};
    return report;
  }
  const double nc = static_cast<double>(classes.size());
  double total = 0.0;
  for (int ti = 0; ti < kThresholdCount; ++ti) {
    report.breakdown[ThresholdKey(ti)] = ap_sum[ti] / nc;
    total += ap_sum[ti] / nc;
  }
  report.value = total / kThresholdCount;
  report.extras["ap50"] = report.breakdown[ThresholdKey(0)];
  report.extras["ap75"] = report.breakdown[ThresholdKey(5)];
  report.extras["ar1"] = ar1 / (nc * kThresholdCount);
  report.extras["ar10"] = ar10 / (nc * kThresholdCount);
  return report;
}

MetricReport Vpq(const std::vector<TubePrediction>& predictions,
                 const std::vector<TubePrediction>& ground_truth,
                 const std::vector<std::size_t>& windows, const std::set<int>& stuff_classes) {
  RequireDisjoint(predictions, "vpq predictions");
  RequireDisjoint(ground_truth, "vpq ground truth");
  if (!predictions.empty() && !ground_truth.empty() &&
      FrameCount(predictions) != FrameCount(ground_truth)) {
    throw std::invalid_argument("vpq: prediction and ground truth frame counts differ");
  }
  MetricReport report;
  report.metric = "vpq";
  report.value = VpqOver(predictions, ground_truth, windows, [](int) { return true; },
                         &report.breakdown);
  report.extras["vpq_th"] = VpqOver(predictions, ground_truth, windows,
                                    [&](int c) { return stuff_classes.count(c) == 0; }, nullptr);
  if (!stuff_classes.empty()) {
    report.extras["vpq_st"] = VpqOver(predictions, ground_truth, windows,
                                      [&](int c) { return stuff_classes.count(c) != 0; }, nullptr);
  }
  return report;
}

double FramePq(const std::vector<TubePrediction>& predictions,
               const std::vector<TubePrediction>& ground_truth, std::size_t frame,
               bool* defined) {
  double pq = 0.0;
  const bool ok = WindowPq(WindowSegments(predictions, frame, 1),
                           WindowSegments(ground_truth, frame, 1), [](int) { return true; }, &pq);
  if (defined) *defined = ok;
  return ok ? pq : 0.0;
}

SemanticVideo SemanticMaps(const std::vector<TubePrediction>& tubes, std::size_t frames,
                           std::size_t pixels, int background) {
  SemanticVideo out(frames, std::vector<int>(pixels, background));
  for (const auto& tube : tubes) {
    if (tube.masks.size() != frames) throw std::invalid_argument("semantic maps: frame count mismatch");
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t p = 0; p < pixels; ++p)
        if (tube.masks[t].at(p)) out[t][p] = tube.label;
  }
  return out;
}

MetricReport Mvc(const SemanticVideo& predictions, const SemanticVideo& ground_truth,
                 std::size_t k) {
  if (k < 1) throw std::invalid_argument("mvc: k must be >= 1");
  if (predictions.size() != ground_truth.size()) {
    throw std::invalid_argument("mvc: frame counts differ");
  }
  const std::size_t frames = ground_truth.size();
  if (k > frames) {
    throw std::invalid_argument("mvc: k=" + std::to_string(k) + " exceeds video length " +
                                std::to_string(frames));
  }
  std::set<int> classes;
  for (const auto& f : ground_truth) classes.insert(f.begin(), f.end());
  const std::size_t pixels = ground_truth.front().size();
  std::map<int, std::pair<double, std::size_t>> per_class;
  for (std::size_t s = 0; s + k <= frames; ++s) {
    for (int c : classes) {
      std::size_t support = 0, agree = 0;
      for (std::size_t p = 0; p < pixels; ++p) {
        bool gt_all = true, pred_all = true;
        for (std::size_t t = s; t < s + k; ++t) {
          gt_all = gt_all && ground_truth[t][p] == c;
          pred_all = pred_all && predictions[t].at(p) == c;
        }
        support += gt_all;
        agree += gt_all && pred_all;
      }
      if (support == 0) continue;
      auto& acc = per_class[c];
      acc.first += static_cast<double>(agree) / static_cast<double>(support);
      ++acc.second;
    }
  }
  MetricReport report;
  report.metric = "mvc_" + std::to_string(k);
  double total = 0.0;
  for (const auto& [c, acc] : per_class) {
    const double v = acc.first / static_cast<double>(acc.second);
    report.breakdown["class_" + std::to_string(c)] = v;
    total += v;
  }
  report.value = per_class.empty() ? 0.0 : total / static_cast<double>(per_class.size());
  return report;
}

MetricReport Miou(const SemanticVideo& predictions, const SemanticVideo& ground_truth) {
  if (predictions.size() != ground_truth.size()) {
    throw std::invalid_argument("miou: frame counts differ");
  }
  std::map<int, std::pair<std::size_t, std::size_t>> counts;  // inter, union
  std::set<int> classes;
  for (const auto& f : ground_truth) classes.insert(f.begin(), f.end());
  for (std::size_t t = 0; t < ground_truth.size(); ++t) {
    if (predictions[t].size() != ground_truth[t].size()) {
      throw std::invalid_argument("miou: resolution mismatch");
    }
    for (std::size_t p = 0; p < ground_truth[t].size(); ++p) {
      const int g = ground_truth[t][p], q = predictions[t][p];
      if (g == q) {
        ++counts[g].first;
        ++counts[g].second;
      } else {
        ++counts[g].second;
        ++counts[q].second;
      }
    }
  }
  MetricReport report;
  report.metric = "miou";
  double total = 0.0;
  for (int c : classes) {
    const auto& [inter, uni] = counts[c];
    const double v = static_cast<double>(inter) / static_cast<double>(uni);
    report.breakdown["class_" + std::to_string(c)] = v;
    total += v;
  }
  report.value = classes.empty() ? 0.0 : total / static_cast<double>(classes.size());
  return report;
}

std::vector<TubePrediction> GroundTruthTubes(const SyntheticVideo& video) {
  std::vector<TubePrediction> tubes;
  for (std::size_t o = 0; o < video.object_count(); ++o) {
    TubePrediction tube;
    tube.label = video.classes[o];
    tube.identity = static_cast<int>(o);
    for (std::size_t t = 0; t < video.frame_count(); ++t) tube.masks.push_back(video.masks[t][o]);
    tubes.push_back(std::move(tube));
  }
  return tubes;
}

}  // namespace vidseg
