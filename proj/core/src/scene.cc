#include "vidseg/scene.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace vidseg {
namespace {

constexpr std::size_t kApproachFrames = 2;
constexpr std::size_t kDepartFrames = 2;
constexpr double kMaxEmbeddingCosine = 0.9;

std::uint64_t SplitMix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

struct Point {
  double x;
  double y;
};

struct Window {
  std::size_t begin;  // first frame
  std::size_t end;    // one past last frame
  bool Overlaps(const Window& o) const { return begin < o.end && o.begin < end; }
};

struct ScheduledOcclusion {
  int hider;
  int occluder;
  Window window;
  std::size_t hold;
  bool hazard;
};

struct Layout {
  double lane_height;
  double radius;
};

Layout ComputeLayout(const SceneConfig& c) {
  Layout l;
  l.lane_height = static_cast<double>(c.height) / static_cast<double>(c.object_count);
  l.radius = std::min((l.lane_height - 2.0) / 2.0,
                      static_cast<double>(std::min(c.height, c.width)) / 6.0);
  if (l.radius < 2.0 || static_cast<double>(c.width) < 2.0 * l.radius + 2.0) {
    throw std::invalid_argument(
        "scene: canvas " + std::to_string(c.height) + "x" + std::to_string(c.width) +
        " too small for " + std::to_string(c.object_count) + " non-overlapping objects");
  }
  return l;
}

double Cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0 || nb == 0) return 0;
  return dot / std::sqrt(na * nb);
}

std::vector<double> ScaledToNorm(std::vector<double> v, double norm) {
  double n = 0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x *= norm / n;
  return v;
}

std::vector<double> GaussianVector(std::size_t n, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

bool Free(const std::vector<std::vector<Window>>& busy, int object, const Window& w) {
  for (const auto& b : busy[object]) {
    if (b.Overlaps(w)) return false;
  }
  return true;
}

}  // namespace

void SceneConfig::Validate() const {
  auto rate_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
  if (frames == 0) throw std::invalid_argument("scene: frames must be >= 1");
  if (object_count == 0) throw std::invalid_argument("scene: object_count must be >= 1");
  if (object_count > query_budget) {
    throw std::invalid_argument("scene: object_count exceeds query budget N");
  }
  if (channels == 0 || class_count == 0) {
    throw std::invalid_argument("scene: channels and class_count must be >= 1");
  }
  if (!rate_ok(occlusion_rate) || !rate_ok(swap_hazard_rate)) {
    throw std::invalid_argument("scene: rates must lie in [0, 1]");
  }
  if (min_speed < 0.0 || max_speed < min_speed) {
    throw std::invalid_argument("scene: invalid speed range");
  }
  if (query_noise_sigma < 0.0) throw std::invalid_argument("scene: negative noise sigma");
  if (!rate_ok(boundary_flip_rate)) {
    throw std::invalid_argument("scene: boundary flip rate must lie in [0, 1]");
  }
  ComputeLayout(*this);
}

std::string EventKindName(SceneEvent::Kind kind) {
  switch (kind) {
    case SceneEvent::Kind::kOcclusion: return "occlusion";
    case SceneEvent::Kind::kSwapHazard: return "swap";
    case SceneEvent::Kind::kEntry: return "entry";
    case SceneEvent::Kind::kExit: return "exit";
  }
  return "unknown";
}

SceneEvent::Kind ParseEventKind(const std::string& name) {
  if (name == "occlusion") return SceneEvent::Kind::kOcclusion;
  if (name == "swap") return SceneEvent::Kind::kSwapHazard;
  if (name == "entry") return SceneEvent::Kind::kEntry;
  if (name == "exit") return SceneEvent::Kind::kExit;
  throw std::invalid_argument("unknown event kind: " + name);
}

std::size_t SyntheticVideo::VisibleArea(std::size_t frame, std::size_t object) const {
  const auto& m = masks.at(frame).at(object);
  return static_cast<std::size_t>(std::count(m.begin(), m.end(), 1));
}

bool SyntheticVideo::IsVisible(std::size_t frame, std::size_t object) const {
  return VisibleArea(frame, object) > 0;
}

bool SyntheticVideo::IsDetectable(std::size_t frame, std::size_t object) const {
  const double full = static_cast<double>(full_area.at(frame).at(object));
  return full > 0 &&
         static_cast<double>(VisibleArea(frame, object)) >= kOcclusionThreshold * full;
}

std::size_t SyntheticVideo::FirstAppearance(std::size_t object) const {
  for (std::size_t t = 0; t < frame_count(); ++t) {
    if (IsVisible(t, object)) return t;
  }
  return frame_count();
}

void DeriveVisibility(SyntheticVideo& video) {
  const std::size_t frames = video.frame_count();
  const std::size_t objects = video.object_count();
  video.visibility.assign(objects, {});
  std::vector<SceneEvent> events;
  for (const auto& e : video.events) {
    if (e.kind == SceneEvent::Kind::kSwapHazard) events.push_back(e);
  }
  for (std::size_t o = 0; o < objects; ++o) {
    bool in_run = false;
    bool occluded_prev = false;
    for (std::size_t t = 0; t < frames; ++t) {
      const bool visible = video.IsVisible(t, o);
      if (visible && !in_run) video.visibility[o].push_back({t, t});
      if (visible) video.visibility[o].back().last = t;
      in_run = visible;
      const bool occluded = !video.IsDetectable(t, o);
      if (occluded && !occluded_prev && t > 0) {
        events.push_back({SceneEvent::Kind::kOcclusion, t, static_cast<int>(o)});
      }
      occluded_prev = occluded;
    }
    if (!video.visibility[o].empty()) {
      if (video.visibility[o].front().first > 0) {
        events.push_back({SceneEvent::Kind::kEntry, video.visibility[o].front().first,
                          static_cast<int>(o)});
      }
      if (video.visibility[o].back().last + 1 < frames) {
        events.push_back({SceneEvent::Kind::kExit, video.visibility[o].back().last + 1,
                          static_cast<int>(o)});
      }
    }
  }
  std::stable_sort(events.begin(), events.end(), [](const SceneEvent& a, const SceneEvent& b) {
    if (a.frame != b.frame) return a.frame < b.frame;
    if (a.kind != b.kind) return a.kind < b.kind;
    return a.object < b.object;
  });
  video.events = std::move(events);
}

SyntheticVideo GenerateVideo(const SceneConfig& config) {
  config.Validate();
  const Layout layout = ComputeLayout(config);
  const std::size_t frames = config.frames;
  const int objects = static_cast<int>(config.object_count);
  const double r = layout.radius;
  Rng rng(SplitMix(config.seed));

  SyntheticVideo video;
  video.config = config;
  std::uniform_int_distribution<int> class_dist(0, static_cast<int>(config.class_count) - 1);
  video.classes.resize(objects);
  for (auto& c : video.classes) c = class_dist(rng);

  // Lane assignment and free (lane-bound) trajectories.
  std::vector<int> lane_of(objects);
  std::iota(lane_of.begin(), lane_of.end(), 0);
  std::shuffle(lane_of.begin(), lane_of.end(), rng);
  std::vector<int> object_in_lane(objects);
  for (int o = 0; o < objects; ++o) object_in_lane[lane_of[o]] = o;

  std::uniform_real_distribution<double> x_dist(r, static_cast<double>(config.width) - r);
  std::uniform_real_distribution<double> speed_dist(config.min_speed, config.max_speed);
  std::bernoulli_distribution coin(0.5);
  std::vector<std::vector<Point>> path(objects, std::vector<Point>(frames));
  for (int o = 0; o < objects; ++o) {
    double x = x_dist(rng);
    double vx = speed_dist(rng) * (coin(rng) ? 1.0 : -1.0);
    const double y = (lane_of[o] + 0.5) * layout.lane_height;
    for (std::size_t t = 0; t < frames; ++t) {
      path[o][t] = {x, y};
      x += vx;
      const double lo = r, hi = static_cast<double>(config.width) - r;
      if (x < lo) { x = 2 * lo - x; vx = -vx; }
      if (x > hi) { x = 2 * hi - x; vx = -vx; }
      x = std::clamp(x, lo, hi);
    }
  }

  // Occlusion schedule. `moving` windows belong to hiders, `anchored` to
  // occluders; a hider may not overlap any of its own windows and an
  // occluder may not move while anchoring.
  std::vector<std::vector<Window>> moving(objects), anchored(objects);
  std::vector<ScheduledOcclusion> schedule;
  std::uniform_int_distribution<std::size_t> hold_dist(2, 3);
  auto try_schedule = [&](int hider, std::vector<int> occluders, bool hazard) {
    const std::size_t hold = hold_dist(rng);
    const std::size_t len = kApproachFrames + hold + kDepartFrames;
    if (frames < len + 1) return false;
    std::uniform_int_distribution<std::size_t> start_dist(1, frames - len);
    for (int occluder : occluders) {
      for (int attempt = 0; attempt < 24; ++attempt) {
        const std::size_t s = start_dist(rng);
        const Window w{s, s + len};
        if (Free(moving, hider, w) && Free(anchored, hider, w) && Free(moving, occluder, w)) {
          moving[hider].push_back(w);
          anchored[occluder].push_back(w);
          schedule.push_back({hider, occluder, w, hold, hazard});
          return true;
        }
      }
    }
    return false;
  };

  std::bernoulli_distribution hazard_draw(config.swap_hazard_rate);
  for (int lane = 0; lane + 1 < objects; lane += 2) {
    if (!hazard_draw(rng)) continue;
    int a = object_in_lane[lane], b = object_in_lane[lane + 1];
    video.classes[b] = video.classes[a];
    if (coin(rng)) std::swap(a, b);
    try_schedule(a, {b}, /*hazard=*/true);
  }
  std::bernoulli_distribution occlusion_draw(config.occlusion_rate);
  for (int o = 0; o < objects; ++o) {
    if (!occlusion_draw(rng)) continue;
    std::vector<int> neighbours;
    if (lane_of[o] > 0) neighbours.push_back(object_in_lane[lane_of[o] - 1]);
    if (lane_of[o] + 1 < objects) neighbours.push_back(object_in_lane[lane_of[o] + 1]);
    if (neighbours.empty()) continue;
    std::shuffle(neighbours.begin(), neighbours.end(), rng);
    try_schedule(o, neighbours, /*hazard=*/false);
  }

  // Hiders glide onto their occluder, hold, and glide back.
  std::vector<std::vector<bool>> hidden_layer(objects, std::vector<bool>(frames, false));
  std::vector<std::vector<Point>> pos = path;
  for (const auto& s : schedule) {
    for (std::size_t t = s.window.begin; t < s.window.end; ++t) {
      const std::size_t j = t - s.window.begin;
      double w;
      if (j < kApproachFrames) {
        w = static_cast<double>(j + 1) / (kApproachFrames + 1);
      } else if (j < kApproachFrames + s.hold) {
        w = 1.0;
      } else {
        const std::size_t k = j - kApproachFrames - s.hold;
        w = 1.0 - static_cast<double>(k + 1) / (kDepartFrames + 1);
      }
      const Point from = path[s.hider][t];
      const Point to = path[s.occluder][t];
      pos[s.hider][t] = {from.x + w * (to.x - from.x), from.y + w * (to.y - from.y)};
      hidden_layer[s.hider][t] = true;
    }
    if (s.hazard) {
      video.events.push_back({SceneEvent::Kind::kSwapHazard,
                              s.window.begin + kApproachFrames, s.hider, s.occluder});
    }
  }

  // Render: hiders first, then everyone else in id order; later draws win.
  const std::size_t h = config.height, wdt = config.width;
  video.masks.assign(frames, std::vector<BinaryMask>(objects, BinaryMask(h * wdt, 0)));
  video.full_area.assign(frames, std::vector<std::size_t>(objects, 0));
  std::vector<int> owner(h * wdt);
  for (std::size_t t = 0; t < frames; ++t) {
    std::fill(owner.begin(), owner.end(), -1);
    std::vector<int> order(objects);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return hidden_layer[a][t] > hidden_layer[b][t];
    });
    for (int o : order) {
      const Point c = pos[o][t];
      std::size_t area = 0;
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < wdt; ++x) {
          const double dx = x + 0.5 - c.x, dy = y + 0.5 - c.y;
          if (dx * dx + dy * dy <= r * r) {
            owner[y * wdt + x] = o;
            ++area;
          }
        }
      }
      video.full_area[t][o] = area;
    }
    for (std::size_t p = 0; p < h * wdt; ++p) {
      if (owner[p] >= 0) video.masks[t][owner[p]][p] = 1;
    }
  }
  DeriveVisibility(video);
  return video;
}

std::vector<double> BackgroundEmbedding(const SceneConfig& config) {
  Rng world(SplitMix(config.world_seed ^ 0xB6D1ULL));
  return ScaledToNorm(GaussianVector(config.channels, world),
                      std::sqrt(static_cast<double>(config.channels)));
}

std::vector<std::vector<double>> CanonicalEmbeddings(const SceneConfig& config,
                                                     const std::vector<int>& classes) {
  const std::size_t c = config.channels;
  const double norm = std::sqrt(static_cast<double>(c));
  Rng world(SplitMix(config.world_seed));
  std::vector<std::vector<double>> prototypes;
  for (std::size_t k = 0; k < config.class_count; ++k) {
    prototypes.push_back(GaussianVector(c, world));
  }
  const std::vector<double> background = BackgroundEmbedding(config);
  Rng rng(SplitMix(config.seed ^ 0x5DEECE66DULL));
  std::vector<std::vector<double>> out;
  for (int label : classes) {
    std::vector<double> best;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      std::vector<double> v = GaussianVector(c, rng);
      for (std::size_t i = 0; i < c; ++i) v[i] += prototypes.at(label)[i];
      v = ScaledToNorm(std::move(v), norm);
      bool ok = Cosine(v, background) < kMaxEmbeddingCosine;
      for (const auto& prev : out) ok = ok && Cosine(v, prev) < kMaxEmbeddingCosine;
      best = std::move(v);
      if (ok) break;
    }
    out.push_back(std::move(best));
  }
  return out;
}

Rng StubRng(const SyntheticVideo& video, std::size_t frame) {
  return Rng(SplitMix(SplitMix(video.config.seed ^ 0x51ABULL) + frame));
}

ObjectQuerySet StubSegment(const SyntheticVideo& video, std::size_t frame, Rng& rng) {
  if (frame >= video.frame_count()) {
    throw std::out_of_range("stub_segment: frame " + std::to_string(frame) + " out of range");
  }
  const SceneConfig& cfg = video.config;
  const std::size_t n = cfg.query_budget, c = cfg.channels, k = cfg.class_count;
  const std::size_t h = cfg.height, w = cfg.width, hw = h * w;
  const auto embeddings = CanonicalEmbeddings(cfg, video.classes);
  const auto background = BackgroundEmbedding(cfg);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double sigma = cfg.query_noise_sigma;

  ObjectQuerySet out;
  out.row_objects.assign(n, -1);
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  if (cfg.permute_queries) std::shuffle(rows.begin(), rows.end(), rng);
  for (std::size_t o = 0; o < video.object_count(); ++o) {
    if (video.IsDetectable(frame, o)) out.row_objects[rows[o]] = static_cast<int>(o);
  }

  std::vector<double> queries(n * c), cls(n * (k + 1), 0.0), masks(n * hw);
  std::bernoulli_distribution flip(cfg.boundary_flip_rate);
  for (std::size_t row = 0; row < n; ++row) {
    const int obj = out.row_objects[row];
    const auto& base = obj >= 0 ? embeddings[obj] : background;
    for (std::size_t i = 0; i < c; ++i) queries[row * c + i] = base[i] + sigma * noise(rng);
    const std::size_t hot = obj >= 0 ? static_cast<std::size_t>(video.classes[obj]) : k;
    for (std::size_t j = 0; j <= k; ++j) {
      cls[row * (k + 1) + j] = (j == hot ? cfg.class_margin : 0.0) + sigma * noise(rng);
    }
    double* m = masks.data() + row * hw;
    if (obj < 0) {
      std::fill(m, m + hw, -cfg.mask_margin);
      continue;
    }
    const BinaryMask& gt = video.masks[frame][obj];
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t p = y * w + x;
        const std::uint8_t v = gt[p];
        bool boundary = false;
        if (y > 0 && gt[p - w] != v) boundary = true;
        if (y + 1 < h && gt[p + w] != v) boundary = true;
        if (x > 0 && gt[p - 1] != v) boundary = true;
        if (x + 1 < w && gt[p + 1] != v) boundary = true;
        double logit = v ? cfg.mask_margin : -cfg.mask_margin;
        if (boundary && flip(rng)) logit = -logit;
        m[p] = logit;
      }
    }
  }

  // Pixel features: unit-norm embedding of the visible owner, background
  // elsewhere, plus a constant channel.
  std::vector<double> features((c + 1) * hw);
  const double inv = 1.0 / std::sqrt(static_cast<double>(c));
  std::vector<int> owner(hw, -1);
  for (std::size_t o = 0; o < video.object_count(); ++o) {
    const BinaryMask& gt = video.masks[frame][o];
    for (std::size_t p = 0; p < hw; ++p) {
      if (gt[p]) owner[p] = static_cast<int>(o);
    }
  }
  for (std::size_t p = 0; p < hw; ++p) {
    const auto& e = owner[p] >= 0 ? embeddings[owner[p]] : background;
    for (std::size_t i = 0; i < c; ++i) features[i * hw + p] = e[i] * inv;
    features[c * hw + p] = 1.0;
  }

  out.queries = Tensor::FromData({n, c}, std::move(queries));
  out.class_logits = Tensor::FromData({n, k + 1}, std::move(cls));
  out.mask_logits = Tensor::FromData({n, hw}, std::move(masks));
  out.pixel_features = Tensor::FromData({c + 1, hw}, std::move(features));
  return out;
}

std::vector<ObjectQuerySet> StubSegmentVideo(const SyntheticVideo& video) {
  std::vector<ObjectQuerySet> frames;
  frames.reserve(video.frame_count());
  for (std::size_t t = 0; t < video.frame_count(); ++t) {
    Rng rng = StubRng(video, t);
    frames.push_back(StubSegment(video, t, rng));
  }
  return frames;
}

}  // namespace vidseg
