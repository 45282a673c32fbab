#include "vidseg/tracker.h"

#include <cmath>
#include <stdexcept>

#include "vidseg/hungarian.h"
#include "vidseg/ops.h"

namespace vidseg {
namespace {

Tensor AsBatch(const Tensor& x) { return Reshape(x, {1, x.dim(0), x.dim(1)}); }
Tensor AsMatrix(const Tensor& x) { return Reshape(x, {x.dim(1), x.dim(2)}); }

void RequireMatrix(const char* op, const Tensor& x, std::size_t channels) {
  if (!x.defined() || x.rank() != 2 || x.dim(1) != channels) {
    throw ShapeError(op, "expected N x " + std::to_string(channels) + ", got " +
                             (x.defined() ? ShapeToString(x.shape()) : std::string("undefined")));
  }
}

}  // namespace

void TrackerConfig::Validate() const {
  if (block_count == 0) throw std::invalid_argument("tracker: block_count must be >= 1");
  if (heads == 0 || channels == 0 || channels % heads != 0) {
    throw std::invalid_argument("tracker: channels must be divisible by heads");
  }
  if (class_count == 0) throw std::invalid_argument("tracker: class_count must be >= 1");
}

Tensor Rca(const Tensor& id, const Tensor& q, const Tensor& k, const Tensor& v,
           const MultiHeadAttention& attention) {
  if (id.shape() != q.shape()) throw ShapeError("rca", id.shape(), q.shape());
  if (k.shape() != v.shape()) throw ShapeError("rca", k.shape(), v.shape());
  if (id.rank() != 2 || k.rank() != 2 || id.dim(1) != k.dim(1)) {
    throw ShapeError("rca", id.shape(), k.shape());
  }
  return Add(id, AsMatrix(attention(AsBatch(q), AsBatch(k), AsBatch(v))));
}

TdBlock TdBlock::Create(ParameterSet& params, const std::string& name,
                        const TrackerConfig& config, Rng& rng) {
  const std::size_t c = config.channels;
  TdBlock b;
  b.ref_norm = LayerNormLayer::Create(params, name + ".ref_norm", c);
  b.seg_norm = LayerNormLayer::Create(params, name + ".seg_norm", c);
  b.self_norm = LayerNormLayer::Create(params, name + ".self_norm", c);
  b.ffn_norm = LayerNormLayer::Create(params, name + ".ffn_norm", c);
  b.cross = MultiHeadAttention::Create(params, name + ".cross", c, config.heads, rng, true);
  b.self = MultiHeadAttention::Create(params, name + ".self", c, config.heads, rng, true);
  b.ffn = FeedForward::Create(params, name + ".ffn", c, config.hidden_width(), rng, true);
  return b;
}

Tensor TdBlock::operator()(const Tensor& refs, const Tensor& initial,
                           const Tensor& q_seg) const {
  if (refs.shape() != initial.shape()) throw ShapeError("td_block", refs.shape(), initial.shape());
  if (q_seg.rank() != 2 || q_seg.dim(1) != initial.dim(1)) {
    throw ShapeError("td_block", initial.shape(), q_seg.shape());
  }
  const Tensor seg = seg_norm(q_seg);
  Tensor x = Rca(initial, ref_norm(refs), seg, seg, cross);
  const Tensor normed = self_norm(x);
  x = Rca(x, normed, normed, normed, self);
  return Add(x, ffn(ffn_norm(x)));
}

ReferringTracker ReferringTracker::Create(const TrackerConfig& config, std::uint64_t seed) {
  config.Validate();
  ReferringTracker t;
  t.config_ = config;
  Rng rng(seed);
  const std::size_t c = config.channels;
  ParameterSet& p = t.params_;
  t.init_hidden_ = LinearLayer::Create(p, "reference.init.hidden", c, c, rng);
  t.init_output_ = LinearLayer::Create(p, "reference.init.output", c, c, rng);
  t.update_linear_ = LinearLayer::Create(p, "reference.update.linear", c, c, rng);
  t.update_norm_ = LayerNormLayer::Create(p, "reference.update.norm", c);
  for (std::size_t i = 0; i < config.block_count; ++i) {
    t.blocks_.push_back(TdBlock::Create(p, "block" + std::to_string(i), config, rng));
  }
  t.head_norm_ = LayerNormLayer::Create(p, "head.norm", c);
  t.class_head_ = LinearLayer::Create(p, "head.class", c, config.class_count + 1, rng);
  t.mask_embed_ = LinearLayer::Create(p, "head.mask", c, c + 1, rng);
  t.projection_ = LinearLayer::Create(p, "head.projection", c, c, rng);
  return t;
}

ReferenceState ReferringTracker::InitReference(const Tensor& q_seg, std::size_t frame) const {
  if (frame != 1) {
    throw std::logic_error("init_reference called on frame " + std::to_string(frame) +
                           "; references are initialized on frame 1 only");
  }
  RequireMatrix("init_reference", q_seg, config_.channels);
  return {init_output_(Relu(init_hidden_(q_seg))), 1};
}

Tensor ReferringTracker::Cascade(const Tensor& refs, const Tensor& initial,
                                 const Tensor& q_seg) const {
  RequireMatrix("track_frame", initial, config_.channels);
  Tensor x = initial;
  for (const auto& block : blocks_) {
    x = block(refs, x, q_seg);
    ++block_applications_;
  }
  return x;
}

Tensor ReferringTracker::UpdateReference(const Tensor& refs, const Tensor& q_rt) const {
  return Add(update_norm_(update_linear_(q_rt)), refs);
}

TrackerFrameOutput ReferringTracker::TrackFirstFrame(const Tensor& q_seg) const {
  ReferenceState state = InitReference(q_seg, 1);
  Tensor q_rt = Cascade(state.refs, q_seg, q_seg);
  return {q_rt, state};
}

TrackerFrameOutput ReferringTracker::TrackFrame(const ReferenceState& state,
                                                const Tensor& q_seg, const Tensor& initial,
                                                std::size_t frame) const {
  if (frame != state.frame_index + 1) {
    throw std::logic_error("track_frame: expected frame " +
                           std::to_string(state.frame_index + 1) + ", got " +
                           std::to_string(frame));
  }
  RequireMatrix("track_frame", q_seg, config_.channels);
  if (q_seg.shape() != initial.shape()) throw ShapeError("track_frame", q_seg.shape(), initial.shape());
  Tensor q_rt = Cascade(state.refs, initial, q_seg);
  return {q_rt, {UpdateReference(state.refs, q_rt), frame}};
}

FramePrediction ReferringTracker::Decode(const Tensor& q_rt,
                                         const Tensor& pixel_features) const {
  if (pixel_features.rank() != 2 || pixel_features.dim(0) != config_.channels + 1) {
    throw ShapeError("decode", "pixel features must be [C+1, P], got " +
                                   ShapeToString(pixel_features.shape()));
  }
  const Tensor x = head_norm_(q_rt);
  return {class_head_(x), MatMul(mask_embed_(x), pixel_features)};
}

Tensor ReferringTracker::Project(const Tensor& x) const {
  return L2Normalize(projection_(x));
}

std::vector<std::size_t> HungarianPrematch(const Tensor& prev, const Tensor& cur) {
  if (prev.rank() != 2 || prev.shape() != cur.shape()) {
    throw ShapeError("hungarian_prematch", prev.shape(), cur.shape());
  }
  const std::size_t n = prev.dim(0), c = prev.dim(1);
  auto norms = [&](const Tensor& m) {
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < c; ++k) out[i] += m.data()[i * c + k] * m.data()[i * c + k];
      out[i] = std::sqrt(out[i]);
    }
    return out;
  };
  const auto np = norms(prev), nc = norms(cur);
  CostMatrix cost(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (np[i] == 0.0 || nc[j] == 0.0) continue;
      double dot = 0.0;
      for (std::size_t k = 0; k < c; ++k) dot += prev.data()[i * c + k] * cur.data()[j * c + k];
      cost(i, j) = -dot / (np[i] * nc[j]);
    }
  }
  const Assignment a = Hungarian(cost);
  std::vector<std::size_t> pi(n);
  for (std::size_t i = 0; i < n; ++i) pi[i] = static_cast<std::size_t>(a.row_to_col[i]);
  return pi;
}

ObjectQuerySet PermuteRows(const ObjectQuerySet& frame, const std::vector<std::size_t>& perm) {
  ObjectQuerySet out;
  out.queries = IndexSelect(frame.queries, 0, perm);
  out.class_logits = IndexSelect(frame.class_logits, 0, perm);
  out.mask_logits = IndexSelect(frame.mask_logits, 0, perm);
  out.pixel_features = frame.pixel_features;
  out.row_objects.resize(perm.size());
  for (std::size_t r = 0; r < perm.size(); ++r) out.row_objects[r] = frame.row_objects.at(perm[r]);
  return out;
}

std::vector<ObjectQuerySet> PrematchVideo(const std::vector<ObjectQuerySet>& frames,
                                          std::vector<std::vector<std::size_t>>* perms) {
  std::vector<ObjectQuerySet> out;
  std::vector<std::vector<std::size_t>> local;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    std::vector<std::size_t> perm;
    if (t == 0) {
      perm.resize(frames[0].queries.dim(0));
      for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    } else {
      perm = HungarianPrematch(out.back().queries, frames[t].queries);
    }
    out.push_back(PermuteRows(frames[t], perm));
    local.push_back(std::move(perm));
  }
  if (perms) *perms = std::move(local);
  return out;
}

TrackedVideo TrackVideo(const ReferringTracker& tracker,
                        const std::vector<ObjectQuerySet>& frames,
                        const TrackOptions& options) {
  if (frames.empty()) throw std::invalid_argument("track_video: empty video");
  const bool train = options.mode == TrackMode::kTrain;
  if (train && options.rng == nullptr) {
    throw std::invalid_argument("track_video: training mode needs an RNG");
  }
  TrackedVideo out;
  out.prematched = PrematchVideo(frames, &out.permutations);
  ReferenceState state;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const ObjectQuerySet& frame = out.prematched[t];
    TrackerFrameOutput step;
    if (t == 0) {
      step = tracker.TrackFirstFrame(frame.queries);
      out.noised.push_back(false);
    } else {
      Tensor initial = frame.queries;
      bool noised = false;
      if (train) {
        NoiseOutcome noise = ApplyNoise(frame.queries, options.noise, *options.rng);
        ++out.noiser_calls;
        initial = noise.queries;
        noised = noise.applied;
      }
      step = tracker.TrackFrame(state, frame.queries, initial, t + 1);
      out.noised.push_back(noised);
    }
    state = step.next;
    out.predictions.push_back(tracker.Decode(step.q_rt, frame.pixel_features));
    out.q_rt.push_back(step.q_rt);
    out.states.push_back(state);
  }
  return out;
}

}  // namespace vidseg
