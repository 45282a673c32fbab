#include "vidseg/refiner.h"

#include <stdexcept>

#include "vidseg/ops.h"
#include "vidseg/tracker.h"

namespace vidseg {
namespace {

// [T, C] -> [N, T, C] by repetition.
Tensor RepeatPositions(const Tensor& positions, std::size_t n) {
  const std::size_t t = positions.dim(0), c = positions.dim(1);
  std::vector<double> values;
  values.reserve(n * t * c);
  for (std::size_t i = 0; i < n; ++i) {
    values.insert(values.end(), positions.data().begin(), positions.data().end());
  }
  return Tensor::FromData({n, t, c}, std::move(values));
}

}  // namespace

void RefinerConfig::Validate() const {
  if (block_count == 0) throw std::invalid_argument("refiner: block_count must be >= 1");
  if (heads == 0 || channels == 0 || channels % heads != 0) {
    throw std::invalid_argument("refiner: channels must be divisible by heads");
  }
  if (kernel_width % 2 == 0) throw std::invalid_argument("refiner: kernel width must be odd");
  if (class_count == 0) throw std::invalid_argument("refiner: class_count must be >= 1");
}

TemporalBlock TemporalBlock::Create(ParameterSet& params, const std::string& name,
                                    const RefinerConfig& config, Rng& rng) {
  const std::size_t c = config.channels;
  TemporalBlock b;
  b.conv_norm = LayerNormLayer::Create(params, name + ".conv_norm", c);
  b.conv_weight = params.Add(name + ".conv.weight", Tensor::Zeros({c, c, config.kernel_width}, true));
  b.conv_bias = params.Add(name + ".conv.bias", Tensor::Zeros({c}, true));
  b.time_norm = LayerNormLayer::Create(params, name + ".time_norm", c);
  b.time_attention =
      MultiHeadAttention::Create(params, name + ".time_attention", c, config.heads, rng, true);
  b.object_norm = LayerNormLayer::Create(params, name + ".object_norm", c);
  b.object_attention =
      MultiHeadAttention::Create(params, name + ".object_attention", c, config.heads, rng, true);
  b.cross_norm = LayerNormLayer::Create(params, name + ".cross_norm", c);
  b.seg_norm = LayerNormLayer::Create(params, name + ".seg_norm", c);
  b.cross_attention =
      MultiHeadAttention::Create(params, name + ".cross_attention", c, config.heads, rng, true);
  b.ffn_norm = LayerNormLayer::Create(params, name + ".ffn_norm", c);
  b.ffn = FeedForward::Create(params, name + ".ffn", c, config.hidden_width(), rng, true);
  return b;
}

Tensor TemporalBlock::operator()(const Tensor& q, const Tensor& q_seg,
                                 const Tensor& positions) const {
  if (q.rank() != 3 || q_seg.rank() != 3) {
    throw ShapeError("temporal_block", q.shape(), q_seg.shape());
  }
  const std::size_t n = q.dim(0), t = q.dim(1), c = q.dim(2);
  if (q_seg.dim(0) != t || q_seg.dim(1) != n || q_seg.dim(2) != c) {
    throw ShapeError("temporal_block", q.shape(), q_seg.shape());
  }
  if (positions.shape() != Shape{t, c}) throw ShapeError("temporal_block", positions.shape(), Shape{t, c});

  Tensor x = Add(q, Conv1d(conv_norm(q), conv_weight, conv_bias));
  const Tensor y = Add(time_norm(x), RepeatPositions(positions, n));
  x = Add(x, time_attention(y, y, y));

  Tensor per_frame = Permute(x, {1, 0, 2});  // [T, N, C]
  const Tensor o = object_norm(per_frame);
  per_frame = Add(per_frame, object_attention(o, o, o));
  const Tensor seg = seg_norm(q_seg);
  per_frame = Add(per_frame, cross_attention(cross_norm(per_frame), seg, seg));
  per_frame = Add(per_frame, ffn(ffn_norm(per_frame)));
  return Permute(per_frame, {1, 0, 2});
}

TemporalWeighting ApplyTemporalWeighting(const Tensor& q_tr, const LinearLayer& scorer) {
  if (q_tr.rank() != 3) throw ShapeError("temporal_weighting", "expected [N, T, C]");
  const std::size_t n = q_tr.dim(0), t = q_tr.dim(1), c = q_tr.dim(2);
  const Tensor logits = Reshape(scorer(q_tr), {n, t});
  const Tensor weights = Softmax(logits, 1);
  const Tensor pooled = MatMul(Reshape(weights, {n, 1, t}), q_tr);
  return {Reshape(pooled, {n, c}), weights};
}

TemporalRefiner TemporalRefiner::Create(const RefinerConfig& config, std::uint64_t seed) {
  config.Validate();
  TemporalRefiner r;
  r.config_ = config;
  Rng rng(seed);
  const std::size_t c = config.channels;
  ParameterSet& p = r.params_;
  for (std::size_t i = 0; i < config.block_count; ++i) {
    r.blocks_.push_back(TemporalBlock::Create(p, "block" + std::to_string(i), config, rng));
  }
  r.time_scorer_ = LinearLayer::Create(p, "time_weighting", c, 1, rng, true);
  r.head_norm_ = LayerNormLayer::Create(p, "head.norm", c);
  r.class_head_ = LinearLayer::Create(p, "head.class", c, config.class_count + 1, rng);
  r.mask_embed_ = LinearLayer::Create(p, "head.mask", c, c + 1, rng);
  r.projection_ = LinearLayer::Create(p, "head.projection", c, c, rng);
  return r;
}

TubeRepresentation TemporalRefiner::Refine(const Tensor& q_rt, const Tensor& q_seg) const {
  if (!q_rt.defined() || q_rt.rank() != 3 || q_rt.dim(1) == 0) {
    throw std::invalid_argument("refine: expected a non-empty [N, T, C] input");
  }
  if (q_rt.dim(2) != config_.channels) {
    throw ShapeError("refine", q_rt.shape(), Shape{q_rt.dim(0), q_rt.dim(1), config_.channels});
  }
  const Tensor positions = SinusoidalPositions(q_rt.dim(1), config_.channels);
  Tensor x = q_rt;
  for (const auto& block : blocks_) {
    x = block(x, q_seg, positions);
    ++block_applications_;
  }
  TemporalWeighting pooled = ApplyTemporalWeighting(x, time_scorer_);
  return {x, pooled.video_repr, pooled.weights};
}

VideoLogits TemporalRefiner::Decode(const TubeRepresentation& tube,
                                    const std::vector<Tensor>& pixel_features) const {
  const std::size_t n = tube.q_tr.dim(0), t = tube.q_tr.dim(1), c = config_.channels;
  if (pixel_features.size() != t) {
    throw std::invalid_argument("refiner decode: one pixel feature map per frame required");
  }
  const Tensor embed = mask_embed_(head_norm_(tube.q_tr));  // [N, T, C+1]
  std::vector<Tensor> frames;
  for (std::size_t f = 0; f < t; ++f) {
    const Tensor e = Reshape(Slice(embed, 1, f, f + 1), {n, c + 1});
    frames.push_back(MatMul(e, pixel_features[f]));
  }
  VideoLogits out;
  out.mask_logits = frames.size() == 1 ? frames[0] : Concat(frames, 1);
  out.class_logits = class_head_(head_norm_(tube.video_repr));
  return out;
}

Tensor TemporalRefiner::Project(const Tensor& x) const {
  return L2Normalize(projection_(x));
}

void TemporalRefiner::CopyHeadsFrom(const ReferringTracker& tracker) {
  for (const auto& [name, value] : params_.items()) {
    if (name.rfind("head.", 0) != 0) continue;
    const Tensor src = tracker.params().Get(name);
    if (src.shape() != value.shape()) throw ShapeError("copy " + name, value.shape(), src.shape());
    Tensor dst = value;
    std::copy(src.data().begin(), src.data().end(), dst.mutable_data().begin());
  }
}

}  // namespace vidseg
