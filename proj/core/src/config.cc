#include "vidseg/config.h"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace vidseg {
namespace {

using nlohmann::json;

json OptimizerJson(const OptimizerConfig& o) {
  return {{"kind", OptimizerKindName(o.kind)},
          {"learning_rate", o.learning_rate},
          {"momentum", o.momentum},
          {"beta1", o.beta1},
          {"beta2", o.beta2},
          {"epsilon", o.epsilon},
          {"weight_decay", o.weight_decay},
          {"decay_fraction", o.decay_fraction},
          {"decay_factor", o.decay_factor},
          {"max_grad_norm", o.max_grad_norm}};
}

OptimizerConfig OptimizerFrom(const json& j) {
  OptimizerConfig o;
  o.kind = ParseOptimizerKind(j.at("kind").get<std::string>());
  o.learning_rate = j.at("learning_rate").get<double>();
  o.momentum = j.at("momentum").get<double>();
  o.beta1 = j.at("beta1").get<double>();
  o.beta2 = j.at("beta2").get<double>();
  o.epsilon = j.at("epsilon").get<double>();
  o.weight_decay = j.at("weight_decay").get<double>();
  o.decay_fraction = j.at("decay_fraction").get<double>();
  o.decay_factor = j.at("decay_factor").get<double>();
  o.max_grad_norm = j.at("max_grad_norm").get<double>();
  return o;
}

json StageJson(const StageConfig& s) {
  return {{"clip_length", s.clip_length},
          {"iterations", s.iterations},
          {"optimizer", OptimizerJson(s.optimizer)}};
}

StageConfig StageFrom(const json& j) {
  return {j.at("clip_length").get<std::size_t>(), j.at("iterations").get<std::size_t>(),
          OptimizerFrom(j.at("optimizer"))};
}

// Every key of `doc` must exist in `reference`, recursively through objects.
void CheckKeys(const json& doc, const json& reference, const std::string& path) {
  if (!doc.is_object()) return;
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!reference.contains(it.key())) throw std::invalid_argument("config: unknown key " + key);
    if (reference[it.key()].is_object()) {
      if (!it.value().is_object()) {
        throw std::invalid_argument("config: " + key + " must be an object");
      }
      CheckKeys(it.value(), reference[it.key()], key);
    }
  }
}

}  // namespace

nlohmann::json SceneToJson(const SceneConfig& s) {
  return {{"frames", s.frames},
          {"height", s.height},
          {"width", s.width},
          {"object_count", s.object_count},
          {"query_budget", s.query_budget},
          {"channels", s.channels},
          {"class_count", s.class_count},
          {"min_speed", s.min_speed},
          {"max_speed", s.max_speed},
          {"occlusion_rate", s.occlusion_rate},
          {"swap_hazard_rate", s.swap_hazard_rate},
          {"query_noise_sigma", s.query_noise_sigma},
          {"permute_queries", s.permute_queries},
          {"mask_margin", s.mask_margin},
          {"boundary_flip_rate", s.boundary_flip_rate},
          {"class_margin", s.class_margin},
          {"seed", s.seed},
          {"world_seed", s.world_seed}};
}

SceneConfig SceneFromJson(const nlohmann::json& s) {
  SceneConfig c;
  c.frames = s.at("frames").get<std::size_t>();
  c.height = s.at("height").get<std::size_t>();
  c.width = s.at("width").get<std::size_t>();
  c.object_count = s.at("object_count").get<std::size_t>();
  c.query_budget = s.at("query_budget").get<std::size_t>();
  c.channels = s.at("channels").get<std::size_t>();
  c.class_count = s.at("class_count").get<std::size_t>();
  c.min_speed = s.at("min_speed").get<double>();
  c.max_speed = s.at("max_speed").get<double>();
  c.occlusion_rate = s.at("occlusion_rate").get<double>();
  c.swap_hazard_rate = s.at("swap_hazard_rate").get<double>();
  c.query_noise_sigma = s.at("query_noise_sigma").get<double>();
  c.permute_queries = s.at("permute_queries").get<bool>();
  c.mask_margin = s.at("mask_margin").get<double>();
  c.boundary_flip_rate = s.at("boundary_flip_rate").get<double>();
  c.class_margin = s.at("class_margin").get<double>();
  c.seed = s.at("seed").get<std::uint64_t>();
  c.world_seed = s.at("world_seed").get<std::uint64_t>();
  return c;
}

void TrainConfig::Validate() const {
  scene.Validate();
  tracker.Validate();
  refiner.Validate();
  noise.Validate();
  loss.Validate();
  tracker_stage.optimizer.Validate();
  refiner_stage.optimizer.Validate();
  if (tracker_stage.clip_length < 2) {
    throw std::invalid_argument("config: tracker clip length must be >= 2");
  }
  if (refiner_stage.clip_length < 1) {
    throw std::invalid_argument("config: refiner clip length must be >= 1");
  }
  if (tracker.channels != scene.channels || refiner.channels != scene.channels) {
    throw std::invalid_argument("config: model channels must equal scene channels");
  }
  if (tracker.class_count != scene.class_count || refiner.class_count != scene.class_count) {
    throw std::invalid_argument("config: model class count must equal scene class count");
  }
  if (memory_bank_capacity == 0) throw std::invalid_argument("config: memory bank capacity must be >= 1");
  if (video_count == 0) throw std::invalid_argument("config: video_count must be >= 1");
}

nlohmann::json ToJson(const TrainConfig& c) {
  const json scene = SceneToJson(c.scene);
  json tracker = {{"channels", c.tracker.channels},
                  {"heads", c.tracker.heads},
                  {"block_count", c.tracker.block_count},
                  {"class_count", c.tracker.class_count},
                  {"ffn_hidden", c.tracker.ffn_hidden}};
  json refiner = {{"channels", c.refiner.channels},
                  {"heads", c.refiner.heads},
                  {"block_count", c.refiner.block_count},
                  {"class_count", c.refiner.class_count},
                  {"kernel_width", c.refiner.kernel_width},
                  {"ffn_hidden", c.refiner.ffn_hidden}};
  json noise = {{"strategy", NoiseStrategyName(c.noise.strategy)},
                {"probability", c.noise.probability}};
  json loss = {{"contrastive", c.loss.contrastive},
               {"classification", c.loss.classification},
               {"dice", c.loss.dice},
               {"mask_ce", c.loss.mask_ce}};
  return {{"schema_version", kConfigSchemaVersion},
          {"seed", c.seed},
          {"video_count", c.video_count},
          {"scene", scene},
          {"tracker", tracker},
          {"refiner", refiner},
          {"noise", noise},
          {"loss", loss},
          {"tracker_stage", StageJson(c.tracker_stage)},
          {"refiner_stage", StageJson(c.refiner_stage)},
          {"tracker_contrastive", c.tracker_contrastive},
          {"refiner_contrastive", c.refiner_contrastive},
          {"memory_bank_capacity", c.memory_bank_capacity}};
}

TrainConfig TrainConfigFromJson(const nlohmann::json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("config: top level must be an object");
  const int version = doc.value("schema_version", kConfigSchemaVersion);
  if (version != kConfigSchemaVersion) {
    throw std::invalid_argument("config: unsupported schema_version " + std::to_string(version));
  }
  json merged = ToJson(TrainConfig{});
  CheckKeys(doc, merged, "");
  merged.merge_patch(doc);

  TrainConfig c;
  try {
    c.scene = SceneFromJson(merged.at("scene"));

    const json& t = merged.at("tracker");
    c.tracker.channels = t.at("channels").get<std::size_t>();
    c.tracker.heads = t.at("heads").get<std::size_t>();
    c.tracker.block_count = t.at("block_count").get<std::size_t>();
    c.tracker.class_count = t.at("class_count").get<std::size_t>();
    c.tracker.ffn_hidden = t.at("ffn_hidden").get<std::size_t>();

    const json& r = merged.at("refiner");
    c.refiner.channels = r.at("channels").get<std::size_t>();
    c.refiner.heads = r.at("heads").get<std::size_t>();
    c.refiner.block_count = r.at("block_count").get<std::size_t>();
    c.refiner.class_count = r.at("class_count").get<std::size_t>();
    c.refiner.kernel_width = r.at("kernel_width").get<std::size_t>();
    c.refiner.ffn_hidden = r.at("ffn_hidden").get<std::size_t>();

    c.noise.strategy = ParseNoiseStrategy(merged.at("noise").at("strategy").get<std::string>());
    c.noise.probability = merged.at("noise").at("probability").get<double>();

    const json& l = merged.at("loss");
    c.loss.contrastive = l.at("contrastive").get<double>();
    c.loss.classification = l.at("classification").get<double>();
    c.loss.dice = l.at("dice").get<double>();
    c.loss.mask_ce = l.at("mask_ce").get<double>();

    c.tracker_stage = StageFrom(merged.at("tracker_stage"));
    c.refiner_stage = StageFrom(merged.at("refiner_stage"));
    c.tracker_contrastive = merged.at("tracker_contrastive").get<bool>();
    c.refiner_contrastive = merged.at("refiner_contrastive").get<bool>();
    c.memory_bank_capacity = merged.at("memory_bank_capacity").get<std::size_t>();
    c.seed = merged.at("seed").get<std::uint64_t>();
    c.video_count = merged.at("video_count").get<std::size_t>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  c.Validate();
  return c;
}

TrainConfig LoadTrainConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(path + ": " + e.what());
  }
  return TrainConfigFromJson(doc);
}

void SaveTrainConfig(const TrainConfig& config, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config " + path);
  out << ToJson(config).dump(2) << '\n';
}

void ApplyOverride(TrainConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw std::invalid_argument("override must look like key=value: " + assignment);
  }
  std::string pointer = "/" + assignment.substr(0, eq);
  for (auto& ch : pointer) {
    if (ch == '.') ch = '/';
  }
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json doc = ToJson(config);
  const json::json_pointer ptr(pointer);
  if (!doc.contains(ptr)) {
    throw std::invalid_argument("unknown config key: " + assignment.substr(0, eq));
  }
  doc[ptr] = value;
  config = TrainConfigFromJson(doc);
}

std::uint64_t ConfigHash(const TrainConfig& config) {
  const std::string text = ToJson(config).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace vidseg
