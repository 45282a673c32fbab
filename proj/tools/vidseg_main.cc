// vidseg: dataset generation, staged training, inference, evaluation, and
// gradient checks. Log verbosity comes from SPDLOG_LEVEL (e.g. "debug").

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/cfg/env.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "vidseg/config.h"
#include "vidseg/gradsuite.h"
#include "vidseg/harness.h"
#include "vidseg/inference.h"
#include "vidseg/io.h"
#include "vidseg/train.h"

namespace fs = std::filesystem;
using namespace vidseg;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string out;
};

void AddCommon(CLI::App* cmd, Common& c, const std::string& out_help) {
  cmd->add_option("--config", c.config_path, "JSON config (defaults when omitted)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Overrides the config seed");
  cmd->add_option("--set", c.overrides, "Config override, e.g. noise.probability=0.5");
  cmd->add_option("--out", c.out, out_help)->required();
}

TrainConfig ResolveConfig(const Common& c) {
  TrainConfig config = c.config_path.empty() ? TrainConfig{} : LoadTrainConfig(c.config_path);
  for (const auto& o : c.overrides) ApplyOverride(config, o);
  if (c.seed) config.seed = *c.seed;
  config.Validate();
  return config;
}

std::string PredictionFileName(std::size_t index) {
  return VideoFileName(index).replace(VideoFileName(index).size() - 4, 4, ".vsp");
}

LossSink ProgressSink(std::size_t total, std::ofstream* log) {
  return [total, log](const LossLogEntry& e) {
    if (log) {
      *log << nlohmann::json{{"iteration", e.iteration},
                             {"learning_rate", e.learning_rate},
                             {"grad_norm", e.grad_norm},
                             {"total", e.loss.total},
                             {"classification", e.loss.classification},
                             {"dice", e.loss.dice},
                             {"mask_ce", e.loss.mask_ce},
                             {"contrastive", e.loss.contrastive}}
                  .dump()
           << '\n';
    }
    spdlog::debug("iter {} loss {:.5f} lr {:.2e} |g| {:.3f}", e.iteration, e.loss.total,
                  e.learning_rate, e.grad_norm);
    const std::size_t tick = std::max<std::size_t>(1, total / 10);
    if ((e.iteration + 1) % tick == 0 || e.iteration + 1 == total) {
      spdlog::info("iteration {}/{} loss {:.4f}", e.iteration + 1, total, e.loss.total);
    }
  };
}

int GenData(const Common& c) {
  const TrainConfig config = ResolveConfig(c);
  const auto videos = GenerateDataset(config);
  SaveDataset(videos, c.out);
  SaveTrainConfig(config, (fs::path(c.out) / "config.json").string());
  spdlog::info("wrote {} videos to {}", videos.size(), c.out);
  return 0;
}

int TrainTrackerCmd(const Common& c, const std::string& data, const std::string& log_path) {
  const TrainConfig config = ResolveConfig(c);
  const auto videos = LoadDataset(data);
  std::ofstream log;
  if (!log_path.empty()) log.open(log_path);
  const auto result = TrainTracker(config, videos,
                                   ProgressSink(config.tracker_stage.iterations,
                                                log_path.empty() ? nullptr : &log));
  SaveCheckpoint(MakeTrackerCheckpoint(result.tracker, config, config.tracker_stage.iterations),
                 c.out);
  spdlog::info("noised {} of {} tracked frames; checkpoint {}", result.noised_frames,
               result.tracked_frames, c.out);
  return 0;
}

int TrainRefinerCmd(const Common& c, const std::string& data, const std::string& tracker_path,
                    const std::string& log_path) {
  const TrainConfig config = ResolveConfig(c);
  const ReferringTracker tracker = TrackerFromCheckpoint(LoadCheckpoint(tracker_path));
  const auto videos = LoadDataset(data);
  std::ofstream log;
  if (!log_path.empty()) log.open(log_path);
  const auto result = TrainRefiner(config, tracker, videos,
                                   ProgressSink(config.refiner_stage.iterations,
                                                log_path.empty() ? nullptr : &log));
  if (result.tracker_hash_before != result.tracker_hash_after) {
    spdlog::error("tracker parameters changed during refiner training");
    return 1;
  }
  SaveCheckpoint(MakeRefinerCheckpoint(result.refiner, tracker, config,
                                       config.refiner_stage.iterations),
                 c.out);
  spdlog::info("checkpoint {}", c.out);
  return 0;
}

int InferCmd(const std::string& out, const std::string& data, const std::string& mode,
             const std::string& tracker_path, const std::string& refiner_path) {
  if (mode != "online" && mode != "offline" && mode != "heuristic") {
    throw std::invalid_argument("mode must be online, offline, or heuristic");
  }
  std::optional<ReferringTracker> tracker;
  std::optional<TemporalRefiner> refiner;
  if (mode != "heuristic") {
    if (tracker_path.empty()) throw std::invalid_argument(mode + " mode needs --tracker");
    tracker = TrackerFromCheckpoint(LoadCheckpoint(tracker_path));
  }
  if (mode == "offline") {
    if (refiner_path.empty()) throw std::invalid_argument("offline mode needs --refiner");
    refiner = RefinerFromCheckpoint(LoadCheckpoint(refiner_path), *tracker);
  }
  const auto videos = LoadDataset(data);
  fs::create_directories(out);
  for (std::size_t i = 0; i < videos.size(); ++i) {
    const auto frames = StubSegmentVideo(videos[i]);
    VideoResult result;
    if (mode == "online") {
      result = PredictOnline(*tracker, frames);
    } else if (mode == "offline") {
      result = PredictOffline(*tracker, *refiner, frames);
    } else {
      result = PredictHeuristic(frames);
    }
    SavePredictions(ToPredictionFile(result, mode, videos[i].config),
                    (fs::path(out) / PredictionFileName(i)).string());
    spdlog::debug("video {}: {} tubes", i, result.tubes.size());
  }
  spdlog::info("wrote {} prediction files to {}", videos.size(), out);
  return 0;
}

int EvaluateCmd(const std::string& out, const std::string& data, const std::string& pred_dir,
                const std::vector<std::string>& metrics) {
  const auto videos = LoadDataset(data);
  std::vector<PredictionFile> preds;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    preds.push_back(LoadPredictions((fs::path(pred_dir) / PredictionFileName(i)).string()));
  }
  const auto reports = Evaluate(preds, videos, metrics);
  const std::string text = ReportsToJson(reports);
  WriteFile(out, text);
  for (const auto& r : reports) spdlog::info("{} = {:.4f}", r.metric, r.value);
  return 0;
}

int GradcheckCmd(const std::string& out, const std::string& scope, std::uint64_t seed,
                 std::size_t draws) {
  const auto reports = RunGradCases(StandardGradCases(), scope, draws, kGradCheckTolerance, seed);
  nlohmann::json table = nlohmann::json::array();
  bool ok = true;
  std::printf("%-8s %-22s %6s %10s %8s\n", "scope", "case", "draws", "max_err", "result");
  for (const auto& r : reports) {
    std::printf("%-8s %-22s %6zu %10.2e %8s\n", r.scope.c_str(), r.name.c_str(), r.draws,
                r.max_error, r.passed ? "pass" : "FAIL");
    table.push_back({{"scope", r.scope},
                     {"case", r.name},
                     {"draws", r.draws},
                     {"redraws", r.redraws},
                     {"max_error", r.max_error},
                     {"passed", r.passed}});
    ok = ok && r.passed;
  }
  if (!out.empty()) WriteFile(out, table.dump(2) + "\n");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_st("vidseg"));
  spdlog::cfg::load_env_levels();

  CLI::App app{"Synthetic video segmentation: referring tracker and temporal refiner"};
  app.require_subcommand(1);

  Common gen, trk, ref;
  std::string data, tracker_path, refiner_path, log_path, mode = "online", pred_dir;
  std::string scope = "all", out;
  std::uint64_t seed = 0;
  std::size_t draws = kGradCheckDraws;
  std::vector<std::string> metrics = kMetricNames;

  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset directory");
  AddCommon(gen_cmd, gen, "Output directory");

  auto* trk_cmd = app.add_subcommand("train-tracker", "Train the referring tracker");
  AddCommon(trk_cmd, trk, "Checkpoint path");
  trk_cmd->add_option("--data", data, "Dataset directory")->required();
  trk_cmd->add_option("--log", log_path, "Loss curve as JSON lines");

  auto* ref_cmd = app.add_subcommand("train-refiner", "Train the temporal refiner");
  AddCommon(ref_cmd, ref, "Checkpoint path");
  ref_cmd->add_option("--data", data, "Dataset directory")->required();
  ref_cmd->add_option("--tracker", tracker_path, "Tracker checkpoint")->required();
  ref_cmd->add_option("--log", log_path, "Loss curve as JSON lines");

  auto* inf_cmd = app.add_subcommand("infer", "Write prediction files for a dataset");
  inf_cmd->add_option("--out", out, "Prediction directory")->required();
  inf_cmd->add_option("--data", data, "Dataset directory")->required();
  inf_cmd->add_option("--mode", mode, "online, offline, or heuristic");
  inf_cmd->add_option("--tracker", tracker_path, "Tracker checkpoint");
  inf_cmd->add_option("--refiner", refiner_path, "Refiner checkpoint (offline)");

  auto* eval_cmd = app.add_subcommand("evaluate", "Score prediction files against a dataset");
  eval_cmd->add_option("--out", out, "Report path (JSON)")->required();
  eval_cmd->add_option("--data", data, "Dataset directory")->required();
  eval_cmd->add_option("--pred", pred_dir, "Prediction directory")->required();
  eval_cmd->add_option("--metrics", metrics, "Subset of " + CLI::detail::join(kMetricNames))
      ->delimiter(',');

  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  grad_cmd->add_option("--scope", scope, "ops, blocks, losses, or all")
      ->check(CLI::IsMember(kGradScopes));
  grad_cmd->add_option("--seed", seed, "Seed for the random draws");
  grad_cmd->add_option("--draws", draws, "Random points per case");
  grad_cmd->add_option("--out", out, "Table as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen_cmd) return GenData(gen);
    if (*trk_cmd) return TrainTrackerCmd(trk, data, log_path);
    if (*ref_cmd) return TrainRefinerCmd(ref, data, tracker_path, log_path);
    if (*inf_cmd) return InferCmd(out, data, mode, tracker_path, refiner_path);
    if (*eval_cmd) return EvaluateCmd(out, data, pred_dir, metrics);
    if (*grad_cmd) return GradcheckCmd(out, scope, seed, draws);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
