// On-disk formats. Every file is a container:
//
//   magic        8 bytes
//   major, minor u16 little-endian each
//   header_len   u64 little-endian
//   header       header_len bytes of UTF-8 JSON
//   payload      format-specific, little-endian
//
// Readers accept any minor version of a known major version.

#ifndef VIDSEG_IO_H_
#define VIDSEG_IO_H_

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vidseg/metrics.h"
#include "vidseg/nn.h"
#include "vidseg/scene.h"

namespace vidseg {

// Malformed input; offset() is the byte position where reading failed.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset);
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// Row-major runs alternating background/foreground, starting with
// background (possibly a zero-length run). Run lengths sum to the mask size.
std::vector<std::uint32_t> EncodeRle(const BinaryMask& mask);
BinaryMask DecodeRle(const std::vector<std::uint32_t>& runs, std::size_t size);

struct FormatVersion {
  std::uint16_t major;
  std::uint16_t minor;
};

inline constexpr std::string_view kDatasetMagic = "VSEGDATA";
inline constexpr std::string_view kPredictionMagic = "VSEGPRED";
inline constexpr std::string_view kCheckpointMagic = "VSEGCKPT";
inline constexpr FormatVersion kDatasetVersion{1, 0};
inline constexpr FormatVersion kPredictionVersion{1, 0};
inline constexpr FormatVersion kCheckpointVersion{1, 0};

struct Container {
  FormatVersion version{};
  nlohmann::json header;
  std::string payload;
  std::size_t payload_offset = 0;  // file offset of payload[0]
};

std::string EncodeContainer(std::string_view magic, FormatVersion version,
                            const nlohmann::json& header, const std::string& payload);
// Rejects a different magic or an unsupported major version.
Container DecodeContainer(const std::string& bytes, std::string_view magic,
                          std::uint16_t supported_major);

std::string ReadFile(const std::string& path);
void WriteFile(const std::string& path, const std::string& bytes);

// Dataset: one video per file. Payload holds, per frame and object, a u32 run
// count followed by the runs.
std::string EncodeVideo(const SyntheticVideo& video);
SyntheticVideo DecodeVideo(const std::string& bytes);
void SaveVideo(const SyntheticVideo& video, const std::string& path);
SyntheticVideo LoadVideo(const std::string& path);

struct PredictionFile {
  std::string mode;  // "online", "offline", or "heuristic"
  std::size_t frames = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<TubePrediction> tubes;
};

std::string EncodePredictions(const PredictionFile& predictions);
PredictionFile DecodePredictions(const std::string& bytes);
void SavePredictions(const PredictionFile& predictions, const std::string& path);
PredictionFile LoadPredictions(const std::string& path);

struct Checkpoint {
  std::string stage;  // "tracker" or "refiner"
  nlohmann::json metadata;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

std::string EncodeCheckpoint(const Checkpoint& checkpoint);
Checkpoint DecodeCheckpoint(const std::string& bytes);
void SaveCheckpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint LoadCheckpoint(const std::string& path);

// Tensor table of a parameter set, in name order; values are copied.
std::vector<std::pair<std::string, Tensor>> SnapshotParameters(const ParameterSet& params);
// Copies checkpoint tensors into `params`; names and shapes must match exactly.
void RestoreParameters(const Checkpoint& checkpoint, ParameterSet& params);

}  // namespace vidseg

#endif  // VIDSEG_IO_H_
