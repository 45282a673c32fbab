#include "vidseg/io.h"

#include <bit>
#include <fstream>
#include <iterator>
#include <sstream>

#include "vidseg/config.h"

namespace vidseg {
namespace {

using nlohmann::json;

constexpr std::size_t kMagicSize = 8;
constexpr std::size_t kPreambleSize = kMagicSize + 2 + 2 + 8;

template <typename U>
void PutLe(std::string& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

void PutDouble(std::string& out, double v) { PutLe(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t begin, std::size_t base)
      : bytes_(bytes), pos_(begin), base_(base) {}

  template <typename U>
  U Le(const char* what) {
    Need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }

  double Double(const char* what) { return std::bit_cast<double>(Le<std::uint64_t>(what)); }

  std::size_t offset() const { return base_ + pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void Need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw ParseError(std::string("truncated ") + what, offset());
    }
  }

  const std::string& bytes_;
  std::size_t pos_;
  std::size_t base_;
};

void RequireDone(const Reader& r) {
  if (!r.done()) throw ParseError("trailing bytes after payload", r.offset());
}

void PutMask(std::string& out, const BinaryMask& mask) {
  const auto runs = EncodeRle(mask);
  PutLe(out, static_cast<std::uint32_t>(runs.size()));
  for (auto r : runs) PutLe(out, r);
}

BinaryMask GetMask(Reader& r, std::size_t size) {
  const std::size_t at = r.offset();
  const auto count = r.Le<std::uint32_t>("run count");
  if (count > size + 1) throw ParseError("run count exceeds mask size", at);
  std::vector<std::uint32_t> runs(count);
  for (auto& v : runs) v = r.Le<std::uint32_t>("run length");
  try {
    return DecodeRle(runs, size);
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), at);
  }
}

// Runs `fn` on the header, turning JSON access errors into ParseErrors at the
// header's file offset.
template <typename Fn>
auto WithHeader(Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw ParseError(std::string("header: ") + e.what(), kPreambleSize);
  }
}

}  // namespace

ParseError::ParseError(const std::string& what, std::size_t offset)
    : std::runtime_error(what + " at byte " + std::to_string(offset)), offset_(offset) {}

std::vector<std::uint32_t> EncodeRle(const BinaryMask& mask) {
  std::vector<std::uint32_t> runs;
  std::uint8_t current = 0;
  std::uint32_t length = 0;
  for (auto v : mask) {
    if ((v != 0) != (current != 0)) {
      runs.push_back(length);
      current = v ? 1 : 0;
      length = 0;
    }
    ++length;
  }
  runs.push_back(length);
  return runs;
}

BinaryMask DecodeRle(const std::vector<std::uint32_t>& runs, std::size_t size) {
  BinaryMask mask;
  mask.reserve(size);
  std::uint8_t value = 0;
  for (auto r : runs) {
    if (r > size - mask.size()) throw std::invalid_argument("rle: runs exceed mask size");
    mask.insert(mask.end(), r, value);
    value ^= 1;
  }
  if (mask.size() != size) throw std::invalid_argument("rle: runs do not cover the mask");
  return mask;
}

std::string EncodeContainer(std::string_view magic, FormatVersion version, const json& header,
                            const std::string& payload) {
  if (magic.size() != kMagicSize) throw std::invalid_argument("container: magic must be 8 bytes");
  const std::string text = header.dump();
  std::string out(magic);
  PutLe(out, version.major);
  PutLe(out, version.minor);
  PutLe(out, static_cast<std::uint64_t>(text.size()));
  out += text;
  out += payload;
  return out;
}

Container DecodeContainer(const std::string& bytes, std::string_view magic,
                          std::uint16_t supported_major) {
  if (bytes.size() < kMagicSize || std::string_view(bytes).substr(0, kMagicSize) != magic) {
    throw ParseError("bad magic, expected " + std::string(magic), 0);
  }
  Reader r(bytes, kMagicSize, 0);
  Container c;
  c.version.major = r.Le<std::uint16_t>("version");
  c.version.minor = r.Le<std::uint16_t>("version");
  if (c.version.major != supported_major) {
    throw ParseError("unsupported major version " + std::to_string(c.version.major), kMagicSize);
  }
  const auto length = r.Le<std::uint64_t>("header length");
  if (length > bytes.size() - kPreambleSize) {
    throw ParseError("header length exceeds file size", kMagicSize + 4);
  }
  try {
    c.header = json::parse(bytes.begin() + kPreambleSize, bytes.begin() + kPreambleSize + length);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("header is not JSON: ") + e.what(),
                     kPreambleSize + (e.byte > 0 ? e.byte - 1 : 0));
  }
  if (!c.header.is_object()) throw ParseError("header must be a JSON object", kPreambleSize);
  c.payload_offset = kPreambleSize + length;
  c.payload = bytes.substr(c.payload_offset);
  return c;
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void WriteFile(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::string EncodeVideo(const SyntheticVideo& video) {
  json events = json::array();
  for (const auto& e : video.events) {
    events.push_back({{"kind", EventKindName(e.kind)},
                      {"frame", e.frame},
                      {"object", e.object},
                      {"other", e.other}});
  }
  const json header = {{"scene", SceneToJson(video.config)},
                       {"classes", video.classes},
                       {"frames", video.frame_count()},
                       {"objects", video.object_count()},
                       {"full_area", video.full_area},
                       {"events", events}};
  std::string payload;
  for (const auto& frame : video.masks)
    for (const auto& mask : frame) PutMask(payload, mask);
  return EncodeContainer(kDatasetMagic, kDatasetVersion, header, payload);
}

SyntheticVideo DecodeVideo(const std::string& bytes) {
  const Container c = DecodeContainer(bytes, kDatasetMagic, kDatasetVersion.major);
  SyntheticVideo v;
  std::size_t frames = 0, objects = 0;
  std::vector<SceneEvent> logged;
  WithHeader([&] {
    const json& h = c.header;
    v.config = SceneFromJson(h.at("scene"));
    v.classes = h.at("classes").get<std::vector<int>>();
    frames = h.at("frames").get<std::size_t>();
    objects = h.at("objects").get<std::size_t>();
    v.full_area = h.at("full_area").get<std::vector<std::vector<std::size_t>>>();
    for (const auto& e : h.at("events")) {
      logged.push_back({ParseEventKind(e.at("kind").get<std::string>()),
                        e.at("frame").get<std::size_t>(), e.at("object").get<int>(),
                        e.at("other").get<int>()});
    }
    return 0;
  });
  if (v.classes.size() != objects || v.full_area.size() != frames) {
    throw ParseError("header: object or frame counts disagree", kPreambleSize);
  }
  for (int label : v.classes) {
    if (label < 0 || static_cast<std::size_t>(label) >= v.config.class_count) {
      throw ParseError("header: class label out of range", kPreambleSize);
    }
  }
  for (const auto& row : v.full_area) {
    if (row.size() != objects) throw ParseError("header: full_area shape mismatch", kPreambleSize);
  }
  const std::size_t pixels = v.config.height * v.config.width;
  Reader r(c.payload, 0, c.payload_offset);
  v.masks.assign(frames, std::vector<BinaryMask>(objects));
  for (auto& frame : v.masks)
    for (auto& mask : frame) mask = GetMask(r, pixels);
  RequireDone(r);

  for (const auto& e : logged) {
    if (e.kind == SceneEvent::Kind::kSwapHazard) v.events.push_back(e);
  }
  DeriveVisibility(v);
  if (v.events != logged) {
    throw ParseError("event log inconsistent with masks", kPreambleSize);
  }
  return v;
}

void SaveVideo(const SyntheticVideo& video, const std::string& path) {
  WriteFile(path, EncodeVideo(video));
}

SyntheticVideo LoadVideo(const std::string& path) { return DecodeVideo(ReadFile(path)); }

std::string EncodePredictions(const PredictionFile& p) {
  json tubes = json::array();
  for (const auto& t : p.tubes) {
    if (t.masks.size() != p.frames) {
      throw std::invalid_argument("predictions: tube frame count differs from the file's");
    }
    tubes.push_back({{"label", t.label}, {"score", t.score}, {"identity", t.identity}});
  }
  const json header = {{"mode", p.mode},
                       {"frames", p.frames},
                       {"height", p.height},
                       {"width", p.width},
                       {"tubes", tubes}};
  std::string payload;
  for (const auto& t : p.tubes)
    for (const auto& m : t.masks) {
      if (m.size() != p.height * p.width) {
        throw std::invalid_argument("predictions: mask size differs from height*width");
      }
      PutMask(payload, m);
    }
  return EncodeContainer(kPredictionMagic, kPredictionVersion, header, payload);
}

PredictionFile DecodePredictions(const std::string& bytes) {
  const Container c = DecodeContainer(bytes, kPredictionMagic, kPredictionVersion.major);
  PredictionFile p;
  WithHeader([&] {
    const json& h = c.header;
    p.mode = h.at("mode").get<std::string>();
    p.frames = h.at("frames").get<std::size_t>();
    p.height = h.at("height").get<std::size_t>();
    p.width = h.at("width").get<std::size_t>();
    for (const auto& t : h.at("tubes")) {
      TubePrediction tube;
      tube.label = t.at("label").get<int>();
      tube.score = t.at("score").get<double>();
      tube.identity = t.at("identity").get<int>();
      p.tubes.push_back(std::move(tube));
    }
    return 0;
  });
  Reader r(c.payload, 0, c.payload_offset);
  for (auto& t : p.tubes) {
    t.masks.reserve(p.frames);
    for (std::size_t f = 0; f < p.frames; ++f) t.masks.push_back(GetMask(r, p.height * p.width));
  }
  RequireDone(r);
  return p;
}

void SavePredictions(const PredictionFile& predictions, const std::string& path) {
  WriteFile(path, EncodePredictions(predictions));
}

PredictionFile LoadPredictions(const std::string& path) {
  return DecodePredictions(ReadFile(path));
}

std::string EncodeCheckpoint(const Checkpoint& checkpoint) {
  json table = json::array();
  std::string payload;
  for (const auto& [name, tensor] : checkpoint.tensors) {
    table.push_back({{"name", name}, {"shape", tensor.shape()}});
    for (double v : tensor.data()) PutDouble(payload, v);
  }
  const json header = {
      {"stage", checkpoint.stage}, {"metadata", checkpoint.metadata}, {"tensors", table}};
  return EncodeContainer(kCheckpointMagic, kCheckpointVersion, header, payload);
}

Checkpoint DecodeCheckpoint(const std::string& bytes) {
  const Container c = DecodeContainer(bytes, kCheckpointMagic, kCheckpointVersion.major);
  Checkpoint ck;
  std::vector<std::pair<std::string, Shape>> table;
  WithHeader([&] {
    ck.stage = c.header.at("stage").get<std::string>();
    ck.metadata = c.header.at("metadata");
    for (const auto& t : c.header.at("tensors")) {
      table.emplace_back(t.at("name").get<std::string>(), t.at("shape").get<Shape>());
    }
    return 0;
  });
  Reader r(c.payload, 0, c.payload_offset);
  for (auto& [name, shape] : table) {
    std::vector<double> values(NumElements(shape));
    for (auto& v : values) v = r.Double("tensor data");
    ck.tensors.emplace_back(name, Tensor::FromData(shape, std::move(values)));
  }
  RequireDone(r);
  return ck;
}

void SaveCheckpoint(const Checkpoint& checkpoint, const std::string& path) {
  WriteFile(path, EncodeCheckpoint(checkpoint));
}

Checkpoint LoadCheckpoint(const std::string& path) { return DecodeCheckpoint(ReadFile(path)); }

std::vector<std::pair<std::string, Tensor>> SnapshotParameters(const ParameterSet& params) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [name, t] : params.items()) {
    out.emplace_back(name, Tensor::FromData(t.shape(), {t.data().begin(), t.data().end()}));
  }
  return out;
}

void RestoreParameters(const Checkpoint& checkpoint, ParameterSet& params) {
  if (checkpoint.tensors.size() != params.items().size()) {
    throw std::invalid_argument("checkpoint has " + std::to_string(checkpoint.tensors.size()) +
                                " tensors, model expects " +
                                std::to_string(params.items().size()));
  }
  for (const auto& [name, t] : checkpoint.tensors) {
    if (!params.Contains(name)) throw std::invalid_argument("checkpoint tensor not in model: " + name);
    Tensor target = params.Get(name);
    if (target.shape() != t.shape()) {
      throw ShapeError("restore " + name, target.shape(), t.shape());
    }
    std::copy(t.data().begin(), t.data().end(), target.mutable_data().begin());
  }
}

}  // namespace vidseg
