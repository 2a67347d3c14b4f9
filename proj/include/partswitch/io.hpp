#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "partswitch/dataset.hpp"
#include "partswitch/learning.hpp"
#include "partswitch/metrics.hpp"
#include "partswitch/pipeline.hpp"
#include "partswitch/synthetic.hpp"

namespace partswitch::io {

using nlohmann::json;
namespace fs = std::filesystem;

inline constexpr const char* kToolVersion = "0.3.0";
inline constexpr const char* kModelFormat = "partswitch-model/1";

/// Missing, unreadable or unwritable file.
class FileError : public std::runtime_error {
 public:
  FileError(const fs::path& path, const std::string& what)
      : std::runtime_error(path.string() + ": " + what) {}
};

/// Content that does not match the expected schema. `line` is 1-based for
/// record streams and 0 for whole-file documents.
class SchemaError : public std::runtime_error {
 public:
  SchemaError(const fs::path& path, std::size_t line, const std::string& detail)
      : std::runtime_error((path.empty() ? std::string("<json>") : path.string()) +
                           (line ? ":" + std::to_string(line) : std::string()) + ": " + detail),
        line_(line),
        detail_(detail) {}
  explicit SchemaError(const std::string& detail) : SchemaError(fs::path(), 0, detail) {}

  std::size_t line() const { return line_; }
  const std::string& detail() const { return detail_; }

 private:
  std::size_t line_;
  std::string detail_;
};

json box_to_json(const Box& b);
Box box_from_json(const json& j);

// Whole-file documents.
json model_to_json(const TrainedModel& model);
TrainedModel model_from_json(const json& j);
void write_model(const fs::path& path, const TrainedModel& model);
TrainedModel read_model(const fs::path& path);

SynthConfig synth_config_from_json(const json& j);
json synth_config_to_json(const SynthConfig& cfg);
json truth_to_json(const GraphSpec& spec, const SynthTruth& truth);

struct TrainSettings {
  std::vector<std::string> node_names{"object", "head", "torso", "legs"};
  PipelineConfig pipeline;
};
/// Pattern presets: "all", "all-on", "no-holistic", "all-on-no-holistic", or
/// an explicit list of masks.
std::vector<std::uint32_t> patterns_from_json(const json& j, int num_nodes);
TrainSettings train_settings_from_json(const json& j);

json read_json_file(const fs::path& path);

// Record streams, one JSON object per line.
json annotation_to_json(const ImageAnnotation& annotation);
std::vector<ImageAnnotation> read_annotations(const fs::path& path);
void write_annotations(const fs::path& path, std::span<const ImageAnnotation> annotations);

/// Hypotheses grouped by image id; `node` may be a node name or an index.
std::map<std::string, std::vector<Hypothesis>> read_hypotheses(const fs::path& path,
                                                               const GraphSpec& spec);
void write_hypotheses(const fs::path& path, const GraphSpec& spec, std::span<const ImageData> images);

json detection_to_json(const GraphSpec& spec, const std::string& class_name, const Detection& d);
void write_detections(const fs::path& path, const GraphSpec& spec, const std::string& class_name,
                      std::span<const Detection> detections);

struct DetectionRecord {
  std::string class_name;
  std::map<std::string, HypothesisId> assignment;
  std::map<std::string, Box> boxes;
  EvalDetection eval;
};
std::vector<DetectionRecord> read_detections(const fs::path& path);

json round_to_json(const RoundRecord& r);

/// Writes through a temporary file and renames, so readers never see a
/// partially written output.
void write_text(const fs::path& path, const std::string& content);
std::string read_text(const fs::path& path);

struct RunManifest {
  std::string command;
  std::string config_path;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::optional<std::uint64_t> seed;
  std::string tool_version = kToolVersion;
};
json manifest_to_json(const RunManifest& m);
void write_manifest(const fs::path& path, const RunManifest& m);

}  // namespace partswitch::io
