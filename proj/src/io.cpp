#include "partswitch/io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <bit>
#include <set>
#include <sstream>

namespace partswitch::io {

namespace {

[[noreturn]] void bad(const std::string& msg) { throw SchemaError(msg); }

const json& field(const json& j, const char* key) {
  if (!j.is_object()) bad("expected a JSON object");
  auto it = j.find(key);
  if (it == j.end()) bad(std::string("missing field '") + key + "'");
  return *it;
}

const json* optional_field(const json& j, const char* key) {
  if (!j.is_object()) bad("expected a JSON object");
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

void reject_unknown(const json& j, std::initializer_list<const char*> known) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) bad("unknown field '" + key + "'");
  }
}

double as_number(const json& j, const std::string& what) {
  if (!j.is_number()) bad("'" + what + "' must be a number");
  return j.get<double>();
}

// -inf is stored as null.
double as_threshold(const json& j, const std::string& what) {
  if (j.is_null()) return -std::numeric_limits<double>::infinity();
  return as_number(j, what);
}

json threshold_json(double v) {
  if (std::isinf(v) && v < 0) return nullptr;
  return v;
}

std::int64_t as_int(const json& j, const std::string& what) {
  if (!j.is_number_integer()) bad("'" + what + "' must be an integer");
  return j.get<std::int64_t>();
}

std::string as_string(const json& j, const std::string& what) {
  if (!j.is_string()) bad("'" + what + "' must be a string");
  return j.get<std::string>();
}

bool as_bool(const json& j, const std::string& what) {
  if (!j.is_boolean()) bad("'" + what + "' must be a boolean");
  return j.get<bool>();
}

std::vector<double> as_numbers(const json& j, const std::string& what) {
  if (!j.is_array()) bad("'" + what + "' must be an array");
  std::vector<double> out;
  for (const auto& v : j) out.push_back(as_number(v, what));
  return out;
}

std::vector<std::string> as_strings(const json& j, const std::string& what) {
  if (!j.is_array()) bad("'" + what + "' must be an array");
  std::vector<std::string> out;
  for (const auto& v : j) out.push_back(as_string(v, what));
  return out;
}

GraphSpec spec_from_names(std::vector<std::string> names) {
  try {
    return GraphSpec(std::move(names));
  } catch (const std::invalid_argument& e) {
    bad(e.what());
  }
}

json params_to_json(const GraphSpec& spec, const ModelParams& p) {
  json j;
  j["sigmoid_slope"] = p.sigmoid_slope;
  j["unary_w"] = p.unary_w;
  json pw = json::object();
  for (int e = 0; e < spec.num_edges(); ++e) {
    const auto [a, b] = spec.edge(e);
    pw[std::to_string(a) + "-" + std::to_string(b)] = p.pairwise_w[static_cast<std::size_t>(e)];
  }
  j["pairwise_w"] = pw;
  j["pattern_b"] = p.pattern_b;
  return j;
}

ModelParams params_from_json(const GraphSpec& spec, const json& j) {
  ModelParams p = ModelParams::zeros(spec);
  p.sigmoid_slope = as_number(field(j, "sigmoid_slope"), "sigmoid_slope");
  p.unary_w = as_numbers(field(j, "unary_w"), "unary_w");
  const json& pw = field(j, "pairwise_w");
  if (!pw.is_object()) bad("'pairwise_w' must be an object keyed by \"i-j\"");
  if (pw.size() != static_cast<std::size_t>(spec.num_edges())) {
    bad("'pairwise_w' has " + std::to_string(pw.size()) + " edges, expected " +
        std::to_string(spec.num_edges()));
  }
  for (int e = 0; e < spec.num_edges(); ++e) {
    const auto [a, b] = spec.edge(e);
    const std::string key = std::to_string(a) + "-" + std::to_string(b);
    const auto w = as_numbers(field(pw, key.c_str()), "pairwise_w." + key);
    if (w.size() != static_cast<std::size_t>(kPairwiseDim)) bad("pairwise_w." + key + " needs 10 entries");
    std::copy(w.begin(), w.end(), p.pairwise_w[static_cast<std::size_t>(e)].begin());
  }
  p.pattern_b = as_numbers(field(j, "pattern_b"), "pattern_b");
  try {
    p.check(spec);
  } catch (const std::invalid_argument& e) {
    bad(e.what());
  }
  return p;
}

template <typename Fn>
void for_each_record(const fs::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw FileError(path, "cannot open for reading");
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw SchemaError(path, number, e.what());
    } catch (const SchemaError& e) {
      throw SchemaError(path, number, e.detail());
    }
  }
  if (in.bad()) throw FileError(path, "read error");
}

std::string join_lines(const std::vector<json>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

}  // namespace

json box_to_json(const Box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

Box box_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) bad("a box must be an array [x1, y1, x2, y2]");
  try {
    return make_box(as_number(j[0], "bbox"), as_number(j[1], "bbox"), as_number(j[2], "bbox"),
                    as_number(j[3], "bbox"));
  } catch (const std::invalid_argument& e) {
    bad(e.what());
  }
}

json model_to_json(const TrainedModel& m) {
  json j;
  j["format"] = kModelFormat;
  j["class_name"] = m.class_name;
  j["node_names"] = m.spec.node_names();
  j.update(params_to_json(m.spec, m.params));

  json regs = json::object();
  for (const auto& [mask, r] : m.regressors) {
    json rows = json::array();
    if (!r.fallback) {
      for (std::size_t row = 0; row < 4; ++row) {
        rows.push_back(std::vector<double>(r.weights.begin() + static_cast<std::ptrdiff_t>(row * r.cols()),
                                           r.weights.begin() + static_cast<std::ptrdiff_t>((row + 1) * r.cols())));
      }
    }
    regs[std::to_string(mask)] = {{"weights", rows}, {"trained_on", r.trained_on}, {"fallback", r.fallback}};
  }
  j["box_regressors"] = regs;

  json thresholds = json::array();
  for (double t : m.prune.unary_threshold) thresholds.push_back(threshold_json(t));
  j["prune"] = {{"unary_threshold", thresholds},
                {"nms_iou", m.prune.nms_iou},
                {"max_hypotheses", m.prune.max_hypotheses}};
  j["detect"] = {{"score_threshold", threshold_json(m.detect.score_threshold)},
                 {"max_raw_detections", m.detect.max_raw_detections},
                 {"allowed_patterns", m.detect.allowed_patterns}};
  return j;
}

TrainedModel model_from_json(const json& j) {
  reject_unknown(j, {"format", "class_name", "node_names", "sigmoid_slope", "unary_w", "pairwise_w",
                     "pattern_b", "box_regressors", "prune", "detect"});
  if (as_string(field(j, "format"), "format") != kModelFormat) bad("unsupported model format");
  TrainedModel m;
  m.spec = spec_from_names(as_strings(field(j, "node_names"), "node_names"));
  m.class_name = as_string(field(j, "class_name"), "class_name");
  m.params = params_from_json(m.spec, j);

  const json& regs = field(j, "box_regressors");
  if (!regs.is_object()) bad("'box_regressors' must be an object keyed by pattern mask");
  for (const auto& [key, value] : regs.items()) {
    BoxRegressor r;
    std::uint32_t mask = 0;
    try {
      std::size_t used = 0;
      mask = static_cast<std::uint32_t>(std::stoul(key, &used));
      if (used != key.size()) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      bad("box regressor key '" + key + "' is not a pattern mask");
    }
    if (mask == 0 || mask > m.spec.full_mask() || (mask & 1u)) {
      bad("box regressor key '" + key + "' is not a holistic-off pattern");
    }
    r.pattern.mask = mask;
    r.trained_on = static_cast<std::size_t>(as_int(field(value, "trained_on"), "trained_on"));
    r.fallback = as_bool(field(value, "fallback"), "fallback");
    const json& rows = field(value, "weights");
    if (!rows.is_array()) bad("regressor weights must be an array of rows");
    if (!r.fallback) {
      if (rows.size() != 4) bad("regressor " + key + " needs 4 weight rows");
      for (const auto& row : rows) {
        const auto w = as_numbers(row, "weights");
        if (w.size() != r.cols()) bad("regressor " + key + " rows need " + std::to_string(r.cols()) + " columns");
        r.weights.insert(r.weights.end(), w.begin(), w.end());
      }
    } else if (!rows.empty()) {
      bad("fallback regressor " + key + " must not carry weights");
    }
    m.regressors.emplace(mask, std::move(r));
  }

  const json& prune = field(j, "prune");
  reject_unknown(prune, {"unary_threshold", "nms_iou", "max_hypotheses"});
  for (const auto& t : field(prune, "unary_threshold")) m.prune.unary_threshold.push_back(as_threshold(t, "unary_threshold"));
  m.prune.nms_iou = as_number(field(prune, "nms_iou"), "nms_iou");
  for (const auto& c : field(prune, "max_hypotheses")) m.prune.max_hypotheses.push_back(static_cast<int>(as_int(c, "max_hypotheses")));

  const json& det = field(j, "detect");
  reject_unknown(det, {"score_threshold", "max_raw_detections", "allowed_patterns"});
  m.detect.score_threshold = as_threshold(field(det, "score_threshold"), "score_threshold");
  const auto cap = as_int(field(det, "max_raw_detections"), "max_raw_detections");
  if (cap < 1) bad("max_raw_detections must be at least 1");
  m.detect.max_raw_detections = static_cast<std::size_t>(cap);
  for (const auto& p : field(det, "allowed_patterns")) {
    m.detect.allowed_patterns.push_back(static_cast<std::uint32_t>(as_int(p, "allowed_patterns")));
  }
  try {
    m.prune.check();
  } catch (const std::invalid_argument& e) {
    bad(e.what());
  }
  return m;
}

json read_json_file(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaError(path, 0, e.what());
  }
}

void write_model(const fs::path& path, const TrainedModel& model) {
  write_text(path, model_to_json(model).dump(2) + "\n");
}

TrainedModel read_model(const fs::path& path) {
  const json j = read_json_file(path);
  try {
    return model_from_json(j);
  } catch (const SchemaError& e) {
    throw SchemaError(path, 0, e.detail());
  }
}

SynthConfig synth_config_from_json(const json& j) {
  if (!j.is_object()) bad("synth config must be a JSON object");
  reject_unknown(j, {"seed", "images", "negative_fraction", "min_objects", "max_objects", "image_width",
                     "image_height", "min_object_size", "max_object_size", "part_offset_sigma",
                     "part_scale_sigma", "occlusion_rate", "lowres_area_threshold", "deformation_rate",
                     "deformation_offset_scale", "deformation_score_drop", "hypothesis_jitter_sigma",
                     "score_noise_sigma", "planted_affinity", "jitter_score_penalty",
                     "distractors_per_node", "background_score_mean", "background_score_sigma",
                     "node_names", "class_name", "planted_params"});
  SynthConfig c;
  auto num = [&](const char* key, double& out) {
    if (const json* v = optional_field(j, key)) out = as_number(*v, key);
  };
  auto integer = [&](const char* key, int& out) {
    if (const json* v = optional_field(j, key)) out = static_cast<int>(as_int(*v, key));
  };
  if (const json* v = optional_field(j, "seed")) {
    if (!v->is_number_unsigned()) bad("'seed' must be a non-negative integer");
    c.seed = v->get<std::uint64_t>();
  }
  integer("images", c.images);
  num("negative_fraction", c.negative_fraction);
  integer("min_objects", c.min_objects);
  integer("max_objects", c.max_objects);
  num("image_width", c.image_width);
  num("image_height", c.image_height);
  num("min_object_size", c.min_object_size);
  num("max_object_size", c.max_object_size);
  num("part_offset_sigma", c.part_offset_sigma);
  num("part_scale_sigma", c.part_scale_sigma);
  num("occlusion_rate", c.occlusion_rate);
  num("lowres_area_threshold", c.lowres_area_threshold);
  num("deformation_rate", c.deformation_rate);
  num("deformation_offset_scale", c.deformation_offset_scale);
  num("deformation_score_drop", c.deformation_score_drop);
  num("hypothesis_jitter_sigma", c.hypothesis_jitter_sigma);
  num("score_noise_sigma", c.score_noise_sigma);
  num("jitter_score_penalty", c.jitter_score_penalty);
  integer("distractors_per_node", c.distractors_per_node);
  num("background_score_mean", c.background_score_mean);
  num("background_score_sigma", c.background_score_sigma);
  if (const json* v = optional_field(j, "planted_affinity")) c.planted_affinity = as_numbers(*v, "planted_affinity");
  if (const json* v = optional_field(j, "node_names")) c.node_names = as_strings(*v, "node_names");
  if (const json* v = optional_field(j, "class_name")) c.class_name = as_string(*v, "class_name");
  if (const json* v = optional_field(j, "planted_params")) {
    c.planted_params = params_from_json(spec_from_names(c.node_names), *v);
  }
  try {
    c.check();
  } catch (const std::invalid_argument& e) {
    bad(e.what());
  }
  return c;
}

json synth_config_to_json(const SynthConfig& c) {
  json j = {{"seed", c.seed},
            {"images", c.images},
            {"negative_fraction", c.negative_fraction},
            {"min_objects", c.min_objects},
            {"max_objects", c.max_objects},
            {"image_width", c.image_width},
            {"image_height", c.image_height},
            {"min_object_size", c.min_object_size},
            {"max_object_size", c.max_object_size},
            {"part_offset_sigma", c.part_offset_sigma},
            {"part_scale_sigma", c.part_scale_sigma},
            {"occlusion_rate", c.occlusion_rate},
            {"lowres_area_threshold", c.lowres_area_threshold},
            {"deformation_rate", c.deformation_rate},
            {"deformation_offset_scale", c.deformation_offset_scale},
            {"deformation_score_drop", c.deformation_score_drop},
            {"hypothesis_jitter_sigma", c.hypothesis_jitter_sigma},
            {"score_noise_sigma", c.score_noise_sigma},
            {"planted_affinity", c.planted_affinity},
            {"jitter_score_penalty", c.jitter_score_penalty},
            {"distractors_per_node", c.distractors_per_node},
            {"background_score_mean", c.background_score_mean},
            {"background_score_sigma", c.background_score_sigma},
            {"node_names", c.node_names},
            {"class_name", c.class_name}};
  if (c.planted_params) j["planted_params"] = params_to_json(GraphSpec(c.node_names), *c.planted_params);
  return j;
}

json truth_to_json(const GraphSpec& spec, const SynthTruth& truth) {
  json objects = json::array();
  for (const auto& o : truth.objects) {
    json assignment = json::object();
    for (int i = 0; i < spec.num_nodes(); ++i) {
      if (o.planted_config.pattern.on(i)) {
        assignment[spec.node_name(i)] = o.planted_config.assignment[static_cast<std::size_t>(i)];
      }
    }
    objects.push_back({{"image_id", o.image_id},
                       {"object_index", o.object_index},
                       {"planted_mask", o.planted_mask},
                       {"planted_score", o.planted_score ? json(*o.planted_score) : json(nullptr)},
                       {"assignment", assignment},
                       {"deformed", o.deformed},
                       {"lowres", o.lowres},
                       {"occluded_mask", o.occluded_mask}});
  }
  return {{"rng", truth.rng},
          {"seed", truth.seed},
          {"node_names", spec.node_names()},
          {"planted_params", params_to_json(spec, truth.planted_params)},
          {"objects", objects}};
}

std::vector<std::uint32_t> patterns_from_json(const json& j, int num_nodes) {
  const std::uint32_t full = (1u << num_nodes) - 1u;
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "all") return {};
    if (name == "all-on") return {full};
    if (name == "all-on-no-holistic") {
      if (num_nodes < 2) bad("no part nodes to switch on");
      return {full & ~1u};
    }
    if (name == "no-holistic") {
      std::vector<std::uint32_t> out;
      for (std::uint32_t m = 2; m <= full; m += 2) out.push_back(m);
      if (out.empty()) bad("no part nodes to switch on");
      return out;
    }
    bad("unknown pattern preset '" + name + "'");
  }
  if (!j.is_array()) bad("'patterns' must be a preset name or a list of masks");
  std::vector<std::uint32_t> out;
  for (const auto& v : j) {
    const auto m = as_int(v, "patterns");
    if (m < 1 || m > static_cast<std::int64_t>(full)) bad("pattern mask out of range: " + std::to_string(m));
    out.push_back(static_cast<std::uint32_t>(m));
  }
  return out;
}

TrainSettings train_settings_from_json(const json& j) {
  if (!j.is_object()) bad("train config must be a JSON object");
  reject_unknown(j, {"node_names", "C", "detect_iou", "mining_rounds", "negatives_per_image",
                     "solver_tolerance", "max_solver_iterations", "patterns", "prune",
                     "calibrate_thresholds", "calibration_retain", "detect", "sigmoid_slope"});
  TrainSettings s;
  auto& p = s.pipeline;
  if (const json* v = optional_field(j, "node_names")) s.node_names = as_strings(*v, "node_names");
  const GraphSpec spec = spec_from_names(s.node_names);
  if (const json* v = optional_field(j, "C")) p.train.C = as_number(*v, "C");
  if (const json* v = optional_field(j, "detect_iou")) p.train.detect_iou = as_number(*v, "detect_iou");
  if (const json* v = optional_field(j, "mining_rounds")) p.train.mining_rounds = static_cast<int>(as_int(*v, "mining_rounds"));
  if (const json* v = optional_field(j, "negatives_per_image")) p.train.negatives_per_image = static_cast<int>(as_int(*v, "negatives_per_image"));
  if (const json* v = optional_field(j, "solver_tolerance")) p.train.solver_tolerance = as_number(*v, "solver_tolerance");
  if (const json* v = optional_field(j, "max_solver_iterations")) p.train.max_solver_iterations = static_cast<std::size_t>(as_int(*v, "max_solver_iterations"));
  if (const json* v = optional_field(j, "patterns")) p.train.allowed_patterns = patterns_from_json(*v, spec.num_nodes());
  if (const json* v = optional_field(j, "sigmoid_slope")) p.sigmoid_slope = as_number(*v, "sigmoid_slope");
  if (const json* v = optional_field(j, "calibrate_thresholds")) p.calibrate_thresholds = as_bool(*v, "calibrate_thresholds");
  if (const json* v = optional_field(j, "calibration_retain")) p.calibration_retain = as_number(*v, "calibration_retain");
  if (const json* v = optional_field(j, "prune")) {
    reject_unknown(*v, {"unary_threshold", "nms_iou", "max_hypotheses"});
    if (const json* t = optional_field(*v, "unary_threshold")) {
      if (!t->is_array()) bad("'unary_threshold' must be an array");
      for (const auto& x : *t) p.prune.unary_threshold.push_back(as_threshold(x, "unary_threshold"));
      p.calibrate_thresholds = false;
    }
    if (const json* t = optional_field(*v, "nms_iou")) p.prune.nms_iou = as_number(*t, "nms_iou");
    if (const json* t = optional_field(*v, "max_hypotheses")) {
      if (t->is_array()) {
        for (const auto& x : *t) p.prune.max_hypotheses.push_back(static_cast<int>(as_int(x, "max_hypotheses")));
      } else {
        p.prune.max_hypotheses.assign(static_cast<std::size_t>(spec.num_nodes()),
                                      static_cast<int>(as_int(*t, "max_hypotheses")));
      }
    }
  }
  if (const json* v = optional_field(j, "detect")) {
    reject_unknown(*v, {"score_threshold", "max_raw_detections"});
    if (const json* t = optional_field(*v, "score_threshold")) p.detect.score_threshold = as_threshold(*t, "score_threshold");
    if (const json* t = optional_field(*v, "max_raw_detections")) {
      const auto cap = as_int(*t, "max_raw_detections");
      if (cap < 1) bad("max_raw_detections must be at least 1");
      p.detect.max_raw_detections = static_cast<std::size_t>(cap);
    }
  }
  try {
    p.train.check();
    p.prune.check();
  } catch (const std::invalid_argument& e) {
    bad(e.what());
  }
  return s;
}

std::vector<ImageAnnotation> read_annotations(const fs::path& path) {
  std::vector<ImageAnnotation> out;
  for_each_record(path, [&](const json& j) {
    reject_unknown(j, {"image_id", "negative", "objects"});
    ImageAnnotation a;
    a.image_id = as_string(field(j, "image_id"), "image_id");
    if (const json* v = optional_field(j, "negative")) a.negative = as_bool(*v, "negative");
    const json& objects = field(j, "objects");
    if (!objects.is_array()) bad("'objects' must be an array");
    for (const auto& o : objects) {
      reject_unknown(o, {"class", "bbox", "parts"});
      ObjectAnnotation obj;
      obj.class_name = as_string(field(o, "class"), "class");
      obj.box = box_from_json(field(o, "bbox"));
      if (const json* parts = optional_field(o, "parts")) {
        if (!parts->is_object()) bad("'parts' must be an object");
        for (const auto& [name, box] : parts->items()) {
          obj.parts[name] = box.is_null() ? std::nullopt : std::optional<Box>(box_from_json(box));
        }
      }
      a.objects.push_back(std::move(obj));
    }
    if (a.negative && !a.objects.empty()) bad("negative image " + a.image_id + " lists objects");
    out.push_back(std::move(a));
  });
  return out;
}

json annotation_to_json(const ImageAnnotation& a) {
  json objects = json::array();
  for (const auto& o : a.objects) {
    json parts = json::object();
    for (const auto& [name, box] : o.parts) parts[name] = box ? box_to_json(*box) : json(nullptr);
    objects.push_back({{"class", o.class_name}, {"bbox", box_to_json(o.box)}, {"parts", parts}});
  }
  return {{"image_id", a.image_id}, {"negative", a.negative}, {"objects", objects}};
}

void write_annotations(const fs::path& path, std::span<const ImageAnnotation> annotations) {
  std::vector<json> records;
  for (const auto& a : annotations) records.push_back(annotation_to_json(a));
  write_text(path, join_lines(records));
}

std::map<std::string, std::vector<Hypothesis>> read_hypotheses(const fs::path& path,
                                                               const GraphSpec& spec) {
  std::map<std::string, std::vector<Hypothesis>> out;
  std::map<std::pair<std::string, int>, std::set<HypothesisId>> seen;
  for_each_record(path, [&](const json& j) {
    reject_unknown(j, {"image_id", "node", "id", "bbox", "score"});
    Hypothesis h;
    const std::string image = as_string(field(j, "image_id"), "image_id");
    const json& node = field(j, "node");
    if (node.is_string()) {
      try {
        h.node = spec.node_index(node.get<std::string>());
      } catch (const std::out_of_range& e) {
        bad(e.what());
      }
    } else {
      h.node = static_cast<int>(as_int(node, "node"));
      if (h.node < 0 || h.node >= spec.num_nodes()) bad("node index out of range");
    }
    h.id = as_int(field(j, "id"), "id");
    if (h.id < 0) bad("hypothesis ids must be non-negative");
    if (!seen[{image, h.node}].insert(h.id).second) {
      bad("duplicate hypothesis id " + std::to_string(h.id) + " in " + image);
    }
    h.box = box_from_json(field(j, "bbox"));
    h.raw_score = as_number(field(j, "score"), "score");
    if (!std::isfinite(h.raw_score)) bad("score must be finite");
    out[image].push_back(h);
  });
  return out;
}

void write_hypotheses(const fs::path& path, const GraphSpec& spec, std::span<const ImageData> images) {
  std::vector<json> records;
  for (const auto& img : images) {
    for (const auto& h : img.candidates) {
      records.push_back({{"image_id", img.annotation.image_id},
                         {"node", spec.node_name(h.node)},
                         {"id", h.id},
                         {"bbox", box_to_json(h.box)},
                         {"score", h.raw_score}});
    }
  }
  write_text(path, join_lines(records));
}

json detection_to_json(const GraphSpec& spec, const std::string& class_name, const Detection& d) {
  json assignment = json::object();
  json boxes = json::object();
  for (int i = 0; i < spec.num_nodes(); ++i) {
    if (!d.scored.config.pattern.on(i)) continue;
    assignment[spec.node_name(i)] = d.scored.config.assignment[static_cast<std::size_t>(i)];
    boxes[spec.node_name(i)] = box_to_json(*d.node_boxes[static_cast<std::size_t>(i)]);
  }
  return {{"image_id", d.image_id},
          {"class", class_name},
          {"pattern_mask", d.scored.config.pattern.mask},
          {"assignment", assignment},
          {"score", d.scored.score},
          {"bbox", box_to_json(d.box)},
          {"boxes", boxes}};
}

void write_detections(const fs::path& path, const GraphSpec& spec, const std::string& class_name,
                      std::span<const Detection> detections) {
  std::vector<json> records;
  for (const auto& d : detections) records.push_back(detection_to_json(spec, class_name, d));
  write_text(path, join_lines(records));
}

std::vector<DetectionRecord> read_detections(const fs::path& path) {
  std::vector<DetectionRecord> out;
  for_each_record(path, [&](const json& j) {
    reject_unknown(j, {"image_id", "class", "pattern_mask", "assignment", "score", "bbox", "boxes"});
    DetectionRecord r;
    r.eval.image_id = as_string(field(j, "image_id"), "image_id");
    r.class_name = as_string(field(j, "class"), "class");
    const auto mask = as_int(field(j, "pattern_mask"), "pattern_mask");
    if (mask < 1 || mask >= (std::int64_t{1} << kMaxNodes)) bad("pattern_mask out of range");
    r.eval.pattern_mask = static_cast<std::uint32_t>(mask);
    r.eval.score = as_number(field(j, "score"), "score");
    r.eval.box = box_from_json(field(j, "bbox"));
    const json& assignment = field(j, "assignment");
    if (!assignment.is_object()) bad("'assignment' must be an object");
    for (const auto& [name, id] : assignment.items()) r.assignment[name] = as_int(id, "assignment");
    const json& boxes = field(j, "boxes");
    if (!boxes.is_object()) bad("'boxes' must be an object");
    for (const auto& [name, box] : boxes.items()) r.boxes[name] = box_from_json(box);
    if (r.assignment.size() != static_cast<std::size_t>(std::popcount(r.eval.pattern_mask))) {
      bad("assignment size does not match pattern_mask");
    }
    out.push_back(std::move(r));
  });
  return out;
}

json round_to_json(const RoundRecord& r) {
  return {{"round", r.round},
          {"objective", r.objective},
          {"duality_gap", r.duality_gap},
          {"examples", r.examples},
          {"positives", r.positives},
          {"negatives", r.negatives},
          {"new_negatives", r.new_negatives}};
}

void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw FileError(path.parent_path(), "cannot create directory: " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FileError(path, "cannot open for writing");
    out << content;
    out.flush();
    if (!out) throw FileError(path, "write failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw FileError(path, "cannot move output into place");
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError(path, "cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw FileError(path, "read error");
  return ss.str();
}

json manifest_to_json(const RunManifest& m) {
  return {{"command", m.command},
          {"config", m.config_path},
          {"inputs", m.inputs},
          {"outputs", m.outputs},
          {"seed", m.seed ? json(*m.seed) : json(nullptr)},
          {"tool_version", m.tool_version}};
}

void write_manifest(const fs::path& path, const RunManifest& m) {
  write_text(path, manifest_to_json(m).dump(2) + "\n");
}

}  // namespace partswitch::io
