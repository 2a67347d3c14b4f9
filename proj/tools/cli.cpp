#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "partswitch/io.hpp"
#include "partswitch/metrics.hpp"
#include "partswitch/pipeline.hpp"
#include "partswitch/synthetic.hpp"

namespace partswitch::cli {

namespace fs = std::filesystem;
using io::json;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

fs::path sibling(const fs::path& out, const std::string& suffix) {
  fs::path p = out;
  p.replace_extension();
  p += suffix;
  return p;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_box(const Box& b) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(1) << "[" << b.x1 << ", " << b.y1 << ", " << b.x2 << ", "
    << b.y2 << "]";
  return s.str();
}

std::string pattern_names(const std::vector<std::string>& names, std::uint32_t mask) {
  std::string s;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (!((mask >> i) & 1u)) continue;
    if (!s.empty()) s += "+";
    s += names[i];
  }
  return s;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  SynthConfig cfg;
  if (!a.config.empty()) {
    const json j = io::read_json_file(a.config);
    try {
      cfg = io::synth_config_from_json(j);
    } catch (const io::SchemaError& e) {
      throw io::SchemaError(a.config, 0, e.detail());
    }
  }
  if (a.seed) cfg.seed = *a.seed;
  const SynthDataset ds = generate_dataset(cfg);

  const fs::path dir = a.out;
  std::vector<ImageAnnotation> annotations;
  for (const auto& img : ds.images) annotations.push_back(img.annotation);
  io::write_annotations(dir / "annotations.jsonl", annotations);
  io::write_hypotheses(dir / "hypotheses.jsonl", ds.spec, ds.images);
  io::write_text(dir / "truth.json", io::truth_to_json(ds.spec, ds.truth).dump(2) + "\n");
  io::write_text(dir / "config.json", io::synth_config_to_json(cfg).dump(2) + "\n");

  io::RunManifest m;
  m.command = "synth";
  m.config_path = a.config;
  m.outputs = {(dir / "annotations.jsonl").string(), (dir / "hypotheses.jsonl").string(),
               (dir / "truth.json").string(), (dir / "config.json").string()};
  m.seed = cfg.seed;
  io::write_manifest(dir / "manifest.json", m);

  std::size_t objects = 0;
  std::size_t hyps = 0;
  for (const auto& img : ds.images) {
    objects += img.annotation.objects.size();
    hyps += img.candidates.size();
  }
  out << "synth: " << ds.images.size() << " images, " << objects << " objects, " << hyps
      << " hypotheses -> " << dir.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string annotations;
  std::string hypotheses;
  std::string config;
  std::string out;
  unsigned workers = 1;
};

std::vector<ImageData> join_images(const std::vector<ImageAnnotation>& annotations,
                                   std::map<std::string, std::vector<Hypothesis>> hyps,
                                   const fs::path& hyp_path) {
  std::vector<ImageData> images;
  std::set<std::string> ids;
  for (const auto& a : annotations) {
    if (!ids.insert(a.image_id).second) {
      throw io::SchemaError(hyp_path, 0, "duplicate annotation for image " + a.image_id);
    }
    ImageData d;
    d.annotation = a;
    if (auto it = hyps.find(a.image_id); it != hyps.end()) {
      d.candidates = std::move(it->second);
      hyps.erase(it);
    }
    images.push_back(std::move(d));
  }
  if (!hyps.empty()) {
    throw io::SchemaError(hyp_path, 0, "hypotheses for unannotated image " + hyps.begin()->first);
  }
  return images;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
  io::TrainSettings settings;
  if (!a.config.empty()) {
    const json j = io::read_json_file(a.config);
    try {
      settings = io::train_settings_from_json(j);
    } catch (const io::SchemaError& e) {
      throw io::SchemaError(a.config, 0, e.detail());
    }
  }
  const GraphSpec spec(settings.node_names);
  const auto annotations = io::read_annotations(a.annotations);
  auto images = join_images(annotations, io::read_hypotheses(a.hypotheses, spec), a.hypotheses);

  const TrainingOutcome outcome = train_model(spec, images, settings.pipeline, a.workers);
  const fs::path model_path = a.out;
  const fs::path log_path = sibling(model_path, ".log.jsonl");
  io::write_model(model_path, outcome.model);

  std::string log;
  for (const auto& r : outcome.result.rounds) log += io::round_to_json(r).dump() + "\n";
  io::write_text(log_path, log);

  io::RunManifest m;
  m.command = "train";
  m.config_path = a.config;
  m.inputs = {a.annotations, a.hypotheses};
  m.outputs = {model_path.string(), log_path.string()};
  io::write_manifest(sibling(model_path, ".manifest.json"), m);

  const auto& res = outcome.result;
  out << "train: " << res.positives.size() << " positives (" << res.rejected_positives
      << " rejected, " << res.disallowed_positives << " outside allowed patterns), "
      << res.negatives.size() << " negatives, " << res.rounds.size() << " rounds, objective "
      << fmt_double(res.rounds.empty() ? 0.0 : res.rounds.back().objective) << "\n";
  return kOk;
}

// ---------------------------------------------------------------- detect

struct DetectArgs {
  std::string model;
  std::string hypotheses;
  std::string out;
  std::optional<double> score_threshold;
  unsigned workers = 1;
};

int cmd_detect(const DetectArgs& a, std::ostream& out) {
  TrainedModel model = io::read_model(a.model);
  if (a.score_threshold) model.detect.score_threshold = *a.score_threshold;
  auto hyps = io::read_hypotheses(a.hypotheses, model.spec);
  std::vector<ImageData> images;
  for (auto& [id, list] : hyps) {
    ImageData d;
    d.annotation.image_id = id;
    d.candidates = std::move(list);
    images.push_back(std::move(d));
  }
  const auto detections = detect_dataset(model, images, a.workers);
  io::write_detections(a.out, model.spec, model.class_name, detections);

  io::RunManifest m;
  m.command = "detect";
  m.config_path = a.model;
  m.inputs = {a.model, a.hypotheses};
  m.outputs = {a.out};
  io::write_manifest(sibling(a.out, ".manifest.json"), m);
  out << "detect: " << images.size() << " images, " << detections.size() << " detections -> "
      << a.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string detections;
  std::string annotations;
  std::string out;
  std::string model;
  double recall_threshold = -std::numeric_limits<double>::infinity();
  EvalConfig cfg;
};

json size_table_json(const SizeTable& t) {
  json j = json::object();
  for (std::size_t c = 0; c < 5; ++c) {
    j[std::string(kSizeClassNames[c])] = {{"recalled", t.recalled[c]},
                                          {"holistic_only", t.holistic_only[c]},
                                          {"rate", t.rate[c] ? json(*t.rate[c]) : json(nullptr)}};
  }
  return j;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  a.cfg.check();
  const auto records = io::read_detections(a.detections);
  const auto annotations = io::read_annotations(a.annotations);

  std::vector<std::string> names;
  if (!a.model.empty()) {
    names = io::read_model(a.model).spec.node_names();
  } else {
    std::set<std::string> parts;
    for (const auto& ann : annotations) {
      for (const auto& o : ann.objects) {
        for (const auto& [name, box] : o.parts) parts.insert(name);
      }
    }
    std::string holistic = "object";
    for (const auto& r : records) {
      for (const auto& [name, box] : r.boxes) {
        if (!parts.count(name) && (r.eval.pattern_mask & 1u)) holistic = name;
      }
    }
    names.push_back(holistic);
    for (const auto& p : parts) {
      if (p != holistic) names.push_back(p);
    }
  }
  const GraphSpec spec(names);

  std::set<std::string> classes;
  for (const auto& r : records) classes.insert(r.class_name);
  for (const auto& ann : annotations) {
    for (const auto& o : ann.objects) classes.insert(o.class_name);
  }

  const fs::path dir = a.out;
  json summary;
  json per_class = json::object();
  std::vector<std::string> outputs;
  double ap_sum = 0.0;
  for (const auto& cls : classes) {
    std::vector<EvalDetection> dets;
    for (const auto& r : records) {
      if (r.class_name != cls) continue;
      EvalDetection d = r.eval;
      d.node_boxes.assign(static_cast<std::size_t>(spec.num_nodes()), std::nullopt);
      for (int i = 0; i < spec.num_nodes(); ++i) {
        if (auto it = r.boxes.find(spec.node_name(i)); it != r.boxes.end()) {
          d.node_boxes[static_cast<std::size_t>(i)] = it->second;
        }
      }
      dets.push_back(std::move(d));
    }
    const auto objects = to_eval_objects(spec, annotations, cls);
    const Matching m = match_detections(dets, objects, a.cfg.ap_iou);
    ap_sum += m.ap;

    json parts = json::array();
    for (const auto& pl : pcp_pop(spec, dets, objects, a.cfg)) {
      parts.push_back({{"part", pl.part},
                       {"pop", optional_json(pl.pop)},
                       {"pcp", optional_json(pl.pcp)},
                       {"pcp_of_estimated", optional_json(pl.pcp_of_estimated)},
                       {"matched_objects", pl.matched_objects},
                       {"denominator", pl.denominator},
                       {"estimated", pl.estimated},
                       {"correct", pl.correct}});
    }
    const SizeTable table = holistic_only_rate_by_size(dets, objects, a.recall_threshold, a.cfg.ap_iou);
    per_class[cls] = {{"ap", m.ap},
                      {"detections", dets.size()},
                      {"objects", objects.size()},
                      {"parts", parts},
                      {"size_table", size_table_json(table)}};

    std::string csv = "score,precision,recall\n";
    for (const auto& p : m.curve) {
      csv += fmt_double(p.score) + "," + fmt_double(p.precision) + "," + fmt_double(p.recall) + "\n";
    }
    const fs::path csv_path = classes.size() == 1 ? dir / "pr_curve.csv" : dir / ("pr_curve_" + cls + ".csv");
    io::write_text(csv_path, csv);
    outputs.push_back(csv_path.string());
    out << "eval: class " << cls << " AP " << std::fixed << std::setprecision(4) << m.ap
        << std::defaultfloat << " (" << dets.size() << " detections, " << objects.size()
        << " objects)\n";
  }
  summary["classes"] = per_class;
  summary["mean_ap"] = classes.empty() ? 0.0 : ap_sum / static_cast<double>(classes.size());
  summary["config"] = {{"ap_iou", a.cfg.ap_iou},
                       {"pcp_object_iou", a.cfg.pcp_object_iou},
                       {"pcp_part_iou", a.cfg.pcp_part_iou},
                       {"pop_include_unmatched", a.cfg.pop_include_unmatched},
                       {"recall_threshold", std::isinf(a.recall_threshold) ? json(nullptr) : json(a.recall_threshold)}};
  io::write_text(dir / "summary.json", summary.dump(2) + "\n");
  outputs.insert(outputs.begin(), (dir / "summary.json").string());

  io::RunManifest man;
  man.command = "eval";
  man.config_path = a.model;
  man.inputs = {a.detections, a.annotations};
  man.outputs = outputs;
  io::write_manifest(dir / "manifest.json", man);
  return kOk;
}

// ---------------------------------------------------------------- inspect

void inspect_model(const TrainedModel& m, std::ostream& out) {
  const auto& names = m.spec.node_names();
  out << "model: class '" << m.class_name << "', " << m.spec.num_nodes() << " nodes, dimension "
      << m.spec.dimension() << ", sigmoid slope " << m.params.sigmoid_slope << "\n";
  out << "unary weights:\n";
  for (int i = 0; i < m.spec.num_nodes(); ++i) {
    out << "  " << names[static_cast<std::size_t>(i)] << ": " << m.params.unary_w[static_cast<std::size_t>(i)]
        << "  (prune threshold " << m.prune.threshold_for(i) << ", cap " << m.prune.cap_for(i) << ")\n";
  }
  out << "pairwise weights [dx dy dx2 dy2 ds dsx dsy ds2 dsx2 dsy2]:\n";
  for (int e = 0; e < m.spec.num_edges(); ++e) {
    const auto [i, j] = m.spec.edge(e);
    out << "  " << names[static_cast<std::size_t>(i)] << "-" << names[static_cast<std::size_t>(j)] << ":";
    for (double w : m.params.pairwise_w[static_cast<std::size_t>(e)]) out << " " << w;
    out << "\n";
  }
  out << "pattern biases:\n";
  for (std::uint32_t mask = 1; mask <= m.spec.full_mask(); ++mask) {
    out << "  " << std::setw(3) << mask << " " << pattern_names(names, mask) << ": "
        << m.params.pattern_b[mask - 1] << (m.detect.allows(mask) ? "" : "  (disabled)") << "\n";
  }
  out << "box regressors:\n";
  for (const auto& [mask, r] : m.regressors) {
    out << "  " << std::setw(3) << mask << " " << pattern_names(names, mask) << ": "
        << (r.fallback ? "union fallback" : "least squares") << ", " << r.trained_on << " samples\n";
  }
  out << "detect: max raw detections " << m.detect.max_raw_detections << ", score threshold "
      << m.detect.score_threshold << "\n";
}

int cmd_inspect(const std::string& file, std::ostream& out) {
  const std::string text = io::read_text(file);
  json whole;
  bool single_document = true;
  try {
    whole = json::parse(text);
  } catch (const json::exception&) {
    single_document = false;
  }
  if (single_document && whole.is_object() && whole.contains("format")) {
    try {
      inspect_model(io::model_from_json(whole), out);
    } catch (const io::SchemaError& e) {
      throw io::SchemaError(file, 0, e.detail());
    }
    return kOk;
  }
  const auto records = io::read_detections(file);
  std::string current;
  for (const auto& r : records) {
    if (r.eval.image_id != current) {
      current = r.eval.image_id;
      out << current << "\n";
    }
    out << "  " << std::fixed << std::setprecision(4) << std::setw(9) << r.eval.score
        << std::defaultfloat << "  " << r.class_name << "  mask " << r.eval.pattern_mask << "  "
        << fmt_box(r.eval.box) << " ";
    for (const auto& [name, box] : r.boxes) {
      out << " " << name << "#" << r.assignment.at(name) << "=" << fmt_box(box);
    }
    out << "\n";
  }
  out << records.size() << " detections\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Part-based object detection with detectability switches", "partswitch"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic dataset");
  s->add_option("--config", synth.config, "Synthetic scene config (JSON)");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--seed", synth.seed, "Random seed (overrides the config)");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model");
  t->add_option("--annotations", train.annotations, "Annotation records (JSONL)")->required();
  t->add_option("--hypotheses", train.hypotheses, "Hypothesis records (JSONL)")->required();
  t->add_option("--config", train.config, "Training config (JSON)");
  t->add_option("--out", train.out, "Model file to write")->required();
  t->add_option("--workers", train.workers, "Worker threads")->check(CLI::PositiveNumber);
  t->add_option("--seed", "Accepted for uniformity; training is deterministic");

  DetectArgs detect;
  auto* d = app.add_subcommand("detect", "Run detection");
  d->add_option("--model", detect.model, "Model file")->required();
  d->add_option("--hypotheses", detect.hypotheses, "Hypothesis records (JSONL)")->required();
  d->add_option("--out", detect.out, "Detection records to write (JSONL)")->required();
  d->add_option("--score-threshold", detect.score_threshold, "Minimum configuration score");
  d->add_option("--workers", detect.workers, "Worker threads")->check(CLI::PositiveNumber);

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Evaluate detections");
  e->add_option("--detections", eval.detections, "Detection records (JSONL)")->required();
  e->add_option("--annotations", eval.annotations, "Annotation records (JSONL)")->required();
  e->add_option("--out", eval.out, "Output directory")->required();
  e->add_option("--model", eval.model, "Model file, for node order");
  e->add_option("--recall-threshold", eval.recall_threshold, "Score threshold for the size table");
  e->add_option("--ap-iou", eval.cfg.ap_iou, "IOU for a true positive");
  e->add_option("--pcp-object-iou", eval.cfg.pcp_object_iou, "IOU for matching an object (PCP)");
  e->add_option("--pcp-part-iou", eval.cfg.pcp_part_iou, "IOU for a correct part (PCP)");
  e->add_flag("--pop-include-unmatched", eval.cfg.pop_include_unmatched,
              "Count unmatched objects in the POP denominator");

  std::string inspect_file;
  auto* in = app.add_subcommand("inspect", "Print a model or detection file");
  in->add_option("file", inspect_file, "Model or detection file")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out);
    if (t->parsed()) return cmd_train(train, out);
    if (d->parsed()) return cmd_detect(detect, out);
    if (e->parsed()) return cmd_eval(eval, out);
    if (in->parsed()) return cmd_inspect(inspect_file, out);
  } catch (const io::FileError& ex) {
    err << "error: " << ex.what() << "\n";
    return kFileError;
  } catch (const io::SchemaError& ex) {
    err << "error: " << ex.what() << "\n";
    return kSchemaError;
  } catch (const std::invalid_argument& ex) {
    err << "error: invalid input: " << ex.what() << "\n";
    return kInvalidInput;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kInternal;
  }
  err << app.help();
  return kUsage;
}

}  // namespace partswitch::cli
