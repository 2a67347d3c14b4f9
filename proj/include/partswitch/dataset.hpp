#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "partswitch/geometry.hpp"
#include "partswitch/model.hpp"

namespace partswitch {

/// One annotated object: the holistic box plus a box (or absence) per part.
struct ObjectAnnotation {
  std::string class_name;
  Box box;
  std::map<std::string, std::optional<Box>> parts;

  friend bool operator==(const ObjectAnnotation&, const ObjectAnnotation&) = default;
};

struct ImageAnnotation {
  std::string image_id;
  bool negative = false;
  std::vector<ObjectAnnotation> objects;

  friend bool operator==(const ImageAnnotation&, const ImageAnnotation&) = default;
};

/// Annotation plus the raw (unpruned) hypotheses of one image.
struct ImageData {
  ImageAnnotation annotation;
  std::vector<Hypothesis> candidates;
};

/// Ground-truth box per node in graph order; index 0 is the holistic box.
/// Parts absent from the annotation or the graph map to nullopt.
using NodeBoxes = std::vector<std::optional<Box>>;

NodeBoxes node_boxes(const GraphSpec& spec, const ObjectAnnotation& object);

}  // namespace partswitch
