#include "partswitch/dataset.hpp"

namespace partswitch {

NodeBoxes node_boxes(const GraphSpec& spec, const ObjectAnnotation& object) {
  NodeBoxes out(static_cast<std::size_t>(spec.num_nodes()));
  out[0] = object.box;
  for (int i = 1; i < spec.num_nodes(); ++i) {
    auto it = object.parts.find(spec.node_name(i));
    if (it != object.parts.end()) out[static_cast<std::size_t>(i)] = it->second;
  }
  return out;
}

}  // namespace partswitch
