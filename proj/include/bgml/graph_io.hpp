// Dataset and event-stream file formats.
//
// nodes file:  header "# F=<int> C=<int>", then one node per line:
//              node_id<TAB>label_or_-<TAB>idx:val,idx:val,...
//              (sparse over the F*C row-major flattened feature matrix)
// edges file:  src<TAB>dst, undirected; duplicates and self edges dropped.
// events file: one JSON object per line:
//              {"t":1,"fr":[ids...],"ir":[{"id":..,"label":..,"x":{"idx":val}}]}

#pragma once

#include <string>
#include <vector>

#include "bgml/graph.hpp"

namespace bgml {

struct LoadReport {
  std::size_t dropped_self_edges = 0;
  std::size_t dropped_duplicate_edges = 0;
};

GraphStore load_dataset(const std::string& nodes_path, const std::string& edges_path,
                        LoadReport* report = nullptr);
void save_dataset(const GraphStore& graph, const std::string& nodes_path,
                  const std::string& edges_path);

std::vector<TimelineEvent> load_events(const std::string& path, int feat_dim, int channels);
void save_events(const std::vector<TimelineEvent>& events, const std::string& path);

}  // namespace bgml
