// Evolving graph store: node features/labels, symmetric adjacency, and the
// timestamped forget/insert events that drive it.

#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bgml/common.hpp"

namespace bgml {

constexpr int kUnlabeled = -1;

struct NodeRecord {
  Mat features;  // feat_dim x channels
  int label = kUnlabeled;
  std::vector<NodeId> neighbors;  // sorted ascending, no self, no duplicates
};

// Single-writer container; reads are safe between mutations.
class GraphStore {
 public:
  GraphStore() = default;
  GraphStore(int feat_dim, int channels);

  void add_node(NodeId id, Mat features, int label);
  void add_edge(NodeId u, NodeId v);          // undirected; throws on self/dangling
  bool has_edge(NodeId u, NodeId v) const;
  std::vector<std::pair<NodeId, NodeId>> remove_node(NodeId id);  // returns removed edges (u<v)

  bool contains(NodeId id) const { return nodes_.count(id) != 0; }
  const NodeRecord& node(NodeId id) const;
  const std::vector<NodeId>& neighbors(NodeId id) const { return node(id).neighbors; }
  std::vector<NodeId> node_ids() const;  // ascending

  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_edges() const { return num_edges_; }
  int feat_dim() const { return feat_dim_; }
  int channels() const { return channels_; }
  int num_classes() const { return num_classes_; }
  void set_num_classes(int k);

  // Full invariant scan (symmetry, referential integrity, shapes). Throws
  // InvariantError naming the first violation.
  void check_invariants() const;

 private:
  std::map<NodeId, NodeRecord> nodes_;
  int feat_dim_ = 0;
  int channels_ = 1;
  int num_classes_ = 0;
  std::size_t num_edges_ = 0;
};

struct NewNode {
  NodeId id = 0;
  Mat features;
  int label = kUnlabeled;
};

struct TimelineEvent {
  int timestamp = 0;
  std::vector<NodeId> forget_nodes;
  std::vector<NewNode> add_nodes;
};

struct EventReport {
  std::vector<std::pair<NodeId, NodeId>> removed_edges;  // u < v, unique
  std::vector<NodeId> inserted;
};

// Removes forget_nodes (and incident edges) first, then inserts add_nodes with
// no edges; edge attachment for arrivals happens later via neighbor selection.
EventReport apply_event(GraphStore& graph, const TimelineEvent& event);

// Stochastic block model with block-shifted Gaussian features; labels = block.
GraphStore generate_sbm(int num_blocks, int nodes_per_block, double p_in, double p_out,
                        int feature_dim, double signal, std::uint64_t seed);

struct SplitAssignment {
  std::vector<NodeId> train;  // sorted
  std::vector<NodeId> valid;
  std::vector<NodeId> test;
};

// Test gets floor((1-train_frac)*labeled), valid carved from the train side;
// stratified per class when every class has >= 3 labeled nodes.
SplitAssignment split_nodes(const GraphStore& graph, double train_frac,
                            double valid_frac_of_train, std::uint64_t seed,
                            std::vector<std::string>* warnings = nullptr);

}  // namespace bgml
