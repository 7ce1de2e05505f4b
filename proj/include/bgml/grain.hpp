// Feature-graph grains: each node becomes a self-contained sample whose
// "graph" is an F'xF' adjacency over its own feature dimensions, built from
// attention-weighted outer products with its neighbors' features. Once built,
// a grain carries no reference to other nodes.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bgml/common.hpp"
#include "bgml/graph.hpp"

namespace bgml {

// Keeps the highest-variance feature indices (ties -> lower index), measured
// over a reference node set; the same selection is applied to every later
// arrival.
struct FeatureReducer {
  int original_dim = 0;
  int reduced_dim = 0;
  std::vector<int> selected;  // ascending

  Mat reduce(const Mat& full) const;
};

FeatureReducer fit_reducer(const GraphStore& graph, const std::vector<NodeId>& reference_nodes,
                           int cap);

struct AttentionParams {
  std::vector<double> w_self;   // length F'
  std::vector<double> w_neigh;  // length F'
  double bias = 0.0;
  double leaky_slope = 0.2;
};

// Raw material for one training sample: the node's reduced features plus
// copies of its (shard-scoped) neighbors' reduced features. Rebuilding the
// grain from this record each epoch lets gradients reach the attention
// parameters.
struct GrainSource {
  NodeId node = 0;
  int label = kUnlabeled;
  Mat self_features;                  // F' x C
  std::vector<NodeId> neighbor_ids;   // sorted ascending
  std::vector<Mat> neighbor_features; // parallel to neighbor_ids

  std::string to_json() const;
  static GrainSource from_json(const std::string& text);
};

struct FeatureGrain {
  NodeId node = 0;
  int label = kUnlabeled;
  Mat features;                // F' x C
  std::vector<Mat> feat_adj;   // per channel, F' x F'
  std::vector<Mat> norm_adj;   // per channel, F' x F'
};

// Intermediates needed to push gradients back through grain construction.
struct GrainCache {
  int n_eff = 0;                             // neighbor count after self-fallback
  bool self_fallback = false;
  std::vector<Mat> raw_sum;                  // per channel: pre-sgnroot S
  std::vector<std::vector<double>> omega;    // [channel][neighbor]
  std::vector<std::vector<double>> preact;   // [channel][neighbor], pre-LeakyReLU
};

inline double sgnroot(double x) {
  return x >= 0.0 ? std::sqrt(x) : -std::sqrt(-x);
}

// A node with no neighbors is treated as its own sole neighbor.
FeatureGrain build_grain(const GrainSource& source, const AttentionParams& attn,
                         GrainCache* cache = nullptr);

}  // namespace bgml
