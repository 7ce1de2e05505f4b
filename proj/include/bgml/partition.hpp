// Two-level balanced shard hierarchy over the graph, built by balanced label
// propagation (structure-based) or balanced embedding k-means (feature-based),
// both capped by a per-shard node limit. Centroids are maintained for every
// shard regardless of method; ownership of arriving nodes is decided by
// centroid distance.

#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bgml/common.hpp"
#include "bgml/graph.hpp"

namespace bgml {

enum class PartitionMethod { Blpa, Bekm };

std::string to_string(PartitionMethod m);
PartitionMethod partition_method_from_string(const std::string& s);

// Seeded sparse random projection (density 1/3, entries +-sqrt(3)/sqrt(dim)),
// applied to the channel-averaged feature vector, output L2-normalized.
// The matrix depends only on (seed, dims), so late arrivals embed identically.
struct Projection {
  int in_dim = 0;
  int out_dim = 0;
  std::uint64_t seed = 0;
  Mat matrix;  // out_dim x in_dim
};

Projection make_projection(int in_dim, int out_dim, std::uint64_t seed);
std::vector<double> embed_features(const Projection& proj, const Mat& features);

struct EmbeddingIndex {
  int dim = 0;
  std::map<NodeId, std::vector<double>> vectors;
};

EmbeddingIndex embed_nodes(const GraphStore& graph, int dim, std::uint64_t seed);

// Default per-shard cap: 20% slack over an even division.
int default_delta(std::size_t num_nodes, int num_shards);

// Balanced label propagation. Nodes visited in ascending id; a node moves only
// to a shard holding strictly more of its neighbors than its current shard
// (destination ties -> lowest shard index), and only if the destination has
// room; iterates until a pass applies no move or max_iters passes elapse.
std::vector<std::vector<NodeId>> partition_blpa(
    const GraphStore& graph, const std::vector<NodeId>& nodes, int k, int delta,
    std::uint64_t seed, int max_iters,
    const std::vector<std::vector<NodeId>>* initial = nullptr);

struct BekmResult {
  std::vector<std::vector<NodeId>> shards;
  std::vector<std::vector<double>> centroids;
};

// Balanced k-means on embeddings. Each pass reassigns nodes in ascending id to
// the nearest centroid with residual capacity, then recomputes centroids as
// member means; stops when assignments are stable or max_iters is reached.
BekmResult partition_bekm(const EmbeddingIndex& embeddings, const std::vector<NodeId>& nodes,
                          int k, int delta, std::uint64_t seed, int max_iters,
                          const std::vector<std::vector<double>>* initial_centroids = nullptr);

struct Shard {
  std::vector<NodeId> members;  // sorted ascending
  std::vector<double> centroid;
  bool centroid_valid = false;  // false once a shard empties

  bool contains(NodeId v) const;
};

struct PartitionHierarchy {
  PartitionMethod method = PartitionMethod::Bekm;
  int k = 0;
  int l = 0;
  int delta1 = 0;
  int delta2 = 0;
  std::uint64_t seed = 0;
  std::vector<Shard> first;                 // k shards
  std::vector<std::vector<Shard>> second;   // k x l shards

  // (first index, second index) of the shard pair holding v.
  std::optional<std::pair<int, int>> locate(NodeId v) const;
  void check_invariants(const EmbeddingIndex& embeddings) const;
};

PartitionHierarchy build_hierarchy(const GraphStore& graph, const EmbeddingIndex& embeddings,
                                   PartitionMethod method, int k, int l, int delta1, int delta2,
                                   std::uint64_t seed, int max_iters = 100);

// Removes v from its two shards and refreshes their centroids.
// Returns (first index, second index).
std::pair<int, int> hierarchy_remove_node(PartitionHierarchy& hier,
                                          const EmbeddingIndex& embeddings, NodeId v);

struct AssignResult {
  int first = -1;
  std::optional<int> second;
};

// Thrown when every candidate shard at `level` is at its cap.
struct CapacityError : InvariantError {
  int level;
  CapacityError(int lvl, const std::string& msg) : InvariantError(msg), level(lvl) {}
};

// Eq.-of-ownership: nearest first-level centroid with residual capacity; the
// second level is consulted only for shards in supported_set. Inserts v and
// refreshes the touched centroids. embeddings must already contain v.
AssignResult assign_new_node(PartitionHierarchy& hier, const EmbeddingIndex& embeddings,
                             NodeId v, const std::set<int>& supported_set);

std::string hierarchy_to_json(const PartitionHierarchy& hier);
PartitionHierarchy hierarchy_from_json(const std::string& text);

}  // namespace bgml
