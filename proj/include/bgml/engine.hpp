// Timeline orchestration: bootstrap at t0, then per timestamp forget-first /
// remember-second processing. Forgetting is exact: affected sub-models are
// re-initialized from their original seeds and retrained from scratch on the
// surviving shard; untouched models keep byte-identical checkpoints. Arriving
// nodes pick their shard by centroid distance and their neighbors by feature
// similarity, then update the owning models with a single SGD step.

#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bgml/common.hpp"
#include "bgml/ensemble.hpp"
#include "bgml/graph.hpp"
#include "bgml/partition.hpp"

namespace bgml {

enum class ReawarePolicy { Always, OnRetrain, Never };

std::string to_string(ReawarePolicy p);
ReawarePolicy reaware_from_string(const std::string& s);

struct EngineConfig {
  PartitionMethod method = PartitionMethod::Bekm;
  int k = 5;
  int l = 2;
  int delta1 = 0;  // 0 = auto: ceil(1.2 * nodes / shards)
  int delta2 = 0;
  int tau = 2;
  int mu = 3;
  double support_weight = 0.5;
  int hidden = 16;
  double lr = 0.05;
  int epochs = 200;
  int feature_cap = 64;
  int embed_dim = 16;
  std::uint64_t partition_seed = 1;
  std::uint64_t model_seed = 2;
  Aggregation aggregation = Aggregation::Mean;
  ReawarePolicy reaware = ReawarePolicy::OnRetrain;
  bool freeze_attention = false;
  int max_iters = 100;
};

struct ForgetPlan {
  std::set<NodeId> forget_nodes;
  std::set<int> affected_first;
  std::set<SecondKey> affected_second;
  std::set<NodeId> grain_rebuild_nodes;
};

struct ForgetReport {
  ForgetPlan plan;
  std::vector<std::string> retrained;       // "1_3", "2_3_1"
  std::vector<std::string> decommissioned;
};

struct RememberReport {
  struct Assignment {
    NodeId node = 0;
    int first = -1;
    std::optional<int> second;
    std::vector<NodeId> neighbors;
    bool stepped_first = false;
    bool stepped_second = false;
  };
  std::vector<Assignment> assigned;
  std::vector<std::string> warnings;
  int delta1_relaxations = 0;
  int delta2_relaxations = 0;
};

class MemoryEngine {
 public:
  MemoryEngine(GraphStore graph, SplitAssignment split, EngineConfig config);

  void bootstrap();

  ForgetPlan guidance(const std::set<NodeId>& forget_nodes) const;
  ForgetReport forget(const std::vector<NodeId>& forget_nodes);
  RememberReport remember(const std::vector<NewNode>& add_nodes);

  // Forget-then-remember for one timestamp; appends to the event log.
  void apply_timeline_event(const TimelineEvent& event);
  void run_timeline(const std::vector<TimelineEvent>& events,
                    const std::function<void(int timestamp)>& after_step = nullptr);

  int predict_node(NodeId v) const;
  GrainSource eval_source(NodeId v) const;  // reduced features, full-graph neighbors

  // Returns human-readable violations of the no-residual-relationship
  // condition for all previously forgotten ids; empty means sound.
  std::vector<std::string> audit_forgotten() const;

  void save_state(const std::string& dir) const;

  const GraphStore& graph() const { return graph_; }
  const SplitAssignment& split() const { return split_; }
  const PartitionHierarchy& hierarchy() const { return hier_; }
  const EnsembleState& ensemble() const { return ensemble_; }
  const EngineConfig& config() const { return cfg_; }
  const EmbeddingIndex& embeddings() const { return embeddings_; }
  const FeatureReducer& reducer() const { return reducer_; }
  int timestamp() const { return timestamp_; }
  const std::set<NodeId>& forgotten_ids() const { return forgotten_ids_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  const std::map<int, std::map<NodeId, GrainSource>>& first_sources() const {
    return first_sources_;
  }
  const std::map<SecondKey, std::map<NodeId, GrainSource>>& second_sources() const {
    return second_sources_;
  }
  const std::vector<std::string>& event_log() const { return event_log_; }

 private:
  GrainSource make_source(NodeId v, const std::vector<NodeId>& scope_members) const;
  std::vector<GrainSource> shared_valid_sources() const;
  std::vector<GrainSource> collect_sources(const std::map<NodeId, GrainSource>& by_node) const;
  void train_first(int i);
  void rescore_and_reselect();
  void reconcile_support(const std::set<int>& previous_tau,
                         const std::set<SecondKey>& must_retrain,
                         std::vector<std::string>* retrained,
                         std::vector<std::string>* decommissioned);
  void reconcile_support(const std::set<int>& previous_tau,
                         const std::set<SecondKey>& must_retrain,
                         std::vector<std::string>* retrained);
  void rebuild_source_maps_for(NodeId survivor);
  void assert_no_residual(const std::set<NodeId>& forget_nodes) const;
  std::set<int> supported_with_models() const;

  GraphStore graph_;
  SplitAssignment split_;
  EngineConfig cfg_;
  FeatureReducer reducer_;
  Projection projection_;
  EmbeddingIndex embeddings_;
  PartitionHierarchy hier_;
  EnsembleState ensemble_;
  std::map<int, std::map<NodeId, GrainSource>> first_sources_;
  std::map<SecondKey, std::map<NodeId, GrainSource>> second_sources_;
  int timestamp_ = 0;
  bool bootstrapped_ = false;
  std::set<NodeId> ever_ids_;
  std::set<NodeId> forgotten_ids_;
  std::vector<std::string> event_log_;  // one JSON line per applied event
  std::vector<std::string> warnings_;
};

// Unlearning-soundness scan over a persisted state directory; returns
// violations (forgotten ids found in trained_on lists, stored grain records,
// or shard membership).
std::vector<std::string> audit_state_dir(const std::string& dir);

std::string engine_config_to_json(const EngineConfig& cfg);

}  // namespace bgml
