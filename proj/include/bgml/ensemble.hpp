// Hierarchical ensemble: first-level sub-models vote everywhere; the weakest
// tau of them (by shared-validation score) get second-level supporters whose
// outputs are blended in with weight lambda before the outer aggregation.

#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "bgml/common.hpp"
#include "bgml/submodel.hpp"

namespace bgml {

enum class Aggregation { Majority, Mean };

std::string to_string(Aggregation a);
Aggregation aggregation_from_string(const std::string& s);

using SecondKey = std::pair<int, int>;  // (first-level index, sub-shard index)

struct EnsembleState {
  std::map<int, SubModel> first;            // commissioned first-level models
  std::map<SecondKey, SubModel> second;     // supporters, keys within tau_idx x {0..l-1}
  std::set<int> tau_idx;
  std::map<int, double> scores;
  Aggregation aggregation = Aggregation::Mean;
  double support_weight = 0.5;  // lambda
  int tau = 0;
  int level2_count = 0;  // l, fixes the lambda/l split even when supporters are missing
};

// Micro-F1 of each model's argmax over the shared validation set; every model
// sees the same raw samples, graining them with its own attention.
std::map<int, double> score_models(const std::map<int, SubModel>& models,
                                   const std::vector<GrainSource>& valid_sources);

// The tau lowest-scoring indices, ties to the lower index.
std::set<int> low_rank(const std::map<int, double>& scores, int tau);

// Trains one fresh supporter per non-empty sub-shard source collection.
// Returned report lists skipped (empty) sub-shards as "i_j".
struct SupportBuildReport {
  std::vector<std::string> skipped;
};
std::map<SecondKey, SubModel> build_support(
    const std::set<int>& tau_idx,
    const std::map<SecondKey, std::vector<GrainSource>>& shard_sources,
    const std::map<SecondKey, std::vector<GrainSource>>& shard_valid, int feat_dim, int channels,
    int hidden, int num_classes, const TrainOptions& opts, std::uint64_t model_seed_base,
    SupportBuildReport* report = nullptr);

// Per-model seed: stable in (level, i, j), independent of tau selection order.
std::uint64_t submodel_seed(std::uint64_t base, int level, int i, int j = 0);

struct PredictDetail {
  std::map<int, std::vector<double>> first_probs;       // post-support alpha_i
  std::map<SecondKey, std::vector<double>> second_probs;
};

// Final decision for one sample. Ties in any argmax or vote resolve to the
// lowest class index.
int ensemble_predict(const EnsembleState& state, const GrainSource& source,
                     PredictDetail* detail = nullptr);

std::string ensemble_to_json(const EnsembleState& state,
                             const std::map<std::string, std::string>& checkpoint_files);

}  // namespace bgml
