// Evaluation metrics and trivial floor baselines.

#pragma once

#include <map>
#include <vector>

#include "bgml/common.hpp"
#include "bgml/graph.hpp"

namespace bgml {

// Micro-averaged F1 over all classes; for single-label multiclass this equals
// accuracy, and both routes are computed and cross-checked internally.
double micro_f1(const std::vector<int>& predictions, const std::vector<int>& truth);

// Per-timestamp mean over previously seen classes of
// max(0, best prior accuracy - current accuracy).
std::vector<double> forgetting_rate(const std::vector<std::map<int, double>>& per_class_acc);

// Predicts the most frequent training class everywhere (ties -> lowest class).
double baseline_majority(const std::vector<int>& train_labels, const std::vector<int>& test_truth);

// Multinomial logistic regression on channel-averaged raw features, plain SGD.
double baseline_logistic(const GraphStore& graph, const std::vector<NodeId>& train,
                         const std::vector<NodeId>& test, double lr, int epochs,
                         std::uint64_t seed);

}  // namespace bgml
