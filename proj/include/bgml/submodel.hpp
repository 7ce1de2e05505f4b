// One per-shard network: two feature-graph layers over the grain adjacency,
// column-mean pooling, and a linear classifier head. Gradients are derived
// analytically end to end, including through grain construction, so the
// attention parameters train jointly. All arithmetic is 64-bit with fixed
// summation order; identical seeds and inputs reproduce identical bytes.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "bgml/common.hpp"
#include "bgml/grain.hpp"

namespace bgml {

struct SubModel {
  int feat_dim = 0;     // F'
  int channels = 1;     // C
  int hidden = 0;       // H
  int num_classes = 0;  // K
  Mat w1;               // C x H
  Mat w2;               // H x H
  Mat w_out;            // H x K
  std::vector<double> b_out;
  AttentionParams attn;
  std::uint64_t rng_seed = 0;
  std::vector<NodeId> trained_on;  // sorted; every node ever stepped on since last scratch reset

  bool has_trained(NodeId v) const;
  void add_trained(NodeId v);
  // Zero-initialized head growth: logits for existing classes are unchanged.
  void grow_classes(int new_num_classes);
};

SubModel init_submodel(int feat_dim, int channels, int hidden, int num_classes,
                       std::uint64_t seed);

struct ForwardCache {
  std::vector<Mat> pre1;     // per channel: adj * (x w1_c)
  std::vector<Mat> hidden1;  // relu(pre1)
  std::vector<Mat> mixed;    // adj * hidden1
  std::vector<Mat> pre2;     // mixed * w2
  std::vector<Mat> hidden2;  // relu(pre2)
  std::vector<double> pooled;
  std::vector<double> probs;
};

// Class probabilities for one grain; sums to 1 within 1e-12.
std::vector<double> forward(const SubModel& model, const FeatureGrain& grain,
                            ForwardCache* cache = nullptr);

struct Gradients {
  Mat w1, w2, w_out;
  std::vector<double> b_out;
  std::vector<double> w_self, w_neigh;
  double bias = 0.0;
};

// Cross-entropy loss for the source's label, with gradients for every
// parameter group (grain rebuilt internally so attention gradients flow).
double loss_and_gradients(const SubModel& model, const GrainSource& source, Gradients& grads);

double grain_loss(const SubModel& model, const GrainSource& source);

void apply_step(SubModel& model, const Gradients& grads, double lr, bool freeze_attention);

struct TrainOptions {
  double lr = 0.05;
  int epochs = 200;
  bool freeze_attention = false;
};

struct TrainReport {
  double final_train_loss = 0.0;  // mean loss over the last epoch
  double valid_micro_f1 = 0.0;
};

// Scratch training: re-initializes from `seed`, then per-sample SGD over a
// seeded shuffle each epoch. trained_on is set to exactly the source ids.
TrainReport train(SubModel& model, const std::vector<GrainSource>& sources,
                  const std::vector<GrainSource>& valid, const TrainOptions& opts,
                  std::uint64_t seed);

// Single-pass update for one arriving node; refuses double presentation.
void incremental_step(SubModel& model, const GrainSource& source, double lr,
                      bool freeze_attention);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::map<std::string, double> per_group;
  bool attention_skipped = false;  // raw adjacency value within 1e-9 of the sgnroot kink
};

// Central finite differences (step h) against the analytic gradients.
GradCheckReport gradient_check(const SubModel& model, const GrainSource& source, double h);

std::vector<std::uint8_t> checkpoint_bytes(const SubModel& model);
SubModel checkpoint_from_bytes(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const SubModel& model, const std::string& path);
SubModel load_checkpoint(const std::string& path);

}  // namespace bgml
