#include "bgml/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace bgml {

double micro_f1(const std::vector<int>& predictions, const std::vector<int>& truth) {
  if (predictions.size() != truth.size() || truth.empty())
    throw DataError("micro_f1: prediction/truth length mismatch");
  int max_class = 0;
  for (int y : truth) max_class = std::max(max_class, y);
  for (int y : predictions) max_class = std::max(max_class, y);

  std::vector<long long> tp(max_class + 1, 0), fp(max_class + 1, 0), fn(max_class + 1, 0);
  long long correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predictions[i] == truth[i]) {
      ++tp[truth[i]];
      ++correct;
    } else {
      ++fp[predictions[i]];
      ++fn[truth[i]];
    }
  }
  long long tp_sum = 0, fp_sum = 0, fn_sum = 0;
  for (int c = 0; c <= max_class; ++c) {
    tp_sum += tp[c];
    fp_sum += fp[c];
    fn_sum += fn[c];
  }
  double precision = static_cast<double>(tp_sum) / static_cast<double>(tp_sum + fp_sum);
  double recall = static_cast<double>(tp_sum) / static_cast<double>(tp_sum + fn_sum);
  double f1 = (precision + recall) == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
  double accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  if (std::abs(f1 - accuracy) > 1e-12)
    throw InvariantError("micro_f1: micro-F1 and accuracy diverged on single-label input");
  return f1;
}

std::vector<double> forgetting_rate(const std::vector<std::map<int, double>>& per_class_acc) {
  std::vector<double> rates(per_class_acc.size(), 0.0);
  std::map<int, double> best_prior;
  for (std::size_t t = 0; t < per_class_acc.size(); ++t) {
    if (t > 0 && !best_prior.empty()) {
      double sum = 0.0;
      std::size_t counted = 0;
      for (const auto& [c, best] : best_prior) {
        auto it = per_class_acc[t].find(c);
        if (it == per_class_acc[t].end()) continue;  // class absent from this evaluation
        sum += std::max(0.0, best - it->second);
        ++counted;
      }
      rates[t] = counted == 0 ? 0.0 : sum / static_cast<double>(counted);
    }
    for (const auto& [c, acc] : per_class_acc[t]) {
      auto it = best_prior.find(c);
      if (it == best_prior.end())
        best_prior[c] = acc;
      else
        it->second = std::max(it->second, acc);
    }
  }
  return rates;
}

double baseline_majority(const std::vector<int>& train_labels,
                         const std::vector<int>& test_truth) {
  if (train_labels.empty() || test_truth.empty())
    throw DataError("baseline: empty labels");
  std::map<int, std::size_t> counts;
  for (int y : train_labels) ++counts[y];
  int winner = counts.begin()->first;
  std::size_t best = counts.begin()->second;
  for (const auto& [y, n] : counts)
    if (n > best) {  // ties keep the lowest class index
      best = n;
      winner = y;
    }
  std::vector<int> pred(test_truth.size(), winner);
  return micro_f1(pred, test_truth);
}

double baseline_logistic(const GraphStore& graph, const std::vector<NodeId>& train,
                         const std::vector<NodeId>& test, double lr, int epochs,
                         std::uint64_t seed) {
  const int f_dim = graph.feat_dim();
  const int classes = graph.num_classes();
  auto avg_features = [&](NodeId v) {
    const Mat& x = graph.node(v).features;
    std::vector<double> out(f_dim, 0.0);
    for (int f = 0; f < f_dim; ++f) {
      double s = 0.0;
      for (int c = 0; c < x.cols; ++c) s += x(f, c);
      out[f] = s / x.cols;
    }
    return out;
  };

  Mat w(f_dim, classes);
  std::vector<double> b(classes, 0.0);
  std::vector<NodeId> order(train);
  Rng rng(mix_seed(seed, 0x6c6f6769));
  std::vector<double> probs(classes, 0.0);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    for (NodeId v : order) {
      int y = graph.node(v).label;
      if (y == kUnlabeled) continue;
      auto x = avg_features(v);
      double mx = -1e300;
      for (int k = 0; k < classes; ++k) {
        double s = b[k];
        for (int f = 0; f < f_dim; ++f) s += w(f, k) * x[f];
        probs[k] = s;
        mx = std::max(mx, s);
      }
      double denom = 0.0;
      for (int k = 0; k < classes; ++k) {
        probs[k] = std::exp(probs[k] - mx);
        denom += probs[k];
      }
      for (int k = 0; k < classes; ++k) {
        double g = probs[k] / denom - (k == y ? 1.0 : 0.0);
        b[k] -= lr * g;
        for (int f = 0; f < f_dim; ++f) w(f, k) -= lr * g * x[f];
      }
    }
  }

  std::vector<int> pred, truth;
  for (NodeId v : test) {
    int y = graph.node(v).label;
    if (y == kUnlabeled) continue;
    auto x = avg_features(v);
    int best = 0;
    double best_s = -1e300;
    for (int k = 0; k < classes; ++k) {
      double s = b[k];
      for (int f = 0; f < f_dim; ++f) s += w(f, k) * x[f];
      if (s > best_s) {
        best_s = s;
        best = k;
      }
    }
    pred.push_back(best);
    truth.push_back(y);
  }
  return micro_f1(pred, truth);
}

}  // namespace bgml
